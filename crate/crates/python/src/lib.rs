//! Python bindings: records, models, training, evaluation and stitch geometry.

use std::collections::BTreeMap;
use std::path::PathBuf;

use mustcnn::data::{self, SequenceRecord, SynthConfig, PSSM_WIDTH};
use mustcnn::eval;
use mustcnn::layers::{NonlinearityKind, Precision};
use mustcnn::model::{self as core_model, predict_labels, softmax_rows, ModelConfig, Route};
use mustcnn::stitch::StitchPlan;
use mustcnn::train::{self, OptimState, TrainPlan};
use mustcnn::{verify, Error, ErrorClass, Rng, Tensor};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

/// Maps engine errors onto Python exceptions, keeping the class prefix.
fn py_err(e: Error) -> PyErr {
    let msg = format!("{}: {e}", e.class());
    match e.class() {
        ErrorClass::Io => PyIOError::new_err(msg),
        ErrorClass::Numeric | ErrorClass::Metric => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn tensor_rows(t: &Tensor) -> Vec<Vec<f64>> {
    let width = t.shape()[t.shape().len() - 1];
    t.data().chunks(width.max(1)).map(<[f64]>::to_vec).collect()
}

fn pssm_tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    let len = rows.len();
    if rows.iter().any(|r| r.len() != PSSM_WIDTH) {
        return Err(PyValueError::new_err(format!(
            "DATA: every profile row needs {PSSM_WIDTH} values"
        )));
    }
    Tensor::from_vec(&[len, PSSM_WIDTH], rows.concat()).map_err(py_err)
}

/// One chain: residues, a `[T, 20]` profile and per-task label strings.
#[pyclass(name = "Record", module = "mustcnn_py")]
#[derive(Clone)]
struct PyRecord {
    inner: SequenceRecord,
}

#[pymethods]
impl PyRecord {
    #[new]
    #[pyo3(signature = (id, residues, pssm, labels = BTreeMap::new()))]
    fn new(id: String, residues: &str, pssm: Vec<Vec<f64>>, labels: BTreeMap<String, String>) -> PyResult<Self> {
        let inner = SequenceRecord::new(id, residues, pssm_tensor(pssm)?, labels).map_err(py_err)?;
        Ok(PyRecord { inner })
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn residues(&self) -> &str {
        &self.inner.residues
    }

    #[getter]
    fn pssm(&self) -> Vec<Vec<f64>> {
        tensor_rows(&self.inner.pssm)
    }

    #[getter]
    fn labels(&self) -> BTreeMap<String, String> {
        self.inner.labels.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.seq_len()
    }

    fn __repr__(&self) -> String {
        format!("Record(id={:?}, length={})", self.inner.id, self.inner.seq_len())
    }
}

fn unwrap_records(records: &[PyRecord]) -> Vec<SequenceRecord> {
    records.iter().map(|r| r.inner.clone()).collect()
}

fn wrap_records(records: Vec<SequenceRecord>) -> Vec<PyRecord> {
    records.into_iter().map(|inner| PyRecord { inner }).collect()
}

/// Multitask shift-and-stitch network.
#[pyclass(name = "Model", module = "mustcnn_py")]
#[derive(Clone)]
struct PyModel {
    inner: core_model::Model,
}

#[pymethods]
impl PyModel {
    /// Builds a freshly initialised model. Omitted settings take the small
    /// architecture's values; `tasks` is a comma separated task list.
    #[new]
    #[pyo3(signature = (seed = 1, conv_layers = None, hidden_units = None, kernel_size = None,
        pool_size = None, input_dropout = None, dropout = None, nonlinearity = None,
        embed_dim = None, tasks = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        seed: u64,
        conv_layers: Option<usize>,
        hidden_units: Option<usize>,
        kernel_size: Option<usize>,
        pool_size: Option<usize>,
        input_dropout: Option<f64>,
        dropout: Option<f64>,
        nonlinearity: Option<&str>,
        embed_dim: Option<usize>,
        tasks: Option<&str>,
    ) -> PyResult<Self> {
        let mut cfg = ModelConfig::small();
        cfg.conv_layers = conv_layers.unwrap_or(cfg.conv_layers);
        cfg.hidden_units = hidden_units.unwrap_or(cfg.hidden_units);
        cfg.kernel_size = kernel_size.unwrap_or(cfg.kernel_size);
        cfg.pool_size = pool_size.unwrap_or(cfg.pool_size);
        cfg.input_dropout = input_dropout.unwrap_or(cfg.input_dropout);
        cfg.dropout = dropout.unwrap_or(cfg.dropout);
        cfg.embed_dim = embed_dim.unwrap_or(cfg.embed_dim);
        if let Some(kind) = nonlinearity {
            cfg.nonlinearity = kind
                .parse::<NonlinearityKind>()
                .map_err(|e| PyValueError::new_err(format!("CONFIG: {e}")))?;
        }
        if let Some(spec) = tasks {
            cfg.tasks = ModelConfig::parse_tasks(spec).map_err(py_err)?;
        }
        let inner = core_model::Model::build(cfg, &mut Rng::new(seed)).map_err(py_err)?;
        Ok(PyModel { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = core_model::checkpoint_load(&path).map_err(py_err)?;
        Ok(PyModel { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        core_model::checkpoint_save(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn tasks(&self) -> Vec<String> {
        self.inner.config().tasks.iter().map(|t| t.name.clone()).collect()
    }

    #[getter]
    fn tag(&self) -> Option<String> {
        self.inner.tag.clone()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    #[getter]
    fn precision(&self) -> String {
        self.inner.precision().to_string()
    }

    /// `"f64"` or `"f32"`; reduced precision is inference only.
    #[setter]
    fn set_precision(&mut self, value: &str) -> PyResult<()> {
        let p = value
            .parse::<Precision>()
            .map_err(|e| PyValueError::new_err(format!("CONFIG: {e}")))?;
        self.inner.set_precision(p);
        Ok(())
    }

    /// `"per_layer"` or `"input_once"`; both give identical outputs.
    fn set_route(&mut self, route: &str) -> PyResult<()> {
        let r = match route {
            "per_layer" => Route::PerLayer,
            "input_once" => Route::InputOnce,
            other => return Err(PyValueError::new_err(format!("CONFIG: unknown route '{other}'"))),
        };
        self.inner.set_route(r);
        Ok(())
    }

    /// Per-task `[T, C]` class probabilities.
    fn probabilities(&mut self, record: &PyRecord) -> PyResult<BTreeMap<String, Vec<Vec<f64>>>> {
        let logits = self.inner.predict(&record.inner).map_err(py_err)?;
        let mut out = BTreeMap::new();
        for (task, scores) in &logits.tasks {
            out.insert(task.clone(), tensor_rows(&softmax_rows(scores).map_err(py_err)?));
        }
        Ok(out)
    }

    /// Per-task predicted label strings of length `T`.
    fn predict(&mut self, record: &PyRecord) -> PyResult<BTreeMap<String, String>> {
        let logits = self.inner.predict(&record.inner).map_err(py_err)?;
        predict_labels(&logits, &self.inner.config().tasks).map_err(py_err)
    }

    /// Trains in place; returns the epoch log lines.
    #[pyo3(signature = (records, epochs, learning_rate = 0.0148, momentum = 0.9, seed = 1,
        validation = Vec::new()))]
    fn train(
        &mut self,
        py: Python<'_>,
        records: Vec<PyRecord>,
        epochs: usize,
        learning_rate: f64,
        momentum: f64,
        seed: u64,
        validation: Vec<PyRecord>,
    ) -> PyResult<Vec<String>> {
        let (train_set, val) = (unwrap_records(&records), unwrap_records(&validation));
        let model = &mut self.inner;
        let log = py
            .allow_threads(|| {
                let mut state = OptimState::for_model(learning_rate, momentum, model)?;
                train::train_multitask(model, &train_set, &val, &TrainPlan::new(epochs, seed), &mut state)
            })
            .map_err(py_err)?;
        Ok(log.epochs.iter().map(ToString::to_string).collect())
    }

    /// Copy fine-tuned on one task from zero velocity.
    #[pyo3(signature = (records, task, epochs, learning_rate, momentum = 0.9, seed = 1,
        validation = Vec::new()))]
    #[allow(clippy::too_many_arguments)]
    fn finetune(
        &self,
        py: Python<'_>,
        records: Vec<PyRecord>,
        task: &str,
        epochs: usize,
        learning_rate: f64,
        momentum: f64,
        seed: u64,
        validation: Vec<PyRecord>,
    ) -> PyResult<PyModel> {
        let (train_set, val) = (unwrap_records(&records), unwrap_records(&validation));
        let plan = TrainPlan::new(epochs, seed);
        let (inner, _) = py
            .allow_threads(|| {
                train::finetune_with_rate(&self.inner, &train_set, &val, task, &plan, learning_rate, momentum)
            })
            .map_err(py_err)?;
        Ok(PyModel { inner })
    }

    /// Per-task accuracy over `records`.
    #[pyo3(signature = (records, workers = 1))]
    fn evaluate(&self, py: Python<'_>, records: Vec<PyRecord>, workers: usize) -> PyResult<BTreeMap<String, f64>> {
        let recs = unwrap_records(&records);
        let report = py.allow_threads(|| eval::evaluate(&self.inner, &recs, workers)).map_err(py_err)?;
        let mut out = BTreeMap::new();
        for m in &report.matrices {
            if m.total() > 0 {
                out.insert(m.task().to_string(), m.qc_accuracy().map_err(py_err)?);
            }
        }
        Ok(out)
    }

    /// Forward-pass throughput: `(positions, wall_time, ms_per_million)`.
    #[pyo3(signature = (records, workers = 1))]
    fn throughput(&self, py: Python<'_>, records: Vec<PyRecord>, workers: usize) -> PyResult<(u64, f64, f64)> {
        let recs = unwrap_records(&records);
        let r = py
            .allow_threads(|| eval::measure_throughput(&self.inner, &recs, workers))
            .map_err(py_err)?;
        Ok((r.positions, r.wall_time, r.ms_per_million))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(tasks={}, parameters={})",
            self.inner.config().tasks_spec(),
            self.inner.parameter_count()
        )
    }
}

/// Stitch geometry for one sequence length.
#[pyclass(name = "StitchPlan", module = "mustcnn_py")]
struct PyStitchPlan {
    inner: StitchPlan,
}

#[pymethods]
impl PyStitchPlan {
    #[new]
    fn new(length: usize, pool_sizes: Vec<usize>, kernel_sizes: Vec<usize>) -> PyResult<Self> {
        let inner = StitchPlan::new(length, &pool_sizes, &kernel_sizes).map_err(py_err)?;
        Ok(PyStitchPlan { inner })
    }

    #[getter]
    fn total_stride(&self) -> usize {
        self.inner.total_stride()
    }

    #[getter]
    fn padded_len(&self) -> usize {
        self.inner.padded_len()
    }

    #[getter]
    fn copies(&self) -> usize {
        self.inner.copies()
    }

    /// `(copy, index)` of the strided output that lands at dense position `t`.
    fn source_of(&self, t: usize) -> PyResult<(usize, usize)> {
        if t >= self.inner.seq_len() {
            return Err(PyValueError::new_err(format!(
                "RANGE: position {t} outside a sequence of length {}",
                self.inner.seq_len()
            )));
        }
        Ok(self.inner.source_of(t))
    }
}

#[pyfunction]
#[pyo3(signature = (n, seed = 1, min_len = 20, max_len = 60))]
fn synth(n: usize, seed: u64, min_len: usize, max_len: usize) -> PyResult<Vec<PyRecord>> {
    let cfg = SynthConfig {
        sequences: n,
        min_len,
        max_len,
    };
    data::synth_generate(&mut Rng::new(seed), cfg).map(wrap_records).map_err(py_err)
}

#[pyfunction]
fn read_dataset(path: PathBuf) -> PyResult<Vec<PyRecord>> {
    data::read_dataset(&path).map(wrap_records).map_err(py_err)
}

#[pyfunction]
fn write_dataset(path: PathBuf, records: Vec<PyRecord>) -> PyResult<()> {
    data::write_dataset_file(&path, &unwrap_records(&records)).map_err(py_err)
}

/// Randomised equivalence check of batched stitching against the per-copy
/// loop and the dilated evaluation; returns the worst differences.
#[pyfunction]
#[pyo3(signature = (cases = 200, seed = 1))]
fn stitch_suite(py: Python<'_>, cases: usize, seed: u64) -> PyResult<BTreeMap<String, f64>> {
    let r = py.allow_threads(|| verify::stitch_suite(cases, seed)).map_err(py_err)?;
    let mut out = BTreeMap::new();
    out.insert("cases".to_string(), r.cases as f64);
    out.insert("input_once_vs_loop".to_string(), r.worst.input_once_vs_loop);
    out.insert("per_layer_vs_loop".to_string(), r.worst.per_layer_vs_loop);
    out.insert("loop_vs_atrous".to_string(), r.worst.loop_vs_atrous);
    out.insert("length_failures".to_string(), r.length_failures as f64);
    Ok(out)
}

#[pymodule]
fn mustcnn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRecord>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyStitchPlan>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(write_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(stitch_suite, m)?)?;
    m.add("PSSM_WIDTH", PSSM_WIDTH)?;
    Ok(())
}
