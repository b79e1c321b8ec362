//! Accuracy metrics, per-class scores and inference throughput.

use std::fmt;
use std::time::Instant;

use crate::data::{SequenceRecord, TaskScheme, MISSING_LABEL};
use crate::error::{Error, Result};
use crate::model::{argmax_rows, Model};

/// `counts[g][p]` is the number of positions with gold class `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    scheme: TaskScheme,
    counts: Vec<Vec<u64>>,
    total: u64,
}

/// Scores for one class. Any 0/0 ratio is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub class: char,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub frequency: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn new(scheme: &TaskScheme) -> Self {
        let c = scheme.class_count();
        ConfusionMatrix {
            scheme: scheme.clone(),
            counts: vec![vec![0; c]; c],
            total: 0,
        }
    }

    pub fn task(&self) -> &str {
        &self.scheme.name
    }

    pub fn scheme(&self) -> &TaskScheme {
        &self.scheme
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Counts each position whose gold label is not missing.
    pub fn accumulate(&mut self, gold: &str, pred: &str) -> Result<()> {
        let g: Vec<char> = gold.chars().collect();
        let p: Vec<char> = pred.chars().collect();
        if g.len() != p.len() {
            return Err(Error::Data(format!(
                "{}: gold has {} labels, prediction has {}",
                self.scheme.name,
                g.len(),
                p.len()
            )));
        }
        let class = |c: char| {
            self.scheme.class_index(c).ok_or_else(|| {
                Error::Data(format!("{}: '{c}' is not a class label", self.scheme.name))
            })
        };
        let mut pairs = Vec::with_capacity(g.len());
        for (&gc, &pc) in g.iter().zip(&p) {
            if gc == MISSING_LABEL {
                continue;
            }
            pairs.push((class(gc)?, class(pc)?));
        }
        for (gi, pi) in pairs {
            self.counts[gi][pi] += 1;
            self.total += 1;
        }
        Ok(())
    }

    /// Index form of [`ConfusionMatrix::accumulate`].
    pub fn accumulate_indices(&mut self, gold: &[Option<usize>], pred: &[usize]) -> Result<()> {
        let c = self.scheme.class_count();
        if gold.len() != pred.len() {
            return Err(Error::Data(format!(
                "{}: gold has {} labels, prediction has {}",
                self.scheme.name,
                gold.len(),
                pred.len()
            )));
        }
        if let Some(bad) = gold.iter().flatten().chain(pred).find(|&&k| k >= c) {
            return Err(Error::Data(format!(
                "{}: class {bad} out of range for {c} classes",
                self.scheme.name
            )));
        }
        for (g, &p) in gold.iter().zip(pred) {
            if let Some(g) = *g {
                self.counts[g][p] += 1;
                self.total += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.scheme != self.scheme {
            return Err(Error::Data(format!(
                "cannot merge {} counts into {}",
                other.scheme.name, self.scheme.name
            )));
        }
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (v, o) in row.iter_mut().zip(orow) {
                *v += o;
            }
        }
        self.total += other.total;
        Ok(())
    }

    fn ensure_nonempty(&self) -> Result<()> {
        if self.total == 0 {
            Err(Error::UndefinedMetric(format!(
                "{}: no labeled positions",
                self.scheme.name
            )))
        } else {
            Ok(())
        }
    }

    /// Fraction of counted positions predicted correctly.
    pub fn qc_accuracy(&self) -> Result<f64> {
        self.ensure_nonempty()?;
        let trace: u64 = (0..self.counts.len()).map(|c| self.counts[c][c]).sum();
        Ok(ratio(trace, self.total))
    }

    pub fn prf1(&self) -> Result<Vec<ClassMetrics>> {
        self.ensure_nonempty()?;
        let c = self.counts.len();
        Ok((0..c)
            .map(|k| {
                let tp = self.counts[k][k];
                let gold: u64 = self.counts[k].iter().sum();
                let predicted: u64 = (0..c).map(|g| self.counts[g][k]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, gold);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    class: self.scheme.alphabet[k],
                    precision,
                    recall,
                    f1,
                    frequency: ratio(gold, self.total),
                }
            })
            .collect())
    }
}

/// Counts and wall time of an inference pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputReport {
    pub positions: u64,
    /// Seconds.
    pub wall_time: f64,
    pub ms_per_million: f64,
}

impl ThroughputReport {
    pub fn new(positions: u64, wall_time: f64) -> Self {
        ThroughputReport {
            positions,
            wall_time,
            ms_per_million: Self::derive(positions, wall_time),
        }
    }

    fn derive(positions: u64, wall_time: f64) -> f64 {
        if positions == 0 {
            0.0
        } else {
            wall_time * 1e9 / positions as f64
        }
    }

    /// Whether `ms_per_million` agrees with the counts it was derived from.
    pub fn is_consistent(&self) -> bool {
        self.ms_per_million == Self::derive(self.positions, self.wall_time)
    }
}

impl fmt::Display for ThroughputReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "positions={}", self.positions)?;
        writeln!(f, "wall_time={:.6}", self.wall_time)?;
        writeln!(f, "ms_per_million={:.3}", self.ms_per_million)
    }
}

/// Splits `records` round-robin over `workers` model clones and runs `job`
/// on each shard. Results come back in worker order.
fn sharded<T, F>(model: &Model, records: &[SequenceRecord], workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Model, Vec<&SequenceRecord>) -> Result<T> + Sync,
{
    let workers = workers.clamp(1, records.len().max(1));
    let mut shards: Vec<Vec<&SequenceRecord>> = vec![Vec::new(); workers];
    for (i, r) in records.iter().enumerate() {
        shards[i % workers].push(r);
    }
    if workers == 1 {
        let mut m = model.clone();
        return Ok(vec![job(&mut m, shards.pop().unwrap_or_default())?]);
    }
    let mut clones: Vec<Model> = (0..workers).map(|_| model.clone()).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = clones
            .iter_mut()
            .zip(shards)
            .map(|(m, shard)| {
                let job = &job;
                scope.spawn(move || job(m, shard))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    })
}

/// Eval-mode forward over every record, timing only the forward passes.
pub fn measure_throughput(
    model: &Model,
    records: &[SequenceRecord],
    workers: usize,
) -> Result<ThroughputReport> {
    if records.is_empty() {
        return Err(Error::Data("throughput needs at least one record".into()));
    }
    let positions: u64 = records.iter().map(|r| r.seq_len() as u64).sum();
    let start = Instant::now();
    sharded(model, records, workers, |m, shard| {
        for r in shard {
            m.predict(r)?;
        }
        Ok(())
    })?;
    Ok(ThroughputReport::new(positions, start.elapsed().as_secs_f64()))
}

/// Confusion matrices for every model task over `records`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub matrices: Vec<ConfusionMatrix>,
    pub throughput: Option<ThroughputReport>,
}

impl EvalReport {
    pub fn matrix(&self, task: &str) -> Option<&ConfusionMatrix> {
        self.matrices.iter().find(|m| m.task() == task)
    }

    /// Accuracy for a task; error if the task is absent or has no labels.
    pub fn qc(&self, task: &str) -> Result<f64> {
        self.matrix(task)
            .ok_or_else(|| Error::Config(format!("no metrics for task {task}")))?
            .qc_accuracy()
    }
}

/// Eval-mode predictions for every record, scored per task.
pub fn evaluate(model: &Model, records: &[SequenceRecord], workers: usize) -> Result<EvalReport> {
    let schemes = model.config().tasks.clone();
    let parts = sharded(model, records, workers, |m, shard| {
        let mut mats: Vec<ConfusionMatrix> = schemes.iter().map(ConfusionMatrix::new).collect();
        for r in shard {
            let logits = m.predict(r)?;
            for (mat, (task, scores)) in mats.iter_mut().zip(&logits.tasks) {
                if let Some(gold) = r.label(task) {
                    let gold = mat.scheme().encode(gold)?;
                    mat.accumulate_indices(&gold, &argmax_rows(scores))?;
                }
            }
        }
        Ok(mats)
    })?;
    let mut matrices: Vec<ConfusionMatrix> = schemes.iter().map(ConfusionMatrix::new).collect();
    for part in &parts {
        for (m, p) in matrices.iter_mut().zip(part) {
            m.merge(p)?;
        }
    }
    Ok(EvalReport {
        matrices,
        throughput: None,
    })
}

impl fmt::Display for EvalReport {
    /// Aligned table, then one `key=value` line per metric row.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<6} {:>5} {:>9} {:>9} {:>9} {:>9} {:>8}",
            "task", "class", "precision", "recall", "f1", "frequency", "qc"
        )?;
        let mut kv = Vec::new();
        for m in &self.matrices {
            let (Ok(qc), Ok(rows)) = (m.qc_accuracy(), m.prf1()) else {
                writeln!(f, "{:<6} {:>5} {:>9}", m.task(), "-", "no labels")?;
                continue;
            };
            writeln!(f, "{:<6} {:>5} {:>9} {:>9} {:>9} {:>9} {:>8.4}", m.task(), "all", "", "", "", "", qc)?;
            kv.push(format!("task={} qc={qc:.6}", m.task()));
            for r in rows {
                writeln!(
                    f,
                    "{:<6} {:>5} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                    m.task(),
                    r.class,
                    r.precision,
                    r.recall,
                    r.f1,
                    r.frequency
                )?;
                kv.push(format!(
                    "task={} class={} precision={:.6} recall={:.6} f1={:.6} frequency={:.6}",
                    m.task(),
                    r.class,
                    r.precision,
                    r.recall,
                    r.f1,
                    r.frequency
                ));
            }
        }
        if let Some(t) = &self.throughput {
            kv.push(format!("ms_per_million={:.3}", t.ms_per_million));
        }
        writeln!(f)?;
        for line in kv {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}
