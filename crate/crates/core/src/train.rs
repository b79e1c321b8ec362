//! Per-sequence SGD with momentum, multitask training, single-task
//! fine-tuning and a finite-difference gradient checker.

use std::fmt;

use crate::data::{synth_generate, SequenceRecord, SynthConfig, TaskScheme};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::layers::{LinearLayer, Mode, NonlinearityKind, Param, Precision};
use crate::model::{nll_loss, record_labels, Model, ModelConfig, TaskLabels, TaskSelector};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::verify::kink_margin;

/// Rng stream used for the epoch order.
pub const SHUFFLE_STREAM: u64 = 1;
/// Rng stream used for dropout masks.
pub const DROPOUT_STREAM: u64 = 2;

/// Learning rate, momentum and one velocity tensor per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl OptimState {
    /// Zero velocity shaped like `params`.
    pub fn new(learning_rate: f64, momentum: f64, params: &[&Param]) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {learning_rate} must be finite and >= 0")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} must lie in [0, 1)")));
        }
        Ok(OptimState {
            learning_rate,
            momentum,
            velocity: params.iter().map(|p| p.value.zeros_like()).collect(),
        })
    }

    pub fn for_model(learning_rate: f64, momentum: f64, model: &Model) -> Result<Self> {
        let params: Vec<&Param> = model.params().into_iter().map(|(_, p)| p).collect();
        Self::new(learning_rate, momentum, &params)
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }
}

/// `v <- momentum * v - learning_rate * g`, then `theta <- theta + v`.
/// Gradients are left for the caller to clear.
pub fn sgd_step(params: &mut [&mut Param], state: &mut OptimState) -> Result<()> {
    if params.len() != state.velocity.len() {
        return Err(Error::Geometry(format!(
            "{} parameter groups but {} velocity tensors",
            params.len(),
            state.velocity.len()
        )));
    }
    for (i, (p, v)) in params.iter().zip(&state.velocity).enumerate() {
        if p.value.shape() != v.shape() || p.grad.shape() != v.shape() {
            return Err(Error::Geometry(format!(
                "group {i}: parameter {:?}, gradient {:?}, velocity {:?}",
                p.value.shape(),
                p.grad.shape(),
                v.shape()
            )));
        }
    }
    let (mu, eta) = (state.momentum, state.learning_rate);
    for (p, v) in params.iter_mut().zip(&mut state.velocity) {
        let Param { value, grad } = &mut **p;
        for ((theta, vel), g) in value.data_mut().iter_mut().zip(v.data_mut()).zip(grad.data()) {
            *vel = mu * *vel - eta * g;
            *theta += *vel;
        }
    }
    Ok(())
}

/// How long and on which losses to train. The learning rate is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub epochs: usize,
    pub seed: u64,
    pub selector: TaskSelector,
    pub include_validation_in_finetune: bool,
}

impl TrainPlan {
    pub fn new(epochs: usize, seed: u64) -> Self {
        TrainPlan {
            epochs,
            seed,
            selector: TaskSelector::All,
            include_validation_in_finetune: false,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Summed loss over the epoch divided by the number of positions visited.
    pub mean_loss: f64,
    /// Accuracy per task on the validation records, or on the training
    /// records when there are none. Tasks without labels are omitted.
    pub qc: Vec<(String, f64)>,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} mean_loss={:.6}", self.epoch, self.mean_loss)?;
        for (task, q) in &self.qc {
            write!(f, " qc_{task}={q:.6}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Number of parameter updates performed.
    pub steps: usize,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

impl fmt::Display for TrainLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.epochs {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

fn check_tasks(model: &Model, records: &[SequenceRecord], selector: &TaskSelector) -> Result<()> {
    for scheme in &model.config().tasks {
        if selector.includes(&scheme.name) && !records.iter().any(|r| r.label(&scheme.name).is_some()) {
            return Err(Error::Config(format!(
                "model task {} has no labels in the training data",
                scheme.name
            )));
        }
    }
    if let TaskSelector::Only(task) = selector {
        if model.config().task(task).is_none() {
            return Err(Error::Config(format!("model has no task {task}")));
        }
    }
    Ok(())
}

/// One forward, backward and update for a single record. Returns its loss.
pub fn train_step(
    model: &mut Model,
    record: &SequenceRecord,
    labels: &TaskLabels,
    selector: &TaskSelector,
    state: &mut OptimState,
    dropout_rng: &mut Rng,
) -> Result<f64> {
    let logits = model.forward_record(record, Mode::Train, dropout_rng)?;
    let (loss, grad) = nll_loss(&logits, labels, selector)?;
    model.backward(&grad)?;
    let mut params = model.params_mut();
    let mut refs: Vec<&mut Param> = params.iter_mut().map(|(_, p)| &mut **p).collect();
    sgd_step(&mut refs, state)?;
    model.zero_grads();
    Ok(loss)
}

/// Trains on `train` with one update per sequence, reshuffling every epoch.
pub fn train_multitask(
    model: &mut Model,
    train: &[SequenceRecord],
    validation: &[SequenceRecord],
    plan: &TrainPlan,
    state: &mut OptimState,
) -> Result<TrainLog> {
    train_multitask_observed(model, train, validation, plan, state, &mut |_| {})
}

/// [`train_multitask`] calling `observer` after each epoch.
pub fn train_multitask_observed(
    model: &mut Model,
    train: &[SequenceRecord],
    validation: &[SequenceRecord],
    plan: &TrainPlan,
    state: &mut OptimState,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainLog> {
    if plan.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if model.precision() != Precision::F64 {
        return Err(Error::Config("training requires 64-bit convolution arithmetic".into()));
    }
    check_tasks(model, train, &plan.selector)?;
    let schemes = model.config().tasks.clone();
    let labels: Vec<TaskLabels> = train
        .iter()
        .map(|r| record_labels(r, &schemes))
        .collect::<Result<_>>()?;
    let positions: usize = train.iter().map(SequenceRecord::seq_len).sum();
    let monitor = if validation.is_empty() { train } else { validation };

    let mut shuffle_rng = Rng::stream(plan.seed, SHUFFLE_STREAM);
    let mut dropout_rng = Rng::stream(plan.seed, DROPOUT_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();
    model.zero_grads();
    for epoch in 1..=plan.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut total = 0.0;
        for &i in &order {
            total += train_step(model, &train[i], &labels[i], &plan.selector, state, &mut dropout_rng)?;
            log.steps += 1;
        }
        model.clear_caches();
        let report = evaluate(model, monitor, 1)?;
        let qc = report
            .matrices
            .iter()
            .filter_map(|m| m.qc_accuracy().ok().map(|q| (m.task().to_string(), q)))
            .collect();
        let record = EpochRecord {
            epoch,
            mean_loss: total / positions as f64,
            qc,
        };
        observer(&record);
        log.epochs.push(record);
    }
    Ok(log)
}

/// Copies `model` and retrains it on `task` alone at a tenth of
/// `base.learning_rate`, starting from zero velocity.
pub fn finetune(
    model: &Model,
    train: &[SequenceRecord],
    validation: &[SequenceRecord],
    task: &str,
    plan: &TrainPlan,
    base: &OptimState,
) -> Result<(Model, TrainLog)> {
    finetune_with_rate(
        model,
        train,
        validation,
        task,
        plan,
        base.learning_rate / 10.0,
        base.momentum,
    )
}

/// [`finetune`] at an explicit learning rate.
pub fn finetune_with_rate(
    model: &Model,
    train: &[SequenceRecord],
    validation: &[SequenceRecord],
    task: &str,
    plan: &TrainPlan,
    learning_rate: f64,
    momentum: f64,
) -> Result<(Model, TrainLog)> {
    if model.config().task(task).is_none() {
        return Err(Error::Config(format!("model has no task {task}")));
    }
    let mut tuned = model.clone();
    tuned.clear_caches();
    tuned.tag = Some(task.to_string());
    if plan.epochs == 0 {
        return Ok((tuned, TrainLog::default()));
    }
    let mut state = OptimState::for_model(learning_rate, momentum, &tuned)?;
    let plan = TrainPlan {
        selector: TaskSelector::Only(task.to_string()),
        ..plan.clone()
    };
    let pooled: Vec<SequenceRecord>;
    let records = if plan.include_validation_in_finetune {
        pooled = train.iter().chain(validation).cloned().collect();
        &pooled[..]
    } else {
        train
    };
    let log = train_multitask(&mut tuned, records, validation, &plan, &mut state)?;
    Ok((tuned, log))
}

/// Central-difference step for [`grad_check`].
pub const FD_STEP: f64 = 1e-3;
/// Instances closer than this to a kink or tie are resampled.
pub const KINK_GUARD: f64 = 1e-2;
/// Denominator floor for groups whose gradient vanishes.
pub const REL_ERR_FLOOR: f64 = 1e-12;
const MAX_RESAMPLES: usize = 200;

/// Something with a scalar loss and parameters that [`grad_check`] can probe.
pub trait GradProbe {
    fn groups(&mut self) -> Vec<(String, &mut Param)>;
    fn loss(&mut self) -> Result<f64>;
    /// Zeroes gradients, then fills them for the current parameters.
    fn compute_gradients(&mut self) -> Result<()>;
    /// Distance from the nearest non-differentiable point.
    fn kink_margin(&mut self) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    /// `|a - n| / max(|a|, |n|)` over the group's gradient vectors, where
    /// `a` is analytic and `n` numeric. Single coordinates with a near-zero
    /// gradient are dominated by the O(h^2) truncation error, so the ratio
    /// is taken over whole vectors.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub coordinates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub groups: Vec<GroupError>,
    pub tolerance: f64,
    /// Instances rejected for lying too close to a kink or tie.
    pub resamples: usize,
}

impl GradReport {
    pub fn flagged(&self) -> Vec<&GroupError> {
        self.groups.iter().filter(|g| !(g.max_rel_err < self.tolerance)).collect()
    }

    pub fn passes(&self) -> bool {
        self.flagged().is_empty()
    }

    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            let verdict = if g.max_rel_err < self.tolerance { "ok" } else { "FLAGGED" };
            writeln!(
                f,
                "{:<24} coords={:<5} rel_err={:.3e} max_abs_err={:.3e} {verdict}",
                g.name, g.coordinates, g.max_rel_err, g.max_abs_err
            )?;
        }
        Ok(())
    }
}

/// Compares analytic gradients of a `factory`-built instance with central
/// differences in every coordinate. Instances within [`KINK_GUARD`]
/// of a kink or tie are redrawn.
pub fn grad_check<P, F>(mut factory: F, tolerance: f64, rng: &mut Rng) -> Result<GradReport>
where
    P: GradProbe,
    F: FnMut(&mut Rng) -> Result<P>,
{
    let mut resamples = 0;
    let mut probe = loop {
        let mut p = factory(rng)?;
        if p.kink_margin()? > KINK_GUARD {
            break p;
        }
        resamples += 1;
        if resamples >= MAX_RESAMPLES {
            return Err(Error::Numeric(format!(
                "no instance clear of kinks after {MAX_RESAMPLES} draws"
            )));
        }
    };
    probe.compute_gradients()?;
    let analytic: Vec<(String, Tensor)> = probe
        .groups()
        .into_iter()
        .map(|(n, p)| (n, p.grad.clone()))
        .collect();
    let mut groups = Vec::with_capacity(analytic.len());
    for (gi, (name, grad)) in analytic.iter().enumerate() {
        let (mut diff2, mut a2, mut n2, mut max_abs): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
        for c in 0..grad.len() {
            let orig = probe.groups()[gi].1.value.data()[c];
            probe.groups()[gi].1.value.data_mut()[c] = orig + FD_STEP;
            let up = probe.loss()?;
            probe.groups()[gi].1.value.data_mut()[c] = orig - FD_STEP;
            let down = probe.loss()?;
            probe.groups()[gi].1.value.data_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = grad.data()[c];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
            max_abs = max_abs.max((a - numeric).abs());
        }
        let rel = diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(REL_ERR_FLOOR);
        groups.push(GroupError {
            name: name.clone(),
            max_rel_err: if rel.is_nan() { f64::INFINITY } else { rel },
            max_abs_err: max_abs,
            coordinates: grad.len(),
        });
    }
    Ok(GradReport {
        groups,
        tolerance,
        resamples,
    })
}

/// The summed multitask loss of one record under a model.
#[derive(Debug, Clone)]
pub struct ModelProbe {
    pub model: Model,
    pub record: SequenceRecord,
    pub selector: TaskSelector,
    labels: TaskLabels,
}

impl ModelProbe {
    /// Switches `model` to 64-bit arithmetic.
    pub fn new(mut model: Model, record: SequenceRecord, selector: TaskSelector) -> Result<Self> {
        model.set_precision(Precision::F64);
        let labels = record_labels(&record, &model.config().tasks)?;
        Ok(ModelProbe {
            model,
            record,
            selector,
            labels,
        })
    }
}

impl ModelProbe {
    /// Two blocks of three channels, kernel 3, pool 2, all four tasks, on
    /// one synthetic chain of length 12. Parameters are redrawn on a unit
    /// scale so pre-activations sit well clear of [`KINK_GUARD`].
    pub fn tiny(kind: NonlinearityKind, rng: &mut Rng) -> Result<Self> {
        let config = ModelConfig {
            conv_layers: 2,
            hidden_units: 3,
            kernel_size: 3,
            pool_size: 2,
            input_dropout: 0.0,
            dropout: 0.0,
            nonlinearity: kind,
            embed_dim: 2,
            tasks: TaskScheme::standard(),
        };
        let mut model = Model::build(config, rng)?;
        let table = &mut model.lookup.table.value;
        *table = rng.uniform(-1.0, 1.0, table.shape())?;
        for block in &mut model.stack.blocks {
            let c = &mut block.conv;
            c.weight.value = rng.uniform(-1.0, 1.0, c.weight.value.shape())?;
            c.bias.value = rng.uniform(-1.0, 1.0, c.bias.value.shape())?;
            block.nonlin.alpha.value = rng.uniform(0.1, 0.5, &[1])?;
        }
        let synth = SynthConfig {
            sequences: 1,
            min_len: 12,
            max_len: 12,
        };
        let record = synth_generate(rng, synth)?.remove(0);
        ModelProbe::new(model, record, TaskSelector::All)
    }
}

impl GradProbe for ModelProbe {
    fn groups(&mut self) -> Vec<(String, &mut Param)> {
        self.model.params_mut()
    }

    fn loss(&mut self) -> Result<f64> {
        let logits = self.model.predict(&self.record)?;
        Ok(nll_loss(&logits, &self.labels, &self.selector)?.0)
    }

    fn compute_gradients(&mut self) -> Result<()> {
        self.model.zero_grads();
        let logits = self.model.predict(&self.record)?;
        let (_, grad) = nll_loss(&logits, &self.labels, &self.selector)?;
        self.model.backward(&grad)
    }

    fn kink_margin(&mut self) -> Result<f64> {
        let (idx, pssm) = self.record.encode_features();
        let features = self.model.stack_input(&idx, pssm)?;
        kink_margin(&self.model.stack, &features)
    }
}

/// Squared error `0.5 * |XW^T + b - Y|^2` of a linear layer; smooth and
/// quadratic, so central differences are exact up to rounding.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    pub layer: LinearLayer,
    pub input: Tensor,
    pub target: Tensor,
}

impl LinearProbe {
    pub fn random(rows: usize, n_in: usize, n_out: usize, rng: &mut Rng) -> Result<Self> {
        Ok(LinearProbe {
            layer: LinearLayer::new(n_in, n_out, rng)?,
            input: rng.uniform(-1.0, 1.0, &[rows, n_in])?,
            target: rng.uniform(-1.0, 1.0, &[rows, n_out])?,
        })
    }

    fn residual(&mut self) -> Result<Tensor> {
        let mut r = self.layer.forward(&self.input)?;
        for (v, t) in r.data_mut().iter_mut().zip(self.target.data()) {
            *v -= t;
        }
        Ok(r)
    }
}

impl GradProbe for LinearProbe {
    fn groups(&mut self) -> Vec<(String, &mut Param)> {
        let [w, b] = self.layer.params_mut();
        vec![("weight".into(), w), ("bias".into(), b)]
    }

    fn loss(&mut self) -> Result<f64> {
        Ok(0.5 * self.residual()?.data().iter().map(|v| v * v).sum::<f64>())
    }

    fn compute_gradients(&mut self) -> Result<()> {
        for p in self.layer.params_mut() {
            p.zero_grad();
        }
        let r = self.residual()?;
        self.layer.backward(&r)?;
        Ok(())
    }

    fn kink_margin(&mut self) -> Result<f64> {
        Ok(f64::INFINITY)
    }
}
