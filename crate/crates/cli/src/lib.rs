//! Subcommands of the `mustcnn` binary, callable in-process.

pub mod config;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use mustcnn::data::{
    read_dataset, split_dataset, synth_generate, write_dataset, SequenceRecord, SynthConfig,
    TaskScheme,
};
use mustcnn::eval::{evaluate, measure_throughput, ThroughputReport};
use mustcnn::layers::{NonlinearityKind, Precision};
use mustcnn::model::{checkpoint_load, checkpoint_save, predict_labels, Model};
use mustcnn::train::{
    finetune_with_rate, grad_check, train_multitask_observed, GradReport, ModelProbe, OptimState,
    TrainPlan,
};
use mustcnn::verify::{stitch_suite, StitchReport};
use mustcnn::{Error, Rng};

pub use config::RunConfig;

/// Relative-error bound for the gradient check.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Random stitch configurations per check.
pub const STITCH_CASES: usize = 200;
pub const STITCH_EXACT_TOL: f64 = 1e-12;
pub const STITCH_ATROUS_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "mustcnn", version, about = "Dense per-residue protein sequence labeling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for splits, initialisation, shuffling and dropout.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Task to fine-tune.
    #[arg(long, global = true)]
    pub task: Option<String>,
    /// Checkpoint to load.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Output path; commands that print write here instead.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Evaluation and inference threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Joint multitask training; writes a checkpoint and `<out>.log`.
    Train { dataset: Option<PathBuf> },
    /// Single-task fine-tuning of a joint checkpoint.
    Finetune { dataset: Option<PathBuf> },
    /// Writes the records with predicted labels in dataset format.
    Predict { dataset: Option<PathBuf> },
    /// Accuracy and per-class precision, recall and F1.
    Eval { dataset: Option<PathBuf> },
    /// Gradient check and stitch equivalence suite.
    Check,
    /// Inference throughput in milliseconds per million positions.
    Bench { dataset: Option<PathBuf> },
    /// Writes a synthetic corpus of `n` sequences.
    Synth { n: usize },
}

/// A verification subcommand found a failure.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

/// `CLASS: message` on one line.
pub fn error_line(err: &anyhow::Error) -> String {
    let class = if let Some(e) = err.downcast_ref::<Error>() {
        e.class().to_string()
    } else if err.downcast_ref::<CheckFailed>().is_some() {
        "CHECK".to_string()
    } else {
        "ERROR".to_string()
    };
    // sources already quoted by their parent's message are skipped
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    format!("{class}: {}", msg.replace('\n', " "))
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> anyhow::Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::Train { .. } => cmd_train(&cfg, out),
        Command::Finetune { .. } => cmd_finetune(&cfg, out),
        Command::Predict { .. } => cmd_predict(&cfg, out),
        Command::Eval { .. } => cmd_eval(&cfg, out),
        Command::Check => cmd_check(&cfg, out),
        Command::Bench { .. } => cmd_bench(&cfg, out),
        Command::Synth { n } => cmd_synth(&cfg, *n, out),
    }
}

/// Config file, then flags and the positional dataset on top.
pub fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = &cli.task {
        cfg.task = Some(t.clone());
    }
    if let Some(c) = &cli.checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    let dataset = match &cli.command {
        Command::Train { dataset }
        | Command::Finetune { dataset }
        | Command::Predict { dataset }
        | Command::Eval { dataset }
        | Command::Bench { dataset } => dataset.clone(),
        Command::Check | Command::Synth { .. } => None,
    };
    if dataset.is_some() {
        cfg.dataset = dataset;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> anyhow::Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} given")).into())
}

fn load_dataset(cfg: &RunConfig) -> anyhow::Result<Vec<SequenceRecord>> {
    let path = require(&cfg.dataset, "dataset")?;
    let records = read_dataset(path)?;
    if records.is_empty() {
        return Err(Error::Data(format!("{}: no records", path.display())).into());
    }
    Ok(records)
}

fn load_model(cfg: &RunConfig) -> anyhow::Result<Model> {
    let path = require(&cfg.checkpoint, "checkpoint (--checkpoint)")?;
    let mut model = checkpoint_load(path)?;
    model.set_precision(cfg.precision);
    Ok(model)
}

fn log_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

/// Hyperparameter lines for run logs. Paths are left out so a log
/// depends only on the run's settings and data.
fn config_header(cfg: &RunConfig) -> String {
    cfg.to_string()
        .lines()
        .filter(|l| {
            let key = l.trim_start_matches("# ").split(" = ").next().unwrap_or("");
            !matches!(key, "dataset" | "checkpoint" | "out")
        })
        .map(|l| if l.starts_with('#') { format!("{l}\n") } else { format!("# {l}\n") })
        .collect()
}

/// Joint training on the train split, monitored on the validation split.
pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let records = load_dataset(cfg)?;
    let split = split_dataset(records, cfg.split, cfg.seed)?;
    let mut model = Model::build(cfg.model.clone(), &mut Rng::new(cfg.seed))?;
    let mut state = OptimState::for_model(cfg.learning_rate, cfg.momentum, &model)?;
    let plan = TrainPlan::new(cfg.epochs, cfg.seed);
    let mut log = config_header(cfg);
    let mut io_err = None;
    train_multitask_observed(&mut model, &split.train, &split.validation, &plan, &mut state, &mut |e| {
        log.push_str(&format!("{e}\n"));
        if let Err(err) = writeln!(out, "{e}") {
            io_err.get_or_insert(err);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e).context("writing training log");
    }
    let ckpt = cfg.out.clone().unwrap_or_else(|| PathBuf::from("model.ckpt"));
    checkpoint_save(&model, &ckpt)?;
    write_file(&log_path(&ckpt), log.as_bytes())?;
    writeln!(out, "checkpoint={}", ckpt.display())?;
    Ok(())
}

/// Fine-tunes a joint checkpoint on `task`.
pub fn cmd_finetune(cfg: &RunConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let Some(task) = cfg.task.as_deref() else {
        return Err(Error::Config("finetune needs --task".into()).into());
    };
    let mut joint = load_model(cfg)?;
    joint.set_precision(Precision::F64);
    if joint.config().task(task).is_none() {
        return Err(Error::Config(format!(
            "unknown task '{task}' (model has {})",
            joint.config().tasks_spec()
        ))
        .into());
    }
    let records = load_dataset(cfg)?;
    let split = split_dataset(records, cfg.split, cfg.seed)?;
    let mut plan = TrainPlan::new(cfg.finetune_epochs(), cfg.seed);
    plan.include_validation_in_finetune = cfg.include_validation_in_finetune;
    let lr = cfg.finetune_learning_rate();
    let header = format!(
        "finetune task={task} learning_rate={lr} momentum={} epochs={}",
        cfg.momentum, plan.epochs
    );
    writeln!(out, "{header}")?;
    let (tuned, log) =
        finetune_with_rate(&joint, &split.train, &split.validation, task, &plan, lr, cfg.momentum)?;
    write!(out, "{log}")?;
    let ckpt = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("model.{task}.ckpt")));
    checkpoint_save(&tuned, &ckpt)?;
    let text = format!("{}{header}\n{log}", config_header(cfg));
    write_file(&log_path(&ckpt), text.as_bytes())?;
    writeln!(out, "checkpoint={}", ckpt.display())?;
    Ok(())
}

/// Predicted labels for every record of the dataset.
pub fn predict_records(model: &mut Model, records: &[SequenceRecord]) -> anyhow::Result<Vec<SequenceRecord>> {
    for scheme in &model.config().tasks {
        if TaskScheme::by_name(&scheme.name).as_ref() != Some(scheme) {
            return Err(Error::Data(format!(
                "model task {}:{} does not match any dataset label alphabet",
                scheme.name,
                scheme.alphabet.iter().collect::<String>()
            ))
            .into());
        }
    }
    let schemes = model.config().tasks.clone();
    records
        .iter()
        .map(|r| {
            let logits = model.predict(r)?;
            let labels = predict_labels(&logits, &schemes)?;
            Ok(SequenceRecord::new(r.id.clone(), &r.residues, r.pssm.clone(), labels)?)
        })
        .collect()
}

pub fn cmd_predict(cfg: &RunConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut model = load_model(cfg)?;
    let records = load_dataset(cfg)?;
    let predicted = predict_records(&mut model, &records)?;
    match &cfg.out {
        Some(path) => {
            let mut buf = Vec::new();
            write_dataset(&mut buf, &predicted)?;
            write_file(path, &buf)?;
            writeln!(out, "predictions={}", path.display())?;
        }
        None => write_dataset(&mut *out, &predicted)?,
    }
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let model = load_model(cfg)?;
    let records = load_dataset(cfg)?;
    let report = evaluate(&model, &records, cfg.workers)?;
    let text = report.to_string();
    write!(out, "{text}")?;
    if let Some(path) = &cfg.out {
        write_file(path, text.as_bytes())?;
    }
    Ok(())
}

/// Results of [`run_checks`].
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub gradients: Vec<(NonlinearityKind, GradReport)>,
    /// Whether the sign-flipped convolution backward was flagged.
    pub mutation_detected: bool,
    pub stitch: StitchReport,
    pub seconds: f64,
}

impl CheckReport {
    pub fn passes(&self) -> bool {
        self.gradients.iter().all(|(_, r)| r.passes())
            && self.mutation_detected
            && self.stitch.passes(STITCH_EXACT_TOL, STITCH_ATROUS_TOL)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = |ok: bool| if ok { "pass" } else { "FAIL" };
        for (kind, r) in &self.gradients {
            writeln!(
                f,
                "grad_check nonlinearity={kind} groups={} worst_rel_err={:.3e} tolerance={:e} status={}",
                r.groups.len(),
                r.worst(),
                r.tolerance,
                status(r.passes())
            )?;
            for g in r.flagged() {
                writeln!(f, "  flagged group={} rel_err={:.3e}", g.name, g.max_rel_err)?;
            }
        }
        writeln!(
            f,
            "mutation sign_flipped_conv_backward detected={} status={}",
            self.mutation_detected,
            status(self.mutation_detected)
        )?;
        let s = &self.stitch;
        writeln!(
            f,
            "stitch cases={} input_once_vs_loop={:.3e} per_layer_vs_loop={:.3e} loop_vs_atrous={:.3e} length_failures={} status={}",
            s.cases,
            s.worst.input_once_vs_loop,
            s.worst.per_layer_vs_loop,
            s.worst.loop_vs_atrous,
            s.length_failures,
            status(s.passes(STITCH_EXACT_TOL, STITCH_ATROUS_TOL))
        )?;
        writeln!(f, "check seconds={:.2} status={}", self.seconds, status(self.passes()))
    }
}

/// Gradient checks for every nonlinearity, the mutation test and the
/// stitch suite, all seeded from `seed`.
pub fn run_checks(seed: u64) -> anyhow::Result<CheckReport> {
    let start = Instant::now();
    let mut gradients = Vec::new();
    for kind in [NonlinearityKind::Prelu, NonlinearityKind::Relu, NonlinearityKind::Tanh] {
        let mut rng = Rng::new(seed);
        let report = grad_check(|r| ModelProbe::tiny(kind, r), GRAD_TOLERANCE, &mut rng)?;
        gradients.push((kind, report));
    }
    let mut rng = Rng::new(seed);
    let mutated = grad_check(
        |r| {
            let mut p = ModelProbe::tiny(NonlinearityKind::Prelu, r)?;
            p.model.stack.blocks[0].conv.inject_sign_flip(true);
            Ok(p)
        },
        GRAD_TOLERANCE,
        &mut rng,
    )?;
    let stitch = stitch_suite(STITCH_CASES, seed)?;
    Ok(CheckReport {
        gradients,
        mutation_detected: !mutated.passes(),
        stitch,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn cmd_check(cfg: &RunConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let report = run_checks(cfg.seed)?;
    write!(out, "{report}")?;
    if !report.passes() {
        bail!(CheckFailed("verification failed; see report above".into()));
    }
    Ok(())
}

/// Synthetic chains totalling at least `positions` residues.
pub fn bench_corpus(cfg: &RunConfig) -> anyhow::Result<Vec<SequenceRecord>> {
    let mean = (cfg.bench_min_len + cfg.bench_max_len) as f64 / 2.0;
    let mut rng = Rng::new(cfg.seed);
    let mut records = Vec::new();
    let mut total = 0;
    while total < cfg.bench_positions {
        let remaining = cfg.bench_positions - total;
        let batch = SynthConfig {
            sequences: (remaining as f64 / mean).ceil().max(1.0) as usize,
            min_len: cfg.bench_min_len,
            max_len: cfg.bench_max_len,
        };
        for mut r in synth_generate(&mut rng, batch)? {
            if total >= cfg.bench_positions {
                break;
            }
            r.id = format!("bench{:07}", records.len());
            total += r.seq_len();
            records.push(r);
        }
    }
    Ok(records)
}

/// Throughput of the configured (or checkpointed) model.
pub fn bench(cfg: &RunConfig) -> anyhow::Result<ThroughputReport> {
    let mut model = match &cfg.checkpoint {
        Some(p) => checkpoint_load(p)?,
        None => Model::build(cfg.model.clone(), &mut Rng::new(cfg.seed))?,
    };
    model.set_precision(cfg.bench_precision);
    let records = match &cfg.dataset {
        Some(_) => load_dataset(cfg)?,
        None => bench_corpus(cfg)?,
    };
    Ok(measure_throughput(&model, &records, cfg.workers)?)
}

pub fn cmd_bench(cfg: &RunConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let report = bench(cfg)?;
    writeln!(out, "precision={}", cfg.bench_precision)?;
    writeln!(out, "workers={}", cfg.workers)?;
    write!(out, "{report}")?;
    if !report.is_consistent() {
        bail!(CheckFailed("throughput report failed its consistency identity".into()));
    }
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig, n: usize, out: &mut dyn Write) -> anyhow::Result<()> {
    let synth = SynthConfig {
        sequences: n,
        min_len: cfg.synth_min_len,
        max_len: cfg.synth_max_len,
    };
    let records = synth_generate(&mut Rng::new(cfg.seed), synth)?;
    match &cfg.out {
        Some(path) => {
            let mut buf = Vec::new();
            write_dataset(&mut buf, &records)?;
            write_file(path, &buf)?;
            writeln!(out, "dataset={} sequences={n}", path.display())?;
        }
        None => write_dataset(&mut *out, &records)?,
    }
    Ok(())
}
