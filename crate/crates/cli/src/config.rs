//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mustcnn::layers::{NonlinearityKind, Precision};
use mustcnn::model::ModelConfig;
use mustcnn::{Error, Result};

/// Everything a subcommand needs. Defaults are the small architecture and
/// its standard training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Falls back to `epochs`.
    pub finetune_epochs: Option<usize>,
    /// Falls back to a tenth of `learning_rate`.
    pub finetune_learning_rate: Option<f64>,
    pub include_validation_in_finetune: bool,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub seed: u64,
    pub workers: usize,
    /// Convolution arithmetic for predict and eval.
    pub precision: Precision,
    pub bench_precision: Precision,
    pub bench_positions: usize,
    pub bench_min_len: usize,
    pub bench_max_len: usize,
    pub synth_min_len: usize,
    pub synth_max_len: usize,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub task: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::small(),
            learning_rate: 0.0148,
            momentum: 0.9,
            epochs: 50,
            finetune_epochs: None,
            finetune_learning_rate: None,
            include_validation_in_finetune: false,
            split: [0.6, 0.2, 0.2],
            seed: 1,
            workers: 1,
            precision: Precision::F64,
            bench_precision: Precision::F32,
            bench_positions: 1_000_000,
            bench_min_len: 100,
            bench_max_len: 300,
            synth_min_len: 20,
            synth_max_len: 60,
            dataset: None,
            checkpoint: None,
            out: None,
            task: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("line {line}: {key} = {value}: {e}")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "line {line}: {key} = {value}: expected true or false"
        ))),
    }
}

fn parse_split(value: &str, line: usize) -> Result<[f64; 3]> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| parse_value("split", p.trim(), line))
        .collect::<Result<_>>()?;
    <[f64; 3]>::try_from(parts).map_err(|p| {
        Error::Config(format!(
            "line {line}: split needs three fractions, got {}",
            p.len()
        ))
    })
}

fn optional<T: FromStr>(key: &str, value: &str, line: usize) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if value == "none" {
        Ok(None)
    } else {
        parse_value(key, value, line).map(Some)
    }
}

impl RunConfig {
    /// Parses configuration text over the defaults. Unknown or repeated
    /// keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {line}: expected 'key = value', got '{content}'"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {line}: {key} given twice")));
            }
            cfg.set(key, value, line)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let m = &mut self.model;
        match key {
            "conv_layers" => m.conv_layers = parse_value(key, value, line)?,
            "hidden_units" => m.hidden_units = parse_value(key, value, line)?,
            "kernel_size" => m.kernel_size = parse_value(key, value, line)?,
            "pool_size" => m.pool_size = parse_value(key, value, line)?,
            "input_dropout" => m.input_dropout = parse_value(key, value, line)?,
            "dropout" => m.dropout = parse_value(key, value, line)?,
            "nonlinearity" => m.nonlinearity = parse_value::<NonlinearityKind>(key, value, line)?,
            "embed_dim" => m.embed_dim = parse_value(key, value, line)?,
            "tasks" => {
                m.tasks = ModelConfig::parse_tasks(value)
                    .map_err(|e| Error::Config(format!("line {line}: {e}")))?
            }
            "learning_rate" => self.learning_rate = parse_value(key, value, line)?,
            "momentum" => self.momentum = parse_value(key, value, line)?,
            "epochs" => self.epochs = parse_value(key, value, line)?,
            "finetune_epochs" => self.finetune_epochs = optional(key, value, line)?,
            "finetune_learning_rate" => self.finetune_learning_rate = optional(key, value, line)?,
            "include_validation_in_finetune" => {
                self.include_validation_in_finetune = parse_bool(key, value, line)?
            }
            "split" => self.split = parse_split(value, line)?,
            "seed" => self.seed = parse_value(key, value, line)?,
            "workers" => self.workers = parse_value(key, value, line)?,
            "precision" => self.precision = parse_value(key, value, line)?,
            "bench_precision" => self.bench_precision = parse_value(key, value, line)?,
            "bench_positions" => self.bench_positions = parse_value(key, value, line)?,
            "bench_min_len" => self.bench_min_len = parse_value(key, value, line)?,
            "bench_max_len" => self.bench_max_len = parse_value(key, value, line)?,
            "synth_min_len" => self.synth_min_len = parse_value(key, value, line)?,
            "synth_max_len" => self.synth_max_len = parse_value(key, value, line)?,
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "task" => self.task = Some(value.to_string()),
            _ => return Err(Error::Config(format!("line {line}: unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let mut bad = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            bad.push(format!("learning_rate = {} (must be finite and >= 0)", self.learning_rate));
        }
        if let Some(lr) = self.finetune_learning_rate {
            if !(lr >= 0.0 && lr.is_finite()) {
                bad.push(format!("finetune_learning_rate = {lr} (must be finite and >= 0)"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bad.push(format!("momentum = {} (must be in [0, 1))", self.momentum));
        }
        if self.epochs == 0 {
            bad.push("epochs = 0 (must be >= 1)".into());
        }
        let total: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f)) || (total - 1.0).abs() > 1e-9 {
            bad.push(format!("split = {:?} (fractions in [0, 1] summing to 1)", self.split));
        }
        if self.workers == 0 {
            bad.push("workers = 0 (must be >= 1)".into());
        }
        for (name, lo, hi) in [
            ("bench", self.bench_min_len, self.bench_max_len),
            ("synth", self.synth_min_len, self.synth_max_len),
        ] {
            if lo == 0 || lo > hi {
                bad.push(format!("{name}_min_len..{name}_max_len = {lo}..{hi} (need 1 <= min <= max)"));
            }
        }
        if self.bench_positions == 0 {
            bad.push("bench_positions = 0 (must be >= 1)".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn finetune_epochs(&self) -> usize {
        self.finetune_epochs.unwrap_or(self.epochs)
    }

    pub fn finetune_learning_rate(&self) -> f64 {
        self.finetune_learning_rate.unwrap_or(self.learning_rate / 10.0)
    }
}

fn path_or_none(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "none".into())
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_else(|| "none".into())
}

impl fmt::Display for RunConfig {
    /// Emits text that [`RunConfig::parse`] reads back to an equal value,
    /// except that absent paths and task are written as comments.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.model)?;
        writeln!(f, "learning_rate = {}", self.learning_rate)?;
        writeln!(f, "momentum = {}", self.momentum)?;
        writeln!(f, "epochs = {}", self.epochs)?;
        writeln!(f, "finetune_epochs = {}", opt(&self.finetune_epochs))?;
        writeln!(f, "finetune_learning_rate = {}", opt(&self.finetune_learning_rate))?;
        writeln!(f, "include_validation_in_finetune = {}", self.include_validation_in_finetune)?;
        let [a, b, c] = self.split;
        writeln!(f, "split = {a},{b},{c}")?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "workers = {}", self.workers)?;
        writeln!(f, "precision = {}", self.precision)?;
        writeln!(f, "bench_precision = {}", self.bench_precision)?;
        writeln!(f, "bench_positions = {}", self.bench_positions)?;
        writeln!(f, "bench_min_len = {}", self.bench_min_len)?;
        writeln!(f, "bench_max_len = {}", self.bench_max_len)?;
        writeln!(f, "synth_min_len = {}", self.synth_min_len)?;
        writeln!(f, "synth_max_len = {}", self.synth_max_len)?;
        for (key, value) in [
            ("dataset", path_or_none(&self.dataset)),
            ("checkpoint", path_or_none(&self.checkpoint)),
            ("out", path_or_none(&self.out)),
            ("task", opt(&self.task)),
        ] {
            if value == "none" {
                writeln!(f, "# {key} = none")?;
            } else {
                writeln!(f, "{key} = {value}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_small_model() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.model, ModelConfig::small());
        assert_eq!(cfg.epochs, 50);
        cfg.validate().unwrap();
    }

    #[test]
    fn comments_and_spacing() {
        let cfg = RunConfig::parse("# header\n  hidden_units=32   # inline\n\nepochs = 3\n").unwrap();
        assert_eq!(cfg.model.hidden_units, 32);
        assert_eq!(cfg.epochs, 3);
    }

    #[test]
    fn unknown_and_repeated_keys() {
        let e = RunConfig::parse("hiden_units = 3").unwrap_err();
        assert!(e.to_string().contains("unknown key 'hiden_units'"), "{e}");
        assert!(RunConfig::parse("epochs = 1\nepochs = 2").is_err());
        assert!(RunConfig::parse("epochs").is_err());
        assert!(RunConfig::parse("epochs = many").is_err());
    }

    #[test]
    fn display_round_trips() {
        let mut cfg = RunConfig::parse(
            "tasks = ssp,sar\nsplit = 0.8,0.2,0\nfinetune_learning_rate = 0.002\nnonlinearity = prelu\ncheckpoint = a.ckpt",
        )
        .unwrap();
        cfg.precision = Precision::F32;
        assert_eq!(RunConfig::parse(&cfg.to_string()).unwrap(), cfg);
    }

    #[test]
    fn validation_collects_problems() {
        let cfg = RunConfig::parse("momentum = 1.0\nsplit = 0.5,0.2,0.2\nkernel_size = 4").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::parse("momentum = 1.0\nsplit = 0.5,0.2,0.2").unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("momentum") && msg.contains("split"), "{msg}");
    }

    #[test]
    fn finetune_rate_defaults_to_tenth() {
        let cfg = RunConfig::parse("learning_rate = 0.01").unwrap();
        assert!((cfg.finetune_learning_rate() - 0.001).abs() < 1e-15);
        let cfg = RunConfig::parse("learning_rate = 0.01\nfinetune_learning_rate = 0.5").unwrap();
        assert_eq!(cfg.finetune_learning_rate(), 0.5);
    }
}
