use std::fmt;

use crate::data::TaskScheme;
use crate::error::{Error, Result};
use crate::layers::NonlinearityKind;

/// Architecture hyperparameters. The default is the small model:
/// three blocks of 189 channels, kernel 9, pool 2, input dropout 0.35, ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub conv_layers: usize,
    pub hidden_units: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub input_dropout: f64,
    pub dropout: f64,
    pub nonlinearity: NonlinearityKind,
    pub embed_dim: usize,
    pub tasks: Vec<TaskScheme>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::small()
    }
}

impl ModelConfig {
    pub fn small() -> Self {
        ModelConfig {
            conv_layers: 3,
            hidden_units: 189,
            kernel_size: 9,
            pool_size: 2,
            input_dropout: 0.35,
            dropout: 0.0,
            nonlinearity: NonlinearityKind::Relu,
            embed_dim: 15,
            tasks: TaskScheme::standard(),
        }
    }

    /// The large model with dropout 0.3.
    pub fn large() -> Self {
        ModelConfig {
            hidden_units: 1024,
            kernel_size: 5,
            input_dropout: 0.1,
            dropout: 0.3,
            ..Self::small()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.conv_layers == 0 {
            bad.push(format!("conv_layers = {} (must be >= 1)", self.conv_layers));
        }
        if self.hidden_units == 0 {
            bad.push("hidden_units = 0 (must be >= 1)".to_string());
        }
        if self.kernel_size % 2 == 0 {
            bad.push(format!("kernel_size = {} (must be odd)", self.kernel_size));
        }
        if self.pool_size == 0 {
            bad.push("pool_size = 0 (must be >= 1)".to_string());
        }
        if !(0.0..1.0).contains(&self.input_dropout) {
            bad.push(format!("input_dropout = {} (must be in [0, 1))", self.input_dropout));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bad.push(format!("dropout = {} (must be in [0, 1))", self.dropout));
        }
        if self.embed_dim == 0 {
            bad.push("embed_dim = 0 (must be >= 1)".to_string());
        }
        if self.tasks.is_empty() {
            bad.push("tasks is empty".to_string());
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if t.class_count() < 2 {
                bad.push(format!("task {} has fewer than 2 classes", t.name));
            }
            if self.tasks[..i].iter().any(|o| o.name == t.name) {
                bad.push(format!("task {} listed twice", t.name));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn pool_sizes(&self) -> Vec<usize> {
        vec![self.pool_size; self.conv_layers]
    }

    pub fn kernel_sizes(&self) -> Vec<usize> {
        vec![self.kernel_size; self.conv_layers]
    }

    pub fn task(&self, name: &str) -> Option<&TaskScheme> {
        self.tasks.iter().find(|t| t.name == name)
    }

    /// `name:ALPHABET` pairs joined by commas.
    pub fn tasks_spec(&self) -> String {
        self.tasks
            .iter()
            .map(|t| format!("{}:{}", t.name, t.alphabet.iter().collect::<String>()))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses a task list: built-in names, or `name:ALPHABET` pairs.
    pub fn parse_tasks(spec: &str) -> Result<Vec<TaskScheme>> {
        spec.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| match item.split_once(':') {
                Some((name, alpha)) => TaskScheme::new(name.trim(), alpha.trim()),
                None => TaskScheme::by_name(item)
                    .ok_or_else(|| Error::Config(format!("unknown task '{item}'"))),
            })
            .collect()
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "conv_layers = {}", self.conv_layers)?;
        writeln!(f, "hidden_units = {}", self.hidden_units)?;
        writeln!(f, "kernel_size = {}", self.kernel_size)?;
        writeln!(f, "pool_size = {}", self.pool_size)?;
        writeln!(f, "input_dropout = {}", self.input_dropout)?;
        writeln!(f, "dropout = {}", self.dropout)?;
        writeln!(f, "nonlinearity = {}", self.nonlinearity)?;
        writeln!(f, "embed_dim = {}", self.embed_dim)?;
        writeln!(f, "tasks = {}", self.tasks_spec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_defaults() {
        let c = ModelConfig::small();
        assert_eq!((c.conv_layers, c.hidden_units, c.kernel_size, c.pool_size), (3, 189, 9, 2));
        assert_eq!(c.input_dropout, 0.35);
        assert_eq!(c.dropout, 0.0);
        c.validate().unwrap();
        ModelConfig::large().validate().unwrap();
    }

    #[test]
    fn lists_every_offending_field() {
        let c = ModelConfig {
            kernel_size: 4,
            dropout: 1.0,
            ..ModelConfig::small()
        };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("kernel_size") && msg.contains("dropout"), "{msg}");
    }

    #[test]
    fn task_spec_round_trip() {
        let c = ModelConfig::small();
        assert_eq!(ModelConfig::parse_tasks(&c.tasks_spec()).unwrap(), c.tasks);
        assert_eq!(ModelConfig::parse_tasks("ssp").unwrap()[0].class_count(), 3);
    }
}
