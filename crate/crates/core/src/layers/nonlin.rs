use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearityKind {
    Tanh,
    Relu,
    Prelu,
}

impl fmt::Display for NonlinearityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NonlinearityKind::Tanh => "tanh",
            NonlinearityKind::Relu => "relu",
            NonlinearityKind::Prelu => "prelu",
        })
    }
}

impl FromStr for NonlinearityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(NonlinearityKind::Tanh),
            "relu" => Ok(NonlinearityKind::Relu),
            "prelu" => Ok(NonlinearityKind::Prelu),
            other => Err(Error::Config(format!(
                "unknown nonlinearity '{other}' (expected tanh, relu or prelu)"
            ))),
        }
    }
}

/// Elementwise activation. PReLU carries one trainable slope shared by all
/// channels, initialised to 0.25.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    pub alpha: Param,
    input: Option<Tensor>,
}

pub const PRELU_INIT: f64 = 0.25;

impl Nonlinearity {
    pub fn new(kind: NonlinearityKind) -> Self {
        Self::with_alpha(kind, PRELU_INIT)
    }

    pub fn with_alpha(kind: NonlinearityKind, alpha: f64) -> Self {
        let alpha = Tensor::from_vec(&[1], vec![alpha]).expect("static shape");
        Nonlinearity {
            kind,
            alpha: Param::new(alpha),
            input: None,
        }
    }

    pub fn kind(&self) -> NonlinearityKind {
        self.kind
    }

    pub fn alpha_value(&self) -> f64 {
        self.alpha.value.data()[0]
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            NonlinearityKind::Tanh => x.tanh(),
            NonlinearityKind::Relu => x.max(0.0),
            NonlinearityKind::Prelu => {
                if x < 0.0 {
                    self.alpha_value() * x
                } else {
                    x
                }
            }
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self.kind {
            NonlinearityKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            NonlinearityKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            NonlinearityKind::Prelu => {
                if x < 0.0 {
                    self.alpha_value()
                } else {
                    1.0
                }
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = x.map(|v| self.apply(v))?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Input gradient; for PReLU also accumulates `sum_{x<0} x * g` into the slope.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Geometry("nonlinearity backward before forward".into()))?;
        if x.shape() != grad_out.shape() {
            return Err(Error::Geometry(format!(
                "nonlinearity backward expects {:?}, got {:?}",
                x.shape(),
                grad_out.shape()
            )));
        }
        let mut grad_in = grad_out.clone();
        for (g, &v) in grad_in.data_mut().iter_mut().zip(x.data()) {
            *g *= self.derivative(v);
        }
        if self.kind == NonlinearityKind::Prelu {
            let ga: f64 = x
                .data()
                .iter()
                .zip(grad_out.data())
                .filter(|(&v, _)| v < 0.0)
                .map(|(&v, &g)| v * g)
                .sum();
            self.alpha.grad.data_mut()[0] += ga;
        }
        Ok(grad_in)
    }

    /// Trainable parameters: the slope for PReLU, nothing otherwise.
    pub fn params_mut(&mut self) -> Option<&mut Param> {
        (self.kind == NonlinearityKind::Prelu).then_some(&mut self.alpha)
    }

    pub fn params(&self) -> Option<&Param> {
        (self.kind == NonlinearityKind::Prelu).then_some(&self.alpha)
    }

    pub fn cached_input(&self) -> Option<&Tensor> {
        self.input.as_ref()
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}
