//! Network primitives with hand-written forward and backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`, and
//! backward passes *accumulate* into parameter gradients; call
//! [`Param::zero_grad`] between updates.

mod conv;
mod dropout;
mod linear;
mod lookup;
mod nonlin;
mod pool;

pub use conv::Conv1dLayer;
pub use dropout::DropoutLayer;
pub use linear::LinearLayer;
pub use lookup::LookupTable;
pub use nonlin::{Nonlinearity, NonlinearityKind};
pub use pool::{MaxPoolLayer, PAD_SLOT};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// A trainable tensor together with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = value.zeros_like();
        Param { value, grad }
    }

    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn fan_in_uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Result<Self> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Ok(Param::new(rng.uniform(-bound, bound, shape)?))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Arithmetic used by convolution forward passes. Parameters, gradients
/// and backward passes are always 64-bit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Precision::F64),
            "f32" => Ok(Precision::F32),
            _ => Err(Error::Config(format!("unknown precision {s:?} (expected f64 or f32)"))),
        }
    }
}
