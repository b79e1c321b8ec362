//! Dense per-position sequence labeling with a multilayer shift-and-stitch
//! convolutional network.
//!
//! The crate covers the whole pipeline: tensors and layers with manual
//! backward passes ([`layers`]), the shift-and-stitch geometry ([`stitch`]),
//! the multitask network and its checkpoint format ([`model`]), per-sequence
//! SGD with momentum and fine-tuning ([`train`]), dataset handling
//! ([`data`]), metrics ([`eval`]) and reference implementations used for
//! verification ([`verify`]).

pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod rng;
pub mod stitch;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, ErrorClass, Result};
pub use rng::Rng;
pub use tensor::Tensor;
