//! Minimal f64 neural-network toolkit with reverse-mode differentiation.

mod adam;
mod batchnorm;
mod checkpoint;
mod conv;
mod dropout;
mod gemm;
pub mod gradcheck;
mod graph;
mod init;
mod loss;
mod lstm;
mod tensor;

pub use adam::Adam;
pub use batchnorm::{BatchNormState, Mode};
pub use checkpoint::Archive;
pub use graph::{Graph, Var};
pub use init::glorot_uniform;
pub use loss::{one_hot, one_hot_classes, softmax, softmax_xent};
pub use lstm::{lstm_step, LstmParams};
pub use tensor::Tensor;
