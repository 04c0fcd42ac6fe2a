//! Dense tensors, a reverse-mode tape, and the Adam optimizer.

pub mod adam;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::Adam;
pub use params::ParamSet;
pub use tape::{Gradients, NodeId, Tape, EPS};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("non-finite gradient in `{name}`")]
    NonFiniteGrad { name: String },
}
