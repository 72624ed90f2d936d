//! Minimal neural-network core: dense f64 tensors, an eager autodiff tape,
//! Adam, and checkpointing. Written for clarity and determinism rather than
//! raw speed — every training run with the same seed reproduces bitwise.

mod checkpoint;
mod graph;
mod store;
mod tensor;

pub use checkpoint::{load, save};
pub use graph::{Gradients, Graph, NodeId};
pub use store::ParamStore;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Central-difference gradient of `f` at `at`, used as the oracle for the
/// analytic backward pass.
pub fn numeric_gradient(mut f: impl FnMut(&Tensor) -> f64, at: &Tensor, eps: f64) -> Tensor {
    let mut grad = Tensor::zeros(at.shape());
    let mut x = at.clone();
    for i in 0..at.numel() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + eps;
        let hi = f(&x);
        x.data_mut()[i] = orig - eps;
        let lo = f(&x);
        x.data_mut()[i] = orig;
        grad.data_mut()[i] = (hi - lo) / (2.0 * eps);
    }
    grad
}

/// Largest relative error between two gradient tensors, with the denominator
/// guarded so near-zero entries compare absolutely.
pub fn max_rel_err(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs() / f64::max(1e-6, x.abs() + y.abs()))
        .fold(0.0, f64::max)
}
