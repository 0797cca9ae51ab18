//! Tensors, a reverse-mode autodiff tape, Adam, and checkpoint IO.

mod checkpoint;
mod optim;
mod scalar;
mod tape;
mod tensor;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{Adam, AdamConfig, WarmupSchedule};
pub use scalar::Scalar;
pub use tape::{AttentionLayout, Tape, Var};
pub use tensor::{ParamId, ParamStore, Tensor};

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not match {len} data elements")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: index {index} out of range 0..{bound}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-wise numerically stable softmax over a `[rows, cols]` buffer.
pub fn softmax_rows<T: Scalar>(values: &[T], cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(values.len());
    for row in values.chunks(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut z = T::zero();
        for &x in row {
            let e = (x - max).exp();
            z = z + e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|v| *v = *v / z);
    }
    out
}
