//! Minimal reverse-mode automatic differentiation over dense arrays.
//!
//! A [`Graph`] records every operation applied to [`Tensor`] values and
//! replays the tape backwards to accumulate gradients. Only the primitives
//! the segmentation model needs are provided; the fused ones
//! (`layer_norm`, `rope`, `attention`) carry hand-written backward passes
//! that [`grad_check`] compares against central differences.

mod gradcheck;
mod graph;
mod params;
mod tensor;

use std::sync::Arc;

use thiserror::Error;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{Graph, Var};
pub use params::{ParamStore, ParamsFile, PARAMS_FORMAT, PARAMS_VERSION};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutogradError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("rotary embedding needs an even dimension, got {0}")]
    OddDimension(usize),
    #[error("every position is masked")]
    AllMasked,
    #[error("bad attention mask: {0}")]
    BadMask(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this graph; call zero_grad first")]
    DoubleBackward,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("parameter file: {0}")]
    Format(String),
}

/// Which keys each query row may attend to.
#[derive(Clone, Debug, PartialEq)]
pub enum AttnMask {
    /// Every row sees every key.
    Full,
    /// Row-major `size × size` visibility; the diagonal must be set.
    Dense { size: usize, allowed: Arc<[bool]> },
    /// Block-diagonal: rows inside `(start, len)` see exactly that block.
    Blocks(Vec<(usize, usize)>),
}

impl AttnMask {
    pub fn dense(size: usize, allowed: Vec<bool>) -> Self {
        AttnMask::Dense {
            size,
            allowed: allowed.into(),
        }
    }

    /// Lower-triangular mask.
    pub fn causal(size: usize) -> Self {
        Self::right_offset(size, 0)
    }

    /// Row `i` sees keys `j <= i + offset`.
    pub fn right_offset(size: usize, offset: usize) -> Self {
        let allowed = (0..size * size).map(|x| x % size <= x / size + offset).collect();
        Self::dense(size, allowed)
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        match self {
            AttnMask::Full => true,
            AttnMask::Dense { size, allowed } => allowed[i * size + j],
            AttnMask::Blocks(blocks) => blocks
                .iter()
                .any(|&(s, l)| (s..s + l).contains(&i) && (s..s + l).contains(&j)),
        }
    }
}

/// Single-head masked attention as composed primitives:
/// `softmax_masked(q kᵀ / √d) v`. Kept alongside the fused
/// [`Graph::attention`] as an independent route.
pub fn composed_attention<T: crate::Scalar>(
    g: &mut Graph<T>,
    q: Var,
    k: Var,
    v: Var,
    mask: &AttnMask,
) -> Result<Var, AutogradError> {
    let n = g.value(q).rows();
    let d = g.value(q).cols();
    let scores = g.matmul_nt(q, k)?;
    let scaled = g.scale(scores, T::one() / T::from_usize(d).unwrap().sqrt());
    let bits: Vec<bool> = (0..n * n).map(|x| mask.allows(x / n, x % n)).collect();
    let w = g.masked_softmax(scaled, bits.into())?;
    g.matmul(w, v)
}
