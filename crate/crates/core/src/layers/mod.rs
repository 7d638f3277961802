//! EGNN layers with forward and hand-derived backward passes.
//!
//! Both layer kinds share one weight matrix `W` (`F_out x F_in`) across the
//! `P` edge channels and concatenate the per-channel aggregations, so the
//! output has `P * F_out` columns with channel `p` in block
//! `[p * F_out, (p + 1) * F_out)`.

mod activation;
mod attention;
mod conv;
mod ops;

use alloc::vec::Vec;

pub use activation::{
    elu, elu_derivative, identity, leaky_relu, leaky_relu_derivative, Activation,
    DEFAULT_LEAKY_SLOPE,
};
pub use attention::{attention_scores, egnn_a_backward, egnn_a_forward, AttentionScores};
pub use conv::{egnn_c_backward, egnn_c_forward};
pub use ops::{
    check_rate, dense_head, dropout, dropout_mask, global_max_pool, global_max_pool_backward,
    node_softmax, DenseHead, DenseHeadGrads,
};

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::normalize::NormScheme;
use crate::sparse::{EdgeTensor, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Attention,
    Convolution,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Attention => "attn",
            LayerKind::Convolution => "conv",
        }
    }
}

impl core::str::FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attn" | "attention" => Ok(LayerKind::Attention),
            "conv" | "convolution" => Ok(LayerKind::Convolution),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown layer kind `{other}` (expected attn or conv)"
            ))),
        }
    }
}

/// Trainable state of one layer: `W` and, for attention layers, `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParameters {
    pub w: Dense,
    pub a: Option<Vec<f64>>,
}

impl LayerParameters {
    pub fn convolution(w: Dense) -> Self {
        LayerParameters { w, a: None }
    }

    pub fn attention(w: Dense, a: Vec<f64>) -> Result<Self> {
        if a.len() != 2 * w.rows() {
            return Err(Error::Shape {
                op: "LayerParameters::attention",
                expected: (2 * w.rows(), 1),
                found: (a.len(), 1),
            });
        }
        Ok(LayerParameters { w, a: Some(a) })
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }
}

/// Per-call switches for a layer forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub training: bool,
    /// Dropout on the layer input features.
    pub input_dropout: f64,
    /// Dropout on normalized attention coefficients (aggregation only).
    pub attn_dropout: f64,
    /// Normalization applied to the raw attention scores.
    pub attention_norm: NormScheme,
    pub keep_cache: bool,
}

impl ForwardOptions {
    /// Deterministic pass that keeps the backward cache.
    pub fn exact() -> Self {
        ForwardOptions {
            training: false,
            input_dropout: 0.0,
            attn_dropout: 0.0,
            attention_norm: NormScheme::Ds,
            keep_cache: true,
        }
    }

    pub fn inference(attention_norm: NormScheme) -> Self {
        ForwardOptions {
            keep_cache: false,
            attention_norm,
            ..Self::exact()
        }
    }

    pub fn with_norm(mut self, attention_norm: NormScheme) -> Self {
        self.attention_norm = attention_norm;
        self
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConvCache {
    pub x_in: Dense,
    pub input_mask: Option<Vec<f64>>,
    pub h: Dense,
    pub z: Dense,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub(crate) enum NormCache {
    /// Row-normalized scores (equal to alpha) and the raw row sums.
    Row { row_sum: Vec<f64> },
    /// Raw row and column sums.
    Sym { row_sum: Vec<f64>, col_sum: Vec<f64> },
    /// Row-normalized scores `T`, raw row sums and column sums of `T`.
    Ds {
        t: SparseMatrix,
        row_sum: Vec<f64>,
        col_sum: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct AttnChannelCache {
    pub e_in: SparseMatrix,
    /// Pre-LeakyReLU logits on `e_in`'s pattern.
    pub u: Vec<f64>,
    /// Shifted exponentiated scores on `e_in`'s pattern.
    pub f: Vec<f64>,
    pub norm: NormCache,
    /// Alpha after dropout, when dropout was applied.
    pub alpha_dropped: Option<(SparseMatrix, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub(crate) struct AttnCache {
    pub x_in: Dense,
    pub input_mask: Option<Vec<f64>>,
    pub h: Dense,
    pub z: Dense,
    pub act: Activation,
    pub slope: f64,
    pub channels: Vec<AttnChannelCache>,
}

#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    Conv(ConvCache),
    Attn(AttnCache),
}

/// Result of a layer forward pass.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    /// `n x (P * F_out)` node features.
    pub x_out: Dense,
    /// Edge features handed to the next layer: the attention coefficients
    /// for attention layers, the input edges for convolution layers.
    pub e_out: EdgeTensor,
    pub(crate) cache: Option<LayerCache>,
}

impl LayerOutput {
    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// Drops the backward cache.
    pub fn into_parts(self) -> (Dense, EdgeTensor) {
        (self.x_out, self.e_out)
    }
}

/// Gradients of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// Gradient w.r.t. the layer input (before input dropout); `None` when
    /// not requested.
    pub d_x_in: Option<Dense>,
    pub d_w: Dense,
    pub d_a: Option<Vec<f64>>,
    /// Per-channel gradients w.r.t. the stored input edge values, aligned
    /// with each input channel's pattern.
    pub d_e_in: Vec<Vec<f64>>,
}

fn check_shapes(op: &'static str, x: &Dense, e: &EdgeTensor, params: &LayerParameters) -> Result<()> {
    if x.cols() != params.in_dim() {
        return Err(Error::Shape {
            op,
            expected: (x.rows(), params.in_dim()),
            found: x.shape(),
        });
    }
    if e.n() != x.rows() {
        return Err(Error::Shape {
            op,
            expected: (x.rows(), x.rows()),
            found: (e.n(), e.n()),
        });
    }
    Ok(())
}

/// `dZ = dX_out ⊙ act'(Z)`.
fn activation_backward(z: &Dense, act: Activation, d_x_out: &Dense) -> Result<Dense> {
    if z.shape() != d_x_out.shape() {
        return Err(Error::Shape {
            op: "layer backward",
            expected: z.shape(),
            found: d_x_out.shape(),
        });
    }
    let mut dz = d_x_out.clone();
    for (g, &zv) in dz.as_mut_slice().iter_mut().zip(z.as_slice()) {
        *g *= act.derivative(zv);
    }
    Ok(dz)
}

/// `dW = dHᵀ X` and, if requested, `dX = (dH W) ⊙ mask`.
fn linear_backward(
    dh: &Dense,
    x_in: &Dense,
    w: &Dense,
    input_mask: Option<&[f64]>,
    want_input_grad: bool,
) -> Result<(Dense, Option<Dense>)> {
    let d_w = x_in.t_matmul(dh)?.transpose();
    let d_x = if want_input_grad {
        let mut dx = dh.matmul(w)?;
        if let Some(mask) = input_mask {
            for (g, m) in dx.as_mut_slice().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        Some(dx)
    } else {
        None
    };
    Ok((d_w, d_x))
}

/// `dY_p[i,:] · H[j,:]` for every stored `(i, j)` of `pattern`.
fn edge_value_grad(pattern: &SparseMatrix, dy: &Dense, block: usize, width: usize, h: &Dense) -> Vec<f64> {
    let mut out = Vec::with_capacity(pattern.nnz());
    for i in 0..pattern.n() {
        let g = &dy.row(i)[block * width..(block + 1) * width];
        for &j in pattern.row(i).0 {
            out.push(g.iter().zip(h.row(j)).map(|(a, b)| a * b).sum());
        }
    }
    out
}
