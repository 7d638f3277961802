//! Attention layer.
//!
//! Per channel `p`:
//!
//! ```text
//! f(i, j)   = exp(LeakyReLU(a_lᵀ h_i + a_rᵀ h_j)),   h = X Wᵀ
//! â_p(i, j) = f(i, j) * E_p(i, j)
//! α_p       = N(â_p)            N = DS (default), row or sym
//! X_out     = act(‖_p α_p h)
//! E_out     = α
//! ```
//!
//! Scores are shifted by their row maximum (global maximum for sym) before
//! exponentiation. Row and DS normalization start by dividing each row by
//! its sum and sym is invariant under a global rescale, so the shift never
//! changes α and contributes no gradient.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::{
    activation_backward, check_shapes, edge_value_grad, leaky_relu, leaky_relu_derivative,
    linear_backward, Activation, AttnCache, AttnChannelCache, ForwardOptions, GradientBundle,
    LayerCache, LayerOutput, LayerParameters, NormCache, DEFAULT_LEAKY_SLOPE,
};
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::normalize::NormScheme;
use crate::sparse::{EdgeTensor, SparseMatrix};

/// Lazily evaluated pairwise attention scores. Only the two projections
/// `a_lᵀ h_i` and `a_rᵀ h_j` are stored; the concatenation `[h_i ‖ h_j]` is
/// never built.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionScores {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub slope: f64,
}

impl AttentionScores {
    pub fn from_hidden(h: &Dense, a: &[f64], slope: f64) -> Self {
        let f = h.cols();
        let (a_l, a_r) = a.split_at(f);
        let dot = |row: &[f64], v: &[f64]| row.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        AttentionScores {
            left: (0..h.rows()).map(|i| dot(h.row(i), a_l)).collect(),
            right: (0..h.rows()).map(|i| dot(h.row(i), a_r)).collect(),
            slope,
        }
    }

    /// Pre-activation logit `a_lᵀ h_i + a_rᵀ h_j`.
    #[inline]
    pub fn logit(&self, i: usize, j: usize) -> f64 {
        self.left[i] + self.right[j]
    }

    /// Unshifted `exp(LeakyReLU(logit))`.
    #[inline]
    pub fn score(&self, i: usize, j: usize) -> f64 {
        libm::exp(leaky_relu(self.logit(i, j), self.slope))
    }

    /// Logits and shifted scores on a pattern.
    fn on_pattern(&self, pattern: &SparseMatrix, per_row_shift: bool) -> (Vec<f64>, Vec<f64>) {
        let mut u = Vec::with_capacity(pattern.nnz());
        for i in 0..pattern.n() {
            for &j in pattern.row(i).0 {
                u.push(self.logit(i, j));
            }
        }
        let act: Vec<f64> = u.iter().map(|&v| leaky_relu(v, self.slope)).collect();
        let mut f = vec![0.0; act.len()];
        if per_row_shift {
            for i in 0..pattern.n() {
                let range = pattern.row_range(i);
                let m = act[range.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for k in range {
                    f[k] = libm::exp(act[k] - m);
                }
            }
        } else {
            let m = act.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (fk, &v) in f.iter_mut().zip(&act) {
                *fk = libm::exp(v - m);
            }
        }
        (u, f)
    }
}

/// Attention scores for layer input `x`; evaluated lazily on any pattern.
pub fn attention_scores(x: &Dense, params: &LayerParameters) -> Result<AttentionScores> {
    let a = params
        .a
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("attention layer without attention vector".into()))?;
    let h = x.matmul_t(&params.w)?;
    Ok(AttentionScores::from_hidden(&h, a, DEFAULT_LEAKY_SLOPE))
}

fn positive_row_sums(m: &SparseMatrix, channel: usize) -> Result<Vec<f64>> {
    let sums = m.row_sums();
    match sums.iter().position(|&s| !(s > 0.0)) {
        Some(node) => Err(Error::ZeroRowSum { channel, node }),
        None => Ok(sums),
    }
}

fn recip(v: f64) -> f64 {
    if v > 0.0 {
        1.0 / v
    } else {
        0.0
    }
}

fn normalize_scores(
    hat: &SparseMatrix,
    scheme: NormScheme,
    channel: usize,
) -> Result<(SparseMatrix, NormCache)> {
    let row_sum = positive_row_sums(hat, channel)?;
    let inv_rows: Vec<f64> = row_sum.iter().map(|&s| 1.0 / s).collect();
    Ok(match scheme {
        NormScheme::Row => (hat.scale_rows(&inv_rows)?, NormCache::Row { row_sum }),
        NormScheme::Sym => {
            let col_sum = hat.col_sums();
            let r: Vec<f64> = row_sum.iter().map(|&s| recip(libm::sqrt(s))).collect();
            let c: Vec<f64> = col_sum.iter().map(|&s| recip(libm::sqrt(s))).collect();
            let alpha = hat.scale_rows(&r)?.scale_cols(&c)?;
            (alpha, NormCache::Sym { row_sum, col_sum })
        }
        NormScheme::Ds => {
            let t = hat.scale_rows(&inv_rows)?;
            let col_sum = t.col_sums();
            let inv_cols: Vec<f64> = col_sum.iter().map(|&c| recip(c)).collect();
            let alpha = t.scale_cols(&inv_cols)?.matmul(&t.transpose())?;
            (
                alpha,
                NormCache::Ds {
                    t,
                    row_sum,
                    col_sum,
                },
            )
        }
    })
}

pub fn egnn_a_forward<R: Rng + ?Sized>(
    x: &Dense,
    e: &EdgeTensor,
    params: &LayerParameters,
    act: Activation,
    opts: &ForwardOptions,
    rng: &mut R,
) -> Result<LayerOutput> {
    check_shapes("egnn_a_forward", x, e, params)?;
    let a = params
        .a
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("attention layer without attention vector".into()))?;
    super::check_rate(opts.attn_dropout)?;
    let (x_in, input_mask) = super::dropout(x, opts.input_dropout, rng, opts.training)?;
    let h = x_in.matmul_t(&params.w)?;
    let scores = AttentionScores::from_hidden(&h, a, DEFAULT_LEAKY_SLOPE);

    let n = x.rows();
    let f_out = params.out_dim();
    let mut z = Dense::zeros(n, e.channel_count() * f_out);
    let mut alphas = Vec::with_capacity(e.channel_count());
    let mut caches = Vec::new();
    for (p, channel) in e.channels().iter().enumerate() {
        let per_row = opts.attention_norm != NormScheme::Sym;
        let (u, f) = scores.on_pattern(channel, per_row);
        let raw = channel.values().iter().zip(&f).map(|(ev, fv)| ev * fv).collect();
        let hat = channel.with_values_unchecked(raw);
        let (alpha, norm) = normalize_scores(&hat, opts.attention_norm, p)?;

        let alpha_dropped = if opts.training && opts.attn_dropout > 0.0 {
            let mask = super::dropout_mask(alpha.nnz(), opts.attn_dropout, rng);
            let vals = alpha.values().iter().zip(&mask).map(|(v, m)| v * m).collect();
            Some((alpha.with_values_unchecked(vals), mask))
        } else {
            None
        };
        let aggregator = alpha_dropped.as_ref().map_or(&alpha, |(m, _)| m);
        let y = aggregator.spmm(&h)?;
        for i in 0..n {
            z.row_mut(i)[p * f_out..(p + 1) * f_out].copy_from_slice(y.row(i));
        }
        if opts.keep_cache {
            caches.push(AttnChannelCache {
                e_in: channel.clone(),
                u,
                f,
                norm,
                alpha_dropped,
            });
        }
        alphas.push(alpha);
    }
    let x_out = z.map(|v| act.apply(v));
    let cache = opts.keep_cache.then(|| {
        LayerCache::Attn(AttnCache {
            x_in,
            input_mask,
            h,
            z,
            act,
            slope: scores.slope,
            channels: caches,
        })
    });
    Ok(LayerOutput {
        x_out,
        e_out: EdgeTensor::new(alphas)?,
        cache,
    })
}

/// `(g * t)` evaluated at the stored entries of `pattern`.
fn product_on_pattern(g: &SparseMatrix, t: &SparseMatrix, pattern: &SparseMatrix) -> Vec<f64> {
    let n = pattern.n();
    let mut acc = vec![0.0f64; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(pattern.nnz());
    for a in 0..n {
        let (g_cols, g_vals) = g.row(a);
        for (&j, &gv) in g_cols.iter().zip(g_vals) {
            let (t_cols, t_vals) = t.row(j);
            for (&b, &tv) in t_cols.iter().zip(t_vals) {
                if acc[b] == 0.0 {
                    touched.push(b);
                }
                acc[b] += gv * tv;
            }
        }
        for &b in pattern.row(a).0 {
            out.push(acc[b]);
        }
        for &b in &touched {
            acc[b] = 0.0;
        }
        touched.clear();
    }
    out
}

/// Backward through `T = diag(1/R) â`.
fn row_normalize_backward(t: &SparseMatrix, d_t: &[f64], row_sum: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; t.nnz()];
    for i in 0..t.n() {
        let range = t.row_range(i);
        let dot: f64 = range.clone().map(|k| d_t[k] * t.values()[k]).sum();
        for k in range {
            out[k] = (d_t[k] - dot) / row_sum[i];
        }
    }
    out
}

/// Maps the gradient on α (α's pattern) to the gradient on â (input pattern).
fn normalize_backward(
    norm: &NormCache,
    hat_pattern: &SparseMatrix,
    alpha: &SparseMatrix,
    g: Vec<f64>,
) -> Vec<f64> {
    match norm {
        NormCache::Row { row_sum } => row_normalize_backward(alpha, &g, row_sum),
        NormCache::Sym { row_sum, col_sum } => {
            let n = alpha.n();
            let mut d_row = vec![0.0; n];
            let mut d_col = vec![0.0; n];
            for (k, (i, j, av)) in alpha.iter().enumerate() {
                d_row[i] += g[k] * av;
                d_col[j] += g[k] * av;
            }
            for i in 0..n {
                d_row[i] *= -0.5 * recip(row_sum[i]);
                d_col[i] *= -0.5 * recip(col_sum[i]);
            }
            let mut out = Vec::with_capacity(hat_pattern.nnz());
            for (k, (i, j, _)) in hat_pattern.iter().enumerate() {
                let scale = recip(libm::sqrt(row_sum[i])) * recip(libm::sqrt(col_sum[j]));
                out.push(g[k] * scale + d_row[i] + d_col[j]);
            }
            out
        }
        NormCache::Ds {
            t,
            row_sum,
            col_sum,
        } => {
            let g_mat = alpha.with_values_unchecked(g);
            let gt = product_on_pattern(&g_mat, t, t);
            let gtt = product_on_pattern(&g_mat.transpose(), t, t);
            let n = t.n();
            let mut d_col = vec![0.0; n];
            for (k, (_, b, tv)) in t.iter().enumerate() {
                d_col[b] += tv * gt[k];
            }
            for b in 0..n {
                d_col[b] *= -recip(col_sum[b]) * recip(col_sum[b]);
            }
            let d_t: Vec<f64> = t
                .iter()
                .enumerate()
                .map(|(k, (_, b, _))| (gt[k] + gtt[k]) * recip(col_sum[b]) + d_col[b])
                .collect();
            row_normalize_backward(t, &d_t, row_sum)
        }
    }
}

/// Reverse pass of [`egnn_a_forward`]. `d_e_out` carries gradients flowing
/// back from a later layer that consumed this layer's α as its edges.
pub fn egnn_a_backward(
    params: &LayerParameters,
    out: &LayerOutput,
    d_x_out: &Dense,
    d_e_out: Option<&[Vec<f64>]>,
    want_input_grad: bool,
) -> Result<GradientBundle> {
    let cache = match &out.cache {
        Some(LayerCache::Attn(c)) => c,
        _ => return Err(Error::MissingCache),
    };
    let a = params
        .a
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("attention layer without attention vector".into()))?;
    let dz = activation_backward(&cache.z, cache.act, d_x_out)?;
    let h = &cache.h;
    let n = h.rows();
    let f_out = params.out_dim();
    let (a_l, a_r) = a.split_at(f_out);

    let mut dh = Dense::zeros(n, f_out);
    let mut d_a = vec![0.0; 2 * f_out];
    let mut d_e_in = Vec::with_capacity(cache.channels.len());
    for (p, cc) in cache.channels.iter().enumerate() {
        let alpha = out.e_out.channel(p);
        let dy = dz.column_block(p * f_out, f_out);
        let aggregator = cc.alpha_dropped.as_ref().map_or(alpha, |(m, _)| m);
        dh.add_assign(&aggregator.spmm_t(&dy)?)?;

        let mut g = edge_value_grad(alpha, &dz, p, f_out, h);
        if let Some((_, mask)) = &cc.alpha_dropped {
            for (gk, m) in g.iter_mut().zip(mask) {
                *gk *= m;
            }
        }
        if let Some(upstream) = d_e_out {
            let de = upstream.get(p).ok_or(Error::Index {
                index: p,
                bound: upstream.len(),
            })?;
            if de.len() != g.len() {
                return Err(Error::Shape {
                    op: "egnn_a_backward edge gradient",
                    expected: (g.len(), 1),
                    found: (de.len(), 1),
                });
            }
            for (gk, d) in g.iter_mut().zip(de) {
                *gk += d;
            }
        }

        let d_hat = normalize_backward(&cc.norm, &cc.e_in, alpha, g);

        let mut ds_left = vec![0.0; n];
        let mut ds_right = vec![0.0; n];
        let mut de_channel = Vec::with_capacity(cc.e_in.nnz());
        for (k, (i, j, ev)) in cc.e_in.iter().enumerate() {
            let df = d_hat[k] * ev;
            de_channel.push(d_hat[k] * cc.f[k]);
            let du = df * cc.f[k] * leaky_relu_derivative(cc.u[k], cache.slope);
            ds_left[i] += du;
            ds_right[j] += du;
        }
        d_e_in.push(de_channel);

        for i in 0..n {
            let (sl, sr) = (ds_left[i], ds_right[i]);
            if sl == 0.0 && sr == 0.0 {
                continue;
            }
            let hi = h.row(i);
            for f in 0..f_out {
                d_a[f] += sl * hi[f];
                d_a[f_out + f] += sr * hi[f];
            }
            for (f, d) in dh.row_mut(i).iter_mut().enumerate() {
                *d += sl * a_l[f] + sr * a_r[f];
            }
        }
    }
    let (d_w, d_x_in) = linear_backward(
        &dh,
        &cache.x_in,
        &params.w,
        cache.input_mask.as_deref(),
        want_input_grad,
    )?;
    Ok(GradientBundle {
        d_x_in,
        d_w,
        d_a: Some(d_a),
        d_e_in,
    })
}
