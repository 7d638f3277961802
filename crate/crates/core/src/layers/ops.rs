//! Dropout, global max pooling, the fully connected head and softmax.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::dense::Dense;
use crate::error::{Error, Result};

pub fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(alloc::format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Inverted dropout multipliers: 0 with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Applies inverted dropout in training mode. The returned mask is `None`
/// when nothing was dropped (inference or `rate == 0`).
pub fn dropout<R: Rng + ?Sized>(
    x: &Dense,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Dense, Option<Vec<f64>>)> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let mask = dropout_mask(x.as_slice().len(), rate, rng);
    let mut out = x.clone();
    for (v, m) in out.as_mut_slice().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, Some(mask)))
}

/// Columnwise maximum over nodes, with the (first) argmax row per column.
pub fn global_max_pool(x: &Dense) -> Result<(Vec<f64>, Vec<usize>)> {
    if x.rows() == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut best = x.row(0).to_vec();
    let mut arg = vec![0usize; x.cols()];
    for i in 1..x.rows() {
        for (f, &v) in x.row(i).iter().enumerate() {
            if v > best[f] {
                best[f] = v;
                arg[f] = i;
            }
        }
    }
    Ok((best, arg))
}

pub fn global_max_pool_backward(argmax: &[usize], n: usize, d_pooled: &[f64]) -> Dense {
    let mut out = Dense::zeros(n, argmax.len());
    for (f, (&i, &g)) in argmax.iter().zip(d_pooled).enumerate() {
        out.set(i, f, g);
    }
    out
}

/// Fully connected layer `w v + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead {
    pub w: Dense,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseHeadGrads {
    pub d_w: Dense,
    pub d_b: Vec<f64>,
    pub d_v: Vec<f64>,
}

impl DenseHead {
    pub fn new(w: Dense, b: Vec<f64>) -> Result<Self> {
        if b.len() != w.rows() {
            return Err(Error::Shape {
                op: "DenseHead::new",
                expected: (w.rows(), 1),
                found: (b.len(), 1),
            });
        }
        Ok(DenseHead { w, b })
    }

    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.w.cols() {
            return Err(Error::Shape {
                op: "dense_head",
                expected: (self.w.cols(), 1),
                found: (v.len(), 1),
            });
        }
        Ok((0..self.w.rows())
            .map(|o| {
                self.w
                    .row(o)
                    .iter()
                    .zip(v)
                    .fold(self.b[o], |acc, (w, x)| acc + w * x)
            })
            .collect())
    }

    pub fn backward(&self, v: &[f64], d_out: &[f64]) -> Result<DenseHeadGrads> {
        if d_out.len() != self.w.rows() || v.len() != self.w.cols() {
            return Err(Error::Shape {
                op: "dense_head backward",
                expected: self.w.shape(),
                found: (d_out.len(), v.len()),
            });
        }
        let d_w = Dense::from_fn(self.w.rows(), self.w.cols(), |o, i| d_out[o] * v[i]);
        let mut d_v = vec![0.0; v.len()];
        for (o, &g) in d_out.iter().enumerate() {
            for (dv, &w) in d_v.iter_mut().zip(self.w.row(o)) {
                *dv += g * w;
            }
        }
        Ok(DenseHeadGrads {
            d_w,
            d_b: d_out.to_vec(),
            d_v,
        })
    }
}

pub fn dense_head(v: &[f64], w: &Dense, b: &[f64]) -> Result<Vec<f64>> {
    DenseHead::new(w.clone(), b.to_vec())?.forward(v)
}

/// Rowwise softmax with max subtraction.
pub fn node_softmax(x: &Dense) -> Dense {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - m);
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}
