//! Edge normalization schemes, applied independently to each channel.
//!
//! * row: `E_ij / sum_j E_ij`
//! * sym: `E_ij / (sqrt(row_sum_i) * sqrt(col_sum_j))`
//! * ds:  row-normalize to `T`, then `E = T diag(col_sums(T))^-1 Tᵀ`, which is
//!   symmetric with unit row and column sums.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::sparse::{EdgeTensor, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormScheme {
    Row,
    Sym,
    Ds,
}

impl NormScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            NormScheme::Row => "row",
            NormScheme::Sym => "sym",
            NormScheme::Ds => "ds",
        }
    }
}

impl fmt::Display for NormScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" => Ok(NormScheme::Row),
            "sym" => Ok(NormScheme::Sym),
            "ds" => Ok(NormScheme::Ds),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown normalization scheme `{other}` (expected row, sym or ds)"
            ))),
        }
    }
}

fn inverse_or_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0 / v
    } else {
        0.0
    }
}

/// Rows divided by their sums; empty rows stay empty.
pub fn row_normalize_channel(a: &SparseMatrix) -> SparseMatrix {
    let inv: Vec<f64> = a.row_sums().into_iter().map(inverse_or_zero).collect();
    a.scale_rows(&inv).expect("length n")
}

pub fn sym_normalize_channel(a: &SparseMatrix) -> SparseMatrix {
    let r = a.row_sums();
    let c = a.col_sums();
    let values = a
        .iter()
        .map(|(i, j, v)| v * inverse_or_zero(libm::sqrt(r[i] * c[j])))
        .collect();
    a.with_values(values).expect("same pattern")
}

/// Doubly stochastic normalization of one channel. Every row must carry
/// positive mass; the offending node is reported otherwise.
pub fn ds_normalize_channel(a: &SparseMatrix) -> core::result::Result<SparseMatrix, usize> {
    let sums = a.row_sums();
    if let Some(node) = sums.iter().position(|&s| s <= 0.0) {
        return Err(node);
    }
    let inv: Vec<f64> = sums.iter().map(|&s| 1.0 / s).collect();
    let t = a.scale_rows(&inv).expect("length n");
    let inv_cols: Vec<f64> = t.col_sums().into_iter().map(inverse_or_zero).collect();
    let t_scaled = t.scale_cols(&inv_cols).expect("length n");
    Ok(t_scaled.matmul(&t.transpose()).expect("same n"))
}

pub fn row_normalize(e: &EdgeTensor) -> EdgeTensor {
    e.map_channels(row_normalize_channel)
}

pub fn sym_normalize(e: &EdgeTensor) -> EdgeTensor {
    e.map_channels(sym_normalize_channel)
}

pub fn ds_normalize(e: &EdgeTensor) -> Result<EdgeTensor> {
    e.try_map_channels(|p, c| {
        ds_normalize_channel(c).map_err(|node| Error::ZeroRowSum { channel: p, node })
    })
}

pub fn normalize(e: &EdgeTensor, scheme: NormScheme) -> Result<EdgeTensor> {
    match scheme {
        NormScheme::Row => Ok(row_normalize(e)),
        NormScheme::Sym => Ok(sym_normalize(e)),
        NormScheme::Ds => ds_normalize(e),
    }
}

/// Parses a scheme name and normalizes.
pub fn normalize_named(e: &EdgeTensor, scheme: &str) -> Result<EdgeTensor> {
    normalize(e, scheme.parse()?)
}

/// Self-loop insertion followed by normalization; the pipeline every input
/// edge tensor goes through exactly once.
pub fn prepare(e: &EdgeTensor, scheme: NormScheme) -> Result<EdgeTensor> {
    normalize(&e.with_self_loops(), scheme)
}

impl NormScheme {
    pub fn all() -> [NormScheme; 3] {
        [NormScheme::Row, NormScheme::Sym, NormScheme::Ds]
    }

    pub fn parse_list(s: &str) -> Result<Vec<NormScheme>> {
        s.split(',').map(|t| t.trim().parse()).collect()
    }
}

impl From<NormScheme> for alloc::string::String {
    fn from(s: NormScheme) -> Self {
        s.as_str().to_string()
    }
}
