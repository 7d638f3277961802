use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not compose.
    Shape {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A sparse entry is malformed (negative, non-finite, out of range).
    InvalidEntry { row: usize, col: usize, value: f64 },
    /// Compressed-row arrays violate the canonical layout.
    NotCanonical(&'static str),
    /// A normalization row has no positive mass.
    ZeroRowSum { channel: usize, node: usize },
    InvalidConfig(String),
    /// Weighted loss requested while a class has no training node.
    EmptyClass(usize),
    EmptyMask,
    EmptyGraph,
    NoValidLabels,
    NonFinite { what: String },
    /// Backward called on an output produced without a cache.
    MissingCache,
    Index { index: usize, bound: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, expected, found } => write!(
                f,
                "shape mismatch in {op}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::InvalidEntry { row, col, value } => {
                write!(f, "invalid sparse entry ({row}, {col}) = {value}")
            }
            Error::NotCanonical(what) => write!(f, "sparse matrix not canonical: {what}"),
            Error::ZeroRowSum { channel, node } => write!(
                f,
                "row of node {node} in channel {channel} sums to zero; normalization undefined"
            ),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::EmptyClass(k) => write!(
                f,
                "class {k} has no training node; weighted loss is undefined"
            ),
            Error::EmptyMask => f.write_str("mask selects no node"),
            Error::EmptyGraph => f.write_str("graph has no node"),
            Error::NoValidLabels => f.write_str("no valid label to score"),
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::MissingCache => f.write_str("layer output carries no backward cache"),
            Error::Index { index, bound } => {
                write!(f, "index {index} out of range (bound {bound})")
            }
        }
    }
}

impl core::error::Error for Error {}
