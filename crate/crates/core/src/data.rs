//! Edge encodings, node splits, class weights and in-memory datasets.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::seq::SliceRandom;

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::normalize::{self, NormScheme};
use crate::rng;
use crate::sparse::{EdgeTensor, SparseMatrix};

/// How directed citation edges become edge channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeEncoding {
    /// Forward, backward and undirected channels.
    Directed,
    /// One symmetrized binary channel.
    Undirected,
}

impl EdgeEncoding {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeEncoding::Directed => "directed",
            EdgeEncoding::Undirected => "undirected",
        }
    }

    pub fn channel_count(self) -> usize {
        match self {
            EdgeEncoding::Directed => 3,
            EdgeEncoding::Undirected => 1,
        }
    }
}

impl fmt::Display for EdgeEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "directed" => Ok(EdgeEncoding::Directed),
            "undirected" => Ok(EdgeEncoding::Undirected),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown edge encoding `{other}` (expected directed or undirected)"
            ))),
        }
    }
}

fn binary_channel(edges: &[(usize, usize)], n: usize) -> Result<SparseMatrix> {
    let mut pairs: Vec<(usize, usize)> = edges.to_vec();
    pairs.sort_unstable();
    pairs.dedup();
    let trip: Vec<(usize, usize, f64)> = pairs.into_iter().map(|(i, j)| (i, j, 1.0)).collect();
    SparseMatrix::from_triplets(n, &trip)
}

fn add_channels(a: &SparseMatrix, b: &SparseMatrix) -> Result<SparseMatrix> {
    let trip: Vec<(usize, usize, f64)> = a.iter().chain(b.iter()).collect();
    SparseMatrix::from_triplets(a.n(), &trip)
}

/// Raw three-channel encoding of directed edges `i -> j` ("i cites j"):
/// forward indicator, its transpose, and their sum. No self-loops and no
/// normalization are applied here.
pub fn encode_directed_channels(edges: &[(usize, usize)], n: usize) -> Result<EdgeTensor> {
    let forward = binary_channel(edges, n)?;
    let backward = forward.transpose();
    let both = add_channels(&forward, &backward)?;
    EdgeTensor::new(vec![forward, backward, both])
}

/// Raw symmetrized binary adjacency, one channel.
pub fn encode_undirected_single_channel(edges: &[(usize, usize)], n: usize) -> Result<EdgeTensor> {
    let sym: Vec<(usize, usize)> = edges.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect();
    EdgeTensor::new(vec![binary_channel(&sym, n)?])
}

pub fn encode_edges(edges: &[(usize, usize)], n: usize, encoding: EdgeEncoding) -> Result<EdgeTensor> {
    match encoding {
        EdgeEncoding::Directed => encode_directed_channels(edges, n),
        EdgeEncoding::Undirected => encode_undirected_single_channel(edges, n),
    }
}

/// Full input pipeline: encode, insert self-loops, normalize once.
pub fn build_input_edges(
    edges: &[(usize, usize)],
    n: usize,
    encoding: EdgeEncoding,
    scheme: NormScheme,
) -> Result<EdgeTensor> {
    normalize::prepare(&encode_edges(edges, n, encoding)?, scheme)
}

/// Train / validation / test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    /// 5% / 15% / 80%.
    pub const SPARSE: SplitFractions = SplitFractions {
        train: 0.05,
        val: 0.15,
        test: 0.80,
    };
    /// 60% / 20% / 20%.
    pub const DENSE: SplitFractions = SplitFractions {
        train: 0.60,
        val: 0.20,
        test: 0.20,
    };
    /// 80% / 10% / 10%, used for graph-level datasets.
    pub const GRAPH: SplitFractions = SplitFractions {
        train: 0.80,
        val: 0.10,
        test: 0.10,
    };
}

/// Disjoint boolean masks over nodes (or graphs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (c(&self.train), c(&self.val), c(&self.test))
    }

    pub fn is_disjoint(&self) -> bool {
        (0..self.len()).all(|i| {
            (self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8) <= 1
        })
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

fn floor_count(fraction: f64, n: usize) -> usize {
    libm::floor(fraction * n as f64 + 1e-9) as usize
}

/// Random split under `seed`: the first `⌊train·n⌋` of a shuffled order go
/// to training, the next `⌊val·n⌋` to validation, the rest to test.
pub fn split_nodes(n: usize, fractions: SplitFractions, seed: u64) -> Result<Masks> {
    let SplitFractions { train, val, test } = fractions;
    if !(train > 0.0 && val >= 0.0 && test >= 0.0) || train + val + test > 1.0 + 1e-9 {
        return Err(Error::InvalidConfig(alloc::format!(
            "split fractions {train}/{val}/{test} must be positive and sum to at most 1"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let n_train = floor_count(train, n);
    let n_val = floor_count(val, n);
    let mut masks = Masks {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
    };
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_train {
            masks.train[i] = true;
        } else if rank < n_train + n_val {
            masks.val[i] = true;
        } else {
            masks.test[i] = true;
        }
    }
    Ok(masks)
}

/// Inverse-frequency weights `N_train / (K n_k)` over the training nodes.
pub fn class_weights(labels: &[usize], train_mask: &[bool], k: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; k];
    for (&y, _) in labels.iter().zip(train_mask).filter(|(_, &m)| m) {
        if y >= k {
            return Err(Error::Index { index: y, bound: k });
        }
        counts[y] += 1;
    }
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .enumerate()
        .map(|(c, &nk)| {
            if nk == 0 {
                Err(Error::EmptyClass(c))
            } else {
                Ok(total as f64 / (k as f64 * nk as f64))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    NodeClassification,
    GraphClassification,
    GraphRegression,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::NodeClassification => "node-classification",
            TaskKind::GraphClassification => "graph-classification",
            TaskKind::GraphRegression => "graph-regression",
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node-classification" => Ok(TaskKind::NodeClassification),
            "graph-classification" => Ok(TaskKind::GraphClassification),
            "graph-regression" => Ok(TaskKind::GraphRegression),
            other => Err(Error::InvalidConfig(alloc::format!("unknown task `{other}`"))),
        }
    }
}

/// A transductive node-classification dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    pub x0: Dense,
    /// Pre-normalized input edges.
    pub e0: EdgeTensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub masks: Masks,
}

impl GraphDataset {
    pub fn new(x0: Dense, e0: EdgeTensor, labels: Vec<usize>, class_count: usize, masks: Masks) -> Result<Self> {
        let n = x0.rows();
        if e0.n() != n || labels.len() != n || masks.len() != n {
            return Err(Error::Shape {
                op: "GraphDataset::new",
                expected: (n, n),
                found: (e0.n(), labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Index {
                index: bad,
                bound: class_count,
            });
        }
        if !masks.is_disjoint() {
            return Err(Error::InvalidConfig("train/val/test masks overlap".into()));
        }
        Ok(GraphDataset {
            x0,
            e0,
            labels,
            class_count,
            masks,
        })
    }

    pub fn n(&self) -> usize {
        self.x0.rows()
    }
}

/// Supervision attached to one graph of a graph-level dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphTarget {
    /// Multi-label 0/1 targets with a validity mask for missing labels.
    Labels { values: Vec<f64>, valid: Vec<bool> },
    Scalar(f64),
}

/// One molecule-like graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub x0: Dense,
    pub e0: EdgeTensor,
    pub target: GraphTarget,
}

/// Independent graphs for graph classification or regression.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    pub graphs: Vec<GraphSample>,
    pub task: TaskKind,
    /// Width of the prediction: label count or 1.
    pub output_dim: usize,
    /// Split over graphs.
    pub masks: Masks,
}

impl GraphBatch {
    pub fn new(graphs: Vec<GraphSample>, task: TaskKind, masks: Masks) -> Result<Self> {
        let first = graphs.first().ok_or(Error::EmptyGraph)?;
        let feat = first.x0.cols();
        let channels = first.e0.channel_count();
        let output_dim = match (&first.target, task) {
            (GraphTarget::Labels { values, .. }, TaskKind::GraphClassification) => values.len(),
            (GraphTarget::Scalar(_), TaskKind::GraphRegression) => 1,
            _ => {
                return Err(Error::InvalidConfig(
                    "graph targets do not match the task kind".into(),
                ))
            }
        };
        for g in &graphs {
            if g.x0.rows() == 0 {
                return Err(Error::EmptyGraph);
            }
            if g.x0.cols() != feat || g.e0.channel_count() != channels || g.e0.n() != g.x0.rows() {
                return Err(Error::Shape {
                    op: "GraphBatch::new",
                    expected: (feat, channels),
                    found: (g.x0.cols(), g.e0.channel_count()),
                });
            }
            let ok = match &g.target {
                GraphTarget::Labels { values, valid } => {
                    values.len() == output_dim && valid.len() == output_dim
                }
                GraphTarget::Scalar(_) => output_dim == 1,
            };
            if !ok {
                return Err(Error::InvalidConfig("inconsistent target width".into()));
            }
        }
        if masks.len() != graphs.len() || !masks.is_disjoint() {
            return Err(Error::InvalidConfig("graph split does not match graph count".into()));
        }
        Ok(GraphBatch {
            graphs,
            task,
            output_dim,
            masks,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs[0].x0.cols()
    }

    pub fn channel_count(&self) -> usize {
        self.graphs[0].e0.channel_count()
    }
}
