//! Versioned binary dataset bundle written by `egnn preprocess`.
//!
//! Layout (all integers `u64` little-endian, floats IEEE-754 `f64` LE):
//!
//! ```text
//! magic  "EGNNBNDL"           8 bytes
//! version                     u8 (= 1)
//! task                        u8 (0 node, 1 graph-classification, 2 graph-regression)
//! norm                        u8 (0 row, 1 sym, 2 ds)
//! encoding                    u8 (0 directed, 1 undirected, 255 not applicable)
//! split seed                  u64
//! split fractions             3 x f64 (train, val, test)
//! node payload:
//!   features                  dense (rows, cols, values)
//!   labels, class count       len-prefixed u64s, u64
//!   raw edges                 len, then (citing, cited) u64 pairs
//!   e0                        tensor
//!   masks                     3 x len-prefixed bytes
//! graph payload:
//!   graph count, then per graph: features, raw tensor, e0 tensor, target
//!   target                    u8 tag 0 + labels f64s + valid bytes | tag 1 + f64
//!   masks
//! ```
//!
//! A dense matrix is `rows, cols, rows*cols f64`; a sparse channel is
//! `n, row_offsets, col_indices, values` (each len-prefixed); a tensor is
//! `P` followed by its channels.

use std::path::Path;

use egnn_core::data::{
    build_input_edges, split_nodes, EdgeEncoding, GraphBatch, GraphDataset, GraphSample,
    GraphTarget, Masks, SplitFractions, TaskKind,
};
use egnn_core::model::fnv1a;
use egnn_core::normalize::prepare;
use egnn_core::{Dense, EdgeTensor, NormScheme};

use crate::binio::{Reader, Writer};
use crate::citation::CitationGraph;
use crate::error::{Error, Result};
use crate::molecular::RawGraph;

pub const BUNDLE_MAGIC: &[u8; 8] = b"EGNNBNDL";
pub const BUNDLE_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BundleMeta {
    pub task: TaskKind,
    pub norm: NormScheme,
    /// `None` for graph tasks, whose channels come from the file.
    pub encoding: Option<EdgeEncoding>,
    pub split_seed: u64,
    pub fractions: SplitFractions,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BundleData {
    Node {
        features: Dense,
        labels: Vec<usize>,
        class_count: usize,
        edges: Vec<(usize, usize)>,
        e0: EdgeTensor,
        masks: Masks,
    },
    Graph {
        graphs: Vec<RawGraph>,
        e0: Vec<EdgeTensor>,
        masks: Masks,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub meta: BundleMeta,
    pub data: BundleData,
}

fn task_code(t: TaskKind) -> u8 {
    match t {
        TaskKind::NodeClassification => 0,
        TaskKind::GraphClassification => 1,
        TaskKind::GraphRegression => 2,
    }
}

pub(crate) fn norm_code(n: NormScheme) -> u8 {
    match n {
        NormScheme::Row => 0,
        NormScheme::Sym => 1,
        NormScheme::Ds => 2,
    }
}

pub(crate) fn norm_from_code(c: u8) -> Option<NormScheme> {
    match c {
        0 => Some(NormScheme::Row),
        1 => Some(NormScheme::Sym),
        2 => Some(NormScheme::Ds),
        _ => None,
    }
}

pub(crate) fn task_from_code(c: u8) -> Option<TaskKind> {
    match c {
        0 => Some(TaskKind::NodeClassification),
        1 => Some(TaskKind::GraphClassification),
        2 => Some(TaskKind::GraphRegression),
        _ => None,
    }
}

pub(crate) fn task_to_code(t: TaskKind) -> u8 {
    task_code(t)
}

impl Bundle {
    pub fn from_citation(
        graph: &CitationGraph,
        encoding: EdgeEncoding,
        norm: NormScheme,
        fractions: SplitFractions,
        seed: u64,
    ) -> Result<Self> {
        let n = graph.n();
        let e0 = build_input_edges(&graph.edges, n, encoding, norm)?;
        let masks = split_nodes(n, fractions, seed)?;
        Ok(Bundle {
            meta: BundleMeta {
                task: TaskKind::NodeClassification,
                norm,
                encoding: Some(encoding),
                split_seed: seed,
                fractions,
            },
            data: BundleData::Node {
                features: graph.features.clone(),
                labels: graph.labels.clone(),
                class_count: graph.class_count(),
                edges: graph.edges.clone(),
                e0,
                masks,
            },
        })
    }

    pub fn from_graphs(task: TaskKind, graphs: Vec<RawGraph>, norm: NormScheme, seed: u64) -> Result<Self> {
        let e0 = graphs
            .iter()
            .map(|g| prepare(&g.edges, norm))
            .collect::<egnn_core::Result<Vec<_>>>()?;
        let masks = split_nodes(graphs.len(), SplitFractions::GRAPH, seed)?;
        Ok(Bundle {
            meta: BundleMeta {
                task,
                norm,
                encoding: None,
                split_seed: seed,
                fractions: SplitFractions::GRAPH,
            },
            data: BundleData::Graph { graphs, e0, masks },
        })
    }

    pub fn task(&self) -> TaskKind {
        self.meta.task
    }

    /// Node dataset under the requested normalization and encoding. The
    /// stored `e0` is reused when both match the bundle.
    pub fn node_dataset(&self, norm: NormScheme, encoding: EdgeEncoding) -> Result<GraphDataset> {
        let BundleData::Node {
            features,
            labels,
            class_count,
            edges,
            e0,
            masks,
        } = &self.data
        else {
            return Err(Error::Usage("bundle holds graph-level data, not a node task".into()));
        };
        let e = if norm == self.meta.norm && Some(encoding) == self.meta.encoding {
            e0.clone()
        } else {
            build_input_edges(edges, features.rows(), encoding, norm)?
        };
        Ok(GraphDataset::new(
            features.clone(),
            e,
            labels.clone(),
            *class_count,
            masks.clone(),
        )?)
    }

    pub fn graph_batch(&self, norm: NormScheme) -> Result<GraphBatch> {
        let BundleData::Graph { graphs, e0, masks } = &self.data else {
            return Err(Error::Usage("bundle holds a node task, not graph-level data".into()));
        };
        let samples = graphs
            .iter()
            .zip(e0)
            .map(|(g, e)| {
                Ok(GraphSample {
                    x0: g.x0.clone(),
                    e0: if norm == self.meta.norm {
                        e.clone()
                    } else {
                        prepare(&g.edges, norm)?
                    },
                    target: g.target.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GraphBatch::new(samples, self.meta.task, masks.clone())?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(BUNDLE_MAGIC);
        w.u8(BUNDLE_VERSION);
        w.u8(task_code(self.meta.task));
        w.u8(norm_code(self.meta.norm));
        w.u8(match self.meta.encoding {
            Some(EdgeEncoding::Directed) => 0,
            Some(EdgeEncoding::Undirected) => 1,
            None => 255,
        });
        w.u64(self.meta.split_seed);
        w.f64(self.meta.fractions.train);
        w.f64(self.meta.fractions.val);
        w.f64(self.meta.fractions.test);
        match &self.data {
            BundleData::Node {
                features,
                labels,
                class_count,
                edges,
                e0,
                masks,
            } => {
                w.dense(features);
                w.usizes(labels);
                w.usize(*class_count);
                w.usize(edges.len());
                for &(i, j) in edges {
                    w.usize(i);
                    w.usize(j);
                }
                w.tensor(e0);
                w.masks(masks);
            }
            BundleData::Graph { graphs, e0, masks } => {
                w.usize(graphs.len());
                for (g, e) in graphs.iter().zip(e0) {
                    w.dense(&g.x0);
                    w.tensor(&g.edges);
                    w.tensor(e);
                    match &g.target {
                        GraphTarget::Labels { values, valid } => {
                            w.u8(0);
                            w.f64s(values);
                            w.bools(valid);
                        }
                        GraphTarget::Scalar(t) => {
                            w.u8(1);
                            w.f64(*t);
                        }
                    }
                }
                w.masks(masks);
            }
        }
        w.buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new("bundle", data);
        if r.bytes(8)? != BUNDLE_MAGIC {
            return Err(r.corrupt("not an EGNN bundle (bad magic)"));
        }
        let version = r.u8()?;
        if version != BUNDLE_VERSION {
            return Err(r.corrupt(format!("unsupported version {version}")));
        }
        let task = task_from_code(r.u8()?).ok_or_else(|| r.corrupt("unknown task code"))?;
        let norm = norm_from_code(r.u8()?).ok_or_else(|| r.corrupt("unknown normalization code"))?;
        let encoding = match r.u8()? {
            0 => Some(EdgeEncoding::Directed),
            1 => Some(EdgeEncoding::Undirected),
            255 => None,
            c => return Err(r.corrupt(format!("unknown encoding code {c}"))),
        };
        let split_seed = r.u64()?;
        let fractions = SplitFractions {
            train: r.f64()?,
            val: r.f64()?,
            test: r.f64()?,
        };
        let meta = BundleMeta {
            task,
            norm,
            encoding,
            split_seed,
            fractions,
        };
        let data = if task == TaskKind::NodeClassification {
            let features = r.dense()?;
            let labels = r.usizes()?;
            let class_count = r.usize()?;
            let m = r.len(16)?;
            let mut edges = Vec::with_capacity(m);
            for _ in 0..m {
                edges.push((r.usize()?, r.usize()?));
            }
            let e0 = r.tensor()?;
            let masks = r.masks()?;
            BundleData::Node {
                features,
                labels,
                class_count,
                edges,
                e0,
                masks,
            }
        } else {
            let count = r.len(1)?;
            let mut graphs = Vec::with_capacity(count);
            let mut e0 = Vec::with_capacity(count);
            for _ in 0..count {
                let x0 = r.dense()?;
                let edges = r.tensor()?;
                let e = r.tensor()?;
                let target = match r.u8()? {
                    0 => GraphTarget::Labels {
                        values: r.f64s()?,
                        valid: r.bools()?,
                    },
                    1 => GraphTarget::Scalar(r.f64()?),
                    t => return Err(r.corrupt(format!("unknown target tag {t}"))),
                };
                graphs.push(RawGraph { x0, edges, target });
                e0.push(e);
            }
            let masks = r.masks()?;
            BundleData::Graph { graphs, e0, masks }
        };
        r.finish()?;
        let bundle = Bundle { meta, data };
        bundle.check()?;
        Ok(bundle)
    }

    fn check(&self) -> Result<()> {
        match &self.data {
            BundleData::Node { .. } => {
                let e = self.meta.encoding.ok_or_else(|| Error::format("bundle", "node bundle without encoding"))?;
                self.node_dataset(self.meta.norm, e).map(|_| ())
            }
            BundleData::Graph { .. } => self.graph_batch(self.meta.norm).map(|_| ()),
        }
    }

    /// FNV-1a digest of the serialized bundle; models record it.
    pub fn fingerprint(&self) -> u64 {
        fnv1a(&self.to_bytes())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}
