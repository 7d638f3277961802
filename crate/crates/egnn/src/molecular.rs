//! Pre-featurized molecular graphs in JSON.
//!
//! A file holds either one record per line or a single top-level array.
//! Each record looks like
//!
//! ```json
//! {"num_nodes": 2, "node_features": [[1.0, 0.0], [0.0, 1.0]],
//!  "edges": [{"src": 0, "dst": 1, "features": [1.0, 0.0, 0.0]}],
//!  "labels": [1, null, 0]}
//! ```
//!
//! with `target` (a real) in place of `labels` for regression. Bonds are
//! undirected: each edge is stored at `(src, dst)` and `(dst, src)` in every
//! one of the `P` channels given by the width of `features`.

use std::path::Path;

use egnn_core::data::{split_nodes, GraphBatch, GraphSample, GraphTarget, SplitFractions, TaskKind};
use egnn_core::normalize::prepare;
use egnn_core::{Dense, EdgeTensor, NormScheme, SparseMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: usize,
    pub dst: usize,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub num_nodes: usize,
    pub node_features: Vec<Vec<f64>>,
    #[serde(default)]
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Option<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

/// One graph with raw (un-normalized, loop-free) edge channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGraph {
    pub x0: Dense,
    pub edges: EdgeTensor,
    pub target: GraphTarget,
}

/// Parses JSON lines or a top-level array.
pub fn parse_graph_records(text: &str, name: &str) -> Result<Vec<GraphRecord>> {
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text).map_err(|e| Error::Parse {
            path: name.to_string(),
            line: e.line(),
            message: e.to_string(),
        });
    }
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: name.to_string(),
            line: k + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// JSON lines, one record each; re-parsing yields identical records.
pub fn write_graph_records(records: &[GraphRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn record_err(name: &str, record: usize, message: impl Into<String>) -> Error {
    Error::Record {
        path: name.to_string(),
        record,
        message: message.into(),
    }
}

/// Validates records and builds raw graphs. All records must agree on
/// feature width, edge channel count and target kind.
pub fn records_to_graphs(records: &[GraphRecord], name: &str) -> Result<(TaskKind, Vec<RawGraph>)> {
    let first = records.first().ok_or_else(|| record_err(name, 0, "file holds no records"))?;
    let task = match (&first.labels, first.target) {
        (Some(_), None) => TaskKind::GraphClassification,
        (None, Some(_)) => TaskKind::GraphRegression,
        _ => return Err(record_err(name, 0, "exactly one of `labels` and `target` is required")),
    };
    let width = first.node_features.first().map(Vec::len).unwrap_or(0);
    let channels = records
        .iter()
        .flat_map(|r| r.edges.first())
        .map(|e| e.features.len())
        .next()
        .unwrap_or(1);
    let label_count = first.labels.as_ref().map_or(0, Vec::len);

    let mut graphs = Vec::with_capacity(records.len());
    for (idx, r) in records.iter().enumerate() {
        let err = |m: String| record_err(name, idx, m);
        let n = r.num_nodes;
        if n == 0 {
            return Err(err("graph has no nodes".into()));
        }
        if r.node_features.len() != n {
            return Err(err(format!(
                "num_nodes is {n} but {} feature rows given",
                r.node_features.len()
            )));
        }
        let mut values = Vec::with_capacity(n * width);
        for row in &r.node_features {
            if row.len() != width {
                return Err(err(format!("feature width {} differs from {width}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(err("non-finite node feature".into()));
            }
            values.extend_from_slice(row);
        }
        let mut triplets = vec![Vec::new(); channels];
        for e in &r.edges {
            if e.src >= n || e.dst >= n {
                return Err(err(format!(
                    "edge ({}, {}) out of range for {n} nodes",
                    e.src, e.dst
                )));
            }
            if e.features.len() != channels {
                return Err(err(format!(
                    "edge has {} features, expected {channels}",
                    e.features.len()
                )));
            }
            for (p, &v) in e.features.iter().enumerate() {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(err(format!("edge feature {v} must be finite and nonnegative")));
                }
                triplets[p].push((e.src, e.dst, v));
                if e.src != e.dst {
                    triplets[p].push((e.dst, e.src, v));
                }
            }
        }
        let chans = triplets
            .iter()
            .map(|t| SparseMatrix::from_triplets(n, t))
            .collect::<egnn_core::Result<Vec<_>>>()?;
        let target = match (task, &r.labels, r.target) {
            (TaskKind::GraphClassification, Some(labels), None) => {
                if labels.len() != label_count {
                    return Err(err(format!(
                        "{} labels, expected {label_count}",
                        labels.len()
                    )));
                }
                if labels.iter().flatten().any(|&v| v > 1) {
                    return Err(err("labels must be 0, 1 or null".into()));
                }
                GraphTarget::Labels {
                    values: labels.iter().map(|l| l.unwrap_or(0) as f64).collect(),
                    valid: labels.iter().map(Option::is_some).collect(),
                }
            }
            (TaskKind::GraphRegression, None, Some(t)) if t.is_finite() => GraphTarget::Scalar(t),
            _ => return Err(err("target kind differs from the first record".into())),
        };
        graphs.push(RawGraph {
            x0: Dense::from_vec(n, width, values)?,
            edges: EdgeTensor::new(chans)?,
            target,
        });
    }
    Ok((task, graphs))
}

/// Self-loops and normalization per graph.
pub fn normalize_graphs(graphs: &[RawGraph], scheme: NormScheme) -> Result<Vec<GraphSample>> {
    graphs
        .iter()
        .map(|g| {
            Ok(GraphSample {
                x0: g.x0.clone(),
                e0: prepare(&g.edges, scheme)?,
                target: g.target.clone(),
            })
        })
        .collect()
}

/// Reads, validates, normalizes and splits (80/10/10 under `seed`).
pub fn load_graph_file(path: &Path, scheme: NormScheme, seed: u64) -> Result<GraphBatch> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let records = parse_graph_records(&text, &name)?;
    let (task, raw) = records_to_graphs(&records, &name)?;
    let masks = split_nodes(raw.len(), SplitFractions::GRAPH, seed)?;
    Ok(GraphBatch::new(normalize_graphs(&raw, scheme)?, task, masks)?)
}
