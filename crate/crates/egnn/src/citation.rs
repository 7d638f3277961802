//! Citation-network text files.
//!
//! The content file has one node per line, whitespace separated:
//! `<id> <feat_1> ... <feat_F> <label>`. The cites file has one pair of
//! ids per line. Under the default `cited-first` order a line `A B` means
//! B cites A and yields the directed edge `B -> A`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use egnn_core::Dense;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CitesOrder {
    #[default]
    CitedFirst,
    CitingFirst,
}

impl CitesOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            CitesOrder::CitedFirst => "cited-first",
            CitesOrder::CitingFirst => "citing-first",
        }
    }
}

impl fmt::Display for CitesOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CitesOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cited-first" => Ok(CitesOrder::CitedFirst),
            "citing-first" => Ok(CitesOrder::CitingFirst),
            other => Err(Error::Usage(format!(
                "unknown cites order `{other}` (expected cited-first or citing-first)"
            ))),
        }
    }
}

/// A parsed citation graph before encoding and normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct CitationGraph {
    pub ids: Vec<String>,
    pub features: Dense,
    pub labels: Vec<usize>,
    /// Label strings in first-appearance order; index = class id.
    pub label_names: Vec<String>,
    /// Directed edges `citing -> cited` as node indices, in file order.
    pub edges: Vec<(usize, usize)>,
    /// Cites lines naming an id absent from the content file.
    pub dropped_edges: usize,
}

impl CitationGraph {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn class_count(&self) -> usize {
        self.label_names.len()
    }
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Parses in-memory file contents. `*_name` only labels error messages.
pub fn parse_citation(
    content: &str,
    content_name: &str,
    cites: &str,
    cites_name: &str,
    order: CitesOrder,
) -> Result<CitationGraph> {
    let mut ids = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    let mut label_names = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width: Option<usize> = None;

    for (k, raw) in content.lines().enumerate() {
        let line = k + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(parse_err(
                content_name,
                line,
                "expected `<id> <features...> <label>`",
            ));
        }
        let f = fields.len() - 2;
        match width {
            None => width = Some(f),
            Some(w) if w != f => {
                return Err(parse_err(
                    content_name,
                    line,
                    format!("expected {w} features, found {f}"),
                ))
            }
            Some(_) => {}
        }
        let id = fields[0].to_string();
        if index.contains_key(&id) {
            return Err(parse_err(content_name, line, format!("duplicate node id `{id}`")));
        }
        for tok in &fields[1..=f] {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(content_name, line, format!("bad feature value `{tok}`")))?;
            if !v.is_finite() {
                return Err(parse_err(content_name, line, format!("non-finite feature `{tok}`")));
            }
            values.push(v);
        }
        let label = fields[f + 1];
        let next = label_names.len();
        let class = *label_index.entry(label.to_string()).or_insert_with(|| {
            label_names.push(label.to_string());
            next
        });
        labels.push(class);
        index.insert(id.clone(), ids.len());
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(parse_err(content_name, 0, "no nodes"));
    }
    let features = Dense::from_vec(ids.len(), width.unwrap_or(0), values)?;

    let mut edges = Vec::new();
    let mut dropped_edges = 0;
    for (k, raw) in cites.lines().enumerate() {
        let line = k + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(parse_err(cites_name, line, "expected two node ids"));
        }
        let (cited, citing) = match order {
            CitesOrder::CitedFirst => (fields[0], fields[1]),
            CitesOrder::CitingFirst => (fields[1], fields[0]),
        };
        match (index.get(citing), index.get(cited)) {
            (Some(&i), Some(&j)) => edges.push((i, j)),
            _ => dropped_edges += 1,
        }
    }

    Ok(CitationGraph {
        ids,
        features,
        labels,
        label_names,
        edges,
        dropped_edges,
    })
}

pub fn load_citation(content: &Path, cites: &Path, order: CitesOrder) -> Result<CitationGraph> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    parse_citation(
        &read(content)?,
        &content.display().to_string(),
        &read(cites)?,
        &cites.display().to_string(),
        order,
    )
}
