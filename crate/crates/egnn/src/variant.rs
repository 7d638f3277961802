//! Ablation variant names such as `EGNN(A)-A-D-M*`.
//!
//! `-A` turns off edge adaptiveness (attention only), `-D` replaces doubly
//! stochastic normalization with row normalization for EGNN(A) and symmetric
//! normalization for EGNN(C), `-M` uses the undirected single-channel edge
//! encoding and `*` the class-weighted loss. A normalization other than the
//! one `-D` implies is written `-D(row)` or `-D(sym)`.

use std::fmt;
use std::str::FromStr;

use egnn_core::data::EdgeEncoding;
use egnn_core::layers::LayerKind;
use egnn_core::train::ModelConfig;
use egnn_core::NormScheme;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub layer_kind: LayerKind,
    pub normalization: NormScheme,
    pub edge_encoding: EdgeEncoding,
    pub edge_adaptive: bool,
    pub weighted_loss: bool,
}

/// Rows of the citation results table, in table order. The baselines are
/// aliases for their single-channel reductions.
pub const TABLE_VARIANTS: [&str; 18] = [
    "GCN",
    "GAT",
    "GCN*",
    "GAT*",
    "EGNN(C)-M",
    "EGNN(C)-D",
    "EGNN(C)",
    "EGNN(A)-D-M",
    "EGNN(A)-A-M",
    "EGNN(A)-A-D",
    "EGNN(A)",
    "EGNN(C)-M*",
    "EGNN(C)-D*",
    "EGNN(C)*",
    "EGNN(A)-D-M*",
    "EGNN(A)-A-M*",
    "EGNN(A)-A-D*",
    "EGNN(A)*",
];

/// Baseline names and the variants they reduce to.
pub const ALIASES: [(&str, &str); 4] = [
    ("GCN", "EGNN(C)-D-M"),
    ("GCN*", "EGNN(C)-D-M*"),
    ("GAT", "EGNN(A)-A-D-M"),
    ("GAT*", "EGNN(A)-A-D-M*"),
];

/// Parses a variant and returns the label to report it under: the alias
/// when one was given, the canonical name otherwise.
pub fn parse_labelled(s: &str) -> Result<(String, Variant)> {
    let v: Variant = s.parse()?;
    let t = s.trim();
    let label = if ALIASES.iter().any(|(a, _)| *a == t) {
        t.to_string()
    } else {
        v.name()
    };
    Ok((label, v))
}

/// The normalization `-D` stands for under a layer kind.
pub fn ablated_norm(kind: LayerKind) -> NormScheme {
    match kind {
        LayerKind::Attention => NormScheme::Row,
        LayerKind::Convolution => NormScheme::Sym,
    }
}

impl Variant {
    pub fn of(config: &ModelConfig) -> Self {
        Variant {
            layer_kind: config.layer_kind,
            normalization: config.normalization,
            edge_encoding: config.edge_encoding,
            // adaptiveness only exists for attention layers
            edge_adaptive: config.edge_adaptive || config.layer_kind == LayerKind::Convolution,
            weighted_loss: config.weighted_loss,
        }
    }

    pub fn apply(&self, config: &mut ModelConfig) {
        config.layer_kind = self.layer_kind;
        config.normalization = self.normalization;
        config.edge_encoding = self.edge_encoding;
        config.edge_adaptive = self.edge_adaptive;
        config.weighted_loss = self.weighted_loss;
    }

    pub fn name(&self) -> String {
        let mut s = String::from(match self.layer_kind {
            LayerKind::Attention => "EGNN(A)",
            LayerKind::Convolution => "EGNN(C)",
        });
        if !self.edge_adaptive && self.layer_kind == LayerKind::Attention {
            s.push_str("-A");
        }
        if self.normalization != NormScheme::Ds {
            if self.normalization == ablated_norm(self.layer_kind) {
                s.push_str("-D");
            } else {
                s.push_str(&format!("-D({})", self.normalization.as_str()));
            }
        }
        if self.edge_encoding == EdgeEncoding::Undirected {
            s.push_str("-M");
        }
        if self.weighted_loss {
            s.push('*');
        }
        s
    }

    /// File-system friendly form of the name.
    pub fn slug(&self) -> String {
        let mut out = String::new();
        for c in self.name().chars() {
            match c {
                'A'..='Z' | 'a'..='z' | '0'..='9' => out.push(c.to_ascii_lowercase()),
                '*' => out.push_str("-w"),
                '(' | '-' if !out.ends_with('-') => out.push('-'),
                _ => {}
            }
        }
        out.trim_end_matches('-').to_string()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("unknown variant `{s}` (expected e.g. EGNN(A)-A-D-M*)"));
        let t = s.trim();
        let t = ALIASES.iter().find(|(a, _)| *a == t).map_or(t, |(_, v)| v);
        let (layer_kind, mut rest) = if let Some(r) = t.strip_prefix("EGNN(A)") {
            (LayerKind::Attention, r)
        } else if let Some(r) = t.strip_prefix("EGNN(C)") {
            (LayerKind::Convolution, r)
        } else {
            return Err(bad());
        };
        let weighted_loss = match rest.strip_suffix('*') {
            Some(r) => {
                rest = r;
                true
            }
            None => false,
        };
        let mut v = Variant {
            layer_kind,
            normalization: NormScheme::Ds,
            edge_encoding: EdgeEncoding::Directed,
            edge_adaptive: true,
            weighted_loss,
        };
        // suffixes must appear in canonical order, each at most once
        let mut stage = 0;
        while !rest.is_empty() {
            let r = rest.strip_prefix('-').ok_or_else(bad)?;
            if let Some(r2) = r.strip_prefix("A") {
                if stage >= 1 || layer_kind != LayerKind::Attention {
                    return Err(bad());
                }
                v.edge_adaptive = false;
                stage = 1;
                rest = r2;
            } else if let Some(r2) = r.strip_prefix("D") {
                if stage >= 2 {
                    return Err(bad());
                }
                stage = 2;
                if let Some(inner) = r2.strip_prefix('(') {
                    let close = inner.find(')').ok_or_else(bad)?;
                    v.normalization = inner[..close].parse().map_err(|_| bad())?;
                    if v.normalization == NormScheme::Ds {
                        return Err(bad());
                    }
                    rest = &inner[close + 1..];
                } else {
                    v.normalization = ablated_norm(layer_kind);
                    rest = r2;
                }
            } else if let Some(r2) = r.strip_prefix("M") {
                if stage >= 3 {
                    return Err(bad());
                }
                v.edge_encoding = EdgeEncoding::Undirected;
                stage = 3;
                rest = r2;
            } else {
                return Err(bad());
            }
        }
        Ok(v)
    }
}
