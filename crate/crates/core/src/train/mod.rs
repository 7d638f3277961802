//! Losses, Adam, early stopping, metrics and the two training loops.

mod graph;
mod loss;
mod metrics;
mod node;
mod optim;
mod stopping;

use alloc::format;
use alloc::vec::Vec;

use crate::data::{EdgeEncoding, TaskKind};
use crate::error::{Error, Result};
use crate::layers::{check_rate, LayerKind};
use crate::model::Architecture;
use crate::normalize::NormScheme;

pub use graph::{evaluate_graph_model, train_graph_model, GraphEval};
pub use loss::{masked_cross_entropy, mse_batch, mse_loss, sigmoid, sigmoid_cross_entropy_multilabel};
pub use metrics::{accuracy, argmax_rows, binary_auc, rmse, roc_auc, AucSummary};
pub use node::{evaluate_node_model, train_node_model, NodeEval};
pub use optim::{adam_update, Adam, AdamConfig};
pub use stopping::{early_stopping, EarlyStopping, StopDecision, StopSignal};

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub layer_kind: LayerKind,
    pub layers: usize,
    pub hidden_dim: usize,
    pub normalization: NormScheme,
    pub edge_encoding: EdgeEncoding,
    /// Off for the `-A` ablation: every layer then sees the input edges.
    pub edge_adaptive: bool,
    pub dropout_rate: f64,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub early_stop_window: usize,
    pub weighted_loss: bool,
    pub seed: u64,
    pub max_epochs: usize,
    /// Graphs per minibatch for graph tasks.
    pub batch_size: usize,
}

impl ModelConfig {
    /// Citation-network protocol.
    pub fn citation() -> Self {
        ModelConfig {
            layer_kind: LayerKind::Attention,
            layers: 2,
            hidden_dim: 64,
            normalization: NormScheme::Ds,
            edge_encoding: EdgeEncoding::Directed,
            edge_adaptive: true,
            dropout_rate: 0.6,
            weight_decay: 5e-4,
            learning_rate: 5e-3,
            early_stop_window: 100,
            weighted_loss: false,
            seed: 0,
            max_epochs: 2000,
            batch_size: 32,
        }
    }

    /// Molecular protocol. No dropout rate is given for it, so none is used.
    pub fn molecular() -> Self {
        ModelConfig {
            hidden_dim: 16,
            dropout_rate: 0.0,
            weight_decay: 1e-4,
            learning_rate: 5e-4,
            early_stop_window: 200,
            ..Self::citation()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.layers == 0 {
            return bad("layers must be at least 1");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        check_rate(self.dropout_rate)?;
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be a finite non-negative number");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.early_stop_window == 0 {
            return bad("early_stop_window must be at least 1");
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return bad("max_epochs and batch_size must be positive");
        }
        Ok(())
    }

    pub fn architecture(
        &self,
        task: TaskKind,
        input_dim: usize,
        channels: usize,
        output_dim: usize,
    ) -> Architecture {
        Architecture {
            task,
            layer_kind: self.layer_kind,
            layers: self.layers,
            input_dim,
            hidden_dim: self.hidden_dim,
            channels,
            output_dim,
            attention_norm: self.normalization,
            adaptive_edges: self.edge_adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Accuracy,
    RocAuc,
    Rmse,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::RocAuc => "roc_auc",
            MetricKind::Rmse => "rmse",
        }
    }

    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::NodeClassification => MetricKind::Accuracy,
            TaskKind::GraphClassification => MetricKind::RocAuc,
            TaskKind::GraphRegression => MetricKind::Rmse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_metric: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub task: TaskKind,
    pub metric: MetricKind,
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the checkpoint used for the test metric.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub test_metric: f64,
    /// Filled in by callers that can read a clock.
    pub wall_clock_secs: Option<f64>,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }
}

/// The report plus the best-validation checkpoint.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub model: crate::model::ModelState,
}

pub(crate) fn non_finite_loss(epoch: usize, split: &str, loss: f64) -> Error {
    Error::NonFinite {
        what: format!("{split} loss {loss} at epoch {epoch}"),
    }
}
