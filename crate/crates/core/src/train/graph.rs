use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use super::node::dropout_seed;
use super::{
    mse_loss, non_finite_loss, rmse, roc_auc, sigmoid, sigmoid_cross_entropy_multilabel, Adam,
    AdamConfig, EarlyStopping, EpochRecord, MetricKind, ModelConfig, StopSignal, TrainOutcome,
    TrainReport,
};
use crate::data::{GraphBatch, GraphTarget, Masks, TaskKind};
use crate::error::{Error, Result};
use crate::model::{init_params, ModelGrads, ModelState, PassOptions};
use crate::rng;

/// Loss and metric per split. Empty splits give NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEval {
    pub train_loss: f64,
    pub val_loss: f64,
    pub test_loss: f64,
    pub train_metric: f64,
    pub val_metric: f64,
    pub test_metric: f64,
}

/// Loss of one graph and its gradient w.r.t. the head output. `None` when
/// a labelled graph has no valid label.
fn graph_loss(out: &[f64], target: &GraphTarget) -> Result<Option<(f64, Vec<f64>)>> {
    match target {
        GraphTarget::Labels { values, valid } => {
            if !valid.iter().any(|&v| v) {
                return Ok(None);
            }
            sigmoid_cross_entropy_multilabel(out, values, valid).map(Some)
        }
        GraphTarget::Scalar(t) => {
            let (l, d) = mse_loss(out[0], *t);
            Ok(Some((l, vec![d])))
        }
    }
}

fn split_eval(model: &ModelState, batch: &GraphBatch, mask: &[bool]) -> Result<(f64, f64)> {
    let mut unused = rng::seeded(0);
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut valid = Vec::new();
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for (g, _) in batch.graphs.iter().zip(mask).filter(|(_, &m)| m) {
        let pass = model.forward(&g.x0, &g.e0, &PassOptions::eval(), &mut unused)?;
        let out = pass.graph_output().ok_or(Error::MissingCache)?;
        if let Some((l, _)) = graph_loss(out, &g.target)? {
            loss_sum += l;
            loss_count += 1;
        }
        match &g.target {
            GraphTarget::Labels { values, valid: v } => {
                scores.push(out.iter().map(|&z| sigmoid(z)).collect::<Vec<_>>());
                labels.push(values.clone());
                valid.push(v.clone());
            }
            GraphTarget::Scalar(t) => {
                preds.push(out[0]);
                targets.push(*t);
            }
        }
    }
    if loss_count == 0 {
        return Ok((f64::NAN, f64::NAN));
    }
    let metric = match batch.task {
        TaskKind::GraphRegression => rmse(&preds, &targets),
        _ => roc_auc(&scores, &labels, &valid).mean,
    };
    Ok((loss_sum / loss_count as f64, metric))
}

pub fn evaluate_graph_model(model: &ModelState, batch: &GraphBatch) -> Result<GraphEval> {
    let Masks { train, val, test } = &batch.masks;
    let (train_loss, train_metric) = split_eval(model, batch, train)?;
    let (val_loss, val_metric) = split_eval(model, batch, val)?;
    let (test_loss, test_metric) = split_eval(model, batch, test)?;
    Ok(GraphEval {
        train_loss,
        val_loss,
        test_loss,
        train_metric,
        val_metric,
        test_metric,
    })
}

/// Shuffled minibatches of graphs with batch-mean losses, early stopping on
/// validation loss and test evaluation of the best checkpoint.
pub fn train_graph_model(batch: &GraphBatch, config: &ModelConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if batch.task == TaskKind::NodeClassification {
        return Err(Error::InvalidConfig("node task given to the graph trainer".into()));
    }
    let mut train_idx = Masks::indices(&batch.masks.train);
    let (_, n_val, _) = batch.masks.counts();
    if train_idx.is_empty() || n_val == 0 {
        return Err(Error::EmptyMask);
    }
    let arch = config.architecture(
        batch.task,
        batch.feature_dim(),
        batch.channel_count(),
        batch.output_dim,
    );
    let mut model = init_params(&arch, config.seed)?;
    let mut drop_rng = rng::seeded(dropout_seed(config.seed));
    let mut adam = Adam::new(
        model.param_specs(),
        AdamConfig::with_lr(config.learning_rate),
        config.weight_decay,
    );
    let mut stopper = EarlyStopping::new(config.early_stop_window);
    let mut best = model.clone();
    let mut best_val_loss = f64::INFINITY;
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let opts = PassOptions::train(config.dropout_rate);

    for epoch in 0..config.max_epochs {
        train_idx.shuffle(&mut drop_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for chunk in train_idx.chunks(config.batch_size) {
            let mut acc: Option<ModelGrads> = None;
            let mut used = 0usize;
            for &gi in chunk {
                let g = &batch.graphs[gi];
                let pass = model.forward(&g.x0, &g.e0, &opts, &mut drop_rng)?;
                let out = pass.graph_output().ok_or(Error::MissingCache)?;
                let Some((loss, d_out)) = graph_loss(out, &g.target)? else {
                    continue;
                };
                if !loss.is_finite() {
                    return Err(non_finite_loss(epoch, "training", loss));
                }
                epoch_loss += loss;
                epoch_count += 1;
                used += 1;
                let grads = model.backward(&pass, &d_out)?;
                match &mut acc {
                    Some(a) => a.add_assign(&grads),
                    None => acc = Some(grads),
                }
            }
            if let Some(mut grads) = acc {
                grads.scale(1.0 / used as f64);
                adam.step(model.tensors_mut(), grads.tensors())?;
            }
        }
        let train_loss = if epoch_count > 0 {
            epoch_loss / epoch_count as f64
        } else {
            f64::NAN
        };

        let (val_loss, val_metric) = split_eval(&model, batch, &batch.masks.val)?;
        if !val_loss.is_finite() {
            return Err(non_finite_loss(epoch, "validation", val_loss));
        }
        let (_, train_metric) = split_eval(&model, batch, &batch.masks.train)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            train_metric,
            val_metric,
        });
        match stopper.observe(val_loss) {
            StopSignal::Improved => {
                best = model.clone();
                best_val_loss = val_loss;
            }
            StopSignal::Continue => {}
            StopSignal::Stop => {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, test_metric) = split_eval(&best, batch, &batch.masks.test)?;
    Ok(TrainOutcome {
        report: TrainReport {
            task: batch.task,
            metric: MetricKind::for_task(batch.task),
            epochs,
            best_epoch: stopper.best_epoch(),
            best_val_loss,
            stopped_early,
            test_metric,
            wall_clock_secs: None,
        },
        model: best,
    })
}
