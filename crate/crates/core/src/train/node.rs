use alloc::vec::Vec;

use super::{
    accuracy, argmax_rows, masked_cross_entropy, non_finite_loss, Adam, AdamConfig,
    EarlyStopping, EpochRecord, MetricKind, ModelConfig, StopSignal, TrainOutcome, TrainReport,
};
use crate::data::{class_weights, GraphDataset, TaskKind};
use crate::error::{Error, Result};
use crate::layers::node_softmax;
use crate::model::{init_params, ModelState, PassOptions};
use crate::rng;

/// Loss and accuracy per split from one inference pass. Empty splits give NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEval {
    pub train_loss: f64,
    pub val_loss: f64,
    pub test_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

pub(super) fn dropout_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn evaluate_node_model(
    model: &ModelState,
    dataset: &GraphDataset,
    weights: Option<&[f64]>,
) -> Result<NodeEval> {
    // eval passes draw no randomness
    let mut unused = rng::seeded(0);
    let pass = model.forward(&dataset.x0, &dataset.e0, &PassOptions::eval(), &mut unused)?;
    let logits = pass.node_logits().ok_or(Error::MissingCache)?;
    let probs = node_softmax(logits);
    let preds = argmax_rows(logits);
    let split = |mask: &[bool]| -> Result<(f64, f64)> {
        if !mask.iter().any(|&m| m) {
            return Ok((f64::NAN, f64::NAN));
        }
        let (loss, _) = masked_cross_entropy(&probs, &dataset.labels, mask, weights)?;
        Ok((loss, accuracy(&preds, &dataset.labels, mask)?))
    };
    let (train_loss, train_accuracy) = split(&dataset.masks.train)?;
    let (val_loss, val_accuracy) = split(&dataset.masks.val)?;
    let (test_loss, test_accuracy) = split(&dataset.masks.test)?;
    Ok(NodeEval {
        train_loss,
        val_loss,
        test_loss,
        train_accuracy,
        val_accuracy,
        test_accuracy,
    })
}

/// Full-batch training with dropout, early stopping on validation loss and
/// test evaluation of the best-validation checkpoint.
pub fn train_node_model(dataset: &GraphDataset, config: &ModelConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (n_train, n_val, _) = dataset.masks.counts();
    if n_train == 0 || n_val == 0 {
        return Err(Error::EmptyMask);
    }
    let weights: Option<Vec<f64>> = if config.weighted_loss {
        Some(class_weights(&dataset.labels, &dataset.masks.train, dataset.class_count)?)
    } else {
        None
    };
    let arch = config.architecture(
        TaskKind::NodeClassification,
        dataset.x0.cols(),
        dataset.e0.channel_count(),
        dataset.class_count,
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
        let pass = model.forward(&dataset.x0, &dataset.e0, &opts, &mut drop_rng)?;
        let logits = pass.node_logits().ok_or(Error::MissingCache)?;
        let probs = node_softmax(logits);
        let (train_loss, d_logits) = masked_cross_entropy(
            &probs,
            &dataset.labels,
            &dataset.masks.train,
            weights.as_deref(),
        )?;
        if !train_loss.is_finite() {
            return Err(non_finite_loss(epoch, "training", train_loss));
        }
        let grads = model.backward(&pass, d_logits.as_slice())?;
        adam.step(model.tensors_mut(), grads.tensors())?;

        let eval = evaluate_node_model(&model, dataset, weights.as_deref())?;
        if !eval.val_loss.is_finite() {
            return Err(non_finite_loss(epoch, "validation", eval.val_loss));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: eval.val_loss,
            train_metric: eval.train_accuracy,
            val_metric: eval.val_accuracy,
        });
        match stopper.observe(eval.val_loss) {
            StopSignal::Improved => {
                best = model.clone();
                best_val_loss = eval.val_loss;
            }
            StopSignal::Continue => {}
            StopSignal::Stop => {
                stopped_early = true;
                break;
            }
        }
    }

    let final_eval = evaluate_node_model(&best, dataset, weights.as_deref())?;
    Ok(TrainOutcome {
        report: TrainReport {
            task: TaskKind::NodeClassification,
            metric: MetricKind::Accuracy,
            epochs,
            best_epoch: stopper.best_epoch(),
            best_val_loss,
            stopped_early,
            test_metric: final_eval.test_accuracy,
            wall_clock_secs: None,
        },
        model: best,
    })
}
