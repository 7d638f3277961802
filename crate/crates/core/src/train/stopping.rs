/// Outcome of feeding one validation loss to [`EarlyStopping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopSignal {
    /// New minimum; checkpoint this epoch.
    Improved,
    Continue,
    Stop,
}

/// Stops once the current epoch is `window` or more epochs past the epoch of
/// the lowest validation loss seen so far (first occurrence wins ties).
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    window: usize,
    epoch: usize,
    best_epoch: usize,
    best_loss: f64,
}

impl EarlyStopping {
    pub fn new(window: usize) -> Self {
        EarlyStopping {
            window: window.max(1),
            epoch: 0,
            best_epoch: 0,
            best_loss: f64::INFINITY,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn observe(&mut self, val_loss: f64) -> StopSignal {
        let epoch = self.epoch;
        self.epoch += 1;
        if epoch == 0 || val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
            return StopSignal::Improved;
        }
        if epoch - self.best_epoch >= self.window {
            StopSignal::Stop
        } else {
            StopSignal::Continue
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub stop: bool,
    pub best_epoch: usize,
}

/// Replays a validation-loss history through the stopping rule.
pub fn early_stopping(history: &[f64], window: usize) -> StopDecision {
    let mut rule = EarlyStopping::new(window);
    let mut stop = false;
    for &loss in history {
        stop = rule.observe(loss) == StopSignal::Stop;
    }
    StopDecision {
        stop,
        best_epoch: rule.best_epoch(),
    }
}
