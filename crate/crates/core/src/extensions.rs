//! Extensions to the core averager: stagnation-triggered resets and deferral
//! to the non-averaged weights early in training. This is the variant
//! recommended for practical use.

use serde::{Deserialize, Serialize};

use crate::averager::{EvalRecord, ResetKind, TwoTailState};
use crate::error::{Error, Result};
use crate::weights::WeightVector;

/// Default number of consecutive non-improving evaluations that counts as
/// stagnating. The underlying heuristic is "has not improved for a few
/// evaluations"; three is the shipped reading of "a few", and harnesses may
/// override it.
pub const DEFAULT_PATIENCE: u64 = 3;

/// Tracks whether one tail's loss has stopped improving.
///
/// Improvement means a strictly lower loss than the best seen since the last
/// reset; there is no relative-improvement epsilon, which would add an
/// undocumented knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagnationTracker {
    best_loss: f64,
    evals_since_improvement: u64,
    patience: u64,
}

impl StagnationTracker {
    pub fn new(patience: u64) -> Result<Self> {
        if patience == 0 {
            return Err(Error::InvalidParameter(
                "patience must be at least 1".into(),
            ));
        }
        Ok(StagnationTracker {
            best_loss: f64::INFINITY,
            evals_since_improvement: 0,
            patience,
        })
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn evals_since_improvement(&self) -> u64 {
        self.evals_since_improvement
    }

    /// Record one evaluation of this tail's loss.
    pub fn observe(&mut self, loss: f64) {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.evals_since_improvement = 0;
        } else {
            self.evals_since_improvement += 1;
        }
    }

    pub fn is_stagnating(&self) -> bool {
        self.evals_since_improvement >= self.patience
    }

    /// Forget all history; called whenever the tracked tail is emptied.
    pub fn reset(&mut self) {
        self.best_loss = f64::INFINITY;
        self.evals_since_improvement = 0;
    }
}

/// Core state plus one stagnation tracker per tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedState {
    base: TwoTailState,
    long_tracker: StagnationTracker,
    short_tracker: StagnationTracker,
}

impl ExtendedState {
    pub fn new(dimension: usize, eval_period: u64, patience: u64) -> Result<Self> {
        Ok(ExtendedState {
            base: TwoTailState::new(dimension, eval_period)?,
            long_tracker: StagnationTracker::new(patience)?,
            short_tracker: StagnationTracker::new(patience)?,
        })
    }

    pub fn base(&self) -> &TwoTailState {
        &self.base
    }

    pub fn long_tracker(&self) -> &StagnationTracker {
        &self.long_tracker
    }

    pub fn short_tracker(&self) -> &StagnationTracker {
        &self.short_tracker
    }

    pub fn add_weights(&mut self, theta: &WeightVector) -> Result<()> {
        self.base.add_weights(theta)
    }

    pub fn current_estimate(&self) -> Result<(WeightVector, u64)> {
        self.base.current_estimate()
    }

    /// The extended switch rule. The decision cascade, in listing order:
    /// switch when the short average is at least as good or the long average
    /// is stagnating; otherwise empty the short average if it is stagnating;
    /// then, if the long average is still no better than the raw weights,
    /// report the raw weights (reinitializing everything when that has been
    /// true at every evaluation so far, i.e. when `L == E`).
    ///
    /// `loss_raw` is the loss at the current non-averaged weights. It is
    /// never fed into the stagnation trackers; only the tail losses are.
    pub fn evaluate_and_adapt(
        &mut self,
        loss_raw: f64,
        loss_short: f64,
        loss_long: f64,
        step: u64,
    ) -> Result<EvalRecord> {
        if !loss_raw.is_finite() {
            return Err(Error::NonFiniteLoss {
                context: "raw weights",
            });
        }
        self.base.check_evaluation(loss_short, loss_long, step)?;

        let len_short = self.base.short_len();
        let len_long = self.base.long_len();

        self.long_tracker.observe(loss_long);
        self.short_tracker.observe(loss_short);

        let mut reset_kind = ResetKind::None;
        let mut f_long = loss_long;
        let switched = loss_short <= loss_long || self.long_tracker.is_stagnating();
        if switched {
            if loss_short > loss_long {
                reset_kind = ResetKind::LongStagnant;
            }
            f_long = loss_short;
            self.base.switch(step);
            // The switch empties the short tail as well, so both trackers
            // restart from scratch.
            self.long_tracker.reset();
            self.short_tracker.reset();
        } else if self.short_tracker.is_stagnating() {
            self.base.reset_short();
            self.short_tracker.reset();
            reset_kind = ResetKind::ShortStagnant;
        }

        // Defer to the non-averaged weights if they are still better. Reads
        // the possibly-updated long length and loss.
        let long_len = self.base.long_len();
        let reported_len = if long_len > 1 && loss_raw <= f_long {
            if long_len == self.base.eval_period() {
                // Averaging has never beaten the raw weights: reinitialize.
                self.base.reset_both();
                self.long_tracker.reset();
                self.short_tracker.reset();
                reset_kind.upgrade(ResetKind::FullReset);
            } else {
                reset_kind.upgrade(ResetKind::RawFallback);
            }
            1
        } else {
            long_len
        };

        Ok(EvalRecord {
            step,
            f_raw: Some(loss_raw),
            f_short: loss_short,
            f_long,
            len_short,
            len_long,
            reported_len,
            switched,
            reset_kind,
        })
    }
}
