//! Embeddable integration surface for custom training loops: one call per
//! optimizer step ([`TwoTailAverager::add`]) and one call per evaluation
//! ([`TwoTailAverager::evaluate_with`]). The loss function is supplied at the
//! evaluation call and is applied to snapshots of the means, so evaluation
//! never perturbs averager state.
//!
//! ```
//! use twotail::{TwoTailAverager, WeightVector};
//!
//! let mut averager = TwoTailAverager::extended(2, 10, 3).unwrap();
//! let loss = |w: &WeightVector| w.iter().map(|v| v * v).sum::<f64>();
//! for t in 1u64..=100 {
//!     let bounce = if t % 2 == 0 { 0.3 } else { -0.3 };
//!     let theta = WeightVector::new(vec![1.0 / t as f64 + bounce, bounce]);
//!     averager.add(&theta).unwrap();
//!     if averager.evaluation_due() {
//!         let report = averager.evaluate_with(loss).unwrap();
//!         let _ = (report.record.step, report.record.reported_len);
//!     }
//! }
//! let (estimate, len) = averager.current_estimate().unwrap();
//! assert!(len >= 1 && estimate.dimension() == 2);
//! ```

use crate::averager::{EvalRecord, ResetKind, TwoTailState};
use crate::error::{Error, Result};
use crate::extensions::ExtendedState;
use crate::weights::WeightVector;

enum Inner {
    Core(TwoTailState),
    Extended(ExtendedState),
}

/// An evaluation's outcome: the record plus the weights that were reported
/// (the long average, or the raw weights on a fallback).
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub record: EvalRecord,
    pub weights: WeightVector,
}

impl Report {
    pub fn loss(&self) -> f64 {
        self.record.reported_loss()
    }

    /// Number of iterates in the reported average.
    pub fn averaged_len(&self) -> u64 {
        self.record.reported_len
    }
}

/// Drives either the core or the extended averager over a stream of
/// iterates, tracking the step count and the evaluation cadence.
pub struct TwoTailAverager {
    inner: Inner,
    eval_period: u64,
    step: u64,
    last_eval_step: u64,
    last_theta: Option<WeightVector>,
    record_raw: bool,
}

impl TwoTailAverager {
    /// Core switch rule only.
    pub fn core(dimension: usize, eval_period: u64) -> Result<Self> {
        Ok(TwoTailAverager {
            inner: Inner::Core(TwoTailState::new(dimension, eval_period)?),
            eval_period,
            step: 0,
            last_eval_step: 0,
            last_theta: None,
            record_raw: false,
        })
    }

    /// Extended rule with stagnation resets and raw-weight deferral.
    pub fn extended(dimension: usize, eval_period: u64, patience: u64) -> Result<Self> {
        Ok(TwoTailAverager {
            inner: Inner::Extended(ExtendedState::new(dimension, eval_period, patience)?),
            eval_period,
            step: 0,
            last_eval_step: 0,
            last_theta: None,
            record_raw: true,
        })
    }

    /// Also evaluate and record the raw-weight loss in core mode. The
    /// extended rule always needs it; for the core rule it is informational.
    pub fn with_raw_loss(mut self, record_raw: bool) -> Self {
        if matches!(self.inner, Inner::Core(_)) {
            self.record_raw = record_raw;
        }
        self
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn eval_period(&self) -> u64 {
        self.eval_period
    }

    pub fn state(&self) -> &TwoTailState {
        match &self.inner {
            Inner::Core(state) => state,
            Inner::Extended(state) => state.base(),
        }
    }

    /// Absorb the iterate for optimization step `step() + 1`.
    pub fn add(&mut self, theta: &WeightVector) -> Result<()> {
        match &mut self.inner {
            Inner::Core(state) => state.add_weights(theta)?,
            Inner::Extended(state) => state.add_weights(theta)?,
        }
        self.step += 1;
        self.last_theta = Some(theta.clone());
        Ok(())
    }

    /// True when the current step is an evaluation step that has not been
    /// evaluated yet.
    pub fn evaluation_due(&self) -> bool {
        self.step > 0
            && self.step.is_multiple_of(self.eval_period)
            && self.last_eval_step < self.step
    }

    /// Evaluate the loss on snapshots of the raw weights (when needed), the
    /// short mean, and the long mean, in that order, then apply the switch
    /// rule. Errors when called before any add, off the evaluation cadence,
    /// or twice at the same step.
    pub fn evaluate_with<F>(&mut self, mut loss_fn: F) -> Result<Report>
    where
        F: FnMut(&WeightVector) -> f64,
    {
        if self.step == 0 {
            return Err(Error::MisorderedEvaluation {
                step: 0,
                reason: "evaluate called before any add",
            });
        }
        if !self.step.is_multiple_of(self.eval_period) {
            return Err(Error::MisorderedEvaluation {
                step: self.step,
                reason: "step is not a multiple of the evaluation period",
            });
        }
        if self.last_eval_step == self.step {
            return Err(Error::MisorderedEvaluation {
                step: self.step,
                reason: "already evaluated at this step",
            });
        }

        let theta = self
            .last_theta
            .clone()
            .expect("step > 0 implies at least one add");
        let loss_raw = if self.record_raw {
            let raw = loss_fn(&theta);
            if !raw.is_finite() {
                return Err(Error::NonFiniteLoss {
                    context: "raw weights",
                });
            }
            Some(raw)
        } else {
            None
        };
        let loss_short = loss_fn(self.state().short_mean());
        let loss_long = loss_fn(self.state().long_mean());
        let step = self.step;

        let mut record = match &mut self.inner {
            Inner::Core(state) => {
                let mut record = state.evaluate_and_adapt(loss_short, loss_long, step)?;
                record.f_raw = loss_raw;
                record
            }
            Inner::Extended(state) => {
                let raw = loss_raw.expect("extended mode always evaluates the raw loss");
                state.evaluate_and_adapt(raw, loss_short, loss_long, step)?
            }
        };
        // Core mode never falls back to raw weights, so the raw loss stays
        // informational even when it happens to beat the long average.
        debug_assert!(
            matches!(self.inner, Inner::Extended(_))
                || matches!(record.reset_kind, ResetKind::None)
        );
        if record.f_raw.is_none() {
            record.f_raw = loss_raw;
        }
        self.last_eval_step = step;

        let weights = match record.reset_kind {
            ResetKind::RawFallback | ResetKind::FullReset => theta,
            _ => self.state().long_mean().clone(),
        };
        Ok(Report { record, weights })
    }

    /// Anytime estimate: the long mean and its length, as a snapshot.
    pub fn current_estimate(&self) -> Result<(WeightVector, u64)> {
        self.state().current_estimate()
    }
}
