//! Reference averagers: the full equally weighted mean, an exponential
//! moving average, fixed-start tail averaging, and constant-fraction tail
//! averaging over a recorded iterate log.

use crate::error::{Error, Result};
use crate::oracle::IterateLog;
use crate::running_mean::RunningMean;
use crate::weights::WeightVector;

/// Equally weighted average of every iterate seen so far, starting from the
/// initial weights. Exactly a [`RunningMean`], so the tail-average reduction
/// with start 0 is bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyakState {
    running: RunningMean,
}

impl PolyakState {
    pub fn new(dimension: usize) -> Self {
        PolyakState {
            running: RunningMean::new(dimension),
        }
    }

    pub fn update(&mut self, theta: &WeightVector) -> Result<()> {
        self.running.add(theta)
    }

    pub fn count(&self) -> u64 {
        self.running.count()
    }

    pub fn value(&self) -> Result<&WeightVector> {
        if self.running.is_empty() {
            return Err(Error::EmptyAverage);
        }
        Ok(self.running.mean())
    }
}

/// Decay used by the exponential moving average: a constant, or a schedule
/// evaluated at each step.
pub enum BetaSchedule {
    Constant(f64),
    Schedule(Box<dyn Fn(u64) -> f64 + Send + Sync>),
}

impl BetaSchedule {
    fn at(&self, t: u64) -> f64 {
        match self {
            BetaSchedule::Constant(beta) => *beta,
            BetaSchedule::Schedule(f) => f(t),
        }
    }
}

/// Exponential moving average of iterates:
/// the first observation initializes the mean, and each later step `t` sets
/// `mean = (1 - beta_t) * theta_t + beta_t * mean`.
pub struct EmaState {
    beta: BetaSchedule,
    mean: Option<WeightVector>,
    last_t: Option<u64>,
}

impl EmaState {
    /// Constant decay in `[0, 1)`.
    pub fn new(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(EmaState {
            beta: BetaSchedule::Constant(beta),
            mean: None,
            last_t: None,
        })
    }

    /// Scheduled decay; each produced value must lie in `[0, 1)`.
    pub fn with_schedule<F>(schedule: F) -> Self
    where
        F: Fn(u64) -> f64 + Send + Sync + 'static,
    {
        EmaState {
            beta: BetaSchedule::Schedule(Box::new(schedule)),
            mean: None,
            last_t: None,
        }
    }

    /// Absorb the iterate of step `t`. Steps must increase across calls.
    pub fn update(&mut self, theta: &WeightVector, t: u64) -> Result<()> {
        theta.check_finite()?;
        if let Some(last) = self.last_t {
            if t <= last {
                return Err(Error::InvalidParameter(format!(
                    "EMA steps must increase: got {t} after {last}"
                )));
            }
        }
        match &mut self.mean {
            None => self.mean = Some(theta.clone()),
            Some(mean) => {
                theta.check_dimension(mean.dimension())?;
                let beta = self.beta.at(t);
                check_beta(beta)?;
                for (m, x) in mean.as_mut_slice().iter_mut().zip(theta.iter()) {
                    *m = (1.0 - beta) * x + beta * *m;
                }
            }
        }
        self.last_t = Some(t);
        Ok(())
    }

    pub fn value(&self) -> Result<&WeightVector> {
        self.mean.as_ref().ok_or(Error::EmptyAverage)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!(
            "EMA decay must lie in [0, 1), got {beta}"
        )));
    }
    Ok(())
}

/// Fixed-start tail averaging: before step `start` the reported value is the
/// current iterate itself; from `start` on it is the running mean of
/// iterates `start ..= t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailAvgState {
    start: u64,
    running: RunningMean,
    current: Option<WeightVector>,
    next_t: u64,
}

impl TailAvgState {
    pub fn new(dimension: usize, start: u64) -> Self {
        TailAvgState {
            start,
            running: RunningMean::new(dimension),
            current: None,
            next_t: 0,
        }
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    /// Absorb the iterate of step `t`. Steps must be consecutive from 0.
    pub fn update(&mut self, theta: &WeightVector, t: u64) -> Result<()> {
        if t != self.next_t {
            return Err(Error::InvalidParameter(format!(
                "tail averaging requires consecutive steps: expected {}, got {t}",
                self.next_t
            )));
        }
        if t >= self.start {
            self.running.add(theta)?;
        } else {
            theta.check_finite()?;
            self.current = Some(theta.clone());
        }
        self.next_t = t + 1;
        Ok(())
    }

    pub fn value(&self) -> Result<&WeightVector> {
        if self.running.is_empty() {
            return self.current.as_ref().ok_or(Error::EmptyAverage);
        }
        Ok(self.running.mean())
    }
}

/// Tail whose window grows in proportion to the step count: the reported
/// value at step `t` is the mean of the last `ceil(c * t)` iterates from the
/// log, computed exactly via prefix sums.
pub struct FractionTailState<'a> {
    fraction: f64,
    log: &'a IterateLog,
}

impl<'a> FractionTailState<'a> {
    pub fn new(fraction: f64, log: &'a IterateLog) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tail fraction must lie in (0, 1], got {fraction}"
            )));
        }
        Ok(FractionTailState { fraction, log })
    }

    /// Window length at step `t`: `ceil(c * t)`, clamped into `[1, t]`.
    pub fn window(&self, t: u64) -> u64 {
        ((self.fraction * t as f64).ceil() as u64).clamp(1, t)
    }

    pub fn value(&self, t: u64) -> Result<WeightVector> {
        if t == 0 || t as usize > self.log.len() {
            return Err(Error::LogTooShort {
                len: self.log.len(),
                requested: t as usize,
            });
        }
        self.log.average(t, self.window(t))
    }
}
