//! Brute-force ground truth for the optimal tail-averaging length.
//!
//! The log stores every iterate plus prefix sums, so the average of the most
//! recent `delta` iterates is one vector subtraction. [`optimal_length`]
//! searches every window length exhaustively; it exists precisely to be the
//! thing the two-tailed averager avoids, and is priced accordingly (linear
//! storage, `O(n * d)` per query). Keep runs at desk scale.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::weights::WeightVector;

/// Append-only history of iterates with prefix sums.
///
/// Iterates are indexed from 1: `record` is called once per optimization
/// step, and `average(t, delta)` is the mean of iterates `t+1-delta ..= t`.
#[derive(Debug, Clone)]
pub struct IterateLog {
    dimension: usize,
    iterates: Vec<WeightVector>,
    // prefix[k] holds the elementwise sum of the first k iterates,
    // flattened row-major; prefix[0] is the zero row.
    prefix: Vec<f64>,
}

impl IterateLog {
    pub fn new(dimension: usize) -> Self {
        IterateLog {
            dimension,
            iterates: Vec::new(),
            prefix: vec![0.0; dimension],
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    /// The iterate at 1-based step `t`.
    pub fn get(&self, t: u64) -> Option<&WeightVector> {
        if t == 0 {
            return None;
        }
        self.iterates.get(t as usize - 1)
    }

    pub fn record(&mut self, theta: &WeightVector) -> Result<()> {
        theta.check_dimension(self.dimension)?;
        theta.check_finite()?;
        let last = self.prefix[self.prefix.len() - self.dimension..].to_vec();
        self.prefix
            .extend(last.iter().zip(theta.iter()).map(|(p, t)| p + t));
        self.iterates.push(theta.clone());
        Ok(())
    }

    /// `avg(t, delta)`: the mean of the most recent `delta` iterates up to
    /// step `t`, computed from prefix sums.
    pub fn average(&self, t: u64, delta: u64) -> Result<WeightVector> {
        if delta == 0 || delta > t {
            return Err(Error::InvalidParameter(format!(
                "window {delta} is not in [1, {t}]"
            )));
        }
        if t as usize > self.iterates.len() {
            return Err(Error::LogTooShort {
                len: self.iterates.len(),
                requested: t as usize,
            });
        }
        let d = self.dimension;
        let hi = &self.prefix[t as usize * d..(t as usize + 1) * d];
        let lo = &self.prefix[(t - delta) as usize * d..((t - delta) as usize + 1) * d];
        let inv = 1.0 / delta as f64;
        Ok(WeightVector::new(
            hi.iter().zip(lo).map(|(h, l)| (h - l) * inv).collect(),
        ))
    }
}

/// Result of the exhaustive search at one step.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub step: u64,
    /// The loss-minimizing window length; ties broken toward the smallest.
    pub opt_len: u64,
    /// `opt_len` rounded down to a multiple of the evaluation period.
    pub opt_len_floor: u64,
    /// `opt_len` rounded up to a multiple of the evaluation period.
    pub opt_len_ceil: u64,
    pub opt_loss: f64,
    /// `(delta, loss)` for every window length 1..=step.
    pub loss_curve: Vec<(u64, f64)>,
}

/// Exhaustive search over all window lengths at step `n`.
pub fn optimal_length<F>(
    log: &IterateLog,
    n: u64,
    loss_fn: F,
    eval_period: u64,
) -> Result<OracleResult>
where
    F: Fn(&WeightVector) -> f64,
{
    if eval_period == 0 {
        return Err(Error::ZeroEvalPeriod);
    }
    if n == 0 || n as usize > log.len() {
        return Err(Error::LogTooShort {
            len: log.len(),
            requested: n as usize,
        });
    }
    let mut loss_curve = Vec::with_capacity(n as usize);
    let mut opt_len = 1;
    let mut opt_loss = f64::INFINITY;
    for delta in 1..=n {
        let loss = loss_fn(&log.average(n, delta)?);
        if loss < opt_loss {
            opt_loss = loss;
            opt_len = delta;
        }
        loss_curve.push((delta, loss));
    }
    Ok(OracleResult {
        step: n,
        opt_len,
        opt_len_floor: opt_len / eval_period * eval_period,
        opt_len_ceil: opt_len.div_ceil(eval_period) * eval_period,
        opt_loss,
        loss_curve,
    })
}

/// Per-step verdicts for the simplifying assumptions behind the averaging
/// length bounds, evaluated on the period grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionRecord {
    pub step: u64,
    /// Loss strictly decreases in the window length up to the rounded-down
    /// optimum (trivially true when the grid below the optimum is empty).
    pub a1: bool,
    /// Averaging slightly more than optimal beats averaging a lot more.
    pub a2: bool,
    /// Optimal length does not shrink by the next recorded evaluation;
    /// `None` when there is no next evaluation one period ahead.
    pub a4: Option<bool>,
}

impl AssumptionRecord {
    /// True when no checked assumption is violated at this step.
    pub fn all_hold(&self) -> bool {
        self.a1 && self.a2 && self.a4.unwrap_or(true)
    }
}

/// Evaluate the assumption verdicts from already-computed oracle results.
/// Results must be in increasing step order.
pub fn assumptions_from_results(
    results: &[OracleResult],
    eval_period: u64,
) -> Vec<AssumptionRecord> {
    let curve_at =
        |result: &OracleResult, delta: u64| -> f64 { result.loss_curve[delta as usize - 1].1 };
    results
        .iter()
        .enumerate()
        .map(|(i, result)| {
            let n = result.step;
            let grid = (1..).map(|k| k * eval_period).take_while(|d| *d <= n);

            let mut a1 = true;
            let mut prev = f64::INFINITY;
            for delta in grid.clone().take_while(|d| *d <= result.opt_len_floor) {
                let loss = curve_at(result, delta);
                if loss >= prev {
                    a1 = false;
                    break;
                }
                prev = loss;
            }

            let mut a2 = true;
            if result.opt_len_ceil <= n {
                let near_opt = curve_at(result, result.opt_len_ceil);
                for delta in grid.filter(|d| *d >= result.opt_len_ceil) {
                    if near_opt > curve_at(result, delta) {
                        a2 = false;
                        break;
                    }
                }
            }

            let a4 = results.get(i + 1).and_then(|next| {
                (next.step == n + eval_period).then_some(result.opt_len <= next.opt_len)
            });

            AssumptionRecord {
                step: n,
                a1,
                a2,
                a4,
            }
        })
        .collect()
}

/// Run the oracle at each evaluation step and check the assumptions.
pub fn check_assumptions<F>(
    log: &IterateLog,
    loss_fn: F,
    eval_period: u64,
    eval_steps: &[u64],
) -> Result<Vec<AssumptionRecord>>
where
    F: Fn(&WeightVector) -> f64,
{
    let results = eval_steps
        .iter()
        .map(|&n| optimal_length(log, n, &loss_fn, eval_period))
        .collect::<Result<Vec<_>>>()?;
    Ok(assumptions_from_results(&results, eval_period))
}

/// Empirical growth rate of the optimal length over the run: the slope of
/// `opt_len` against the step count. A rate near 1 means the optimal average
/// never forgets; the forgetting assumption is an eventually-exists statement
/// and gets a diagnostic rather than a verdict.
pub fn optimal_length_growth_rate(results: &[OracleResult]) -> Option<f64> {
    let first = results.first()?;
    let last = results.last()?;
    if last.step == first.step {
        return None;
    }
    Some((last.opt_len as f64 - first.opt_len as f64) / (last.step - first.step) as f64)
}

/// Serialize loss curves as `step,delta,loss` CSV rows for plotting.
pub fn write_loss_curves_csv<W: Write>(results: &[OracleResult], out: &mut W) -> io::Result<()> {
    writeln!(out, "step,delta,loss")?;
    for result in results {
        for (delta, loss) in &result.loss_curve {
            writeln!(out, "{},{},{}", result.step, delta, loss)?;
        }
    }
    Ok(())
}
