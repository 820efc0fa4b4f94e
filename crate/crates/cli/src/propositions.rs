//! Replay a persisted trace and check the averager's structural properties
//! against it: length bookkeeping, the length bounds against the oracle's
//! optimum, recurring switches, once-in-a-while optimality, and the
//! monotonicity of switch-point losses.
//!
//! Every check is computed twice where it depends on the idealized
//! assumptions: once over all evaluation steps, and once restricted to steps
//! where the per-step assumption verdicts all hold. Failures carry the
//! offending step and the assumption flags at that step, so any reported
//! counterexample can be replayed from the trace alone.

use anyhow::{bail, Result};
use serde::Serialize;

use twotail::averager::ResetKind;

use crate::trace::{AssumptionFlags, RunTrace, TraceRecord};

#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub step: u64,
    pub detail: String,
    pub assumptions: Option<AssumptionFlags>,
}

/// Pass/fail counts for one proposition, with the assumption-restricted
/// tallies alongside the unrestricted ones.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PropOutcome {
    pub checked: usize,
    pub passed: usize,
    pub restricted_checked: usize,
    pub restricted_passed: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl PropOutcome {
    fn record(
        &mut self,
        ok: bool,
        restricted: bool,
        step: u64,
        flags: Option<AssumptionFlags>,
        detail: impl FnOnce() -> String,
    ) {
        self.checked += 1;
        if ok {
            self.passed += 1;
        }
        if restricted {
            self.restricted_checked += 1;
            if ok {
                self.restricted_passed += 1;
            }
        }
        if !ok {
            self.counterexamples.push(Counterexample {
                step,
                detail: detail(),
                assumptions: flags,
            });
        }
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.checked
    }

    pub fn pass_rate(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.passed as f64 / self.checked as f64
        }
    }

    pub fn restricted_all_passed(&self) -> bool {
        self.restricted_passed == self.restricted_checked
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SwitchStats {
    pub switch_count: usize,
    /// Longest distance between consecutive switch points, in evaluations.
    pub max_gap_evals: u64,
    /// Evaluations after the last switch point.
    pub trailing_gap_evals: u64,
    pub total_evals: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntervalStats {
    /// Completed inter-switch intervals.
    pub intervals: usize,
    /// Intervals containing a step where the long length equals the optimal
    /// length rounded down or up to the evaluation period.
    pub intervals_hit: usize,
    /// Intervals whose every step satisfied the assumption verdicts.
    pub clean_intervals: usize,
    pub clean_hit: usize,
    /// Switch-step pairs of the intervals that missed.
    pub misses: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthDiagnostic {
    /// Long-average length just before each switch.
    pub peak_count: usize,
    pub peaks_nondecreasing_fraction: f64,
    pub valleys_nondecreasing_fraction: f64,
    /// Geometric mean of successive peak ratios; above 1 means the sawtooth
    /// is growing.
    pub mean_peak_growth: Option<f64>,
    pub final_long_len: u64,
    /// Slope of the oracle's optimal length over the run.
    pub optimal_length_growth_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropositionReport {
    pub schema: String,
    pub prop_basics: PropOutcome,
    pub prop_bounds: PropOutcome,
    pub prop_infinite_switches: SwitchStats,
    pub prop_once_in_a_while: IntervalStats,
    pub prop_fn_monotone: PropOutcome,
    pub growth_diagnostic: GrowthDiagnostic,
}

/// The averager state implied by a record's flags, replayed independently
/// of the library's own bookkeeping.
#[derive(Debug, Clone, Copy)]
struct PostState {
    short: u64,
    long: u64,
}

fn post_state(record: &TraceRecord) -> PostState {
    let r = &record.record;
    let mut short = r.len_short;
    let mut long = r.len_long;
    if r.switched {
        long = short;
        short = 0;
    } else if r.reset_kind == ResetKind::ShortStagnant {
        short = 0;
    }
    if r.reset_kind == ResetKind::FullReset {
        short = 0;
        long = 0;
    }
    PostState { short, long }
}

pub fn check_propositions(trace: &RunTrace) -> Result<PropositionReport> {
    if trace.records.is_empty() {
        bail!("trace has no evaluation records");
    }
    if !trace.has_oracle() {
        bail!("trace has no oracle data; rerun with the oracle enabled");
    }
    let eval_period = trace.eval_period();

    let mut basics = PropOutcome::default();
    let mut bounds = PropOutcome::default();
    let mut fn_monotone = PropOutcome::default();

    // Independent replay of the length bookkeeping.
    let mut expected_short = 0u64;
    let mut expected_long = 0u64;
    let mut prev_step = 0u64;
    // Length the long average carries beyond the current short one: the
    // previous short average's final length (or what a partial reset left).
    let mut carried: Option<u64> = None;
    let mut last_fn: Option<f64> = None;
    let mut switch_evals: Vec<usize> = Vec::new();
    let mut peaks = Vec::new();
    let mut valleys = Vec::new();

    for (i, record) in trace.records.iter().enumerate() {
        let r = &record.record;
        let flags = record.assumptions;
        let restricted = flags.map(|f| f.all_hold()).unwrap_or(false);
        let adds = r.step.saturating_sub(prev_step);
        expected_short += adds;
        expected_long += adds;

        let lengths_ok = r.len_short == expected_short && r.len_long == expected_long;
        let multiples_ok = r.len_short % eval_period == 0 && r.len_long % eval_period == 0;
        let ordered_ok = r.len_short <= r.len_long && r.len_long <= r.step;
        let decomposition_ok = match carried {
            Some(s) => r.len_long == r.len_short + s,
            None => r.len_long == r.len_short,
        };
        let switch_consistent = if r.switched {
            r.reset_kind != ResetKind::None || r.f_short <= r.f_long
        } else {
            r.f_short > r.f_long
        };
        let ok = lengths_ok && multiples_ok && ordered_ok && decomposition_ok && switch_consistent;
        basics.record(ok, restricted, r.step, flags, || {
            format!(
                "lengths {}/{} expected {expected_short}/{expected_long}, carried {carried:?}, \
                 switched={} f_short={} f_long={}",
                r.len_short, r.len_long, r.switched, r.f_short, r.f_long
            )
        });

        if r.switched {
            switch_evals.push(i);
            peaks.push(r.len_long);
            if r.reset_kind == ResetKind::None {
                if let Some(prev) = last_fn {
                    fn_monotone.record(r.f_short <= prev, restricted, r.step, flags, || {
                        format!("switch loss {} after {}", r.f_short, prev)
                    });
                }
                last_fn = Some(r.f_short);
            }
            carried = Some(expected_short);
            expected_long = expected_short;
            expected_short = 0;
        } else if r.reset_kind == ResetKind::ShortStagnant {
            expected_short = 0;
            carried = Some(expected_long);
        }
        if r.reset_kind == ResetKind::FullReset {
            expected_short = 0;
            expected_long = 0;
            carried = None;
        }
        if r.switched {
            valleys.push(expected_long);
        }

        let post = post_state(record);
        debug_assert!(!ok || (post.short == expected_short && post.long == expected_long));
        let oracle = record.oracle.expect("checked above");
        let bounds_ok = post.short < oracle.opt_len && post.long < 2 * oracle.opt_len + eval_period;
        bounds.record(bounds_ok, restricted, r.step, flags, || {
            format!(
                "post lengths {}/{} against optimal {} (bounds: short < {}, long < {})",
                post.short,
                post.long,
                oracle.opt_len,
                oracle.opt_len,
                2 * oracle.opt_len + eval_period
            )
        });

        prev_step = r.step;
    }

    let max_gap_evals = switch_evals
        .windows(2)
        .map(|w| (w[1] - w[0]) as u64)
        .max()
        .unwrap_or(0);
    let trailing_gap_evals = switch_evals
        .last()
        .map(|&i| (trace.records.len() - 1 - i) as u64)
        .unwrap_or(trace.records.len() as u64);
    let switches = SwitchStats {
        switch_count: switch_evals.len(),
        max_gap_evals,
        trailing_gap_evals,
        total_evals: trace.records.len(),
    };

    let mut intervals = IntervalStats {
        intervals: 0,
        intervals_hit: 0,
        clean_intervals: 0,
        clean_hit: 0,
        misses: Vec::new(),
    };
    for pair in switch_evals.windows(2) {
        let (i1, i2) = (pair[0], pair[1]);
        intervals.intervals += 1;
        let mut hit = false;
        let mut clean = true;
        for record in &trace.records[i1..i2] {
            let oracle = record.oracle.expect("checked above");
            let floor = oracle.opt_len / eval_period * eval_period;
            let ceil = oracle.opt_len.div_ceil(eval_period) * eval_period;
            let long = post_state(record).long;
            if long == floor || long == ceil {
                hit = true;
            }
            if !record.assumptions.map(|f| f.all_hold()).unwrap_or(false) {
                clean = false;
            }
        }
        if hit {
            intervals.intervals_hit += 1;
        } else {
            intervals
                .misses
                .push((trace.records[i1].record.step, trace.records[i2].record.step));
        }
        if clean {
            intervals.clean_intervals += 1;
            if hit {
                intervals.clean_hit += 1;
            }
        }
    }

    let nondecreasing = |series: &[u64]| -> f64 {
        if series.len() < 2 {
            return 1.0;
        }
        series.windows(2).filter(|w| w[1] >= w[0]).count() as f64 / (series.len() - 1) as f64
    };
    let mean_peak_growth = (peaks.len() >= 2 && peaks.iter().all(|&p| p > 0)).then(|| {
        let log_sum: f64 = peaks
            .windows(2)
            .map(|w| (w[1] as f64 / w[0] as f64).ln())
            .sum();
        (log_sum / (peaks.len() - 1) as f64).exp()
    });
    let first = trace.records.first().expect("non-empty");
    let last = trace.records.last().expect("non-empty");
    let growth = GrowthDiagnostic {
        peak_count: peaks.len(),
        peaks_nondecreasing_fraction: nondecreasing(&peaks),
        valleys_nondecreasing_fraction: nondecreasing(&valleys),
        mean_peak_growth,
        final_long_len: post_state(last).long,
        optimal_length_growth_rate: (last.record.step > first.record.step).then(|| {
            let o_first = first.oracle.expect("checked above").opt_len as f64;
            let o_last = last.oracle.expect("checked above").opt_len as f64;
            (o_last - o_first) / (last.record.step - first.record.step) as f64
        }),
    };

    Ok(PropositionReport {
        schema: "twotail-propositions-v1".to_string(),
        prop_basics: basics,
        prop_bounds: bounds,
        prop_infinite_switches: switches,
        prop_once_in_a_while: intervals,
        prop_fn_monotone: fn_monotone,
        growth_diagnostic: growth,
    })
}

impl std::fmt::Display for PropositionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let outcome = |o: &PropOutcome| {
            format!(
                "{}/{} (restricted {}/{})",
                o.passed, o.checked, o.restricted_passed, o.restricted_checked
            )
        };
        writeln!(f, "basics:          {}", outcome(&self.prop_basics))?;
        writeln!(f, "length bounds:   {}", outcome(&self.prop_bounds))?;
        writeln!(
            f,
            "switches:        {} over {} evals (max gap {}, trailing {})",
            self.prop_infinite_switches.switch_count,
            self.prop_infinite_switches.total_evals,
            self.prop_infinite_switches.max_gap_evals,
            self.prop_infinite_switches.trailing_gap_evals
        )?;
        writeln!(
            f,
            "once-in-a-while: {}/{} intervals ({}/{} assumption-clean)",
            self.prop_once_in_a_while.intervals_hit,
            self.prop_once_in_a_while.intervals,
            self.prop_once_in_a_while.clean_hit,
            self.prop_once_in_a_while.clean_intervals
        )?;
        writeln!(f, "switch losses:   {}", outcome(&self.prop_fn_monotone))?;
        writeln!(
            f,
            "growth:          {} peaks ({:.0}% nondecreasing), mean ratio {}, final L {}, optimal-length slope {}",
            self.growth_diagnostic.peak_count,
            100.0 * self.growth_diagnostic.peaks_nondecreasing_fraction,
            self.growth_diagnostic
                .mean_peak_growth
                .map(|g| format!("{g:.3}"))
                .unwrap_or_else(|| "n/a".into()),
            self.growth_diagnostic.final_long_len,
            self.growth_diagnostic
                .optimal_length_growth_rate
                .map(|g| format!("{g:.4}"))
                .unwrap_or_else(|| "n/a".into()),
        )?;
        for (name, prop) in [
            ("basics", &self.prop_basics),
            ("bounds", &self.prop_bounds),
            ("switch losses", &self.prop_fn_monotone),
        ] {
            for c in prop.counterexamples.iter().take(5) {
                writeln!(
                    f,
                    "  counterexample ({name}) at step {}: {} [assumptions: {:?}]",
                    c.step, c.detail, c.assumptions
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::runner::run_experiment;

    fn oracle_config(steps: u64, eval_period: u64) -> RunConfig {
        RunConfig::from_json(
            &serde_json::json!({
                "problem": {
                    "kind": "noisy_quadratic",
                    "dimension": 4,
                    "learning_rate": 0.2,
                    "noise_scale": 0.002,
                    "seed": 17,
                    "steps": steps
                },
                "eval_period": eval_period,
                "algorithms": ["tta_core"],
                "oracle_enabled": true
            })
            .to_string(),
        )
        .unwrap()
    }

    #[test]
    fn clean_run_passes_structural_checks() {
        let trace = run_experiment(&oracle_config(600, 30)).unwrap().trace;
        let report = check_propositions(&trace).unwrap();
        assert!(report.prop_basics.all_passed(), "{report}");
        assert!(report.prop_fn_monotone.all_passed(), "{report}");
        assert!(report.prop_infinite_switches.switch_count >= 1);
        assert!(report.prop_bounds.restricted_all_passed(), "{report}");
    }

    #[test]
    fn requires_oracle_data() {
        let mut config = oracle_config(200, 20);
        config.oracle_enabled = false;
        let trace = run_experiment(&config).unwrap().trace;
        assert!(check_propositions(&trace).is_err());
    }

    /// The designated assumption-satisfying fixture: deterministic
    /// geometric contraction. Every proposition holds at every step.
    #[test]
    fn deterministic_contraction_passes_every_proposition() {
        let gamma: f64 = 0.97;
        let iterates: Vec<Vec<f64>> = (1..=200)
            .map(|t| vec![3.0 * gamma.powi(t), -2.0 * gamma.powi(t)])
            .collect();
        let config = RunConfig::from_json(
            &serde_json::json!({
                "problem": {
                    "kind": "scripted",
                    "dimension": 2,
                    "seed": 0,
                    "steps": 200,
                    "scripted": {
                        "iterates": iterates,
                        "loss": {"kind": "squared_distance", "center": [0.0, 0.0]}
                    }
                },
                "eval_period": 10,
                "algorithms": ["tta_core"],
                "oracle_enabled": true
            })
            .to_string(),
        )
        .unwrap();
        let trace = run_experiment(&config).unwrap().trace;
        // Every step is assumption-clean on this fixture.
        assert!(trace
            .records
            .iter()
            .all(|r| r.assumptions.unwrap().all_hold()));
        let report = check_propositions(&trace).unwrap();
        assert!(report.prop_basics.all_passed(), "{report}");
        assert!(report.prop_bounds.all_passed(), "{report}");
        assert!(report.prop_fn_monotone.all_passed(), "{report}");
        assert_eq!(
            report.prop_once_in_a_while.intervals_hit,
            report.prop_once_in_a_while.intervals
        );
        assert!(report.prop_infinite_switches.switch_count >= 5);
    }

    /// A basin shift breaks the monotone-growth assumption and the length
    /// bounds with it: the violations mass after the shift, where the
    /// optimal length collapsed, not before it.
    #[test]
    fn basin_shift_bound_violations_follow_the_shift() {
        let shift = 2000u64;
        let config = RunConfig::from_json(
            &serde_json::json!({
                "problem": {
                    "kind": "basin_shift",
                    "dimension": 10,
                    "learning_rate": 0.2,
                    "noise_scale": 0.4,
                    "seed": 1,
                    "steps": 4000,
                    "shift_step": shift,
                    "shift_distance": 0.4
                },
                "eval_period": 50,
                "algorithms": ["tta_core"],
                "oracle_enabled": true
            })
            .to_string(),
        )
        .unwrap();
        let trace = run_experiment(&config).unwrap().trace;
        let report = check_propositions(&trace).unwrap();
        let violations: Vec<u64> = report
            .prop_bounds
            .counterexamples
            .iter()
            .map(|c| c.step)
            .collect();
        let post = violations.iter().filter(|&&s| s > shift).count();
        let pre = violations.len() - post;
        assert!(post >= 5, "expected a violation cluster after the shift");
        assert!(
            post >= 5 * pre.max(1),
            "violations are not concentrated after the shift: {pre} before, {post} after"
        );
        // The growth assumption is flagged right at the collapse onset.
        let onset_flagged = trace.records.iter().any(|r| {
            r.record.step >= shift
                && r.record.step <= shift + 5 * trace.eval_period()
                && r.assumptions.unwrap().a4 == Some(false)
        });
        assert!(onset_flagged, "no monotone-growth flag near the shift");
    }

    #[test]
    fn detects_corrupted_length_bookkeeping() {
        let mut trace = run_experiment(&oracle_config(600, 30)).unwrap().trace;
        trace.records[3].record.len_long += 30;
        let report = check_propositions(&trace).unwrap();
        assert!(!report.prop_basics.all_passed());
        let example = &report.prop_basics.counterexamples[0];
        assert_eq!(example.step, trace.records[3].record.step);
        assert!(example.assumptions.is_some());
    }

    #[test]
    fn detects_fn_monotonicity_violation() {
        let mut trace = run_experiment(&oracle_config(600, 30)).unwrap().trace;
        // Force a rising switch loss on the last switched record.
        let last_switch = trace
            .records
            .iter()
            .rposition(|r| r.record.switched)
            .expect("at least one switch");
        let first_switch = trace
            .records
            .iter()
            .position(|r| r.record.switched)
            .unwrap();
        assert_ne!(first_switch, last_switch, "need two switches");
        trace.records[last_switch].record.f_short =
            trace.records[first_switch].record.f_short + 1.0;
        // keep the record self-consistent: a switch has f_long = f_short
        trace.records[last_switch].record.f_long = trace.records[last_switch].record.f_short;
        let report = check_propositions(&trace).unwrap();
        assert!(!report.prop_fn_monotone.all_passed());
    }
}
