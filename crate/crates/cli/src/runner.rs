//! The experiment loop: wire a generated problem to the two-tailed averager,
//! the selected reference averagers, and (optionally) the brute-force
//! oracle; collect one record per evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use twotail::baselines::{EmaState, FractionTailState, PolyakState, TailAvgState};
use twotail::oracle::{assumptions_from_results, optimal_length, IterateLog, OracleResult};
use twotail::problems::{generate, LossFn};
use twotail::weights::WeightVector;
use twotail::TwoTailAverager;

use crate::config::{AlgorithmChoice, LossSource, RunConfig};
use crate::trace::{AssumptionFlags, OracleSummary, RunTrace, TraceRecord};

enum Baseline {
    Polyak(PolyakState),
    Ema(EmaState),
    Tail(TailAvgState),
    /// Window fraction; reads the shared iterate log at evaluation time.
    Fraction(f64),
}

struct NamedBaseline {
    name: String,
    state: Baseline,
}

/// Everything run_experiment produces: the persisted trace plus the full
/// oracle results (with loss curves), which are too large for the trace
/// file but useful for curve CSV export.
pub struct ExperimentOutput {
    pub trace: RunTrace,
    pub oracle_results: Vec<OracleResult>,
}

/// Execute the configured experiment: absorb each iterate, evaluate every
/// `eval_period` steps on snapshots of the raw weights and both means, and
/// append one record per evaluation.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let problem = generate(&config.problem).context("generating problem")?;
    let dimension = problem
        .stream
        .first()
        .map(WeightVector::dimension)
        .unwrap_or(0);
    if dimension == 0 {
        bail!("problem generated an empty stream");
    }

    let loss: LossFn = match config.loss_source {
        LossSource::Validation => problem.loss.clone(),
        LossSource::Training => match &problem.train_loss {
            Some(train) => train.clone(),
            None => {
                bail!("loss_source = training, but this problem kind has no separate training loss")
            }
        },
    };

    let mut averager = match config.two_tailed() {
        AlgorithmChoice::TtaCore => TwoTailAverager::core(dimension, config.eval_period)?
            .with_raw_loss(config.report_raw_loss),
        AlgorithmChoice::TtaExtended => {
            TwoTailAverager::extended(dimension, config.eval_period, config.patience)?
        }
        other => bail!("{} is not a two-tailed variant", other.name()),
    };

    let mut baselines: Vec<NamedBaseline> = config
        .algorithms
        .iter()
        .filter(|a| !a.is_two_tailed())
        .map(|choice| {
            let state = match choice {
                AlgorithmChoice::Polyak => Baseline::Polyak(PolyakState::new(dimension)),
                AlgorithmChoice::Ema { beta } => Baseline::Ema(EmaState::new(*beta)?),
                AlgorithmChoice::Tail { start } => {
                    Baseline::Tail(TailAvgState::new(dimension, *start))
                }
                AlgorithmChoice::Fraction { fraction } => Baseline::Fraction(*fraction),
                _ => unreachable!("two-tailed variants filtered out"),
            };
            Ok(NamedBaseline {
                name: choice.name(),
                state,
            })
        })
        .collect::<Result<_>>()?;

    let mut log = config
        .needs_iterate_log()
        .then(|| IterateLog::new(dimension));
    let mut records = Vec::new();
    let mut oracle_results: Vec<OracleResult> = Vec::new();

    for (index, theta) in problem.stream.iter().enumerate() {
        let step = index as u64 + 1;
        averager
            .add(theta)
            .with_context(|| format!("absorbing iterate at step {step}"))?;
        for baseline in &mut baselines {
            match &mut baseline.state {
                Baseline::Polyak(polyak) => polyak.update(theta)?,
                Baseline::Ema(ema) => ema.update(theta, index as u64)?,
                Baseline::Tail(tail) => tail.update(theta, index as u64)?,
                Baseline::Fraction(_) => {}
            }
        }
        if let Some(log) = &mut log {
            log.record(theta)?;
        }

        if !averager.evaluation_due() {
            continue;
        }
        let record = averager
            .evaluate_with(|w| loss(w))
            .with_context(|| format!("evaluating at step {step}"))?
            .record;

        let mut baseline_losses = BTreeMap::new();
        for baseline in &baselines {
            let value = match &baseline.state {
                Baseline::Polyak(polyak) => loss(polyak.value()?),
                Baseline::Ema(ema) => loss(ema.value()?),
                Baseline::Tail(tail) => loss(tail.value()?),
                Baseline::Fraction(fraction) => {
                    let log = log.as_ref().expect("fraction baselines keep the log");
                    loss(&FractionTailState::new(*fraction, log)?.value(step)?)
                }
            };
            if !value.is_finite() {
                bail!("non-finite loss from {} at step {step}", baseline.name);
            }
            baseline_losses.insert(baseline.name.clone(), value);
        }

        let oracle = if config.oracle_enabled {
            let log = log.as_ref().expect("oracle keeps the log");
            let result = optimal_length(log, step, |w| loss(w), config.eval_period)?;
            let summary = OracleSummary::from(&result);
            oracle_results.push(result);
            Some(summary)
        } else {
            None
        };

        records.push(TraceRecord {
            record,
            oracle,
            assumptions: None,
            baselines: baseline_losses,
        });
    }

    if config.oracle_enabled {
        let flags = assumptions_from_results(&oracle_results, config.eval_period);
        for (record, flag) in records.iter_mut().zip(&flags) {
            record.assumptions = Some(AssumptionFlags::from(flag));
        }
    }

    Ok(ExperimentOutput {
        trace: RunTrace {
            config: config.clone(),
            records,
        },
        oracle_results,
    })
}

/// Run and write `trace.jsonl` plus `summary.csv` (and `curves.csv` when
/// asked and the oracle ran) into `out_dir`.
pub fn run_and_persist(
    config: &RunConfig,
    out_dir: &Path,
    write_curves: bool,
) -> Result<ExperimentOutput> {
    let output = run_experiment(config)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;
    output.trace.write_jsonl(&out_dir.join("trace.jsonl"))?;
    output
        .trace
        .write_summary_csv(&out_dir.join("summary.csv"))?;
    if write_curves && !output.oracle_results.is_empty() {
        let file = std::fs::File::create(out_dir.join("curves.csv"))?;
        let mut writer = std::io::BufWriter::new(file);
        twotail::oracle::write_loss_curves_csv(&output.oracle_results, &mut writer)?;
    }
    Ok(output)
}
