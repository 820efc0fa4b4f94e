//! Run configuration: the problem, the evaluation cadence, and the set of
//! averagers to run. Mirrors the JSON config file format; unknown keys are
//! rejected.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use twotail::problems::ProblemSpec;
use twotail::DEFAULT_PATIENCE;

/// Largest run length for which the brute-force oracle may be enabled.
/// Overridable per config; the total oracle cost is quadratic in the run
/// length.
pub const DEFAULT_ORACLE_CAP: u64 = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub eval_period: u64,
    /// Exactly one two-tailed variant plus any number of reference
    /// averagers.
    pub algorithms: Vec<AlgorithmChoice>,
    /// Consecutive non-improving evaluations that count as stagnating
    /// (extended variant only).
    #[serde(default = "default_patience")]
    pub patience: u64,
    #[serde(default)]
    pub oracle_enabled: bool,
    #[serde(default = "default_oracle_cap")]
    pub oracle_cap: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Evaluate and record the raw-weight loss even for the core variant.
    #[serde(default = "default_true")]
    pub report_raw_loss: bool,
    /// Which loss drives switching (and is reported in the trace).
    #[serde(default)]
    pub loss_source: LossSource,
}

fn default_patience() -> u64 {
    DEFAULT_PATIENCE
}

fn default_oracle_cap() -> u64 {
    DEFAULT_ORACLE_CAP
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSource {
    #[default]
    Validation,
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmChoice {
    TtaCore,
    TtaExtended,
    Polyak,
    Ema { beta: f64 },
    Tail { start: u64 },
    Fraction { fraction: f64 },
}

impl AlgorithmChoice {
    pub fn is_two_tailed(&self) -> bool {
        matches!(
            self,
            AlgorithmChoice::TtaCore | AlgorithmChoice::TtaExtended
        )
    }

    /// Name used as the key in trace records and summaries.
    pub fn name(&self) -> String {
        match self {
            AlgorithmChoice::TtaCore => "tta_core".into(),
            AlgorithmChoice::TtaExtended => "tta_extended".into(),
            AlgorithmChoice::Polyak => "polyak".into(),
            AlgorithmChoice::Ema { beta } => format!("ema({beta})"),
            AlgorithmChoice::Tail { start } => format!("tail({start})"),
            AlgorithmChoice::Fraction { fraction } => format!("fraction({fraction})"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).context("parsing run config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if self.eval_period == 0 {
            bail!("eval_period must be at least 1");
        }
        if self.algorithms.is_empty() {
            bail!("at least one algorithm must be selected");
        }
        let two_tailed = self.algorithms.iter().filter(|a| a.is_two_tailed()).count();
        if two_tailed != 1 {
            bail!(
                "exactly one of tta_core/tta_extended must be selected (got {two_tailed}); \
                 the trace records one two-tailed run, with the rest as reference curves"
            );
        }
        if self.patience == 0 {
            bail!("patience must be at least 1");
        }
        if self.oracle_enabled && self.problem.steps > self.oracle_cap {
            bail!(
                "oracle enabled for a {}-step run, above the cap of {} (raise oracle_cap \
                 if the quadratic cost is acceptable)",
                self.problem.steps,
                self.oracle_cap
            );
        }
        for algorithm in &self.algorithms {
            match algorithm {
                AlgorithmChoice::Ema { beta } if !(0.0..1.0).contains(beta) => {
                    bail!("ema beta must lie in [0, 1), got {beta}")
                }
                AlgorithmChoice::Fraction { fraction }
                    if !(*fraction > 0.0 && *fraction <= 1.0) =>
                {
                    bail!("fraction must lie in (0, 1], got {fraction}")
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn two_tailed(&self) -> &AlgorithmChoice {
        self.algorithms
            .iter()
            .find(|a| a.is_two_tailed())
            .expect("validated configs select exactly one two-tailed variant")
    }

    pub fn needs_iterate_log(&self) -> bool {
        self.oracle_enabled
            || self
                .algorithms
                .iter()
                .any(|a| matches!(a, AlgorithmChoice::Fraction { .. }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "problem": {
                "kind": "noisy_quadratic",
                "dimension": 3,
                "learning_rate": 0.1,
                "noise_scale": 0.01,
                "seed": 1,
                "steps": 200
            },
            "eval_period": 10,
            "algorithms": ["tta_core", {"ema": {"beta": 0.9}}]
        })
    }

    #[test]
    fn parses_minimal_config_with_defaults() {
        let config = RunConfig::from_json(&minimal_json().to_string()).unwrap();
        assert_eq!(config.patience, DEFAULT_PATIENCE);
        assert_eq!(config.oracle_cap, DEFAULT_ORACLE_CAP);
        assert!(!config.oracle_enabled);
        assert!(config.report_raw_loss);
        assert_eq!(config.loss_source, LossSource::Validation);
        assert_eq!(config.two_tailed(), &AlgorithmChoice::TtaCore);
    }

    #[test]
    fn rejects_unknown_keys() {
        let mut value = minimal_json();
        value["spurious"] = serde_json::json!(1);
        assert!(RunConfig::from_json(&value.to_string()).is_err());
        let mut value = minimal_json();
        value["problem"]["extra"] = serde_json::json!(true);
        assert!(RunConfig::from_json(&value.to_string()).is_err());
    }

    #[test]
    fn rejects_empty_or_ambiguous_algorithm_sets() {
        let mut value = minimal_json();
        value["algorithms"] = serde_json::json!([]);
        assert!(RunConfig::from_json(&value.to_string()).is_err());
        let mut value = minimal_json();
        value["algorithms"] = serde_json::json!(["polyak"]);
        assert!(RunConfig::from_json(&value.to_string()).is_err());
        let mut value = minimal_json();
        value["algorithms"] = serde_json::json!(["tta_core", "tta_extended"]);
        assert!(RunConfig::from_json(&value.to_string()).is_err());
    }

    #[test]
    fn enforces_oracle_cap() {
        let mut value = minimal_json();
        value["problem"]["steps"] = serde_json::json!(50_000);
        value["oracle_enabled"] = serde_json::json!(true);
        assert!(RunConfig::from_json(&value.to_string()).is_err());
        value["oracle_cap"] = serde_json::json!(100_000);
        assert!(RunConfig::from_json(&value.to_string()).is_ok());
    }

    #[test]
    fn algorithm_names_are_stable() {
        assert_eq!(AlgorithmChoice::TtaCore.name(), "tta_core");
        assert_eq!(AlgorithmChoice::Ema { beta: 0.99 }.name(), "ema(0.99)");
        assert_eq!(AlgorithmChoice::Tail { start: 5 }.name(), "tail(5)");
        assert_eq!(
            AlgorithmChoice::Fraction { fraction: 0.25 }.name(),
            "fraction(0.25)"
        );
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = RunConfig::from_json(&minimal_json().to_string()).unwrap();
        let text = serde_json::to_string(&config).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(config, back);
    }
}
