//! Anytime estimation of the optimal tail average of stochastic-optimization
//! iterates.
//!
//! The central piece is a pair of running means over the iterate stream — a
//! short one probing whether a shorter tail has become better, and a long
//! one holding the current estimate. Every `E` optimization steps the loss
//! is evaluated at both means; when the short average is at least as good,
//! the long average is reset and the short one takes its place. The estimate
//! is valid at every step, and the only state is the two means.
//!
//! The crate also ships the reference averagers the method is compared
//! against (Polyak, EMA, fixed-start and constant-fraction tails), a
//! brute-force oracle for the truly optimal tail length, and seeded
//! synthetic problem generators used by the experiment harness.
//!
//! Quick start with a custom training loop:
//!
//! ```
//! use twotail::{TwoTailAverager, WeightVector};
//!
//! let dimension = 4;
//! let eval_period = 25;
//! let mut averager = TwoTailAverager::extended(dimension, eval_period, 3).unwrap();
//! let validation_loss = |w: &WeightVector| w.iter().map(|v| v * v).sum::<f64>();
//!
//! for t in 1u64..=500 {
//!     // stand-in for an optimizer bouncing around its optimum
//!     let bounce = if t % 2 == 0 { 0.5 } else { -0.5 };
//!     let theta = WeightVector::new(vec![1.0 / t as f64 + bounce; 4]);
//!     averager.add(&theta).unwrap();
//!     if averager.evaluation_due() {
//!         let report = averager.evaluate_with(validation_loss).unwrap();
//!         println!("step {} loss {}", report.record.step, report.loss());
//!     }
//! }
//! let (weights, averaged_len) = averager.current_estimate().unwrap();
//! assert!(averaged_len >= 1);
//! assert_eq!(weights.dimension(), dimension);
//! ```

pub mod averager;
pub mod baselines;
pub mod driver;
pub mod error;
pub mod extensions;
pub mod oracle;
pub mod problems;
pub mod running_mean;
pub mod weights;

pub use averager::{EvalRecord, ResetKind, TwoTailState};
pub use driver::{Report, TwoTailAverager};
pub use error::{Error, Result};
pub use extensions::{ExtendedState, StagnationTracker, DEFAULT_PATIENCE};
pub use oracle::{AssumptionRecord, IterateLog, OracleResult};
pub use problems::{GeneratedProblem, LossFn, ProblemKind, ProblemSpec};
pub use running_mean::RunningMean;
pub use weights::WeightVector;
