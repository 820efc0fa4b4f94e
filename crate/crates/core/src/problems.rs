//! Synthetic optimization scenarios: seeded, bit-reproducible iterate streams
//! paired with deterministic loss functions.
//!
//! Conventions shared by the stochastic generators:
//!
//! - The stream holds `theta_1 ..= theta_steps`, where `theta_1` is the
//!   starting point and `theta_{t+1}` is the result of the t-th update.
//! - Regression losses are `(1/2m) * sum (x . theta - y)^2` over a fixed
//!   sample set, so the single-sample gradient is `x * (x . theta - y)`.
//! - SGD draws one sample per step, uniformly with replacement.
//! - All randomness comes from one ChaCha8 stream seeded with `spec.seed`;
//!   rerunning a spec yields a bitwise identical stream.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::WeightVector;

/// Deterministic loss function over the weight space.
pub type LossFn = Arc<dyn Fn(&WeightVector) -> f64 + Send + Sync>;

/// Largest and smallest curvatures of the noisy quadratic. The first
/// coordinate always has curvature `H_MAX`; the rest descend geometrically
/// to `H_MIN`, spreading the decay timescales across the run.
const H_MAX: f64 = 1.0;
const H_MIN: f64 = 1e-3;

/// Curvature range of the basin-shift scenario. All coordinates mix fast
/// relative to the averaging lengths, so the long average genuinely settles
/// onto a basin floor and a stall is a loud signal rather than noise.
const BASIN_H_MAX: f64 = 1.0;
const BASIN_H_MIN: f64 = 0.05;

/// Starting point of the quadratic generators, per coordinate.
const QUADRATIC_INIT: f64 = 4.0;

/// Default center displacement of the shifted basin, per unit vector.
const DEFAULT_SHIFT_DISTANCE: f64 = 3.0;

/// The shifted basin's floor lies this fraction of the ridge height below
/// the original basin's floor.
const BASIN_GAP_FRACTION: f64 = 0.25;

/// Resampling budget for ill-conditioned regression designs.
const DESIGN_RETRIES: usize = 5;

/// What to generate and with which knobs. Serializes as the `problem`
/// section of a run configuration; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dimension: usize,
    #[serde(default)]
    pub learning_rate: f64,
    #[serde(default)]
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: u64,
    pub steps: u64,
    /// Step at which the basin-shift scenario swaps attractors. Beyond the
    /// run end (or absent), the scenario degenerates to the noisy quadratic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_step: Option<u64>,
    /// Distance between the two basin centers (basin shift only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripted: Option<ScriptedSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    OlsSgd,
    NoisyQuadratic,
    Scripted,
    BasinShift,
    OverfitSplit,
}

/// Hand-written iterate stream plus a loss definition, for deterministic
/// trace tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedSpec {
    pub iterates: Vec<Vec<f64>>,
    pub loss: ScriptedLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptedLoss {
    /// `f(theta) = |theta - center|^2`.
    SquaredDistance { center: Vec<f64> },
    /// Exact lookup keyed on the bit pattern of the queried weights. A miss
    /// is a scripting bug and panics with the offending vector.
    Table { entries: Vec<TableEntry> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub weights: Vec<f64>,
    pub loss: f64,
}

/// A generated scenario: the iterate stream, the loss the averager switches
/// on (the validation loss where the scenario has one), the training loss
/// where it differs, and the loss minimizer where it has a closed form.
pub struct GeneratedProblem {
    pub stream: Vec<WeightVector>,
    pub loss: LossFn,
    pub train_loss: Option<LossFn>,
    pub minimizer: Option<WeightVector>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind == ProblemKind::Scripted {
            let scripted = self.scripted.as_ref().ok_or_else(|| {
                Error::InvalidParameter("scripted problems need a `scripted` section".into())
            })?;
            if scripted.iterates.is_empty() {
                return Err(Error::InvalidParameter("scripted stream is empty".into()));
            }
            if scripted.iterates.len() as u64 != self.steps {
                return Err(Error::InvalidParameter(format!(
                    "scripted stream has {} iterates but steps = {}",
                    scripted.iterates.len(),
                    self.steps
                )));
            }
            if scripted.iterates.iter().any(|w| w.len() != self.dimension) {
                return Err(Error::InvalidParameter(
                    "scripted iterate dimension mismatch".into(),
                ));
            }
            return Ok(());
        }
        if self.dimension == 0 {
            return Err(Error::ZeroDimension);
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidParameter(
                "learning rate must be positive".into(),
            ));
        }
        if self.noise_scale < 0.0 {
            return Err(Error::InvalidParameter(
                "noise scale must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn train_samples(&self) -> usize {
        self.train_samples.unwrap_or(10 * self.dimension.max(2))
    }

    fn val_samples(&self) -> usize {
        self.val_samples.unwrap_or(2000)
    }
}

/// Dispatch on `spec.kind`.
pub fn generate(spec: &ProblemSpec) -> Result<GeneratedProblem> {
    spec.validate()?;
    match spec.kind {
        ProblemKind::OlsSgd => generate_ols(spec),
        ProblemKind::NoisyQuadratic => generate_noisy_quadratic(spec),
        ProblemKind::BasinShift => generate_basin_shift(spec),
        ProblemKind::OverfitSplit => generate_overfit_split(spec),
        ProblemKind::Scripted => {
            generate_scripted(spec.scripted.as_ref().expect("validated above"))
        }
    }
}

/// Constant-rate SGD on least squares with a full-rank sampled design.
///
/// Teacher weights and design rows are standard normal; targets carry
/// `noise_scale` standard deviations of Gaussian noise. The design is
/// resampled (up to a small budget) until its sample covariance is
/// numerically full rank, and the learning rate must stay below
/// `2 / lambda_max` of that covariance. The closed-form least-squares
/// solution over the training set is exposed as the minimizer.
pub fn generate_ols(spec: &ProblemSpec) -> Result<GeneratedProblem> {
    spec.validate()?;
    let d = spec.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let teacher: Vec<f64> = normal_vec(&mut rng, d);

    let train = sample_full_rank_design(
        &mut rng,
        spec.train_samples(),
        d,
        &teacher,
        spec.noise_scale,
        spec.learning_rate,
    )?;
    let val = RegressionSet::sample(&mut rng, spec.val_samples(), d, &teacher, spec.noise_scale);

    let minimizer = WeightVector::new(train.least_squares_solution()?);
    let stream = sgd_stream(&mut rng, &train, d, spec.learning_rate, spec.steps);

    let train_loss = train.loss_fn();
    let val_loss = val.loss_fn();
    Ok(GeneratedProblem {
        stream,
        loss: val_loss,
        train_loss: Some(train_loss),
        minimizer: Some(minimizer),
    })
}

/// Linear SGD dynamics on a diagonal quadratic with additive Gaussian noise:
/// `theta_{t+1} = theta_t - eta * H * theta_t + eta * xi_t`, evaluated under
/// the exact loss `f(theta) = theta' H theta / 2`.
///
/// This is the canonical assumption-friendly scenario: the spread of
/// curvatures makes the early-iterate contamination decay on staggered
/// timescales, so the optimal tail keeps growing while noise keeps averaging
/// worthwhile.
pub fn generate_noisy_quadratic(spec: &ProblemSpec) -> Result<GeneratedProblem> {
    spec.validate()?;
    let d = spec.dimension;
    let hessian = diagonal_hessian(d);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let stream = quadratic_stream(&mut rng, spec, &hessian, &vec![0.0; d], None);
    let loss = quadratic_loss(hessian, vec![0.0; d], 0.0);
    Ok(GeneratedProblem {
        stream,
        loss,
        train_loss: None,
        minimizer: Some(WeightVector::zeros(d)),
    })
}

/// The noisy quadratic whose attractor jumps to a second, deeper basin at
/// `shift_step`. The loss is the two-well surface
/// `min(q1(theta) + gap, q2(theta))`: while the averages drift from the old
/// center toward the new one they climb the ridge between the wells, so the
/// reported loss genuinely stalls and the reset heuristic has something to
/// detect.
pub fn generate_basin_shift(spec: &ProblemSpec) -> Result<GeneratedProblem> {
    spec.validate()?;
    let d = spec.dimension;
    let hessian = diagonal_hessian_range(d, BASIN_H_MAX, BASIN_H_MIN);
    let distance = spec.shift_distance.unwrap_or(DEFAULT_SHIFT_DISTANCE);
    let scale = distance / (d as f64).sqrt();
    let center2: Vec<f64> = vec![scale; d];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let stream = quadratic_stream(
        &mut rng,
        spec,
        &hessian,
        &vec![0.0; d],
        spec.shift_step.map(|t| (t, center2.clone())),
    );

    let ridge = quadratic_at(&hessian, &vec![0.0; d], &center2);
    let gap = BASIN_GAP_FRACTION * ridge;
    let first = quadratic_loss(hessian.clone(), vec![0.0; d], gap);
    let second = quadratic_loss(hessian, center2.clone(), 0.0);
    let loss: LossFn = Arc::new(move |w| first(w).min(second(w)));
    Ok(GeneratedProblem {
        stream,
        loss,
        train_loss: None,
        minimizer: Some(WeightVector::new(center2)),
    })
}

/// Regression with a scarce, noisy training set against a large validation
/// set: SGD from the origin first moves toward the teacher, then drifts on
/// to the noise-fitted least-squares solution, so the validation loss is
/// U-shaped while the training loss keeps falling.
pub fn generate_overfit_split(spec: &ProblemSpec) -> Result<GeneratedProblem> {
    spec.validate()?;
    let d = spec.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let teacher: Vec<f64> = normal_vec(&mut rng, d);

    let default_train = (d + d / 4).max(d + 1);
    let n_train = spec.train_samples.unwrap_or(default_train);
    let train = sample_full_rank_design(
        &mut rng,
        n_train,
        d,
        &teacher,
        spec.noise_scale,
        spec.learning_rate,
    )?;
    let val = RegressionSet::sample(&mut rng, spec.val_samples(), d, &teacher, spec.noise_scale);

    let minimizer = WeightVector::new(train.least_squares_solution()?);
    let stream = sgd_stream(&mut rng, &train, d, spec.learning_rate, spec.steps);
    Ok(GeneratedProblem {
        stream,
        loss: val.loss_fn(),
        train_loss: Some(train.loss_fn()),
        minimizer: Some(minimizer),
    })
}

/// Wrap a hand-written stream and loss table (or closed form) as a problem.
pub fn generate_scripted(scripted: &ScriptedSpec) -> Result<GeneratedProblem> {
    let stream: Vec<WeightVector> = scripted
        .iterates
        .iter()
        .map(|w| WeightVector::new(w.clone()))
        .collect();
    for theta in &stream {
        theta.check_finite()?;
    }
    let loss: LossFn = match &scripted.loss {
        ScriptedLoss::SquaredDistance { center } => {
            let center = center.clone();
            Arc::new(move |w: &WeightVector| {
                w.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum()
            })
        }
        ScriptedLoss::Table { entries } => {
            let table: HashMap<Vec<u64>, f64> = entries
                .iter()
                .map(|e| (bits_key(&e.weights), e.loss))
                .collect();
            Arc::new(move |w: &WeightVector| {
                let key = bits_key(w.as_slice());
                *table.get(&key).unwrap_or_else(|| {
                    panic!("scripted loss table has no entry for {:?}", w.as_slice())
                })
            })
        }
    };
    Ok(GeneratedProblem {
        stream,
        loss,
        train_loss: None,
        minimizer: None,
    })
}

fn bits_key(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

/// Curvature of coordinate `i`: `H_MAX` descending geometrically to `H_MIN`.
fn diagonal_hessian(d: usize) -> Vec<f64> {
    diagonal_hessian_range(d, H_MAX, H_MIN)
}

fn diagonal_hessian_range(d: usize, h_max: f64, h_min: f64) -> Vec<f64> {
    (0..d)
        .map(|i| {
            if d == 1 {
                h_max
            } else {
                h_max * (h_min / h_max).powf(i as f64 / (d - 1) as f64)
            }
        })
        .collect()
}

fn quadratic_at(hessian: &[f64], x: &[f64], center: &[f64]) -> f64 {
    0.5 * hessian
        .iter()
        .zip(x.iter().zip(center))
        .map(|(h, (v, c))| h * (v - c) * (v - c))
        .sum::<f64>()
}

fn quadratic_loss(hessian: Vec<f64>, center: Vec<f64>, offset: f64) -> LossFn {
    Arc::new(move |w: &WeightVector| quadratic_at(&hessian, w.as_slice(), &center) + offset)
}

/// `theta_1 = (1, ..., 1)`; each step applies the linear SGD update pulled
/// toward `center` (swapped at the shift point, when given) plus `eta * xi`.
fn quadratic_stream(
    rng: &mut ChaCha8Rng,
    spec: &ProblemSpec,
    hessian: &[f64],
    center1: &[f64],
    shift: Option<(u64, Vec<f64>)>,
) -> Vec<WeightVector> {
    let d = spec.dimension;
    let eta = spec.learning_rate;
    let sigma = spec.noise_scale;
    let mut theta = vec![QUADRATIC_INIT; d];
    let mut stream = Vec::with_capacity(spec.steps as usize);
    stream.push(WeightVector::new(theta.clone()));
    for t in 1..spec.steps {
        let center = match &shift {
            Some((shift_step, center2)) if t >= *shift_step => center2.as_slice(),
            _ => center1,
        };
        for i in 0..d {
            let noise: f64 = rng.sample(StandardNormal);
            theta[i] += -eta * hessian[i] * (theta[i] - center[i]) + eta * sigma * noise;
        }
        stream.push(WeightVector::new(theta.clone()));
    }
    stream
}

/// A fixed regression sample set with its half-MSE loss.
struct RegressionSet {
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl RegressionSet {
    fn sample(rng: &mut ChaCha8Rng, n: usize, d: usize, teacher: &[f64], noise_scale: f64) -> Self {
        let mut rows = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let row = normal_vec(rng, d);
            let noise: f64 = rng.sample(StandardNormal);
            targets.push(dot(&row, teacher) + noise_scale * noise);
            rows.push(row);
        }
        RegressionSet { rows, targets }
    }

    fn loss_fn(&self) -> LossFn {
        let rows = self.rows.clone();
        let targets = self.targets.clone();
        Arc::new(move |w: &WeightVector| {
            let sum: f64 = rows
                .iter()
                .zip(&targets)
                .map(|(row, y)| {
                    let r = dot(row, w.as_slice()) - y;
                    r * r
                })
                .sum();
            0.5 * sum / rows.len() as f64
        })
    }

    /// Sample covariance `X'X / n`.
    fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.rows[0].len();
        let mut cov = vec![vec![0.0; d]; d];
        for row in &self.rows {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += row[i] * row[j];
                }
            }
        }
        let inv = 1.0 / self.rows.len() as f64;
        for r in &mut cov {
            for v in r.iter_mut() {
                *v *= inv;
            }
        }
        cov
    }

    /// Solve the normal equations `X'X theta = X'y`.
    fn least_squares_solution(&self) -> Result<Vec<f64>> {
        let d = self.rows[0].len();
        let mut gram = vec![vec![0.0; d]; d];
        let mut rhs = vec![0.0; d];
        for (row, y) in self.rows.iter().zip(&self.targets) {
            for i in 0..d {
                rhs[i] += row[i] * y;
                for j in 0..d {
                    gram[i][j] += row[i] * row[j];
                }
            }
        }
        gauss_solve(gram, rhs)
    }
}

/// Sample designs until the covariance is numerically full rank, then check
/// the learning-rate stability bound `eta < 2 / lambda_max`.
fn sample_full_rank_design(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    teacher: &[f64],
    noise_scale: f64,
    eta: f64,
) -> Result<RegressionSet> {
    if n < d {
        return Err(Error::InvalidParameter(format!(
            "regression needs at least {d} training samples, got {n}"
        )));
    }
    for _ in 0..DESIGN_RETRIES {
        let set = RegressionSet::sample(rng, n, d, teacher, noise_scale);
        let cov = set.covariance();
        let lambda_max = largest_eigenvalue(&cov);
        let lambda_min = smallest_eigenvalue(&cov, lambda_max);
        if lambda_min <= 1e-9 * lambda_max {
            continue;
        }
        if eta >= 2.0 / lambda_max {
            return Err(Error::InvalidParameter(format!(
                "learning rate {eta} is unstable: the sampled covariance needs eta < {}",
                2.0 / lambda_max
            )));
        }
        return Ok(set);
    }
    Err(Error::Generation(format!(
        "no full-rank design in {DESIGN_RETRIES} attempts (n = {n}, d = {d})"
    )))
}

/// Single-sample SGD from the origin; the stream starts at the origin.
fn sgd_stream(
    rng: &mut ChaCha8Rng,
    train: &RegressionSet,
    d: usize,
    eta: f64,
    steps: u64,
) -> Vec<WeightVector> {
    let mut theta = vec![0.0; d];
    let mut stream = Vec::with_capacity(steps as usize);
    stream.push(WeightVector::new(theta.clone()));
    let n = train.rows.len();
    for _ in 1..steps {
        let pick = rng.gen_range(0..n);
        let row = &train.rows[pick];
        let residual = dot(row, &theta) - train.targets[pick];
        for i in 0..d {
            theta[i] -= eta * row[i] * residual;
        }
        stream.push(WeightVector::new(theta.clone()));
    }
    stream
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Power iteration from a fixed starting vector; deterministic.
fn largest_eigenvalue(m: &[Vec<f64>]) -> f64 {
    let d = m.len();
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mv = mat_vec(m, &v);
        let norm = dot(&mv, &mv).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = mv.iter().map(|x| x / norm).collect();
        lambda = dot(&mat_vec(m, &v), &v);
    }
    lambda
}

/// Smallest eigenvalue via power iteration on `lambda_max I - M`.
fn smallest_eigenvalue(m: &[Vec<f64>], lambda_max: f64) -> f64 {
    let d = m.len();
    let shifted: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        lambda_max - m[i][j]
                    } else {
                        -m[i][j]
                    }
                })
                .collect()
        })
        .collect();
    lambda_max - largest_eigenvalue(&shifted)
}

/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::Generation("singular normal equations".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}
