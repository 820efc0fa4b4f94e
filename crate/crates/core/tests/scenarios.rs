//! Scenario-level checks tying the problem generators to the oracle's
//! assumption verdicts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use twotail::oracle::{
    assumptions_from_results, optimal_length, optimal_length_growth_rate, IterateLog,
};
use twotail::problems::{generate, ProblemKind, ProblemSpec};
use twotail::weights::WeightVector;

/// Stationary zero-mean iterates: averaging more always helps in
/// expectation, so the realized optimal window is the full history, the
/// optimum never shrinks, and the growth diagnostic reports slope one
/// (the optimal average never forgets).
#[test]
fn iid_zero_mean_iterates_never_forget() {
    let (d, steps, eval_period) = (40usize, 120u64, 30u64);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut log = IterateLog::new(d);
    for _ in 0..steps {
        let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        log.record(&WeightVector::new(row)).unwrap();
    }
    let f = |w: &WeightVector| w.iter().map(|v| v * v).sum::<f64>();
    let eval_steps: Vec<u64> = (1..=steps / eval_period).map(|k| k * eval_period).collect();
    let results: Vec<_> = eval_steps
        .iter()
        .map(|&n| optimal_length(&log, n, f, eval_period).unwrap())
        .collect();
    for result in &results {
        assert_eq!(
            result.opt_len, result.step,
            "full window must be optimal at step {}",
            result.step
        );
    }
    let flags = assumptions_from_results(&results, eval_period);
    assert!(flags.iter().all(|flag| flag.a4.unwrap_or(true)));
    assert_eq!(optimal_length_growth_rate(&results), Some(1.0));
}

/// The basin shift makes the optimal window collapse once post-shift
/// iterates dominate: the checker flags the monotone-growth violation
/// within a few evaluations of the shift.
#[test]
fn basin_shift_violates_length_monotonicity_near_the_shift() {
    let shift_step = 2000u64;
    let eval_period = 50u64;
    let spec = ProblemSpec {
        kind: ProblemKind::BasinShift,
        dimension: 10,
        learning_rate: 0.2,
        noise_scale: 0.4,
        seed: 1,
        steps: 4000,
        shift_step: Some(shift_step),
        shift_distance: Some(0.4),
        train_samples: None,
        val_samples: None,
        scripted: None,
    };
    let problem = generate(&spec).unwrap();
    let f = &problem.loss;
    let mut log = IterateLog::new(spec.dimension);
    for theta in &problem.stream {
        log.record(theta).unwrap();
    }
    let eval_steps: Vec<u64> = (1..=spec.steps / eval_period)
        .map(|k| k * eval_period)
        .collect();
    let results: Vec<_> = eval_steps
        .iter()
        .map(|&n| optimal_length(&log, n, |w| f(w), eval_period).unwrap())
        .collect();
    let flags = assumptions_from_results(&results, eval_period);
    let violation = flags
        .iter()
        .find(|flag| {
            flag.a4 == Some(false)
                && flag.step >= shift_step
                && flag.step <= shift_step + 5 * eval_period
        })
        .map(|flag| flag.step);
    assert!(
        violation.is_some(),
        "no monotone-growth violation within 5 evaluations of the shift"
    );

    // A zero-magnitude jump leaves nothing to detect there.
    let mut flat = spec.clone();
    flat.shift_distance = Some(0.0);
    let problem = generate(&flat).unwrap();
    let f = &problem.loss;
    let mut log = IterateLog::new(flat.dimension);
    for theta in &problem.stream {
        log.record(theta).unwrap();
    }
    let results: Vec<_> = eval_steps
        .iter()
        .map(|&n| optimal_length(&log, n, |w| f(w), eval_period).unwrap())
        .collect();
    // The post-shift window sees no systematic collapse: the optimum keeps
    // covering most of the run instead of dropping to the post-shift suffix.
    let post: Vec<_> = results
        .iter()
        .filter(|r| r.step > shift_step && r.step <= shift_step + 5 * eval_period)
        .collect();
    assert!(
        post.iter().all(|r| r.opt_len > r.step - shift_step),
        "optimum collapsed to the post-shift suffix despite a zero jump"
    );
}
