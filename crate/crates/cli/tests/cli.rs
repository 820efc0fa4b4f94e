//! End-to-end checks of the `twotail` binary: run, check, plot, and sweep
//! against real config files in a temporary directory.

use std::path::Path;
use std::process::{Command, Output};

fn twotail(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twotail"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawning the twotail binary")
}

fn write_config(dir: &Path, name: &str, seed: u64, oracle: bool) -> std::path::PathBuf {
    let config = serde_json::json!({
        "problem": {
            "kind": "noisy_quadratic",
            "dimension": 3,
            "learning_rate": 0.1,
            "noise_scale": 0.01,
            "seed": seed,
            "steps": 400
        },
        "eval_period": 20,
        "algorithms": ["tta_core", "polyak", {"ema": {"beta": 0.9}}],
        "oracle_enabled": oracle
    });
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn run_check_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "config.json", 11, false);
    let out_dir = dir.path().join("out");

    // --oracle overrides the config's setting.
    let output = twotail(
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--oracle",
            "--out",
            out_dir.to_str().unwrap(),
            "--curves",
        ],
        dir.path(),
    );
    assert!(
        output.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("evaluations"), "stdout: {stdout}");
    let trace_path = out_dir.join("trace.jsonl");
    assert!(trace_path.exists());
    assert!(out_dir.join("summary.csv").exists());
    assert!(out_dir.join("curves.csv").exists());

    let output = twotail(
        &["check", "--trace", trace_path.to_str().unwrap()],
        dir.path(),
    );
    assert!(
        output.status.success(),
        "check failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("once-in-a-while"), "stdout: {stdout}");

    let output = twotail(
        &["check", "--trace", trace_path.to_str().unwrap(), "--json"],
        dir.path(),
    );
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["schema"], "twotail-propositions-v1");
    assert!(report["prop_bounds"]["checked"].as_u64().unwrap() > 0);

    let output = twotail(
        &["plot", "--trace", trace_path.to_str().unwrap()],
        dir.path(),
    );
    assert!(
        output.status.success(),
        "plot failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(out_dir.join("loss.svg").exists());
    assert!(out_dir.join("lengths.svg").exists());
}

#[test]
fn run_is_byte_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "config.json", 23, true);
    for out in ["a", "b"] {
        let out_dir = dir.path().join(out);
        let output = twotail(
            &[
                "run",
                "--config",
                config.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert!(output.status.success());
    }
    let a = std::fs::read(dir.path().join("a/trace.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b/trace.jsonl")).unwrap();
    assert_eq!(a, b, "identical configs must produce byte-identical traces");
    let a = std::fs::read(dir.path().join("a/summary.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/summary.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rejects_invalid_configs_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        serde_json::json!({
            "problem": {
                "kind": "noisy_quadratic",
                "dimension": 3,
                "learning_rate": 0.1,
                "seed": 1,
                "steps": 100
            },
            "eval_period": 10,
            "algorithms": [],
        })
        .to_string(),
    )
    .unwrap();
    let output = twotail(&["run", "--config", path.to_str().unwrap()], dir.path());
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("algorithm"), "stderr: {stderr}");

    // Unknown keys are rejected, not ignored.
    let path = dir.path().join("unknown.json");
    std::fs::write(
        &path,
        serde_json::json!({
            "problem": {
                "kind": "noisy_quadratic",
                "dimension": 3,
                "learning_rate": 0.1,
                "seed": 1,
                "steps": 100
            },
            "eval_period": 10,
            "algorithms": ["tta_core"],
            "not_a_field": true
        })
        .to_string(),
    )
    .unwrap();
    let output = twotail(&["run", "--config", path.to_str().unwrap()], dir.path());
    assert!(!output.status.success());
}

#[test]
fn check_requires_oracle_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "config.json", 31, false);
    let out_dir = dir.path().join("out");
    let output = twotail(
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(output.status.success());
    let output = twotail(
        &[
            "check",
            "--trace",
            out_dir.join("trace.jsonl").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("oracle"));
}

#[test]
fn shipped_example_configs_stay_valid() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            twotail_cli::config::RunConfig::load(&path)
                .unwrap_or_else(|e| panic!("{} is invalid: {e:#}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4, "expected the shipped example configs, found {seen}");
}

#[test]
fn sweep_runs_every_config_in_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    std::fs::create_dir(&configs).unwrap();
    for seed in 1..=3u64 {
        write_config(&configs, &format!("run{seed}.json"), seed, false);
    }
    let out = dir.path().join("sweep");
    let output = twotail(
        &[
            "sweep",
            "--configs",
            configs.to_str().unwrap(),
            "--parallel",
            "3",
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(
        output.status.success(),
        "sweep failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    for seed in 1..=3u64 {
        assert!(out.join(format!("run{seed}")).join("trace.jsonl").exists());
    }

    // A failing config makes the sweep fail after the rest have run.
    std::fs::write(configs.join("broken.json"), "{not json").unwrap();
    let output = twotail(
        &[
            "sweep",
            "--configs",
            configs.to_str().unwrap(),
            "--parallel",
            "2",
            "--out",
            dir.path().join("sweep2").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("broken: FAILED"));
}
