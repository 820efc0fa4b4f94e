use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use twotail_cli::config::RunConfig;
use twotail_cli::plot::emit_plots;
use twotail_cli::propositions::check_propositions;
use twotail_cli::runner::run_and_persist;
use twotail_cli::trace::RunTrace;

#[derive(Parser)]
#[command(
    name = "twotail",
    about = "Two-tailed averaging experiment runner",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config and persist its trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Enable the brute-force oracle regardless of the config.
        #[arg(long)]
        oracle: bool,
        /// Output directory (default: the config's output_dir, else `.`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the oracle's full loss curves as curves.csv.
        #[arg(long)]
        curves: bool,
    },
    /// Check the averaging propositions against a persisted trace.
    Check {
        #[arg(long)]
        trace: PathBuf,
        /// Print the full report as JSON instead of the summary.
        #[arg(long)]
        json: bool,
    },
    /// Render loss and length charts from a persisted trace.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        /// Output directory (default: next to the trace).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every config in a directory, in parallel.
    Sweep {
        #[arg(long)]
        configs: PathBuf,
        /// Number of worker threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Root output directory; each config gets its own subdirectory.
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            oracle,
            out,
            curves,
        } => run_command(&config, oracle, out, curves),
        Command::Check { trace, json } => check_command(&trace, json),
        Command::Plot { trace, out } => plot_command(&trace, out),
        Command::Sweep {
            configs,
            parallel,
            out,
        } => sweep_command(&configs, parallel, &out),
    }
}

fn run_command(path: &Path, oracle: bool, out: Option<PathBuf>, curves: bool) -> Result<()> {
    let mut config = RunConfig::load(path)?;
    if oracle {
        config.oracle_enabled = true;
        config.validate()?;
    }
    let out_dir = out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let output = run_and_persist(&config, &out_dir, curves)?;
    let records = &output.trace.records;
    let switches = records.iter().filter(|r| r.record.switched).count();
    let best = records
        .iter()
        .map(|r| r.record.reported_loss())
        .fold(f64::INFINITY, f64::min);
    println!(
        "ran {} steps ({} evaluations, {} switches); best reported loss {best}",
        config.problem.steps,
        records.len(),
        switches
    );
    println!("trace written to {}", out_dir.join("trace.jsonl").display());
    Ok(())
}

fn check_command(path: &Path, json: bool) -> Result<()> {
    let trace = RunTrace::read_jsonl(path)?;
    let report = check_propositions(&trace)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{report}");
    }
    Ok(())
}

fn plot_command(path: &Path, out: Option<PathBuf>) -> Result<()> {
    let trace = RunTrace::read_jsonl(path)?;
    let out_dir = out.unwrap_or_else(|| {
        path.parent()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    for path in emit_plots(&trace, &out_dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn sweep_command(configs_dir: &Path, parallel: usize, out_root: &Path) -> Result<()> {
    if parallel == 0 {
        bail!("--parallel must be at least 1");
    }
    let mut config_paths: Vec<PathBuf> = std::fs::read_dir(configs_dir)
        .with_context(|| format!("reading config dir {}", configs_dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    config_paths.sort();
    if config_paths.is_empty() {
        bail!("no .json configs in {}", configs_dir.display());
    }

    let queue = Mutex::new(config_paths.into_iter());
    let failures = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..parallel {
            scope.spawn(|| loop {
                let Some(path) = queue.lock().expect("queue lock").next() else {
                    return;
                };
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "config".to_string());
                let out_dir = out_root.join(&stem);
                let result = RunConfig::load(&path)
                    .and_then(|config| run_and_persist(&config, &out_dir, false));
                match result {
                    Ok(output) => println!(
                        "{stem}: {} evaluations -> {}",
                        output.trace.records.len(),
                        out_dir.display()
                    ),
                    Err(error) => {
                        println!("{stem}: FAILED ({error:#})");
                        failures.lock().expect("failure lock").push(stem);
                    }
                }
            });
        }
    });

    let failures = failures.into_inner().expect("failure lock");
    if !failures.is_empty() {
        bail!(
            "{} sweep configs failed: {}",
            failures.len(),
            failures.join(", ")
        );
    }
    Ok(())
}
