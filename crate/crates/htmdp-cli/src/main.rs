//! Command-line front end: `run` executes a configured experiment, `fit`
//! and `compare` post-process stored results, and `oracle-suite` executes
//! the independent checker battery. All configuration is explicit; no
//! environment variables are consulted.

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use htmdp::config::ExperimentConfig;
use htmdp::harness::{
    compare_regimes, fit_bundle, load_bundle, render_summary, run_experiment_at, write_atomic,
    write_bundle,
};
use htmdp::oracles::{render_reports, standard_suite_with, write_reports};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "htmdp",
    version,
    about = "Simulate layered-MDP learners under heavy-tailed losses and analyze regret growth"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replica of a configured experiment and write
    /// results.csv, results.json, and epochs.tsv.
    Run {
        /// Experiment description (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Worker threads over replicas; results are identical for any
        /// count.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit growth shapes to a stored run's replica-mean regret.
    Fit {
        /// Directory holding results.json from a run.
        #[arg(long = "in")]
        input: PathBuf,
        /// Fit window starts at ceil(t_max * window-frac).
        #[arg(long, default_value_t = 0.125)]
        window_frac: f64,
    },
    /// Summarize runs of one learner across regimes into a verdict table.
    Compare {
        /// Result directories (repeat the flag or list several paths).
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.125)]
        window_frac: f64,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the independent oracle and lemma-check battery.
    OracleSuite {
        /// Directory for oracle_reports.tsv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2026)]
        seed: u64,
        /// Replicas for the shifted-loss checks (200 is the full battery;
        /// lower for a smoke pass).
        #[arg(long, default_value_t = 200)]
        shifted_replicas: usize,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config, workers, seed, out } => run(&config, workers, seed, out),
        Command::Fit { input, window_frac } => fit(&input, window_frac),
        Command::Compare { inputs, window_frac, out } => compare(&inputs, window_frac, out),
        Command::OracleSuite { out, seed, shifted_replicas } => {
            oracle_suite(&out, seed, shifted_replicas)
        }
    }
}

fn run(config_path: &Path, workers: usize, seed: Option<u64>, out: Option<PathBuf>) -> anyhow::Result<()> {
    let mut config = ExperimentConfig::load(config_path)
        .with_context(|| format!("loading {}", config_path.display()))?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    let out_dir = match out.or_else(|| config.out_dir.clone()) {
        Some(dir) => dir,
        None => bail!("no output directory: set out_dir in the config or pass --out"),
    };
    let base_dir = config_path.parent().unwrap_or_else(|| Path::new("."));
    let bundle = run_experiment_at(&config, workers, base_dir)?;

    let failures: usize = bundle.series.iter().map(|s| s.solver_failures).sum();
    if failures > 0 {
        eprintln!("warning: {failures} episode solves stopped at the iteration cap");
    }
    if let Some(worst) = bundle
        .series
        .iter()
        .filter_map(|s| s.diagnostics.as_ref())
        .map(|d| d.violations)
        .max()
    {
        if worst > 0 {
            eprintln!("warning: invariant diagnostics flagged {worst} episodes in some replica");
        }
    }
    write_bundle(&bundle, &out_dir)
        .with_context(|| format!("writing results to {}", out_dir.display()))?;

    let finals = bundle.final_regrets();
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    println!(
        "{}: replicas={} t_max={} mean_final_regret={:.6} -> {}",
        bundle.meta.label,
        bundle.meta.replicas,
        bundle.meta.t_max,
        mean,
        out_dir.display()
    );
    Ok(())
}

fn fit(input: &Path, window_frac: f64) -> anyhow::Result<()> {
    let bundle = load_bundle(input)?;
    let fit = fit_bundle(&bundle, window_frac)?;
    let mut json = serde_json::to_string_pretty(&fit)?;
    json.push('\n');
    write_atomic(&input.join("fit.json"), json.as_bytes())?;
    print!("{json}");
    Ok(())
}

fn compare(inputs: &[PathBuf], window_frac: f64, out: Option<PathBuf>) -> anyhow::Result<()> {
    let bundles = inputs
        .iter()
        .map(|dir| load_bundle(dir).with_context(|| format!("loading {}", dir.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let refs: Vec<&_> = bundles.iter().collect();
    let rows = compare_regimes(&refs, window_frac)?;
    let table = render_summary(&rows);
    if let Some(path) = &out {
        write_atomic(path, table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}

fn oracle_suite(out: &Path, seed: u64, shifted_replicas: usize) -> anyhow::Result<()> {
    let reports = standard_suite_with(seed, shifted_replicas)?;
    std::fs::create_dir_all(out)?;
    write_reports(&reports, &out.join("oracle_reports.tsv"))?;
    print!("{}", render_reports(&reports));
    if reports.iter().any(|r| !r.pass) {
        bail!("oracle suite reported failures");
    }
    Ok(())
}
