//! Experiment runner: exact-expectation regret bookkeeping over replicas,
//! growth-shape fits, cross-regime summaries, and delimited exports.
//!
//! Regret is never estimated from sampled losses. Each episode the runner
//! recomputes the played policy's occupancy under the true kernel and pairs
//! it with the schedule's exact means, so the recorded regret is the exact
//! expectation `<rho(pi_t) - rho(benchmark), means_t>` and replicas differ
//! only through the learner's own randomness. The benchmark policy is the
//! optimal deterministic policy for the time-averaged means and stays fixed
//! across the run.

use crate::config::ExperimentConfig;
use crate::envs::{optimal_policy, Environment, Regime};
use crate::error::{Error, Result};
use crate::estimators::SkipParams;
use crate::learners::{
    theorem_params, EpisodeRecord, LearnerKind, OmState, SimulatedEnv, UniformBaseline, UobState,
};
use crate::mdp::{format_f64, occupancy_from_policy, Kernel, Layout, Policy};
use crate::polytope::SolverSettings;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One exported row (minus the replica id, which lives on the series).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub episode: usize,
    /// Cumulative expected regret through this episode.
    pub regret: f64,
    /// Exact expected loss of the played policy this episode.
    pub expected_loss_pi_t: f64,
    /// Exact expected loss of the fixed benchmark this episode.
    pub expected_loss_benchmark: f64,
    /// Epoch index governing the episode (1 when transitions are known).
    pub epoch: usize,
    pub solver_gap: f64,
}

/// An epoch change: `episode` is the last episode of the old epoch, the
/// pair is the counter that doubled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEvent {
    pub episode: usize,
    pub new_index: usize,
    pub state: usize,
    pub action: usize,
}

/// Aggregated invariant diagnostics for one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagSummary {
    /// Worst per-episode stability ratio (must stay at or below 1).
    pub worst_stability_ratio: f64,
    /// Episodes where any invariant flag came back false.
    pub violations: usize,
}

/// Per-replica regret series plus run health counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries {
    pub replica: usize,
    pub seed: u64,
    pub rows: Vec<EpisodeStat>,
    pub epoch_events: Vec<EpochEvent>,
    /// Episodes whose solve hit the iteration cap; the run proceeds with
    /// the best iterate, these only flag precision.
    pub solver_failures: usize,
    pub diagnostics: Option<DiagSummary>,
}

impl RegretSeries {
    pub fn final_regret(&self) -> f64 {
        self.rows.last().map(|r| r.regret).unwrap_or(0.0)
    }
}

/// Everything needed to interpret the series without the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsMeta {
    pub label: String,
    pub learner: LearnerKind,
    pub regime: Regime,
    pub layer_sizes: Vec<usize>,
    pub num_actions: usize,
    pub alpha: f64,
    /// Certified moment scale the estimator constants were built from.
    pub sigma: f64,
    pub t_max: usize,
    pub replicas: usize,
    pub master_seed: u64,
    pub use_beta: bool,
    pub solver_tol: f64,
    pub c_scale: f64,
    pub beta_scale: f64,
    /// True when the benchmark argmin was tied at some state (ties break
    /// to the lowest action index).
    pub benchmark_tie: bool,
}

/// A full experiment's results: metadata plus one series per replica,
/// ordered by replica index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub meta: ResultsMeta,
    pub series: Vec<RegretSeries>,
}

impl ResultsBundle {
    pub fn final_regrets(&self) -> Vec<f64> {
        self.series.iter().map(|s| s.final_regret()).collect()
    }

    /// Mean cumulative regret across replicas at each episode.
    pub fn mean_regret_series(&self) -> Vec<f64> {
        let t_max = self.meta.t_max;
        let mut mean = vec![0.0; t_max];
        for series in &self.series {
            for (m, row) in mean.iter_mut().zip(&series.rows) {
                *m += row.regret;
            }
        }
        let n = self.series.len().max(1) as f64;
        for m in &mut mean {
            *m /= n;
        }
        mean
    }
}

/// Runs every replica of `config` and gathers the exact regret series.
/// `workers` caps the number of OS threads; replicas are deterministic in
/// their own seeds, so results are identical for any worker count. Solver
/// non-convergence is counted and the run continues on the best iterate.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ResultsBundle> {
    run_experiment_at(config, workers, Path::new("."))
}

/// [`run_experiment`] with an explicit base directory for resolving
/// relative instance paths (the CLI passes the config file's directory).
pub fn run_experiment_at(
    config: &ExperimentConfig,
    workers: usize,
    base_dir: &Path,
) -> Result<ResultsBundle> {
    run_inner(config, workers, base_dir, None)
}

struct RunContext<'a> {
    config: &'a ExperimentConfig,
    layout: &'a Layout,
    kernel: &'a Kernel,
    env: &'a Environment,
    params: &'a SkipParams,
    settings: SolverSettings,
    benchmark_occ: &'a [f64],
    /// Debug override: play this policy every episode instead of a learner.
    forced: Option<&'a Policy>,
}

fn run_inner(
    config: &ExperimentConfig,
    workers: usize,
    base_dir: &Path,
    forced: Option<&Policy>,
) -> Result<ResultsBundle> {
    config.validate()?;
    let instance = config.instance.resolve(base_dir)?;
    let layout = &instance.layout;
    let env = Environment::new(layout, instance.losses, config.regime.clone())?;
    let sigma = env.certified_sigma(layout, config.alpha)?;
    let canonical = SkipParams::for_instance(
        layout.horizon(),
        layout.num_states(),
        layout.num_actions(),
        config.alpha,
        sigma,
    )?;
    let params = SkipParams::new(
        canonical.alpha,
        canonical.sigma,
        canonical.c * config.c_scale,
        canonical.beta * config.beta_scale,
    )?;
    let settings = SolverSettings { tol: config.solver_tol, ..SolverSettings::default() };

    let avg_means = env.time_averaged_means(layout, config.t_max);
    let (benchmark, tables) = optimal_policy(layout, &instance.kernel, &avg_means)?;
    let benchmark_tie = (0..layout.num_states()).any(|s| {
        let qs: Vec<f64> =
            (0..layout.num_actions()).map(|a| tables.q[layout.pair(s, a)]).collect();
        let min = qs.iter().cloned().fold(f64::INFINITY, f64::min);
        qs.iter().filter(|&&q| q == min).count() > 1
    });
    let benchmark_occ = occupancy_from_policy(layout, &instance.kernel, &benchmark)?;

    let ctx = RunContext {
        config,
        layout,
        kernel: &instance.kernel,
        env: &env,
        params: &params,
        settings,
        benchmark_occ: benchmark_occ.as_slice(),
        forced,
    };
    let series = run_replicas(&ctx, workers)?;

    Ok(ResultsBundle {
        meta: ResultsMeta {
            label: config.label(),
            learner: config.learner,
            regime: config.regime.clone(),
            layer_sizes: layout.layer_sizes().to_vec(),
            num_actions: layout.num_actions(),
            alpha: config.alpha,
            sigma,
            t_max: config.t_max,
            replicas: config.replicas,
            master_seed: config.master_seed,
            use_beta: config.use_beta,
            solver_tol: config.solver_tol,
            c_scale: config.c_scale,
            beta_scale: config.beta_scale,
            benchmark_tie,
        },
        series,
    })
}

fn run_replicas(ctx: &RunContext<'_>, workers: usize) -> Result<Vec<RegretSeries>> {
    let replicas = ctx.config.replicas;
    let workers = workers.clamp(1, replicas);
    if workers == 1 {
        return (0..replicas).map(|r| run_replica(ctx, r)).collect();
    }
    // Round-robin assignment; each replica is a pure function of its seed,
    // so the merge below is order-stable for any worker count.
    let mut slots: Vec<Option<RegretSeries>> = (0..replicas).map(|_| None).collect();
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            handles.push(scope.spawn(move || -> Result<Vec<(usize, RegretSeries)>> {
                (w..replicas)
                    .step_by(workers)
                    .map(|r| run_replica(ctx, r).map(|s| (r, s)))
                    .collect()
            }));
        }
        for handle in handles {
            let batch = handle.join().map_err(|_| Error::domain("replica worker panicked"))?;
            for (r, series) in batch? {
                slots[r] = Some(series);
            }
        }
        Ok(())
    })?;
    Ok(slots.into_iter().map(|s| s.expect("every replica index was assigned")).collect())
}

enum Runner<'a> {
    Om(OmState<'a>, SimulatedEnv<'a, ChaCha8Rng>),
    Uob(UobState<'a>, SimulatedEnv<'a, ChaCha8Rng>),
    Baseline(UniformBaseline<'a>, SimulatedEnv<'a, ChaCha8Rng>),
    /// Debug runner: plays one fixed policy, learns nothing.
    Fixed(&'a Policy, usize),
}

impl Runner<'_> {
    fn step(&mut self) -> Result<(Policy, usize, f64, bool, Option<EpochEvent>, Option<(f64, bool)>)> {
        fn unpack(
            t: usize,
            record: EpisodeRecord,
        ) -> (Policy, usize, f64, bool, Option<EpochEvent>, Option<(f64, bool)>) {
            let event = record.epoch_transition.map(|e| EpochEvent {
                episode: t,
                new_index: e.new_index,
                state: e.state,
                action: e.action,
            });
            let d = &record.diagnostics;
            let ok = d.stability_ok && d.feasible && d.dominance_ok && d.floor_ok;
            let diag = Some((d.stability_ratio, ok));
            (record.policy, record.epoch, record.solve.gap, record.solve.converged, event, diag)
        }
        match self {
            Runner::Om(state, env) => {
                let t = state.episode();
                Ok(unpack(t, state.step(env)?))
            }
            Runner::Uob(state, env) => {
                let t = state.episode();
                Ok(unpack(t, state.step(env)?))
            }
            Runner::Baseline(state, env) => {
                let t = state.episode();
                Ok(unpack(t, state.step(env)?))
            }
            Runner::Fixed(policy, t) => {
                *t += 1;
                Ok(((*policy).clone(), 1, 0.0, true, None, None))
            }
        }
    }
}

fn run_replica(ctx: &RunContext<'_>, replica: usize) -> Result<RegretSeries> {
    let config = ctx.config;
    let layout = ctx.layout;
    let seed = config.replica_seed(replica);
    let rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = SimulatedEnv::new(layout, ctx.kernel, ctx.env, rng);
    let mut runner = match ctx.forced {
        Some(policy) => Runner::Fixed(policy, 0),
        None => match config.learner {
            LearnerKind::HtFtrlOm => Runner::Om(
                OmState::new(layout, ctx.kernel, ctx.params.clone(), ctx.settings)?,
                sim,
            ),
            LearnerKind::HtFtrlUob => {
                let (d, delta) = theorem_params(layout.horizon(), ctx.params.sigma, config.t_max);
                Runner::Uob(
                    UobState::new(
                        layout,
                        ctx.params.clone(),
                        d,
                        delta,
                        config.t_max,
                        config.use_beta,
                        ctx.settings,
                    )?,
                    sim,
                )
            }
            LearnerKind::UniformBaseline => {
                Runner::Baseline(UniformBaseline::new(layout, ctx.kernel)?, sim)
            }
        },
    };

    let mut rows = Vec::with_capacity(config.t_max);
    let mut epoch_events = Vec::new();
    let mut solver_failures = 0usize;
    let mut worst_ratio = 0.0f64;
    let mut violations = 0usize;
    let mut regret = 0.0;
    let mut means = vec![0.0; layout.num_pairs()];
    for t in 1..=config.t_max {
        let (policy, epoch, gap, converged, event, diag) = runner.step()?;
        if !converged {
            solver_failures += 1;
        }
        if let Some(event) = event {
            epoch_events.push(event);
        }
        if let Some((ratio, ok)) = diag {
            worst_ratio = worst_ratio.max(ratio);
            if !ok {
                violations += 1;
            }
        }
        ctx.env.means_into(layout, t, &mut means);
        let occupancy = occupancy_from_policy(layout, ctx.kernel, &policy)?;
        let expected: f64 =
            occupancy.as_slice().iter().zip(&means).map(|(x, m)| x * m).sum();
        let bench: f64 = ctx.benchmark_occ.iter().zip(&means).map(|(x, m)| x * m).sum();
        regret += expected - bench;
        rows.push(EpisodeStat {
            episode: t,
            regret,
            expected_loss_pi_t: expected,
            expected_loss_benchmark: bench,
            epoch,
            solver_gap: gap,
        });
    }
    let diagnostics = if config.record_diagnostics && ctx.forced.is_none() {
        Some(DiagSummary { worst_stability_ratio: worst_ratio, violations })
    } else {
        None
    };
    Ok(RegretSeries { replica, seed, rows, epoch_events, solver_failures, diagnostics })
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

/// The exact header line of `results.csv`.
pub const CSV_HEADER: &str =
    "episode, replica, regret, expected_loss_pi_t, expected_loss_benchmark, epoch, solver_gap";

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub replica: usize,
    pub stat: EpisodeStat,
}

/// Flattens a bundle into CSV rows, replica-major.
pub fn csv_rows(bundle: &ResultsBundle) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for series in &bundle.series {
        for stat in &series.rows {
            rows.push(CsvRow { replica: series.replica, stat: stat.clone() });
        }
    }
    rows
}

/// Renders rows under [`CSV_HEADER`]; floats are printed at full precision
/// so a parse round trip is byte-identical.
pub fn render_csv(rows: &[CsvRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let s = &row.stat;
        out.push_str(&format!(
            "{}, {}, {}, {}, {}, {}, {}\n",
            s.episode,
            row.replica,
            format_f64(s.regret),
            format_f64(s.expected_loss_pi_t),
            format_f64(s.expected_loss_benchmark),
            s.epoch,
            format_f64(s.solver_gap),
        ));
    }
    out
}

/// Parses text produced by [`render_csv`] (any spacing around commas is
/// accepted; the header must carry exactly the documented columns).
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse("empty csv"))?;
    let normalize = |s: &str| s.split(',').map(|f| f.trim().to_string()).collect::<Vec<_>>();
    if normalize(header) != normalize(CSV_HEADER) {
        return Err(Error::parse(format!("unexpected csv header: {header}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(Error::parse(format!("row {} has {} fields", i + 2, fields.len())));
        }
        let int = |f: &str, what: &str| -> Result<usize> {
            f.parse().map_err(|e| Error::parse(format!("row {}: {what}: {e}", i + 2)))
        };
        let num = |f: &str, what: &str| -> Result<f64> {
            f.parse().map_err(|e| Error::parse(format!("row {}: {what}: {e}", i + 2)))
        };
        rows.push(CsvRow {
            replica: int(fields[1], "replica")?,
            stat: EpisodeStat {
                episode: int(fields[0], "episode")?,
                regret: num(fields[2], "regret")?,
                expected_loss_pi_t: num(fields[3], "expected_loss_pi_t")?,
                expected_loss_benchmark: num(fields[4], "expected_loss_benchmark")?,
                epoch: int(fields[5], "epoch")?,
                solver_gap: num(fields[6], "solver_gap")?,
            },
        });
    }
    Ok(rows)
}

/// Tab-delimited epoch log: one row per epoch change across replicas.
pub fn render_epoch_log(bundle: &ResultsBundle) -> String {
    let mut out = String::from("replica\tepisode\tnew_epoch\tstate\taction\n");
    for series in &bundle.series {
        for e in &series.epoch_events {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                series.replica, e.episode, e.new_index, e.state, e.action
            ));
        }
    }
    out
}

/// Writes `bytes` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = path.file_name().map(|n| n.to_os_string()).ok_or_else(|| {
        Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("{} has no file name", path.display()),
        ))
    })?;
    tmp.push(".tmp");
    let tmp_path = dir.join(tmp);
    std::fs::write(&tmp_path, bytes)?;
    std::fs::rename(&tmp_path, path)?;
    Ok(())
}

/// Writes `results.csv`, `results.json`, and `epochs.tsv` into `dir`
/// (created if missing). Both formats carry the same numbers; the JSON
/// additionally holds the metadata and diagnostics.
pub fn write_bundle(bundle: &ResultsBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("results.csv"), render_csv(&csv_rows(bundle)).as_bytes())?;
    let mut json = serde_json::to_string_pretty(bundle)
        .map_err(|e| Error::parse(format!("encoding results: {e}")))?;
    json.push('\n');
    write_atomic(&dir.join("results.json"), json.as_bytes())?;
    write_atomic(&dir.join("epochs.tsv"), render_epoch_log(bundle).as_bytes())?;
    Ok(())
}

/// Reads a bundle back from `dir/results.json`.
pub fn load_bundle(dir: &Path) -> Result<ResultsBundle> {
    let path = dir.join("results.json");
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("reading {}: {e}", path.display())))
    })?;
    serde_json::from_str(&text).map_err(|e| Error::parse(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Shape fits
// ---------------------------------------------------------------------------

/// Growth-shape fit of a cumulative regret series: a log-log least-squares
/// power law and a single-coefficient `c * ln t` model, both over the same
/// trailing window, each with its RMS residual in fit space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFit {
    /// Exponent of the power-law fit `regret ~ coefficient * t^exponent`.
    pub exponent: f64,
    pub coefficient: f64,
    pub power_residual: f64,
    /// Coefficient of the log fit `regret ~ log_coefficient * ln t`.
    pub log_coefficient: f64,
    pub log_residual: f64,
    /// Fitted episodes, inclusive.
    pub window: (usize, usize),
    /// True when nonpositive regret forced the power fit onto a shifted
    /// series (`regret + 1`, pushed further only if dips reach -1).
    pub shifted: bool,
}

/// Fits growth shapes on `regret` (index i holds episode i+1) over episodes
/// `[window_start, len]`. Nonpositive values in the window flag the fit and
/// shift the power-law series positive; the log fit uses raw values.
pub fn fit_shape(regret: &[f64], window_start: usize) -> Result<ShapeFit> {
    if window_start == 0 {
        return Err(Error::domain("fit window must start at episode 1 or later"));
    }
    if regret.len() < 2 * window_start {
        return Err(Error::domain(format!(
            "series of {} episodes is too short for a window starting at {}",
            regret.len(),
            window_start
        )));
    }
    let window = &regret[window_start - 1..];
    let min = window.iter().cloned().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::domain("regret series contains non-finite values"));
    }
    let shift = if min > 0.0 {
        0.0
    } else if min > -1.0 {
        1.0
    } else {
        1.0 - min
    };

    let n = window.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (i, &r) in window.iter().enumerate() {
        let x = ((window_start + i) as f64).ln();
        let y = (r + shift).ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return Err(Error::domain("fit window is degenerate"));
    }
    let exponent = (n * sxy - sx * sy) / denom;
    let intercept = (sy - exponent * sx) / n;
    let mut power_sq = 0.0;
    for (i, &r) in window.iter().enumerate() {
        let x = ((window_start + i) as f64).ln();
        let e = (r + shift).ln() - (exponent * x + intercept);
        power_sq += e * e;
    }

    let mut log_num = 0.0;
    let mut log_den = 0.0;
    for (i, &r) in window.iter().enumerate() {
        let x = ((window_start + i) as f64).ln();
        log_num += r * x;
        log_den += x * x;
    }
    if log_den <= 0.0 {
        return Err(Error::domain("log fit needs an episode past the first"));
    }
    let log_coefficient = log_num / log_den;
    let mut log_sq = 0.0;
    for (i, &r) in window.iter().enumerate() {
        let x = ((window_start + i) as f64).ln();
        let e = r - log_coefficient * x;
        log_sq += e * e;
    }

    Ok(ShapeFit {
        exponent,
        coefficient: intercept.exp(),
        power_residual: (power_sq / n).sqrt(),
        log_coefficient,
        log_residual: (log_sq / n).sqrt(),
        window: (window_start, regret.len()),
        shifted: shift > 0.0,
    })
}

/// Fits the replica-mean regret of a bundle over the trailing window
/// starting at `ceil(t_max * window_frac)` (default 1/8 keeps the last
/// three octaves).
pub fn fit_bundle(bundle: &ResultsBundle, window_frac: f64) -> Result<ShapeFit> {
    if !(window_frac > 0.0 && window_frac <= 0.5) {
        return Err(Error::domain(format!("window fraction {window_frac} outside (0, 0.5]")));
    }
    let start = ((bundle.meta.t_max as f64) * window_frac).ceil() as usize;
    fit_shape(&bundle.mean_regret_series(), start.max(1))
}

// ---------------------------------------------------------------------------
// Cross-regime summary
// ---------------------------------------------------------------------------

/// Exponent ceiling for the known-transition learner in stochastic (and
/// corruption-bounded) regimes.
pub const OM_STOCHASTIC_EXPONENT_MAX: f64 = 0.35;
/// Band around `1/alpha` for the known-transition learner under
/// adversarial schedules: `[1/alpha - 0.2, 1/alpha + 0.25]`.
pub const OM_ADVERSARIAL_BAND: (f64, f64) = (0.2, 0.25);
/// Exponent ceiling for the unknown-transition learner in stochastic
/// regimes (squared-log growth reads as a slightly larger exponent at desk
/// scale).
pub const UOB_STOCHASTIC_EXPONENT_MAX: f64 = 0.4;
/// Margin over `max(1/alpha, 1/2)` for the unknown-transition learner
/// under adversarial schedules.
pub const UOB_ADVERSARIAL_MARGIN: f64 = 0.25;

/// The shape a fitted exponent is expected to satisfy, and whether it does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeVerdict {
    /// Human-readable bound, e.g. `exp <= 0.35` or `0.47 <= exp <= 0.92`.
    pub expected: String,
    /// None when no bound applies (the baseline learner).
    pub pass: Option<bool>,
}

/// Expected-shape verdict for a fitted exponent under a learner and regime.
pub fn shape_verdict(learner: LearnerKind, regime: &Regime, alpha: f64, exponent: f64) -> ShapeVerdict {
    let stochastic_like = matches!(regime, Regime::Stochastic | Regime::Corrupted { .. });
    match learner {
        LearnerKind::UniformBaseline => {
            ShapeVerdict { expected: "none".to_string(), pass: None }
        }
        LearnerKind::HtFtrlOm => {
            if stochastic_like {
                ShapeVerdict {
                    expected: format!("exp <= {OM_STOCHASTIC_EXPONENT_MAX:.2}"),
                    pass: Some(exponent <= OM_STOCHASTIC_EXPONENT_MAX),
                }
            } else {
                let lo = 1.0 / alpha - OM_ADVERSARIAL_BAND.0;
                let hi = 1.0 / alpha + OM_ADVERSARIAL_BAND.1;
                ShapeVerdict {
                    expected: format!("{lo:.2} <= exp <= {hi:.2}"),
                    pass: Some(exponent >= lo && exponent <= hi),
                }
            }
        }
        LearnerKind::HtFtrlUob => {
            if stochastic_like {
                ShapeVerdict {
                    expected: format!("exp <= {UOB_STOCHASTIC_EXPONENT_MAX:.2}"),
                    pass: Some(exponent <= UOB_STOCHASTIC_EXPONENT_MAX),
                }
            } else {
                let hi = (1.0 / alpha).max(0.5) + UOB_ADVERSARIAL_MARGIN;
                ShapeVerdict {
                    expected: format!("exp <= {hi:.2}"),
                    pass: Some(exponent <= hi),
                }
            }
        }
    }
}

/// One row of the cross-regime summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummaryRow {
    pub label: String,
    pub regime: String,
    pub learner: LearnerKind,
    pub replicas: usize,
    pub t_max: usize,
    pub mean_final_regret: f64,
    pub stderr_final_regret: f64,
    pub exponent: f64,
    pub log_coefficient: f64,
    pub verdict: ShapeVerdict,
    pub benchmark_tie: bool,
}

/// Compares runs of the same learner on the same instance geometry across
/// regimes: per run, the mean final regret with its standard error, the
/// fitted growth shapes of the replica-mean series, and the expected-shape
/// verdict. Pure post-processing; nothing is rerun.
pub fn compare_regimes(bundles: &[&ResultsBundle], window_frac: f64) -> Result<Vec<RegimeSummaryRow>> {
    let first = bundles.first().ok_or_else(|| Error::domain("nothing to compare"))?;
    for b in bundles {
        if b.meta.learner != first.meta.learner {
            return Err(Error::domain(format!(
                "summary mixes learners ({} vs {})",
                b.meta.learner.as_str(),
                first.meta.learner.as_str()
            )));
        }
        if b.meta.layer_sizes != first.meta.layer_sizes
            || b.meta.num_actions != first.meta.num_actions
            || b.meta.alpha != first.meta.alpha
        {
            return Err(Error::domain("summary mixes instance geometries"));
        }
    }
    let mut rows = Vec::with_capacity(bundles.len());
    for b in bundles {
        let finals = b.final_regrets();
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let stderr = if finals.len() > 1 {
            let var = finals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        let fit = fit_bundle(b, window_frac)?;
        rows.push(RegimeSummaryRow {
            label: b.meta.label.clone(),
            regime: b.meta.regime.kind_str().to_string(),
            learner: b.meta.learner,
            replicas: b.meta.replicas,
            t_max: b.meta.t_max,
            mean_final_regret: mean,
            stderr_final_regret: stderr,
            exponent: fit.exponent,
            log_coefficient: fit.log_coefficient,
            verdict: shape_verdict(b.meta.learner, &b.meta.regime, b.meta.alpha, fit.exponent),
            benchmark_tie: b.meta.benchmark_tie,
        });
    }
    Ok(rows)
}

/// Renders summary rows as a tab-delimited table with a header.
pub fn render_summary(rows: &[RegimeSummaryRow]) -> String {
    let mut out = String::from(
        "label\tregime\tlearner\treplicas\tt_max\tmean_final_regret\tstderr\texponent\tlog_coefficient\texpected_shape\tverdict\tbenchmark_tie\n",
    );
    for r in rows {
        let verdict = match r.verdict.pass {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "n/a",
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.label,
            r.regime,
            r.learner.as_str(),
            r.replicas,
            r.t_max,
            format_f64(r.mean_final_regret),
            format_f64(r.stderr_final_regret),
            format_f64(r.exponent),
            format_f64(r.log_coefficient),
            r.verdict.expected,
            verdict,
            r.benchmark_tie,
        ));
    }
    out
}
