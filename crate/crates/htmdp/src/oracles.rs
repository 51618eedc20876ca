//! Independent brute-force references and lemma checkers used by the test
//! suite and the `oracle-suite` CLI command.
//!
//! Every function here is written against the math directly (path
//! enumeration, grid search, closed-form inequalities) and never calls the
//! optimized kernels it is meant to check; the only shared code is primitive
//! arithmetic and the table layouts. Checks that hold only in expectation
//! are run with fixed seeds and explicit 3-sigma allowances so a failure
//! reproduces exactly.

use crate::confidence::{Counters, EpochModel};
use crate::envs::{Environment, LossModel, Regime};
use crate::error::{Error, Result};
use crate::estimators::SkipParams;
use crate::learners::{EpisodeRecord, OmState, SimulatedEnv};
use crate::mdp::{self, Kernel, Layout, OccupancyMeasure, Policy, Trajectory};
use crate::polytope::SolverSettings;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Outcome of one oracle or lemma check: the worst observed violation (how
/// far past the bound any sample landed, zero when none did), the sample
/// count, and the declared tolerance the violation is judged against.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub max_violation: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> OracleReport {
        OracleReport {
            name: name.into(),
            max_violation: 0.0,
            samples: 0,
            tolerance,
            pass: true,
        }
    }

    /// Records one sample; `violation` is the nonnegative breach amount
    /// (zero for a sample inside the bound).
    pub fn record(&mut self, violation: f64) {
        self.samples += 1;
        if violation > self.max_violation {
            self.max_violation = violation;
        }
        if violation > self.tolerance {
            self.pass = false;
        }
    }

    /// Merges another report of the same kind into this one.
    pub fn absorb(&mut self, other: &OracleReport) {
        self.samples += other.samples;
        if other.max_violation > self.max_violation {
            self.max_violation = other.max_violation;
        }
        self.pass = self.pass && other.pass;
    }
}

/// Renders reports as a tab-delimited text summary with a header row; this
/// is the format `oracle-suite` writes next to its results.
pub fn render_reports(reports: &[OracleReport]) -> String {
    let mut out = String::from("name\tsamples\tmax_violation\ttolerance\tpass\n");
    for r in reports {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.name,
            r.samples,
            mdp::format_f64(r.max_violation),
            mdp::format_f64(r.tolerance),
            r.pass
        ));
    }
    out
}

pub fn write_reports(reports: &[OracleReport], path: &std::path::Path) -> Result<()> {
    std::fs::write(path, render_reports(reports))?;
    Ok(())
}

/// Exact occupancy by exhaustive trajectory enumeration: walks every
/// complete path, multiplies its probability, and adds it to each visited
/// pair. Exponential in the horizon by design; instances past 10^6 paths
/// are refused.
pub fn brute_force_occupancy(
    layout: &Layout,
    kernel: &Kernel,
    policy: &Policy,
) -> Result<OccupancyMeasure> {
    let mut paths = layout.num_actions() as f64;
    for h in 1..layout.horizon() {
        paths *= (layout.num_actions() * layout.layer_size(h)) as f64;
    }
    if paths > 1e6 {
        return Err(Error::Unsupported(format!(
            "{paths:.0} trajectories exceed the 1e6 enumeration cap"
        )));
    }
    let mut values = vec![0.0; layout.num_pairs()];
    let mut path: Vec<usize> = Vec::with_capacity(layout.horizon());
    walk_paths(layout, kernel, policy, 0, 0, 1.0, &mut path, &mut values);
    Ok(OccupancyMeasure::from_raw(values))
}

fn walk_paths(
    layout: &Layout,
    kernel: &Kernel,
    policy: &Policy,
    h: usize,
    s: usize,
    prob: f64,
    path: &mut Vec<usize>,
    acc: &mut [f64],
) {
    for a in 0..layout.num_actions() {
        let p = prob * policy.prob(layout, s, a);
        path.push(layout.pair(s, a));
        if h + 1 == layout.horizon() {
            // One complete trajectory: credit its probability to each step.
            for &pair in path.iter() {
                acc[pair] += p;
            }
        } else {
            let base = layout.states_in_layer(h + 1).start;
            for (j, &pr) in kernel.row(layout, s, a).iter().enumerate() {
                walk_paths(layout, kernel, policy, h + 1, base + j, p * pr, path, acc);
            }
        }
        path.pop();
    }
}

/// Calls `f` on every composition of `n` into `k` nonnegative parts.
fn for_each_composition(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(n: usize, slot: usize, buf: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if slot + 1 == buf.capacity() {
            buf.push(n);
            f(buf);
            buf.pop();
            return;
        }
        for v in 0..=n {
            buf.push(v);
            rec(n - v, slot + 1, buf, f);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(k);
    rec(n, 0, &mut buf, f);
}

/// Grid minimizer of the single-state FTRL objective
/// `<x, loss> - inv_eta * sum x_i^(1/alpha)` over the probability simplex.
/// Restricted to at most 4 actions and grid steps no finer than 1e-4 (the
/// enumeration is a full composition sweep). Ties keep the first grid point
/// found, so the output is deterministic.
pub fn brute_force_ftrl(
    loss: &[f64],
    alpha: f64,
    inv_eta: f64,
    grid_step: f64,
) -> Result<(Vec<f64>, f64)> {
    let k = loss.len();
    if k == 0 || k > 4 {
        return Err(Error::Unsupported(format!("{k} actions outside the 1..=4 grid range")));
    }
    if !(grid_step >= 1e-4 && grid_step <= 0.5) {
        return Err(Error::domain(format!("grid step {grid_step} outside [1e-4, 0.5]")));
    }
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::domain(format!("alpha {alpha} outside (1, 2]")));
    }
    let n = (1.0 / grid_step).round() as usize;
    let e = 1.0 / alpha;
    let mut best = f64::INFINITY;
    let mut arg = vec![0.0; k];
    for_each_composition(n, k, &mut |parts| {
        let mut lin = 0.0;
        let mut reg = 0.0;
        for (i, &p) in parts.iter().enumerate() {
            let x = p as f64 / n as f64;
            lin += x * loss[i];
            reg += x.powf(e);
        }
        let obj = lin - inv_eta * reg;
        if obj < best {
            best = obj;
            for (o, &p) in arg.iter_mut().zip(parts) {
                *o = p as f64 / n as f64;
            }
        }
    });
    Ok((arg, best))
}

/// How far the grid minimum can sit above the true minimum: rounding the
/// optimum to the nearest grid point moves each coordinate by at most
/// `2 * step` (floor plus at most one redistribution increment), so the
/// linear term moves by at most `2 * k * step * |loss|_inf` and the
/// regularizer by at most `inv_eta * k * (2 * step)^(1/alpha)` (powers in
/// (0, 1] are subadditive: `|a^e - b^e| <= |a - b|^e`).
pub fn ftrl_grid_slack(loss_inf: f64, alpha: f64, inv_eta: f64, k: usize, step: f64) -> f64 {
    2.0 * k as f64 * step * loss_inf + inv_eta * k as f64 * (2.0 * step).powf(1.0 / alpha)
}

/// Grid maximum of `<q, weights>` over distributions `q` inside the
/// elementwise box `|q - p_hat| <= width` (at most 4 entries). Used to
/// cross-check the greedy box maximizer.
pub fn grid_row_max(
    p_hat: &[f64],
    width: &[f64],
    weights: &[f64],
    grid_step: f64,
) -> Result<f64> {
    let k = p_hat.len();
    if k == 0 || k > 4 || width.len() != k || weights.len() != k {
        return Err(Error::Unsupported("row boxes support 1..=4 successors".into()));
    }
    if !(grid_step >= 1e-4 && grid_step <= 0.5) {
        return Err(Error::domain(format!("grid step {grid_step} outside [1e-4, 0.5]")));
    }
    let n = (1.0 / grid_step).round() as usize;
    let mut best = f64::NEG_INFINITY;
    for_each_composition(n, k, &mut |parts| {
        let mut ok = true;
        let mut val = 0.0;
        for (i, &p) in parts.iter().enumerate() {
            let q = p as f64 / n as f64;
            if (q - p_hat[i]).abs() > width[i] + 1e-12 {
                ok = false;
                break;
            }
            val += q * weights[i];
        }
        if ok && val > best {
            best = val;
        }
    });
    if best == f64::NEG_INFINITY {
        return Err(Error::domain("no grid point inside the confidence box"));
    }
    Ok(best)
}

/// Discretized upper occupancy bounds on a two-layer instance: for each
/// state of layer 1, the reach probability decomposes across the layer-0
/// rows (each row of the box is free independently), so the grid maximizes
/// every row separately and the per-pair bound is the state maximum times
/// the policy. Instances must have horizon 2 and at most 3 successors.
pub fn brute_force_uob(
    layout: &Layout,
    p_hat: &Kernel,
    widths: &[f64],
    policy: &Policy,
    grid_step: f64,
) -> Result<Vec<f64>> {
    if layout.horizon() != 2 {
        return Err(Error::Unsupported("grid UOB oracle handles horizon 2 only".into()));
    }
    let succ = layout.layer_size(1);
    if succ > 3 {
        return Err(Error::Unsupported("grid UOB oracle handles at most 3 successors".into()));
    }
    if widths.len() != layout.kernel_len() {
        return Err(Error::structure("width table does not match layout"));
    }
    let n = (1.0 / grid_step).round() as usize;
    let num_a = layout.num_actions();
    // Per action row at the initial state: grid max of each coordinate.
    let mut coord_max = vec![vec![0.0f64; succ]; num_a];
    for a in 0..num_a {
        let range = layout.kernel_row_range(0, a);
        let row = &p_hat.as_slice()[range.clone()];
        let b = &widths[range];
        for_each_composition(n, succ, &mut |parts| {
            for (i, &p) in parts.iter().enumerate() {
                let q = p as f64 / n as f64;
                if (q - row[i]).abs() > b[i] + 1e-12 {
                    return;
                }
            }
            for (i, &p) in parts.iter().enumerate() {
                let q = p as f64 / n as f64;
                if q > coord_max[a][i] {
                    coord_max[a][i] = q;
                }
            }
        });
    }
    let mut u = vec![0.0; layout.num_pairs()];
    for a in 0..num_a {
        u[layout.pair(0, a)] = policy.prob(layout, 0, a);
    }
    for (j, s) in layout.states_in_layer(1).enumerate() {
        let reach: f64 =
            (0..num_a).map(|a| policy.prob(layout, 0, a) * coord_max[a][j]).sum();
        for a in 0..num_a {
            u[layout.pair(s, a)] = reach * policy.prob(layout, s, a);
        }
    }
    Ok(u)
}

/// Checks the suboptimal-mass-propagation inequality for one policy pair:
/// the positive part of the state-marginal excess of `pi` over the
/// deterministic `pi_dagger` is at most the horizon times the occupancy
/// `pi` spends off `pi_dagger`'s actions.
pub fn check_mass_propagation(
    layout: &Layout,
    kernel: &Kernel,
    pi: &Policy,
    dagger_actions: &[usize],
) -> Result<f64> {
    let pi_dagger = Policy::deterministic(layout, dagger_actions)?;
    let rho = mdp::occupancy_from_policy(layout, kernel, pi)?;
    let rho_dagger = mdp::occupancy_from_policy(layout, kernel, &pi_dagger)?;
    let mut lhs = 0.0;
    for s in 0..layout.num_states() {
        let d = rho.state_marginal(layout, s) - rho_dagger.state_marginal(layout, s);
        if d > 0.0 {
            lhs += d;
        }
    }
    let mut off_mass = 0.0;
    for s in 0..layout.num_states() {
        for a in 0..layout.num_actions() {
            if a != dagger_actions[s] {
                off_mass += rho.get(layout, s, a);
            }
        }
    }
    let rhs = layout.horizon() as f64 * off_mass;
    Ok((lhs - rhs).max(0.0))
}

/// Randomized mass-propagation suite: `pairs` random (policy, deterministic
/// benchmark) pairs on random layered instances; tolerance 1e-10.
pub fn mass_propagation_suite(pairs: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::new("mass_propagation", 1e-10);
    for _ in 0..pairs {
        let h = rng.gen_range(1..=3);
        let mut sizes = vec![1usize];
        for _ in 1..h {
            sizes.push(rng.gen_range(1..=3));
        }
        let actions = rng.gen_range(1..=3);
        let layout = Layout::new(&sizes, actions)?;
        let kernel = mdp::random_kernel(&layout, &mut rng);
        let pi = mdp::random_policy(&layout, &mut rng);
        let dagger: Vec<usize> =
            (0..layout.num_states()).map(|_| rng.gen_range(0..actions)).collect();
        let violation = check_mass_propagation(&layout, &kernel, &pi, &dagger)?;
        report.record(violation);
    }
    Ok(report)
}

/// Backward value recursion private to the oracles. Returns `(q, v)` tables
/// for `loss` under `policy` and `kernel`, written directly from the Bellman
/// sums so the lemma checks stay independent of `mdp::evaluate_value`.
fn oracle_values(
    layout: &Layout,
    kernel: &Kernel,
    policy: &Policy,
    loss: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut q = vec![0.0; layout.num_pairs()];
    let mut v = vec![0.0; layout.num_states()];
    for h in (0..layout.horizon()).rev() {
        for s in layout.states_in_layer(h) {
            let mut vs = 0.0;
            for a in 0..layout.num_actions() {
                let p = layout.pair(s, a);
                let mut qv = loss[p];
                if h + 1 < layout.horizon() {
                    let row = kernel.row(layout, s, a);
                    for (i, s2) in layout.states_in_layer(h + 1).enumerate() {
                        qv += row[i] * v[s2];
                    }
                }
                q[p] = qv;
                vs += policy.prob(layout, s, a) * qv;
            }
            v[s] = vs;
        }
    }
    (q, v)
}

/// Rebuilds the importance-weighted skipped-loss table straight from a
/// trajectory: threshold `C sigma t^{1/alpha} x^{1/alpha}` applied to the
/// observed loss at each visited pair, divided by that pair's occupancy.
/// This duplicates the estimator definition on purpose so the lemma checks
/// do not trust the learner's own bookkeeping.
fn rebuild_importance_table(
    layout: &Layout,
    params: &SkipParams,
    t_rel: usize,
    occupancy: &[f64],
    trajectory: &Trajectory,
) -> Vec<f64> {
    let inv_alpha = 1.0 / params.alpha;
    let mut est = vec![0.0; layout.num_pairs()];
    for step in &trajectory.steps {
        let p = layout.pair(step.state, step.action);
        let x = occupancy[p];
        let tau = params.c * params.sigma * (t_rel as f64).powf(inv_alpha) * x.powf(inv_alpha);
        if step.loss.abs() <= tau {
            est[p] = step.loss / x;
        }
    }
    est
}

/// Structural checks of the shifted loss on known-transition traces. For
/// every episode the importance table and the shifted table are recomputed
/// here from the trajectory and occupancy alone, then tested for
/// (1) the pointwise uniform bound `(1 + H S A (1 + A^{1 - 1/alpha})) C
/// sigma t^{1/alpha} x(s, a)^{1/alpha - 1}` at every pair the solver gives
/// positive mass, (2) agreement with the library's `shifted_loss` on the
/// same inputs, and (3) the per-state centering identity
/// `sum_a pi(a|s) shift(s, a) = 0` on the library's output. Returns the
/// three reports in that order.
pub fn check_shifted_bounds(
    layout: &Layout,
    kernel: &Kernel,
    params: &SkipParams,
    records: &[EpisodeRecord],
) -> Result<Vec<OracleReport>> {
    kernel.check(layout)?;
    let actions = layout.num_actions() as f64;
    let hsa = (layout.horizon() * layout.num_states() * layout.num_actions()) as f64;
    let coeff = 1.0 + hsa * (1.0 + actions.powf(1.0 - 1.0 / params.alpha));
    let mut uniform = OracleReport::new("shifted-uniform-bound", 1e-9);
    let mut agreement = OracleReport::new("shifted-recursion-agreement", 1e-10);
    let mut centering = OracleReport::new("shifted-centering", 1e-10);
    for record in records {
        let t = record.episode as f64;
        let x = record.occupancy.as_slice();
        let est =
            rebuild_importance_table(layout, params, record.episode, x, &record.trajectory);
        let (q, v) = oracle_values(layout, kernel, &record.policy, &est);
        let checked = crate::estimators::shifted_loss(layout, kernel, &record.policy, &est)?;
        for p in 0..layout.num_pairs() {
            let shift = q[p] - v[layout.pair_state(p)];
            agreement.record((checked[p] - shift).abs());
        }
        for s in 0..layout.num_states() {
            let mut acc = 0.0;
            for a in 0..layout.num_actions() {
                acc += record.policy.prob(layout, s, a) * checked[layout.pair(s, a)];
            }
            centering.record(acc.abs());
        }
        let scale = params.c * params.sigma * t.powf(1.0 / params.alpha);
        for p in 0..layout.num_pairs() {
            if x[p] <= 0.0 {
                continue;
            }
            let shift = q[p] - v[layout.pair_state(p)];
            let bound = coeff * scale * x[p].powf(1.0 / params.alpha - 1.0);
            uniform.record(shift.abs() - bound);
        }
    }
    Ok(vec![uniform, agreement, centering])
}

/// Monte Carlo check of the conditional second-moment bound
/// `E[(shift(s, a))^2] <= 2 H^2 (1 - pi(a|s)) C^{2 - alpha} sigma^2
/// t^{2/alpha - 1} x^{2/alpha - 2}` at one frozen history snapshot: the
/// occupancy and policy of `record` stay fixed while the episode randomness
/// (trajectory and losses) is redrawn `draws` times. Each pair's empirical
/// mean square gets a 3-sigma allowance from its own sample spread.
pub fn check_shifted_second_moment(
    layout: &Layout,
    kernel: &Kernel,
    env: &Environment,
    params: &SkipParams,
    record: &EpisodeRecord,
    draws: usize,
    seed: u64,
) -> Result<OracleReport> {
    if draws < 100 {
        return Err(Error::domain("second-moment check needs at least 100 draws"));
    }
    let t = record.episode;
    let means = env.means_at(layout, t);
    let x = record.occupancy.as_slice();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum_sq = vec![0.0; layout.num_pairs()];
    let mut sum_quad = vec![0.0; layout.num_pairs()];
    for _ in 0..draws {
        let trajectory = mdp::sample_trajectory(
            layout,
            kernel,
            &record.policy,
            |s, a, rng| env.draw_with_means(layout.pair(s, a), &means, rng),
            &mut rng,
        )?;
        let est = rebuild_importance_table(layout, params, t, x, &trajectory);
        let (q, v) = oracle_values(layout, kernel, &record.policy, &est);
        for p in 0..layout.num_pairs() {
            let shift = q[p] - v[layout.pair_state(p)];
            let sq = shift * shift;
            sum_sq[p] += sq;
            sum_quad[p] += sq * sq;
        }
    }
    let mut report = OracleReport::new("shifted-second-moment", 1e-9);
    let n = draws as f64;
    let h2 = (layout.horizon() * layout.horizon()) as f64;
    let scale = params.c.powf(2.0 - params.alpha)
        * params.sigma
        * params.sigma
        * (t as f64).powf(2.0 / params.alpha - 1.0);
    for p in 0..layout.num_pairs() {
        if x[p] <= 0.0 {
            continue;
        }
        let pi = record.policy.prob(layout, layout.pair_state(p), layout.pair_action(p));
        let mean_sq = sum_sq[p] / n;
        let var = (sum_quad[p] / n - mean_sq * mean_sq).max(0.0);
        let allowance = 3.0 * (var / n).sqrt();
        let bound = 2.0 * h2 * (1.0 - pi) * scale * x[p].powf(2.0 / params.alpha - 2.0);
        report.record(mean_sq - bound - allowance);
    }
    Ok(report)
}

/// Pessimism check for the penalized loss: on every epoch whose confidence
/// box contains the true kernel elementwise, planning with the aggregate
/// width penalty must under-estimate the true value for each policy,
/// `V^{p_hat, pi}(s1; mean_loss - D agg) <= V^{P, pi}(s1; mean_loss)` with
/// `D = H sigma`. Losses enter values linearly, so both sides are exact
/// expectations over loss draws and the comparison needs only roundoff
/// tolerance. Epochs whose box misses the true kernel are skipped (the
/// bound is conditional on that good event).
pub fn check_pessimism(
    layout: &Layout,
    kernel: &Kernel,
    mean_loss: &[f64],
    sigma: f64,
    epochs: &[EpochModel],
    policies: &[Policy],
) -> Result<OracleReport> {
    kernel.check(layout)?;
    if mean_loss.len() != layout.num_pairs() {
        return Err(Error::structure("mean-loss table does not match the layout"));
    }
    for &m in mean_loss {
        if m.abs() > sigma {
            return Err(Error::domain(format!(
                "mean loss {m} exceeds the moment scale {sigma}; the penalty cannot cover it"
            )));
        }
    }
    let d = layout.horizon() as f64 * sigma;
    let mut report = OracleReport::new("pessimistic-value", 1e-10);
    for epoch in epochs {
        let inside = kernel
            .as_slice()
            .iter()
            .zip(epoch.p_hat.as_slice())
            .zip(&epoch.widths)
            .all(|((&p, &p_hat), &w)| (p - p_hat).abs() <= w + 1e-12);
        if !inside {
            continue;
        }
        let penalized: Vec<f64> = mean_loss
            .iter()
            .zip(&epoch.agg_width)
            .map(|(&l, &b)| l - d * b)
            .collect();
        for policy in policies {
            let (_, v_pess) = oracle_values(layout, &epoch.p_hat, policy, &penalized);
            let (_, v_true) = oracle_values(layout, kernel, policy, mean_loss);
            report.record(v_pess[0] - v_true[0]);
        }
    }
    Ok(report)
}

/// Battery for the pessimism check: random instances, visit counters filled
/// by uniform-policy rollouts with epochs rebuilt on the doubling schedule,
/// and a mix of random and deterministic policies compared on every
/// good-event epoch. Only transitions matter here, so losses are not drawn;
/// the mean-loss tables are sampled directly.
pub fn pessimism_suite(instances: usize, episodes: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: [&[usize]; 3] = [&[1, 2], &[1, 3], &[1, 2, 2]];
    let mut combined = OracleReport::new("pessimistic-value", 1e-10);
    let mut good_epochs = 0usize;
    for i in 0..instances {
        let layout = Layout::new(shapes[i % shapes.len()], 2)?;
        let kernel = mdp::random_kernel(&layout, &mut rng);
        let sigma = 1.0;
        let mean_loss: Vec<f64> =
            (0..layout.num_pairs()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let log_iota = crate::confidence::log_iota(
            layout.horizon(),
            layout.num_states(),
            layout.num_actions(),
            episodes,
            1e-4,
        )?;
        let mut counters = Counters::new(&layout);
        let mut epochs = vec![EpochModel::initial(&layout, log_iota)];
        let uniform = Policy::uniform(&layout);
        for t in 1..=episodes {
            let trajectory =
                mdp::sample_trajectory(&layout, &kernel, &uniform, |_, _, _| 0.0, &mut rng)?;
            counters.update(&layout, &trajectory);
            if counters.epoch_trigger(&layout) {
                counters.snapshot();
                let index = epochs.len() + 1;
                epochs.push(EpochModel::from_counters(
                    &layout, &counters, index, t + 1, log_iota,
                )?);
            }
        }
        let mut policies = vec![uniform, mdp::random_policy(&layout, &mut rng)];
        for a in 0..layout.num_actions() {
            policies.push(Policy::deterministic(&layout, &vec![a; layout.num_states()])?);
        }
        let report =
            check_pessimism(&layout, &kernel, &mean_loss, sigma, &epochs, &policies)?;
        good_epochs += report.samples;
        combined.absorb(&report);
    }
    if good_epochs == 0 {
        return Err(Error::domain(
            "no epoch kept the true kernel inside its confidence box; widths are suspect",
        ));
    }
    Ok(combined)
}

/// One known-transition learner run against a stochastic heavy-tailed
/// environment, returning everything the shifted-loss checks need. Means
/// are drawn in [-0.4, 0.4] with symmetric Pareto noise (tail 2.6, scale
/// 0.1), and the moment scale is certified from the models rather than
/// assumed.
pub fn stochastic_run(
    layout: &Layout,
    t_max: usize,
    alpha: f64,
    seed: u64,
) -> Result<(Kernel, Environment, SkipParams, Vec<EpisodeRecord>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = mdp::random_kernel(&layout, &mut rng);
    let models: Vec<LossModel> = (0..layout.num_pairs())
        .map(|_| LossModel::Shifted {
            offset: rng.gen_range(-0.4..0.4),
            base: Box::new(LossModel::SymmetricPareto { tail: 2.6, scale: 0.1 }),
        })
        .collect();
    let env = Environment::new(layout, models, Regime::Stochastic)?;
    let sigma = env.certified_sigma(layout, alpha)?;
    let params = SkipParams::for_instance(
        layout.horizon(),
        layout.num_states(),
        layout.num_actions(),
        alpha,
        sigma,
    )?;
    let mut state = OmState::new(layout, &kernel, params.clone(), SolverSettings::default())?;
    let mut sim = SimulatedEnv::new(layout, &kernel, &env, rng);
    let mut records = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        records.push(state.step(&mut sim)?);
    }
    Ok((kernel, env, params, records))
}

/// The full oracle battery behind the `oracle-suite` command: exact mass
/// propagation, the shifted-loss structure over 200 known-transition
/// replicas, the frozen-snapshot second-moment bound, and the pessimism
/// battery. Report order is stable so the rendered summary diffs cleanly.
pub fn standard_suite(seed: u64) -> Result<Vec<OracleReport>> {
    standard_suite_with(seed, 200)
}

/// [`standard_suite`] with a custom replica count for the shifted-loss
/// runs; smaller counts make quick smoke passes, 200 is the full battery.
pub fn standard_suite_with(seed: u64, shifted_replicas: usize) -> Result<Vec<OracleReport>> {
    if shifted_replicas == 0 {
        return Err(Error::domain("the shifted-loss checks need at least one replica"));
    }
    let mut reports = Vec::new();
    reports.push(mass_propagation_suite(64, seed)?);

    let layout = Layout::new(&[1, 2], 2)?;
    let alpha = 1.8;
    let replicas = shifted_replicas;
    let t_max = 512;
    let mut uniform = OracleReport::new("shifted-uniform-bound", 1e-9);
    let mut agreement = OracleReport::new("shifted-recursion-agreement", 1e-10);
    let mut centering = OracleReport::new("shifted-centering", 1e-10);
    let mut snapshot = None;
    for r in 0..replicas {
        let (kernel, env, params, mut records) =
            stochastic_run(&layout, t_max, alpha, seed.wrapping_add(1 + r as u64))?;
        let parts = check_shifted_bounds(&layout, &kernel, &params, &records)?;
        uniform.absorb(&parts[0]);
        agreement.absorb(&parts[1]);
        centering.absorb(&parts[2]);
        if r == 0 {
            snapshot = Some((kernel, env, params, records.swap_remove(15)));
        }
    }
    reports.push(uniform);
    reports.push(agreement);
    reports.push(centering);

    let (kernel, env, params, record) = snapshot.expect("at least one replica ran");
    reports.push(check_shifted_second_moment(
        &layout,
        &kernel,
        &env,
        &params,
        &record,
        100_000,
        seed ^ 0x5eed_0002,
    )?);

    reports.push(pessimism_suite(24, 256, seed ^ 0x5eed_0003)?);
    Ok(reports)
}
