//! Loss environments: heavy-tailed per-pair distributions with certified
//! moments, mean schedules (stochastic, adversarial, corrupted), the
//! benchmark policy, and the gap machinery used to classify regret shapes.
//!
//! A loss model declares its family, so its absolute moment
//! `E|l|^alpha` has a closed form (or a conservative closed-form bound for
//! mean-shifted families) and the moment assumption `E|l|^alpha <= sigma^alpha`
//! is certified analytically instead of sampled. Mean schedules are pure
//! functions of the episode index, which keeps replicas replayable and
//! makes exact expected-loss bookkeeping possible: the harness reads the
//! exact mean table of each episode rather than averaging draws.

use crate::error::{Error, Result};
use crate::mdp::{evaluate_value, Kernel, Layout, OccupancyMeasure, Policy, ValueTables};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A single state-action pair's loss distribution. Draws may be negative
/// and unbounded; every family has a closed-form mean and a closed-form
/// (or conservatively bounded) absolute `alpha`-moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LossModel {
    /// Deterministic loss.
    PointMass { value: f64 },
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Magnitude is Pareto with tail index `tail` and scale `scale`
    /// (`P(|l| > x) = (scale / x)^tail` for `x >= scale`), sign is a fair
    /// coin. Mean 0; the absolute moment is finite only below the tail
    /// index.
    SymmetricPareto { tail: f64, scale: f64 },
    /// `offset` plus a draw from `base`.
    Shifted { offset: f64, base: Box<LossModel> },
}

impl LossModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossModel::PointMass { value } => {
                if !value.is_finite() {
                    return Err(Error::config("point mass value must be finite"));
                }
            }
            LossModel::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::config(format!("bad uniform support [{lo}, {hi}]")));
                }
            }
            LossModel::SymmetricPareto { tail, scale } => {
                if !(*tail > 1.0 && tail.is_finite()) {
                    return Err(Error::config(format!(
                        "pareto tail must exceed 1 for an integrable mean, got {tail}"
                    )));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::config(format!("pareto scale must be positive, got {scale}")));
                }
            }
            LossModel::Shifted { offset, base } => {
                if !offset.is_finite() {
                    return Err(Error::config("shift offset must be finite"));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Exact mean of one draw.
    pub fn mean(&self) -> f64 {
        match self {
            LossModel::PointMass { value } => *value,
            LossModel::Uniform { lo, hi } => 0.5 * (lo + hi),
            LossModel::SymmetricPareto { .. } => 0.0,
            LossModel::Shifted { offset, base } => offset + base.mean(),
        }
    }

    /// One draw. Two RNG values are consumed by the Pareto family (sign
    /// and magnitude), one by the uniform, none by a point mass.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            LossModel::PointMass { value } => *value,
            LossModel::Uniform { lo, hi } => {
                if lo == hi {
                    *lo
                } else {
                    rng.gen_range(*lo..*hi)
                }
            }
            LossModel::SymmetricPareto { tail, scale } => {
                let u: f64 = rng.gen();
                // 1 - u lies in (0, 1], so the magnitude is finite.
                let magnitude = scale * (1.0 - u).powf(-1.0 / tail);
                let sign = if rng.gen::<f64>() < 0.5 { -1.0 } else { 1.0 };
                sign * magnitude
            }
            LossModel::Shifted { offset, base } => offset + base.sample(rng),
        }
    }

    /// Closed-form `E|l|^alpha`, or a conservative upper bound for the
    /// shifted family (power-mean inequality); infinite for a Pareto tail
    /// at or below `alpha`.
    pub fn alpha_moment(&self, alpha: f64) -> f64 {
        debug_assert!(alpha > 0.0);
        match self {
            LossModel::PointMass { value } => value.abs().powf(alpha),
            LossModel::Uniform { lo, hi } => {
                if lo == hi {
                    return lo.abs().powf(alpha);
                }
                // Antiderivative of |x|^alpha: sign(x) |x|^(alpha+1) / (alpha+1).
                let anti = |x: f64| x.signum() * x.abs().powf(alpha + 1.0) / (alpha + 1.0);
                (anti(*hi) - anti(*lo)) / (hi - lo)
            }
            LossModel::SymmetricPareto { tail, scale } => {
                if *tail <= alpha {
                    f64::INFINITY
                } else {
                    tail / (tail - alpha) * scale.powf(alpha)
                }
            }
            LossModel::Shifted { offset, base } => {
                shifted_moment_bound(offset.abs(), base.alpha_moment(alpha), alpha)
            }
        }
    }
}

/// Power-mean bound `E|mu + X|^alpha <= 2^(alpha - 1) (|mu|^alpha + E|X|^alpha)`.
pub fn shifted_moment_bound(offset_abs: f64, base_moment: f64, alpha: f64) -> f64 {
    if offset_abs == 0.0 {
        return base_moment;
    }
    2f64.powf(alpha - 1.0) * (offset_abs.powf(alpha) + base_moment)
}

/// Draw one loss from a model (wrapper matching the sampling entry point).
pub fn sample_loss<R: Rng>(model: &LossModel, rng: &mut R) -> f64 {
    model.sample(rng)
}

/// Analytic moment certificate: `(bound, ok)` where `bound` is the
/// closed-form `E|l|^alpha` (conservative for shifted families) and `ok`
/// says whether it stays within `sigma^alpha`.
pub fn alpha_moment_certificate(model: &LossModel, sigma: f64, alpha: f64) -> Result<(f64, bool)> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::domain(format!("alpha {alpha} outside (1, 2]")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
    }
    model.validate()?;
    let bound = model.alpha_moment(alpha);
    Ok((bound, bound <= sigma.powf(alpha)))
}

/// Mean schedule over episodes. Every schedule is a pure function of the
/// episode index (and the base means), so runs replay exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// Means never move.
    Stochastic,
    /// Every `period` episodes, the two lowest-mean actions of each state
    /// swap their means: episodes `[period, 2 period)` are swapped,
    /// `[2 period, 3 period)` are back to base, and so on.
    AdversarialFlip { period: usize },
    /// Sinusoidal drift `amplitude * sin(2 pi t / period)`, applied with
    /// opposite signs to even- and odd-indexed actions so the argmin
    /// genuinely moves when the amplitude beats the gap.
    AdversarialSinusoid { amplitude: f64, period: usize },
    /// Stochastic means, except the first `episodes` episodes add
    /// `magnitude` to each state's best base action (making it look
    /// worse). The injected mass `magnitude * episodes` must fit in
    /// `budget`.
    Corrupted { magnitude: f64, episodes: usize, budget: f64 },
}

impl Regime {
    /// The serialized tag, handy for labels and summary rows.
    pub fn kind_str(&self) -> &'static str {
        match self {
            Regime::Stochastic => "stochastic",
            Regime::AdversarialFlip { .. } => "adversarial_flip",
            Regime::AdversarialSinusoid { .. } => "adversarial_sinusoid",
            Regime::Corrupted { .. } => "corrupted",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Regime::Stochastic => Ok(()),
            Regime::AdversarialFlip { period } | Regime::AdversarialSinusoid { period, .. }
                if *period == 0 =>
            {
                Err(Error::config("schedule period must be at least 1"))
            }
            Regime::AdversarialFlip { .. } => Ok(()),
            Regime::AdversarialSinusoid { amplitude, .. } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::config(format!(
                        "drift amplitude must be nonnegative, got {amplitude}"
                    )));
                }
                Ok(())
            }
            Regime::Corrupted { magnitude, episodes, budget } => {
                if !(magnitude.is_finite() && *magnitude >= 0.0) {
                    return Err(Error::config(format!(
                        "corruption magnitude must be nonnegative, got {magnitude}"
                    )));
                }
                if !(budget.is_finite() && *budget >= 0.0) {
                    return Err(Error::config(format!(
                        "corruption budget must be nonnegative, got {budget}"
                    )));
                }
                let mass = magnitude * *episodes as f64;
                if mass > budget * (1.0 + 1e-12) {
                    return Err(Error::config(format!(
                        "corruption schedule injects {mass}, budget is {budget}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// A full loss environment: one model per state-action pair plus the mean
/// schedule moving their means.
#[derive(Debug, Clone)]
pub struct Environment {
    models: Vec<LossModel>,
    regime: Regime,
    base_means: Vec<f64>,
    /// Per state: the two lowest-mean actions (by the base means), used by
    /// the flip schedule. Meaningless with a single action.
    best_two: Vec<(usize, usize)>,
}

impl Environment {
    pub fn new(layout: &Layout, models: Vec<LossModel>, regime: Regime) -> Result<Environment> {
        if models.len() != layout.num_pairs() {
            return Err(Error::structure(format!(
                "{} loss models for {} state-action pairs",
                models.len(),
                layout.num_pairs()
            )));
        }
        for m in &models {
            m.validate()?;
        }
        regime.validate()?;
        let base_means: Vec<f64> = models.iter().map(LossModel::mean).collect();
        let num_a = layout.num_actions();
        let mut best_two = Vec::with_capacity(layout.num_states());
        for s in 0..layout.num_states() {
            let mut order: Vec<usize> = (0..num_a).collect();
            order.sort_by(|&i, &j| {
                let (mi, mj) = (base_means[layout.pair(s, i)], base_means[layout.pair(s, j)]);
                mi.partial_cmp(&mj).unwrap().then(i.cmp(&j))
            });
            best_two.push((order[0], *order.get(1).unwrap_or(&order[0])));
        }
        Ok(Environment { models, regime, base_means, best_two })
    }

    pub fn regime(&self) -> &Regime {
        &self.regime
    }

    pub fn models(&self) -> &[LossModel] {
        &self.models
    }

    pub fn base_means(&self) -> &[f64] {
        &self.base_means
    }

    /// Writes episode `t`'s exact mean table into `out`.
    pub fn means_into(&self, layout: &Layout, t: usize, out: &mut [f64]) {
        debug_assert!(t >= 1);
        debug_assert_eq!(out.len(), self.base_means.len());
        out.copy_from_slice(&self.base_means);
        match self.regime {
            Regime::Stochastic => {}
            Regime::AdversarialFlip { period } => {
                if (t / period) % 2 == 1 && layout.num_actions() > 1 {
                    for s in 0..layout.num_states() {
                        let (a1, a2) = self.best_two[s];
                        out.swap(layout.pair(s, a1), layout.pair(s, a2));
                    }
                }
            }
            Regime::AdversarialSinusoid { amplitude, period } => {
                let drift =
                    amplitude * (2.0 * std::f64::consts::PI * t as f64 / period as f64).sin();
                for s in 0..layout.num_states() {
                    for a in 0..layout.num_actions() {
                        let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
                        out[layout.pair(s, a)] += sign * drift;
                    }
                }
            }
            Regime::Corrupted { magnitude, episodes, .. } => {
                if t <= episodes {
                    for s in 0..layout.num_states() {
                        out[layout.pair(s, self.best_two[s].0)] += magnitude;
                    }
                }
            }
        }
    }

    /// Episode `t`'s exact mean table.
    pub fn means_at(&self, layout: &Layout, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.base_means.len()];
        self.means_into(layout, t, &mut out);
        out
    }

    /// The time-averaged mean table over episodes `1..=t_max`; the
    /// benchmark policy of a run is the optimal policy for this table.
    pub fn time_averaged_means(&self, layout: &Layout, t_max: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.base_means.len()];
        let mut scratch = vec![0.0; self.base_means.len()];
        for t in 1..=t_max {
            self.means_into(layout, t, &mut scratch);
            for (a, v) in acc.iter_mut().zip(&scratch) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= t_max as f64;
        }
        acc
    }

    /// One observed loss at `(s, a)` in episode `t`: the scheduled mean
    /// shift plus a draw from the pair's model.
    pub fn draw<R: Rng>(&self, layout: &Layout, t: usize, s: usize, a: usize, rng: &mut R) -> f64 {
        let means = self.means_at(layout, t);
        self.draw_with_means(layout.pair(s, a), &means, rng)
    }

    /// Hot-path draw: the caller already holds episode `t`'s mean table.
    pub fn draw_with_means<R: Rng>(&self, pair: usize, means: &[f64], rng: &mut R) -> f64 {
        self.models[pair].sample(rng) + (means[pair] - self.base_means[pair])
    }

    /// Largest absolute mean shift the schedule ever applies to each pair.
    pub fn max_abs_offsets(&self, layout: &Layout) -> Vec<f64> {
        let mut out = vec![0.0; self.base_means.len()];
        match self.regime {
            Regime::Stochastic => {}
            Regime::AdversarialFlip { .. } => {
                if layout.num_actions() > 1 {
                    for s in 0..layout.num_states() {
                        let (a1, a2) = self.best_two[s];
                        let gap = (self.base_means[layout.pair(s, a2)]
                            - self.base_means[layout.pair(s, a1)])
                        .abs();
                        out[layout.pair(s, a1)] = gap;
                        out[layout.pair(s, a2)] = gap;
                    }
                }
            }
            Regime::AdversarialSinusoid { amplitude, .. } => {
                out.fill(amplitude);
            }
            Regime::Corrupted { magnitude, episodes, .. } => {
                if episodes > 0 {
                    for s in 0..layout.num_states() {
                        out[layout.pair(s, self.best_two[s].0)] = magnitude;
                    }
                }
            }
        }
        out
    }

    /// Certifies `E|l|^alpha <= sigma^alpha` for every pair across the
    /// whole schedule: the pair's model moment combined with the largest
    /// scheduled mean shift through the power-mean bound. Returns the
    /// worst-pair bound; `ok` means every pair is within `sigma^alpha`.
    pub fn certify(&self, layout: &Layout, sigma: f64, alpha: f64) -> Result<(f64, bool)> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::domain(format!("alpha {alpha} outside (1, 2]")));
        }
        let offsets = self.max_abs_offsets(layout);
        let mut worst: f64 = 0.0;
        for (model, off) in self.models.iter().zip(&offsets) {
            let bound = shifted_moment_bound(*off, model.alpha_moment(alpha), alpha);
            worst = worst.max(bound);
        }
        Ok((worst, worst <= sigma.powf(alpha)))
    }

    /// Smallest sigma the certificate accepts for this environment.
    pub fn certified_sigma(&self, layout: &Layout, alpha: f64) -> Result<f64> {
        let (worst, _) = self.certify(layout, 1.0, alpha)?;
        if !worst.is_finite() {
            return Err(Error::domain(
                "environment has an infinite alpha-moment at this alpha",
            ));
        }
        Ok(worst.powf(1.0 / alpha))
    }
}

/// Heavy-tailed loss models for every pair, deterministic in the RNG:
/// means drawn uniformly from [-0.4, 0.4] over symmetric Pareto noise with
/// tail 2.6 and scale 0.1, so any alpha up to 2 has a finite certified
/// moment. This is the recipe behind generated instances.
pub fn random_loss_models<R: Rng>(layout: &Layout, rng: &mut R) -> Vec<LossModel> {
    (0..layout.num_pairs())
        .map(|_| LossModel::Shifted {
            offset: rng.gen_range(-0.4..0.4),
            base: Box::new(LossModel::SymmetricPareto { tail: 2.6, scale: 0.1 }),
        })
        .collect()
}

/// Optimal deterministic policy and value tables for a mean table, by
/// backward induction; action ties break to the lowest index.
pub fn optimal_policy(
    layout: &Layout,
    kernel: &Kernel,
    means: &[f64],
) -> Result<(Policy, ValueTables)> {
    if means.len() != layout.num_pairs() {
        return Err(Error::structure("mean table does not match the layout"));
    }
    let num_a = layout.num_actions();
    let mut actions = vec![0usize; layout.num_states()];
    let mut v = vec![0.0; layout.num_states()];
    let mut q = vec![0.0; layout.num_pairs()];
    for h in (0..layout.horizon()).rev() {
        let next = layout.states_in_layer((h + 1).min(layout.horizon() - 1));
        for s in layout.states_in_layer(h) {
            let mut best = f64::INFINITY;
            let mut best_a = 0usize;
            for a in 0..num_a {
                let p = layout.pair(s, a);
                let mut value = means[p];
                if h + 1 < layout.horizon() {
                    let row = kernel.row(layout, s, a);
                    for (j, s2) in next.clone().enumerate() {
                        value += row[j] * v[s2];
                    }
                }
                q[p] = value;
                if value < best {
                    best = value;
                    best_a = a;
                }
            }
            v[s] = best;
            actions[s] = best_a;
        }
    }
    let policy = Policy::deterministic(layout, &actions)?;
    Ok((policy, ValueTables { v, q }))
}

/// The benchmark: the optimal deterministic policy for the mean table.
pub fn benchmark_policy(layout: &Layout, kernel: &Kernel, means: &[f64]) -> Result<Policy> {
    Ok(optimal_policy(layout, kernel, means)?.0)
}

/// Suboptimality gaps and the derived regret-shape constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapTable {
    /// `delta(s, a) = q*(s, a) - v*(s)`; zero on the benchmark action.
    pub delta: Vec<f64>,
    /// Smallest gap over suboptimal pairs; infinite if none exist.
    pub delta_min: f64,
    /// `sum over suboptimal (s, a) of delta^(-1)`.
    pub omega_two: f64,
    /// `sum over suboptimal (s, a) of delta^(-1 / (alpha - 1))`.
    pub omega_alpha: f64,
    /// True when some suboptimal pair has a zero gap, making the omega
    /// sums infinite.
    pub degenerate: bool,
}

/// Gap table under a fixed mean table: gaps from the optimal value
/// recursion, omega sums over the pairs off the benchmark action.
pub fn gap_table(layout: &Layout, kernel: &Kernel, means: &[f64], alpha: f64) -> Result<GapTable> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::domain(format!("alpha {alpha} outside (1, 2]")));
    }
    let (policy, tables) = optimal_policy(layout, kernel, means)?;
    let benchmark = policy
        .as_deterministic(layout)
        .expect("optimal policy is deterministic by construction");
    let mut delta = vec![0.0; layout.num_pairs()];
    let mut delta_min = f64::INFINITY;
    let mut omega_two = 0.0;
    let mut omega_alpha = 0.0;
    let mut degenerate = false;
    for s in 0..layout.num_states() {
        for a in 0..layout.num_actions() {
            let p = layout.pair(s, a);
            // Clamp tiny negative roundoff: v is the min over the q row.
            let gap = (tables.q[p] - tables.v[s]).max(0.0);
            delta[p] = gap;
            if a == benchmark[s] {
                debug_assert!(gap <= 1e-12);
                delta[p] = 0.0;
                continue;
            }
            if gap == 0.0 {
                degenerate = true;
            } else {
                delta_min = delta_min.min(gap);
                omega_two += gap.powf(-1.0);
                omega_alpha += gap.powf(-1.0 / (alpha - 1.0));
            }
        }
    }
    if degenerate {
        omega_two = f64::INFINITY;
        omega_alpha = f64::INFINITY;
        delta_min = 0.0;
    }
    if layout.num_actions() == 1 {
        // No suboptimal pairs at all: empty sums, infinite minimum gap.
        delta_min = f64::INFINITY;
    }
    Ok(GapTable { delta, delta_min, omega_two, omega_alpha, degenerate })
}

/// The gap-weighted visitation mass `sum over episodes and pairs of
/// occupancy * gap`: the lower term of the self-bounding inequality the
/// stochastic regime satisfies with equality.
pub fn self_bounding_lower_term(gap: &GapTable, occupancies: &[OccupancyMeasure]) -> f64 {
    occupancies
        .iter()
        .map(|occ| crate::mdp::inner(occ.as_slice(), &gap.delta))
        .sum()
}

/// Exact expected loss gap of `policy` against the benchmark for one mean
/// table (used by the harness for exact bookkeeping).
pub fn exact_regret_step(
    layout: &Layout,
    kernel: &Kernel,
    policy: &Policy,
    benchmark: &Policy,
    means: &[f64],
) -> Result<f64> {
    let v_pi = evaluate_value(layout, kernel, policy, means)?.at_start();
    let v_ref = evaluate_value(layout, kernel, benchmark, means)?.at_start();
    Ok(v_pi - v_ref)
}
