//! The two episode-loop learners plus a uniform-policy baseline.
//!
//! Both learners run follow-the-regularized-leader over an occupancy
//! polytope with the fractional-power regularizer and feed it skipping
//! estimators built from bandit feedback:
//!
//! * [`OmState`]: transitions are known, so the polytope is built on the
//!   true kernel, the cumulative estimator sum spans the entire run, and
//!   the clock in thresholds and bonuses is the global episode index.
//! * [`UobState`]: transitions are learned. Planning happens on the
//!   current epoch's empirical kernel, importance weights use upper
//!   occupancy bounds instead of the solved occupancy, a width penalty
//!   keeps estimates pessimistic, and both the estimator sum and the
//!   clock reset when a new epoch starts.
//!
//! A learner only ever sees `(state, action, loss)` triples from its own
//! rollouts; regimes, true means, and (for [`UobState`]) the true kernel
//! stay hidden behind the [`EpisodeInterface`]. Every step returns an
//! [`EpisodeRecord`] with the solved occupancy, the derived policy, the
//! trajectory, the estimator table, and invariant diagnostics, so the
//! harness and the oracle suite can audit runs without re-deriving
//! learner internals.

use crate::confidence::{comp_uob, log_iota, Counters, EpochModel};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::estimators::{
    shifted_loss, skip_bonus, skip_threshold, skipped_loss, stability_gate_rhs,
    EstimatorKind, EstimatorVector, SkipParams,
};
use crate::mdp::{
    occupancy_from_policy, policy_from_occupancy, sample_trajectory, Kernel, Layout,
    OccupancyMeasure, Policy, Trajectory,
};
use crate::polytope::{
    ftrl_solve, PolytopeSpec, SolveReport, SolverSettings, TsallisRegularizer,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Selects which learner a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    HtFtrlOm,
    HtFtrlUob,
    UniformBaseline,
}

impl LearnerKind {
    /// The serialized tag, handy for labels and summary rows.
    pub fn as_str(&self) -> &'static str {
        match self {
            LearnerKind::HtFtrlOm => "ht_ftrl_om",
            LearnerKind::HtFtrlUob => "ht_ftrl_uob",
            LearnerKind::UniformBaseline => "uniform_baseline",
        }
    }
}

/// Inverse-learning-rate schedule for known transitions:
/// `eta_t = beta / (sigma * t^(1/alpha))`.
pub fn om_learning_rate(t: usize, p: &SkipParams) -> f64 {
    debug_assert!(t >= 1);
    p.beta / (p.sigma * (t as f64).powf(1.0 / p.alpha))
}

/// Epoch-clock learning rate for unknown transitions:
/// `eta_t = (sigma * (t - t_i + 1)^(1/alpha))^-1`, multiplied by `beta`
/// when `use_beta` is set (the default run configuration; the bare form
/// exists for ablation).
pub fn uob_learning_rate(t: usize, t_i: usize, p: &SkipParams, use_beta: bool) -> f64 {
    debug_assert!(t >= t_i && t_i >= 1);
    let base = 1.0 / (p.sigma * ((t - t_i + 1) as f64).powf(1.0 / p.alpha));
    if use_beta {
        base * p.beta
    } else {
        base
    }
}

/// Run-level constants for the unknown-transition learner: the value
/// scale `D = H * sigma` and the confidence level `delta = T^-3`.
pub fn theorem_params(h: usize, sigma: f64, t_max: usize) -> (f64, f64) {
    (h as f64 * sigma, (t_max as f64).powi(-3))
}

/// What a learner is allowed to do with the world: roll out one episode
/// under a policy and observe the visited triples. Implementations own
/// the randomness and the (possibly adversarial) loss schedule.
pub trait EpisodeInterface {
    fn rollout(&mut self, t: usize, policy: &Policy) -> Result<Trajectory>;
}

/// Standard simulation backend: true kernel plus a loss environment.
pub struct SimulatedEnv<'a, R: Rng> {
    layout: &'a Layout,
    kernel: &'a Kernel,
    env: &'a Environment,
    rng: R,
    means_buf: Vec<f64>,
}

impl<'a, R: Rng> SimulatedEnv<'a, R> {
    pub fn new(layout: &'a Layout, kernel: &'a Kernel, env: &'a Environment, rng: R) -> Self {
        let means_buf = vec![0.0; layout.num_pairs()];
        SimulatedEnv { layout, kernel, env, rng, means_buf }
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

impl<R: Rng> EpisodeInterface for SimulatedEnv<'_, R> {
    fn rollout(&mut self, t: usize, policy: &Policy) -> Result<Trajectory> {
        self.env.means_into(self.layout, t, &mut self.means_buf);
        let (layout, env, means) = (self.layout, self.env, &self.means_buf);
        sample_trajectory(
            layout,
            self.kernel,
            policy,
            |s, a, rng| env.draw_with_means(layout.pair(s, a), means, rng),
            &mut self.rng,
        )
    }
}

/// Epoch advance embedded in a record: the new 1-based index and the pair
/// whose counter doubling triggered it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochTransition {
    pub new_index: usize,
    pub state: usize,
    pub action: usize,
}

/// Per-episode invariant checks. All flags should stay true along a
/// healthy run; the harness aggregates them and the test suite asserts
/// them.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeDiagnostics {
    /// Worst visited-pair ratio of the scaled gradient increment to its
    /// stability budget (at most 1 when the canonical constants hold).
    pub stability_ratio: f64,
    pub stability_ok: bool,
    /// Solved occupancy is feasible in the planning polytope.
    pub feasible: bool,
    /// Upper bounds dominate the planning-kernel occupancy of the played
    /// policy (trivially true for known transitions).
    pub dominance_ok: bool,
    /// Per-state upper bounds clear the `1 / (S t)` visitation floor
    /// (trivially true for known transitions).
    pub floor_ok: bool,
}

/// Everything one learner step produces.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Epoch governing this episode's solve (always 1 for known
    /// transitions and the baseline).
    pub epoch: usize,
    pub occupancy: OccupancyMeasure,
    pub policy: Policy,
    pub trajectory: Trajectory,
    pub solve: SolveReport,
    /// The table added to the learner's FTRL sum this episode.
    pub estimator: EstimatorVector,
    /// Upper occupancy bounds (unknown transitions only).
    pub upper_bounds: Option<Vec<f64>>,
    /// Number of observed losses zeroed by the skipping threshold.
    pub skip_events: usize,
    pub epoch_transition: Option<EpochTransition>,
    pub diagnostics: EpisodeDiagnostics,
}

const DIAG_TOL: f64 = 1e-10;
/// Relative slack on the stability budget: the canonical constants meet
/// it with equality in the worst case, so roundoff needs a hair of room.
const GATE_SLACK: f64 = 1e-9;

/// Known-transition learner state: plans on the true kernel, accumulates
/// importance-weighted skipped losses minus bonuses over the whole run.
pub struct OmState<'a> {
    layout: &'a Layout,
    kernel: &'a Kernel,
    params: SkipParams,
    settings: SolverSettings,
    t: usize,
    loss_sum: Vec<f64>,
    warm: Option<OccupancyMeasure>,
}

impl<'a> OmState<'a> {
    pub fn new(
        layout: &'a Layout,
        kernel: &'a Kernel,
        params: SkipParams,
        settings: SolverSettings,
    ) -> Result<OmState<'a>> {
        kernel.check(layout)?;
        Ok(OmState {
            layout,
            kernel,
            params,
            settings,
            t: 1,
            loss_sum: vec![0.0; layout.num_pairs()],
            warm: None,
        })
    }

    pub fn episode(&self) -> usize {
        self.t
    }

    pub fn loss_sum(&self) -> &[f64] {
        &self.loss_sum
    }

    pub fn params(&self) -> &SkipParams {
        &self.params
    }

    /// One full episode: solve, play, estimate, accumulate.
    pub fn step<E: EpisodeInterface>(&mut self, env: &mut E) -> Result<EpisodeRecord> {
        let t = self.t;
        let layout = self.layout;
        let spec = PolytopeSpec::new(layout, self.kernel)?;
        let inv_eta = 1.0 / om_learning_rate(t, &self.params);
        let reg = TsallisRegularizer::new(self.params.alpha, inv_eta)?;
        let (x, solve) =
            ftrl_solve(&spec, &self.loss_sum, reg, self.settings, self.warm.as_ref())?;
        let policy = policy_from_occupancy(layout, x.as_slice())?;
        let trajectory = env.rollout(t, &policy)?;

        let reachable = spec.reachable_pairs();
        let mut importance = vec![0.0; layout.num_pairs()];
        let mut skip_events = 0usize;
        for step in &trajectory.steps {
            let p = layout.pair(step.state, step.action);
            debug_assert!(reachable[p], "true-kernel rollouts stay in the reachable set");
            let xv = x.as_slice()[p];
            let tau = skip_threshold(t, xv, &self.params);
            if step.loss.abs() > tau {
                skip_events += 1;
            }
            importance[p] = skipped_loss(step.loss, tau) / xv;
        }
        let mut bonus = vec![0.0; layout.num_pairs()];
        let mut estimate = importance.clone();
        for p in 0..layout.num_pairs() {
            if reachable[p] {
                bonus[p] = skip_bonus(t, x.as_slice()[p], &self.params)?;
                estimate[p] -= bonus[p];
            }
        }

        let diagnostics = gate_diagnostics(
            layout,
            self.kernel,
            &policy,
            &trajectory,
            &importance,
            &bonus,
            x.as_slice(),
            om_learning_rate(t, &self.params),
            &self.params,
            x.validate(layout, self.kernel, 1e-8).is_ok(),
            true,
            true,
        )?;

        for (sum, e) in self.loss_sum.iter_mut().zip(&estimate) {
            *sum += e;
        }
        self.warm = Some(x.clone());
        self.t += 1;
        Ok(EpisodeRecord {
            episode: t,
            epoch: 1,
            occupancy: x,
            policy,
            trajectory,
            solve,
            estimator: EstimatorVector { values: estimate, kind: EstimatorKind::KnownSkip },
            upper_bounds: None,
            skip_events,
            epoch_transition: None,
            diagnostics,
        })
    }
}

/// Unknown-transition learner state: plans on the current epoch's
/// empirical kernel, weights by upper occupancy bounds, penalizes by the
/// aggregate confidence width, and resets its FTRL sum at epoch starts.
pub struct UobState<'a> {
    layout: &'a Layout,
    params: SkipParams,
    settings: SolverSettings,
    d: f64,
    use_beta: bool,
    log_iota: f64,
    t: usize,
    epoch: EpochModel,
    counters: Counters,
    epoch_sum: Vec<f64>,
    warm: Option<OccupancyMeasure>,
    frozen: bool,
}

impl<'a> UobState<'a> {
    /// `d` and `delta` normally come from [`theorem_params`]; `t_max` only
    /// enters through the confidence scale `log(H S A t_max / delta)`.
    pub fn new(
        layout: &'a Layout,
        params: SkipParams,
        d: f64,
        delta: f64,
        t_max: usize,
        use_beta: bool,
        settings: SolverSettings,
    ) -> Result<UobState<'a>> {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::domain(format!("value scale must be nonnegative, got {d}")));
        }
        let li = log_iota(
            layout.horizon(),
            layout.num_states(),
            layout.num_actions(),
            t_max,
            delta,
        )?;
        Ok(UobState {
            layout,
            params,
            settings,
            d,
            use_beta,
            log_iota: li,
            t: 1,
            epoch: EpochModel::initial(layout, li),
            counters: Counters::new(layout),
            epoch_sum: vec![0.0; layout.num_pairs()],
            warm: None,
            frozen: false,
        })
    }

    pub fn episode(&self) -> usize {
        self.t
    }

    pub fn epoch(&self) -> &EpochModel {
        &self.epoch
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn epoch_sum(&self) -> &[f64] {
        &self.epoch_sum
    }

    pub fn params(&self) -> &SkipParams {
        &self.params
    }

    /// Pins the epoch model and disables epoch transitions. Diagnostic
    /// knob: with zero widths and the true kernel this reduces the
    /// learner to the known-transition estimator on the epoch clock.
    pub fn freeze_model(&mut self, epoch: EpochModel) {
        self.epoch = epoch;
        self.frozen = true;
        self.epoch_sum.fill(0.0);
        self.warm = None;
    }

    /// One full episode: solve on the empirical model, play, bound,
    /// estimate pessimistically, accumulate, maybe start a new epoch.
    pub fn step<E: EpisodeInterface>(&mut self, env: &mut E) -> Result<EpisodeRecord> {
        let t = self.t;
        let layout = self.layout;
        let epoch_index = self.epoch.index;
        let spec = PolytopeSpec::new(layout, &self.epoch.p_hat)?;
        let eta = uob_learning_rate(t, self.epoch.start_episode, &self.params, self.use_beta);
        let reg = TsallisRegularizer::new(self.params.alpha, 1.0 / eta)?;
        let (x, solve) =
            ftrl_solve(&spec, &self.epoch_sum, reg, self.settings, self.warm.as_ref())?;
        let policy = policy_from_occupancy(layout, x.as_slice())?;
        let trajectory = env.rollout(t, &policy)?;
        self.counters.update(layout, &trajectory);
        let u = comp_uob(layout, &self.epoch.p_hat, &self.epoch.widths, &policy)?;

        let t_rel = t - self.epoch.start_episode + 1;
        let reachable = spec.reachable_pairs();
        let mut importance = vec![0.0; layout.num_pairs()];
        let mut skip_events = 0usize;
        for step in &trajectory.steps {
            let p = layout.pair(step.state, step.action);
            // A pair the empirical model cannot reach has its occupancy
            // pinned at zero, so its estimate never influences the solve;
            // leave it at zero rather than divide by a zero threshold.
            if !reachable[p] {
                continue;
            }
            let xv = x.as_slice()[p];
            let tau = skip_threshold(t_rel, xv, &self.params);
            if step.loss.abs() > tau {
                skip_events += 1;
            }
            debug_assert!(u[p] > 0.0, "upper bound vanished at a reachable visited pair");
            importance[p] = skipped_loss(step.loss, tau) / u[p];
        }
        let mut bonus = vec![0.0; layout.num_pairs()];
        let mut estimate = vec![0.0; layout.num_pairs()];
        for p in 0..layout.num_pairs() {
            if reachable[p] {
                bonus[p] = skip_bonus(t_rel, x.as_slice()[p], &self.params)?;
                estimate[p] =
                    importance[p] - bonus[p] - self.d * self.epoch.agg_width[p];
            }
        }

        // Dominance: the bounds must cover the planning-kernel occupancy
        // of the played policy.
        let plan_occ = occupancy_from_policy(layout, &self.epoch.p_hat, &policy)?;
        let dominance_ok = u
            .iter()
            .zip(plan_occ.as_slice())
            .all(|(ub, occ)| *ub >= occ - DIAG_TOL);
        // Visitation floor on the per-state bound.
        let total_states = layout.num_states() as f64;
        let mut floor_ok = true;
        for s in 0..layout.num_states() {
            let state_bound: f64 =
                (0..layout.num_actions()).map(|a| u[layout.pair(s, a)]).sum();
            if state_bound < 1.0 / (total_states * t as f64) - DIAG_TOL {
                floor_ok = false;
            }
        }
        let diagnostics = gate_diagnostics(
            layout,
            &self.epoch.p_hat,
            &policy,
            &trajectory,
            &importance,
            &bonus,
            x.as_slice(),
            eta,
            &self.params,
            x.validate(layout, &self.epoch.p_hat, 1e-8).is_ok(),
            dominance_ok,
            floor_ok,
        )?;

        for (sum, e) in self.epoch_sum.iter_mut().zip(&estimate) {
            *sum += e;
        }
        self.warm = Some(x.clone());

        let mut epoch_transition = None;
        if !self.frozen && self.counters.epoch_trigger(layout) {
            let (ts, ta) = self
                .counters
                .triggering_pair(layout)
                .expect("trigger reported without a triggering pair");
            let new_index = epoch_index + 1;
            self.counters.snapshot();
            self.epoch = EpochModel::from_counters(
                layout,
                &self.counters,
                new_index,
                t + 1,
                self.log_iota,
            )?;
            // New polytope, new objective: both the per-epoch sum and the
            // warm start are meaningless across the boundary.
            self.epoch_sum.fill(0.0);
            self.warm = None;
            epoch_transition = Some(EpochTransition { new_index, state: ts, action: ta });
        }
        self.t += 1;
        Ok(EpisodeRecord {
            episode: t,
            epoch: epoch_index,
            occupancy: x,
            policy,
            trajectory,
            solve,
            estimator: EstimatorVector { values: estimate, kind: EstimatorKind::Pessimistic },
            upper_bounds: Some(u),
            skip_events,
            epoch_transition,
            diagnostics,
        })
    }
}

/// Stability-gate evaluation shared by both learners: the recentered
/// importance estimator minus the bonus, scaled by `alpha * eta`, must
/// stay inside the x-dependent budget at every visited pair.
#[allow(clippy::too_many_arguments)]
fn gate_diagnostics(
    layout: &Layout,
    planning_kernel: &Kernel,
    policy: &Policy,
    trajectory: &Trajectory,
    importance: &[f64],
    bonus: &[f64],
    x: &[f64],
    eta: f64,
    params: &SkipParams,
    feasible: bool,
    dominance_ok: bool,
    floor_ok: bool,
) -> Result<EpisodeDiagnostics> {
    let shift = shifted_loss(layout, planning_kernel, policy, importance)?;
    let mut ratio: f64 = 0.0;
    for step in &trajectory.steps {
        let p = layout.pair(step.state, step.action);
        if x[p] <= 0.0 {
            continue;
        }
        let lhs = params.alpha * eta * (shift[p] - bonus[p]).abs();
        let rhs = stability_gate_rhs(params.alpha, x[p]);
        ratio = ratio.max(lhs / rhs);
    }
    Ok(EpisodeDiagnostics {
        stability_ratio: ratio,
        stability_ok: ratio <= 1.0 + GATE_SLACK,
        feasible,
        dominance_ok,
        floor_ok,
    })
}

/// Feedback-blind reference: plays the uniform policy every episode.
pub struct UniformBaseline<'a> {
    layout: &'a Layout,
    kernel: &'a Kernel,
    t: usize,
}

impl<'a> UniformBaseline<'a> {
    pub fn new(layout: &'a Layout, kernel: &'a Kernel) -> Result<UniformBaseline<'a>> {
        kernel.check(layout)?;
        Ok(UniformBaseline { layout, kernel, t: 1 })
    }

    pub fn episode(&self) -> usize {
        self.t
    }

    pub fn step<E: EpisodeInterface>(&mut self, env: &mut E) -> Result<EpisodeRecord> {
        let t = self.t;
        let policy = Policy::uniform(self.layout);
        let occupancy = occupancy_from_policy(self.layout, self.kernel, &policy)?;
        let trajectory = env.rollout(t, &policy)?;
        self.t += 1;
        Ok(EpisodeRecord {
            episode: t,
            epoch: 1,
            occupancy,
            policy,
            trajectory,
            solve: SolveReport { objective: 0.0, gap: 0.0, iterations: 0, converged: true },
            estimator: EstimatorVector {
                values: vec![0.0; self.layout.num_pairs()],
                kind: EstimatorKind::KnownSkip,
            },
            upper_bounds: None,
            skip_events: 0,
            epoch_transition: None,
            diagnostics: EpisodeDiagnostics {
                stability_ratio: 0.0,
                stability_ok: true,
                feasible: true,
                dominance_ok: true,
                floor_ok: true,
            },
        })
    }
}
