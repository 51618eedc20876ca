//! The FTRL subproblem over an occupancy polytope:
//!
//! ```text
//! minimize  F(x) = <x, L> - (1/eta) * sum_(s,a) x(s,a)^(1/alpha)
//! over      x in Q(kernel)
//! ```
//!
//! The fractional-power regularizer (a Tsallis entropy with exponent
//! `1/alpha`) is strictly concave, so `F` is strictly convex and its
//! unconstrained-direction gradient diverges at the boundary, pulling the
//! minimizer into the interior for any finite `L`.
//!
//! The solver is Frank-Wolfe with exact line search. Its vertex oracle is
//! [`linear_min_oracle`]: vertices of the occupancy polytope are exactly the
//! occupancies of deterministic policies, and the best one under a linear
//! cost comes out of a backward dynamic program. Two safeguards keep the
//! iterates in the regularizer's domain:
//!
//! - initialization at the uniform-policy occupancy (or a caller-supplied
//!   warm start inside the polytope), and
//! - a per-entry floor: line-search steps are clamped so every reachable
//!   entry stays at or above `eps_floor / (layer_size * num_actions)`. When
//!   an initial entry already sits below that (a barely reachable state),
//!   the floor adapts down to the initial value instead of blocking.
//!
//! States that cannot be reached under the kernel carry occupancy zero and
//! are excluded from the floor and the line search.

use crate::error::{Error, Result};
use crate::mdp::{self, Kernel, Layout, OccupancyMeasure, Policy};
use serde::{Deserialize, Serialize};

/// Default interior floor scale; see the module docs.
pub const DEFAULT_EPS_FLOOR: f64 = 1e-8;

/// The feasible set of the FTRL subproblem: a layout, the kernel defining
/// the occupancy polytope (true or empirical), the interior floor scale, and
/// the reachability mask implied by the kernel.
#[derive(Debug, Clone)]
pub struct PolytopeSpec<'a> {
    layout: &'a Layout,
    kernel: &'a Kernel,
    eps_floor: f64,
    reachable: Vec<bool>,
}

impl<'a> PolytopeSpec<'a> {
    pub fn new(layout: &'a Layout, kernel: &'a Kernel) -> Result<PolytopeSpec<'a>> {
        PolytopeSpec::with_floor(layout, kernel, DEFAULT_EPS_FLOOR)
    }

    pub fn with_floor(
        layout: &'a Layout,
        kernel: &'a Kernel,
        eps_floor: f64,
    ) -> Result<PolytopeSpec<'a>> {
        let cap = 1.0 / (layout.max_layer_size() * layout.num_actions()) as f64;
        if !(eps_floor > 0.0 && eps_floor < cap) {
            return Err(Error::domain(format!(
                "eps_floor {eps_floor} outside (0, {cap})"
            )));
        }
        // Forward reachability under strictly positive transition mass.
        let mut reach_state = vec![false; layout.num_states()];
        reach_state[0] = true;
        for h in 0..layout.horizon().saturating_sub(1) {
            let base = layout.states_in_layer(h + 1).start;
            for s in layout.states_in_layer(h) {
                if !reach_state[s] {
                    continue;
                }
                for a in 0..layout.num_actions() {
                    for (j, &p) in kernel.row(layout, s, a).iter().enumerate() {
                        if p > 0.0 {
                            reach_state[base + j] = true;
                        }
                    }
                }
            }
        }
        let mut reachable = vec![false; layout.num_pairs()];
        for s in 0..layout.num_states() {
            if reach_state[s] {
                for a in 0..layout.num_actions() {
                    reachable[layout.pair(s, a)] = true;
                }
            }
        }
        Ok(PolytopeSpec { layout, kernel, eps_floor, reachable })
    }

    pub fn layout(&self) -> &Layout {
        self.layout
    }

    pub fn kernel(&self) -> &Kernel {
        self.kernel
    }

    pub fn eps_floor(&self) -> f64 {
        self.eps_floor
    }

    /// Pairs with positive reach probability under the kernel.
    pub fn reachable_pairs(&self) -> &[bool] {
        &self.reachable
    }
}

/// Regularizer parameters: the exponent base `alpha` in (1, 2] and the
/// inverse learning rate (the positive weight in front of the entropy term).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsallisRegularizer {
    alpha: f64,
    inv_eta: f64,
}

impl TsallisRegularizer {
    pub fn new(alpha: f64, inv_eta: f64) -> Result<TsallisRegularizer> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::domain(format!("alpha {alpha} outside (1, 2]")));
        }
        if !(inv_eta > 0.0 && inv_eta.is_finite()) {
            return Err(Error::domain(format!("inverse learning rate {inv_eta} must be positive")));
        }
        Ok(TsallisRegularizer { alpha, inv_eta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn inv_eta(&self) -> f64 {
        self.inv_eta
    }
}

/// Regularizer value `-(1/eta) * sum_i x_i^(1/alpha)`; negative entries are
/// outside the domain.
pub fn tsallis_value(x: &[f64], reg: TsallisRegularizer) -> Result<f64> {
    let e = 1.0 / reg.alpha;
    let mut sum = 0.0;
    for &v in x {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::domain(format!("occupancy entry {v} outside [0, 1]")));
        }
        sum += v.powf(e);
    }
    Ok(-reg.inv_eta * sum)
}

/// Solver outcome: final objective, Frank-Wolfe gap certificate, iteration
/// count, and whether the gap met the tolerance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveReport {
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solver knobs, exposed through the experiment configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-8, max_iter: 10_000 }
    }
}

/// Minimizes a linear cost over the occupancy polytope by backward dynamic
/// programming and returns the minimizing vertex (the occupancy of the best
/// deterministic policy) together with its objective. Ties between actions
/// break toward the lowest index, so vertices are reproducible.
pub fn linear_min_oracle(spec: &PolytopeSpec, cost: &[f64]) -> Result<(OccupancyMeasure, f64)> {
    let layout = spec.layout;
    if cost.len() != layout.num_pairs() {
        return Err(Error::structure("cost table does not match layout"));
    }
    let mut v = vec![0.0; layout.num_states()];
    let mut best_action = vec![0usize; layout.num_states()];
    for h in (0..layout.horizon()).rev() {
        let last = h + 1 == layout.horizon();
        for s in layout.states_in_layer(h) {
            let mut best = f64::INFINITY;
            let mut arg = 0usize;
            for a in 0..layout.num_actions() {
                let mut q = cost[layout.pair(s, a)];
                if !last {
                    let base = layout.states_in_layer(h + 1).start;
                    for (j, &p) in spec.kernel.row(layout, s, a).iter().enumerate() {
                        q += p * v[base + j];
                    }
                }
                if q < best {
                    best = q;
                    arg = a;
                }
            }
            v[s] = best;
            best_action[s] = arg;
        }
    }
    let policy = Policy::deterministic(layout, &best_action)?;
    let vertex = mdp::occupancy_from_policy(layout, spec.kernel, &policy)?;
    Ok((vertex, v[0]))
}

/// Solves the FTRL subproblem; see the module docs for the objective and the
/// method. `warm` must lie inside the same polytope (callers reuse the
/// previous episode's solution while the kernel is unchanged). On hitting
/// `max_iter` the best iterate so far is returned with `converged = false`.
pub fn ftrl_solve(
    spec: &PolytopeSpec,
    loss_sum: &[f64],
    reg: TsallisRegularizer,
    settings: SolverSettings,
    warm: Option<&OccupancyMeasure>,
) -> Result<(OccupancyMeasure, SolveReport)> {
    let layout = spec.layout;
    if loss_sum.len() != layout.num_pairs() {
        return Err(Error::structure("loss table does not match layout"));
    }
    if !(settings.tol > 0.0) {
        return Err(Error::domain("solver tolerance must be positive"));
    }
    let mut x = match warm {
        Some(w) => {
            if w.as_slice().len() != layout.num_pairs() {
                return Err(Error::structure("warm start does not match layout"));
            }
            w.clone()
        }
        None => mdp::occupancy_from_policy(layout, spec.kernel, &Policy::uniform(layout))?,
    };

    // Per-entry interior floor; adapts down where the start is already tiny.
    let mut floor = vec![0.0; layout.num_pairs()];
    for h in 0..layout.horizon() {
        let nominal = spec.eps_floor / (layout.layer_size(h) * layout.num_actions()) as f64;
        for p in layout.pairs_in_layer(h) {
            if spec.reachable[p] {
                floor[p] = nominal.min(x.as_slice()[p]);
            }
        }
    }

    let reach: Vec<usize> =
        (0..layout.num_pairs()).filter(|&p| spec.reachable[p]).collect();
    let alpha = reg.alpha();
    let grad_exp = 1.0 / alpha - 1.0;
    let grad_coef = reg.inv_eta() / alpha;

    let mut grad = vec![0.0; layout.num_pairs()];
    let mut iterations = 0usize;
    let mut gap = f64::INFINITY;
    let mut converged = false;
    for _ in 0..settings.max_iter {
        let xs = x.as_slice();
        for &p in &reach {
            grad[p] = loss_sum[p] - grad_coef * xs[p].powf(grad_exp);
        }
        let (vertex, vval) = linear_min_oracle(spec, &grad)?;
        let at_x: f64 = reach.iter().map(|&p| grad[p] * xs[p]).sum();
        gap = (at_x - vval).max(0.0);
        if gap <= settings.tol {
            converged = true;
            break;
        }
        iterations += 1;

        // Feasible step range along d = vertex - x under the entry floor.
        let vs = vertex.as_slice();
        let mut gamma_max = 1.0f64;
        for &p in &reach {
            let d = vs[p] - xs[p];
            if d < 0.0 {
                gamma_max = gamma_max.min((xs[p] - floor[p]) / (-d));
            }
        }
        if gamma_max <= 0.0 {
            // Every descent coordinate is pinned at the floor already.
            break;
        }

        // Exact line search: phi'(gamma) is increasing (F is convex), and
        // phi'(0) = -gap < 0, so either the clamp binds or a sign change
        // lies inside and bisection finds it.
        let dphi = |gamma: f64| -> f64 {
            let mut acc = 0.0;
            for &p in &reach {
                let d = vs[p] - xs[p];
                if d != 0.0 {
                    let xv = xs[p] + gamma * d;
                    acc += d * (loss_sum[p] - grad_coef * xv.powf(grad_exp));
                }
            }
            acc
        };
        let gamma = if dphi(gamma_max) <= 0.0 {
            gamma_max
        } else {
            let (mut lo, mut hi) = (0.0f64, gamma_max);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if dphi(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        if gamma <= 0.0 {
            break;
        }
        let xm = x.values_mut();
        for &p in &reach {
            let d = vs[p] - xm[p];
            xm[p] = (xm[p] + gamma * d).max(floor[p]);
        }
    }

    let objective = mdp::inner(x.as_slice(), loss_sum) + tsallis_value(x.as_slice(), reg)?;
    let report = SolveReport { objective, gap, iterations, converged };
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{
        evaluate_value, occupancy_from_policy, random_kernel, random_policy, Layout, LayeredMdp,
    };
    use crate::oracles::{brute_force_ftrl, ftrl_grid_slack};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bandit_layout(actions: usize) -> (Layout, Kernel) {
        let layout = Layout::new(&[1], actions).unwrap();
        let kernel = Kernel::new(&layout, vec![]).unwrap();
        (layout, kernel)
    }

    fn random_instance(rng: &mut ChaCha8Rng, max_layer: usize, actions: usize) -> LayeredMdp {
        let h = rng.gen_range(2..=3);
        let mut sizes = vec![1usize];
        for _ in 1..h {
            sizes.push(rng.gen_range(1..=max_layer));
        }
        let layout = Layout::new(&sizes, actions).unwrap();
        let kernel = random_kernel(&layout, rng);
        LayeredMdp::new(layout, kernel).unwrap()
    }

    #[test]
    fn tsallis_value_closed_forms() {
        let reg = TsallisRegularizer::new(2.0, 1.0).unwrap();
        assert_eq!(tsallis_value(&[1.0], reg).unwrap(), -1.0);
        let reg = TsallisRegularizer::new(2.0, 2.0).unwrap();
        // eta = 0.5, four entries of 0.25: -(1/0.5) * 4 * 0.5 = -4.
        assert!((tsallis_value(&[0.25; 4], reg).unwrap() + 4.0).abs() < 1e-15);
        // Scaling eta by c scales the value by 1/c.
        let a = tsallis_value(&[0.3, 0.7], TsallisRegularizer::new(1.5, 1.0).unwrap()).unwrap();
        let b = tsallis_value(&[0.3, 0.7], TsallisRegularizer::new(1.5, 3.0).unwrap()).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-15);
        assert!(tsallis_value(&[-0.1], reg).is_err());
    }

    #[test]
    fn regularizer_rejects_bad_parameters() {
        assert!(TsallisRegularizer::new(1.0, 1.0).is_err());
        assert!(TsallisRegularizer::new(2.5, 1.0).is_err());
        assert!(TsallisRegularizer::new(1.5, 0.0).is_err());
    }

    #[test]
    fn linear_oracle_picks_cheapest_action() {
        let (layout, kernel) = bandit_layout(3);
        let spec = PolytopeSpec::new(&layout, &kernel).unwrap();
        let (vertex, value) = linear_min_oracle(&spec, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(vertex.as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(value, 1.0);
    }

    #[test]
    fn linear_oracle_constant_cost_gives_horizon_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mdp = random_instance(&mut rng, 3, 2);
        let spec = PolytopeSpec::new(mdp.layout(), mdp.kernel()).unwrap();
        let kappa = 0.7;
        let cost = vec![kappa; mdp.layout().num_pairs()];
        let (_, value) = linear_min_oracle(&spec, &cost).unwrap();
        assert!((value - kappa * mdp.layout().horizon() as f64).abs() < 1e-12);
    }

    #[test]
    fn linear_oracle_matches_policy_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let mdp = random_instance(&mut rng, 3, 2);
            let layout = mdp.layout();
            let cost: Vec<f64> =
                (0..layout.num_pairs()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let spec = PolytopeSpec::new(layout, mdp.kernel()).unwrap();
            let (vertex, value) = linear_min_oracle(&spec, &cost).unwrap();
            // Enumerate every deterministic policy.
            let n = layout.num_states();
            let a = layout.num_actions();
            let mut best = f64::INFINITY;
            for code in 0..a.pow(n as u32) {
                let mut c = code;
                let actions: Vec<usize> = (0..n)
                    .map(|_| {
                        let x = c % a;
                        c /= a;
                        x
                    })
                    .collect();
                let pi = Policy::deterministic(layout, &actions).unwrap();
                let tables = evaluate_value(layout, mdp.kernel(), &pi, &cost).unwrap();
                best = best.min(tables.at_start());
            }
            assert!((value - best).abs() < 1e-12);
            assert!((crate::mdp::inner(vertex.as_slice(), &cost) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_loss_bandit_solution_is_uniform() {
        let (layout, kernel) = bandit_layout(2);
        let spec = PolytopeSpec::new(&layout, &kernel).unwrap();
        let reg = TsallisRegularizer::new(2.0, 1.0).unwrap();
        let (x, report) =
            ftrl_solve(&spec, &[0.0, 0.0], reg, SolverSettings::default(), None).unwrap();
        assert!(report.converged);
        assert!((x.as_slice()[0] - 0.5).abs() < 1e-8);
        assert!((x.as_slice()[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn dominant_regularizer_pulls_toward_uniform() {
        let layout = Layout::new(&[1, 2], 2).unwrap();
        let kernel = Kernel::uniform(&layout);
        let spec = PolytopeSpec::new(&layout, &kernel).unwrap();
        let reg = TsallisRegularizer::new(1.5, 1e7).unwrap();
        let loss = [0.3, -0.8, 1.2, 0.4, -0.2, 0.9];
        let (x, report) =
            ftrl_solve(&spec, &loss, reg, SolverSettings::default(), None).unwrap();
        assert!(report.converged);
        let uniform =
            occupancy_from_policy(&layout, &kernel, &Policy::uniform(&layout)).unwrap();
        for (got, want) in x.as_slice().iter().zip(uniform.as_slice()) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
    }

    #[test]
    fn bandit_solve_matches_grid_oracle() {
        let (layout, kernel) = bandit_layout(3);
        let spec = PolytopeSpec::new(&layout, &kernel).unwrap();
        let loss = [0.0, 1.0, 2.0];
        let reg = TsallisRegularizer::new(2.0, 1.0).unwrap();
        let (x, report) =
            ftrl_solve(&spec, &loss, reg, SolverSettings::default(), None).unwrap();
        assert!(report.converged);
        let step = 1e-3;
        let (_, grid_value) = brute_force_ftrl(&loss, 2.0, 1.0, step).unwrap();
        let slack = ftrl_grid_slack(2.0, 2.0, 1.0, 3, step);
        assert!(report.objective <= grid_value + 1e-6);
        assert!(grid_value <= report.objective + slack);
        // The optimum is interior and unique; grid argmin sits nearby.
        assert!(x.as_slice().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn adding_constant_loss_shifts_objective_but_not_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mdp = random_instance(&mut rng, 3, 2);
        let layout = mdp.layout();
        let spec = PolytopeSpec::new(layout, mdp.kernel()).unwrap();
        let reg = TsallisRegularizer::new(1.5, 4.0).unwrap();
        let loss: Vec<f64> = (0..layout.num_pairs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kappa = 2.5;
        let shifted: Vec<f64> = loss.iter().map(|&l| l + kappa).collect();
        let (x0, r0) = ftrl_solve(&spec, &loss, reg, SolverSettings::default(), None).unwrap();
        let (x1, r1) = ftrl_solve(&spec, &shifted, reg, SolverSettings::default(), None).unwrap();
        for (a, b) in x0.as_slice().iter().zip(x1.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
        let expect_shift = kappa * layout.horizon() as f64;
        assert!((r1.objective - r0.objective - expect_shift).abs() < 1e-6);
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mdp = random_instance(&mut rng, 3, 2);
        let layout = mdp.layout();
        let spec = PolytopeSpec::new(layout, mdp.kernel()).unwrap();
        let reg = TsallisRegularizer::new(1.5, 8.0).unwrap();
        let mut loss: Vec<f64> =
            (0..layout.num_pairs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (prev, _) = ftrl_solve(&spec, &loss, reg, SolverSettings::default(), None).unwrap();
        // Perturb one coordinate, as one episode of estimator updates would.
        loss[1] += 0.8;
        let (cold, _) = ftrl_solve(&spec, &loss, reg, SolverSettings::default(), None).unwrap();
        let (warm, report) =
            ftrl_solve(&spec, &loss, reg, SolverSettings::default(), Some(&prev)).unwrap();
        assert!(report.converged);
        for (a, b) in cold.as_slice().iter().zip(warm.as_slice()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn non_convergence_returns_best_iterate_with_flag() {
        // A near-boundary optimum starved of iterations: the solver must
        // hand back its best iterate, a nonnegative gap above tolerance, and
        // converged = false, leaving the decision to the caller.
        let layout = Layout::new(&[1, 2, 1], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let kernel = random_kernel(&layout, &mut rng);
        let spec = PolytopeSpec::new(&layout, &kernel).unwrap();
        let reg = TsallisRegularizer::new(1.5, 0.7).unwrap();
        let loss: Vec<f64> = (0..layout.num_pairs()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let starved = SolverSettings { tol: 1e-8, max_iter: 50 };
        let (x, report) = ftrl_solve(&spec, &loss, reg, starved, None).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 50);
        assert!(report.gap > 1e-8);
        x.validate(&layout, &kernel, 1e-8).unwrap();
        // With room to work the same problem certifies.
        let roomy = SolverSettings { tol: 1e-8, max_iter: 400_000 };
        let (_, full) = ftrl_solve(&spec, &loss, reg, roomy, None).unwrap();
        assert!(full.converged);
        assert!(full.objective <= report.objective + 1e-12);
    }

    #[test]
    fn unreachable_states_stay_at_zero() {
        let layout = Layout::new(&[1, 2], 2).unwrap();
        // Both actions always land in the first successor.
        let kernel = Kernel::new(&layout, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let spec = PolytopeSpec::new(&layout, &kernel).unwrap();
        let reg = TsallisRegularizer::new(2.0, 1.0).unwrap();
        let loss = [0.1, -0.2, 0.3, 0.4, 0.0, 0.0];
        let (x, report) =
            ftrl_solve(&spec, &loss, reg, SolverSettings::default(), None).unwrap();
        assert!(report.converged);
        assert_eq!(x.get(&layout, 2, 0), 0.0);
        assert_eq!(x.get(&layout, 2, 1), 0.0);
        x.validate(&layout, &kernel, 1e-8).unwrap();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn solver_output_is_feasible_and_certified(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mdp = random_instance(&mut rng, 3, 3);
            let layout = mdp.layout();
            let spec = PolytopeSpec::new(layout, mdp.kernel()).unwrap();
            let alpha = if seed % 2 == 0 { 1.5 } else { 2.0 };
            let reg = TsallisRegularizer::new(alpha, rng.gen_range(0.5..20.0)).unwrap();
            let loss: Vec<f64> = (0..layout.num_pairs())
                .map(|_| rng.gen_range(-5.0..5.0))
                .collect();
            // Wide-open losses with a weak regularizer push the optimum near
            // the boundary, where Frank-Wolfe needs tens of thousands of
            // zigzag steps; raise the cap so convergence itself is the
            // property under test.
            let settings = SolverSettings { tol: 1e-8, max_iter: 400_000 };
            let (x, report) = ftrl_solve(&spec, &loss, reg, settings, None).unwrap();
            prop_assert!(report.converged);
            prop_assert!(report.gap >= 0.0 && report.gap <= 1e-8);
            x.validate(layout, mdp.kernel(), 1e-8).unwrap();
            // Interior floor honored on reachable pairs.
            for (p, &r) in spec.reachable_pairs().iter().enumerate() {
                if r {
                    let h = layout.layer_of(layout.pair_state(p));
                    let nominal = spec.eps_floor()
                        / (layout.layer_size(h) * layout.num_actions()) as f64;
                    prop_assert!(x.as_slice()[p] >= nominal * 0.999);
                }
            }
        }

        #[test]
        fn random_policy_occupancies_never_beat_the_linear_oracle(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mdp = random_instance(&mut rng, 3, 2);
            let layout = mdp.layout();
            let spec = PolytopeSpec::new(layout, mdp.kernel()).unwrap();
            let cost: Vec<f64> = (0..layout.num_pairs())
                .map(|_| rng.gen_range(-3.0..3.0))
                .collect();
            let (_, best) = linear_min_oracle(&spec, &cost).unwrap();
            let pi = random_policy(layout, &mut rng);
            let occ = occupancy_from_policy(layout, mdp.kernel(), &pi).unwrap();
            prop_assert!(crate::mdp::inner(occ.as_slice(), &cost) >= best - 1e-10);
        }
    }
}
