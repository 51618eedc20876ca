//! Transition-model confidence machinery for the unknown-kernel learner:
//! visit counters, the doubling-epoch schedule, the empirical kernel,
//! Bernstein widths, and upper occupancy bounds.
//!
//! The learner never sees the true kernel. It keeps per-pair visit counts
//! and per-transition successor counts, and freezes an [`EpochModel`]
//! whenever some pair's count has doubled since the last freeze (or is
//! visited for the first time). Within an epoch the model is immutable, so
//! per-epoch quantities (the empirical kernel, the confidence widths, the
//! FTRL estimate sum) have a stable meaning.
//!
//! [`comp_uob`] turns an epoch model into a table of upper occupancy
//! bounds: for every pair, a value at least as large as the occupancy that
//! pair can attain under any kernel inside the confidence box. Those bounds
//! serve as conservative importance-sampling denominators, which keeps
//! estimates pessimistic instead of explosive when the model is wrong.

use crate::error::{Error, Result};
use crate::mdp::{Kernel, Layout, Policy, Trajectory};
use serde::{Deserialize, Serialize};

/// Visit counts: `m` per state-action pair (every layer), `m_next` per
/// transition (non-final layers), and the snapshot `m_old` taken when the
/// current epoch started.
///
/// Invariant: for every non-final-layer pair, the successor counts sum to
/// the pair count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Counters {
    pub m: Vec<u64>,
    pub m_next: Vec<u64>,
    pub m_old: Vec<u64>,
}

impl Counters {
    pub fn new(layout: &Layout) -> Counters {
        Counters {
            m: vec![0; layout.num_pairs()],
            m_next: vec![0; layout.kernel_len()],
            m_old: vec![0; layout.num_pairs()],
        }
    }

    /// Records one episode: every visited pair's count goes up by one, and
    /// so does the observed successor count at every non-final step.
    pub fn update(&mut self, layout: &Layout, trajectory: &Trajectory) {
        for (h, step) in trajectory.steps.iter().enumerate() {
            self.m[layout.pair(step.state, step.action)] += 1;
            if h + 1 < trajectory.steps.len() {
                let next = trajectory.steps[h + 1].state;
                let range = layout.kernel_row_range(step.state, step.action);
                let offset = next - layout.states_in_layer(h + 1).start;
                self.m_next[range.start + offset] += 1;
            }
        }
    }

    /// First pair whose count reached `max(1, 2 * m_old)`, checked after
    /// the episode's counter update; `Some` means a new epoch starts.
    pub fn triggering_pair(&self, layout: &Layout) -> Option<(usize, usize)> {
        for (p, (&count, &old)) in self.m.iter().zip(&self.m_old).enumerate() {
            if count >= 1.max(2 * old) {
                return Some((layout.pair_state(p), layout.pair_action(p)));
            }
        }
        None
    }

    /// Doubling-schedule check: true when some pair's count reached
    /// `max(1, 2 * m_old)` since the last epoch snapshot.
    pub fn epoch_trigger(&self, layout: &Layout) -> bool {
        self.triggering_pair(layout).is_some()
    }

    /// Freezes the snapshot at the current counts (start of a new epoch).
    pub fn snapshot(&mut self) {
        self.m_old.copy_from_slice(&self.m);
    }
}

/// Bernstein-type confidence width
/// `min{ 2 sqrt(p_hat * log_iota / m) + 14 log_iota / (3 m), 1 }`;
/// an unvisited pair (`m = 0`) gets the vacuous width 1.
pub fn bernstein_width(p_hat: f64, m: u64, log_iota: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p_hat));
    debug_assert!(log_iota > 0.0);
    if m == 0 {
        return 1.0;
    }
    let mf = m as f64;
    let w = 2.0 * (p_hat * log_iota / mf).sqrt() + 14.0 * log_iota / (3.0 * mf);
    w.min(1.0)
}

/// Aggregate width of one kernel row: `min{1, sum of entries}`.
pub fn aggregate_width(widths: &[f64]) -> f64 {
    debug_assert!(widths.iter().all(|&b| (0.0..=1.0).contains(&b)));
    widths.iter().sum::<f64>().min(1.0)
}

/// Confidence scale `log(iota)` with `iota = H * S * A * T / delta`.
pub fn log_iota(h: usize, s: usize, a: usize, t_max: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta {delta} outside (0, 1)")));
    }
    if h == 0 || s == 0 || a == 0 || t_max == 0 {
        return Err(Error::domain("confidence scale needs positive dimensions"));
    }
    Ok(((h * s * a * t_max) as f64 / delta).ln())
}

/// One epoch's frozen transition beliefs: the empirical kernel, the
/// per-transition widths (kernel-shaped), and the per-pair aggregate widths.
#[derive(Debug, Clone)]
pub struct EpochModel {
    /// 1-based epoch index.
    pub index: usize,
    /// First episode governed by this epoch.
    pub start_episode: usize,
    pub p_hat: Kernel,
    pub widths: Vec<f64>,
    pub agg_width: Vec<f64>,
    pub log_iota: f64,
}

impl EpochModel {
    /// Builds the epoch model from counter state: empirical ratios where a
    /// pair has been visited, a uniform row over the successor layer where
    /// it has not (so the kernel is always valid for planning), and
    /// Bernstein widths from the same counts.
    pub fn from_counters(
        layout: &Layout,
        counters: &Counters,
        index: usize,
        start_episode: usize,
        log_iota: f64,
    ) -> Result<EpochModel> {
        if index == 0 || start_episode == 0 {
            return Err(Error::domain("epoch index and start episode are 1-based"));
        }
        let mut probs = vec![0.0; layout.kernel_len()];
        let mut widths = vec![0.0; layout.kernel_len()];
        let mut agg_width = vec![0.0; layout.num_pairs()];
        for h in 0..layout.horizon() - 1 {
            let succ = layout.layer_size(h + 1);
            for s in layout.states_in_layer(h) {
                for a in 0..layout.num_actions() {
                    let pair = layout.pair(s, a);
                    let range = layout.kernel_row_range(s, a);
                    let m = counters.m[pair];
                    for idx in range.clone() {
                        probs[idx] = if m == 0 {
                            1.0 / succ as f64
                        } else {
                            counters.m_next[idx] as f64 / m as f64
                        };
                        widths[idx] = bernstein_width(probs[idx], m, log_iota);
                    }
                    agg_width[pair] = aggregate_width(&widths[range]);
                }
            }
        }
        // Final-layer pairs have no successor uncertainty: width 0.
        let p_hat = Kernel::new(layout, probs)?;
        Ok(EpochModel { index, start_episode, p_hat, widths, agg_width, log_iota })
    }

    /// The model in force before any data: uniform kernel, all widths 1.
    pub fn initial(layout: &Layout, log_iota: f64) -> EpochModel {
        EpochModel::from_counters(layout, &Counters::new(layout), 1, 1, log_iota)
            .expect("initial epoch model is always well formed")
    }
}

/// Maximum of `<q, weights>` over distributions `q` with
/// `|q - p_hat| <= width` elementwise: start every entry at its lower
/// bound, then pour the remaining mass into the largest weights first
/// (ties broken by index). Exact because the feasible set is a polytope
/// whose vertices saturate the box bounds in weight order.
pub fn box_row_max(p_hat: &[f64], width: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(p_hat.len(), width.len());
    debug_assert_eq!(p_hat.len(), weights.len());
    let low: Vec<f64> = p_hat.iter().zip(width).map(|(&p, &b)| (p - b).max(0.0)).collect();
    let high: Vec<f64> = p_hat.iter().zip(width).map(|(&p, &b)| (p + b).min(1.0)).collect();
    let mut mass: f64 = 1.0 - low.iter().sum::<f64>();
    debug_assert!(mass >= -1e-12);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| weights[j].partial_cmp(&weights[i]).unwrap().then(i.cmp(&j)));
    let mut value: f64 = low.iter().zip(weights).map(|(l, w)| l * w).sum();
    for i in order {
        if mass <= 0.0 {
            break;
        }
        let take = (high[i] - low[i]).min(mass);
        value += take * weights[i];
        mass -= take;
    }
    value
}

/// Upper occupancy bounds `u(s, a)` over the confidence box around
/// `p_hat`: for each target state, a backward pass computes the largest
/// reach probability any kernel in the box can give it (each row maximized
/// independently by [`box_row_max`], which is exact on a layered graph
/// because rows are free independently), and the pair bound is that reach
/// probability times the policy. Dominates the occupancy of every kernel
/// in the box, in particular `p_hat` itself.
pub fn comp_uob(
    layout: &Layout,
    p_hat: &Kernel,
    widths: &[f64],
    policy: &Policy,
) -> Result<Vec<f64>> {
    if widths.len() != layout.kernel_len() {
        return Err(Error::structure(format!(
            "width table has {} entries, layout wants {}",
            widths.len(),
            layout.kernel_len()
        )));
    }
    if widths.iter().any(|&b| !(0.0..=1.0).contains(&b)) {
        return Err(Error::domain("confidence widths must lie in [0, 1]"));
    }
    let num_a = layout.num_actions();
    let mut u = vec![0.0; layout.num_pairs()];
    let mut f = vec![0.0; layout.num_states()];
    for target in 0..layout.num_states() {
        let target_layer = layout.layer_of(target);
        f[..layout.states_in_layer(target_layer).end].fill(0.0);
        f[target] = 1.0;
        for h in (0..target_layer).rev() {
            let next = layout.states_in_layer(h + 1);
            for s in layout.states_in_layer(h) {
                let mut acc = 0.0;
                for a in 0..num_a {
                    let range = layout.kernel_row_range(s, a);
                    let row_max = box_row_max(
                        &p_hat.as_slice()[range.clone()],
                        &widths[range],
                        &f[next.clone()],
                    );
                    acc += policy.prob(layout, s, a) * row_max;
                }
                // Reach probabilities cannot exceed 1; trim roundoff.
                f[s] = acc.min(1.0);
            }
        }
        let reach = f[0];
        for a in 0..num_a {
            u[layout.pair(target, a)] = reach * policy.prob(layout, target, a);
        }
    }
    Ok(u)
}

/// Largest admissible epoch count for a `T`-episode run: each pair can
/// trigger once on first visit and once per doubling, plus the initial
/// epoch.
pub fn max_epochs(layout: &Layout, t_max: usize) -> usize {
    let pairs = layout.num_pairs();
    pairs * (t_max as f64).log2().ceil() as usize + pairs + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{
        occupancy_from_policy, random_kernel, random_policy, sample_trajectory, Layout, Policy,
    };
    use crate::oracles::{brute_force_uob, grid_row_max};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_layer() -> (Layout, Kernel) {
        let layout = Layout::new(&[1, 2], 2).unwrap();
        let kernel = Kernel::new(&layout, vec![0.7, 0.3, 0.2, 0.8]).unwrap();
        (layout, kernel)
    }

    #[test]
    fn one_trajectory_sets_one_count_per_layer() {
        let (layout, kernel) = two_layer();
        let pi = Policy::uniform(&layout);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counters = Counters::new(&layout);
        let traj =
            sample_trajectory(&layout, &kernel, &pi, |_, _, _| 0.0, &mut rng).unwrap();
        counters.update(&layout, &traj);
        assert_eq!(counters.m.iter().sum::<u64>(), layout.horizon() as u64);
        assert_eq!(counters.m.iter().filter(|&&c| c == 1).count(), layout.horizon());
        assert_eq!(counters.m_next.iter().sum::<u64>(), (layout.horizon() - 1) as u64);
    }

    #[test]
    fn repeated_deterministic_path_counts_exactly() {
        let layout = Layout::new(&[1, 1, 1], 2).unwrap();
        let kernel = Kernel::uniform(&layout);
        let pi = Policy::deterministic(&layout, &[1, 0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counters = Counters::new(&layout);
        let n = 13;
        for _ in 0..n {
            let traj =
                sample_trajectory(&layout, &kernel, &pi, |_, _, _| 0.0, &mut rng).unwrap();
            counters.update(&layout, &traj);
        }
        for s in 0..layout.num_states() {
            for a in 0..layout.num_actions() {
                let expect = if pi.prob(&layout, s, a) == 1.0 { n } else { 0 };
                assert_eq!(counters.m[layout.pair(s, a)], expect);
            }
        }
    }

    #[test]
    fn successor_counts_stay_consistent_with_pair_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layout = Layout::new(&[1, 3, 2], 2).unwrap();
        let kernel = random_kernel(&layout, &mut rng);
        let pi = random_policy(&layout, &mut rng);
        let mut counters = Counters::new(&layout);
        for _ in 0..200 {
            let traj =
                sample_trajectory(&layout, &kernel, &pi, |_, _, _| 0.0, &mut rng).unwrap();
            counters.update(&layout, &traj);
            for h in 0..layout.horizon() - 1 {
                for s in layout.states_in_layer(h) {
                    for a in 0..layout.num_actions() {
                        let row_sum: u64 = counters.m_next
                            [layout.kernel_row_range(s, a)]
                        .iter()
                        .sum();
                        assert_eq!(row_sum, counters.m[layout.pair(s, a)]);
                    }
                }
            }
        }
    }

    #[test]
    fn epoch_trigger_follows_the_doubling_rule() {
        let layout = Layout::new(&[1], 1).unwrap();
        let mut counters = Counters::new(&layout);
        // First visit: 1 >= max{1, 0}.
        counters.m[0] = 1;
        assert!(counters.epoch_trigger(&layout));
        assert_eq!(counters.triggering_pair(&layout), Some((0, 0)));
        // Doubled: 4 >= 2 * 2.
        counters.m_old[0] = 2;
        counters.m[0] = 4;
        assert!(counters.epoch_trigger(&layout));
        // Not yet doubled: 3 < 4.
        counters.m[0] = 3;
        assert!(!counters.epoch_trigger(&layout));
    }

    #[test]
    fn empirical_model_uses_ratios_and_uniform_fallback() {
        let (layout, _) = two_layer();
        let mut counters = Counters::new(&layout);
        // Ten visits to (0, 0): three to successor 0, seven to successor 1.
        counters.m[layout.pair(0, 0)] = 10;
        let range = layout.kernel_row_range(0, 0);
        counters.m_next[range.start] = 3;
        counters.m_next[range.start + 1] = 7;
        let epoch = EpochModel::from_counters(&layout, &counters, 1, 1, 10.0).unwrap();
        let row = epoch.p_hat.row(&layout, 0, 0);
        assert!((row[0] - 0.3).abs() < 1e-15 && (row[1] - 0.7).abs() < 1e-15);
        // Unvisited (0, 1): uniform over the two successors, width 1.
        let row = epoch.p_hat.row(&layout, 0, 1);
        assert!((row[0] - 0.5).abs() < 1e-15 && (row[1] - 0.5).abs() < 1e-15);
        let range = layout.kernel_row_range(0, 1);
        assert!(epoch.widths[range].iter().all(|&b| b == 1.0));
        assert_eq!(epoch.agg_width[layout.pair(0, 1)], 1.0);
        // Final-layer pairs carry no transition uncertainty.
        for s in layout.states_in_layer(1) {
            for a in 0..2 {
                assert_eq!(epoch.agg_width[layout.pair(s, a)], 0.0);
            }
        }
    }

    #[test]
    fn empirical_model_concentrates_with_many_visits() {
        let (layout, kernel) = two_layer();
        let pi = Policy::deterministic(&layout, &[0, 0, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut counters = Counters::new(&layout);
        for _ in 0..10_000 {
            let traj =
                sample_trajectory(&layout, &kernel, &pi, |_, _, _| 0.0, &mut rng).unwrap();
            counters.update(&layout, &traj);
        }
        let epoch = EpochModel::from_counters(&layout, &counters, 1, 1, 10.0).unwrap();
        let dev: f64 = epoch
            .p_hat
            .row(&layout, 0, 0)
            .iter()
            .zip(kernel.row(&layout, 0, 0))
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(dev <= 0.05, "max row deviation {dev}");
    }

    #[test]
    fn bernstein_width_matches_arithmetic_example() {
        assert_eq!(bernstein_width(0.3, 0, 10.0), 1.0);
        let w = bernstein_width(0.25, 100, 10.0);
        let expect = 2.0 * 0.025f64.sqrt() + 140.0 / 300.0;
        assert!((w - expect).abs() < 1e-15);
        assert!((w - 0.78290).abs() < 1e-4);
        // Monotone in the count.
        let mut prev = 1.0;
        for m in [1u64, 3, 10, 50, 1000] {
            let w = bernstein_width(0.25, m, 10.0);
            assert!(w <= prev);
            prev = w;
        }
    }

    #[test]
    fn aggregate_width_sums_and_clamps() {
        assert!((aggregate_width(&[0.3, 0.3]) - 0.6).abs() < 1e-15);
        assert_eq!(aggregate_width(&[0.7, 0.7]), 1.0);
        assert_eq!(aggregate_width(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn box_max_matches_the_one_dimensional_example() {
        // Raising the first coordinate to 0.7 pays 0.8 per unit of mass.
        let v = box_row_max(&[0.5, 0.5], &[0.2, 0.2], &[0.8, 0.3]);
        assert!((v - 0.65).abs() < 1e-15);
        // Zero widths: plain inner product.
        let v = box_row_max(&[0.25, 0.75], &[0.0, 0.0], &[1.0, 2.0]);
        assert!((v - 1.75).abs() < 1e-15);
        // Width 1 boxes: all mass on the best weight.
        let v = box_row_max(&[0.2, 0.5, 0.3], &[1.0, 1.0, 1.0], &[0.1, 0.9, 0.4]);
        assert!((v - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_widths_reproduce_the_empirical_occupancy() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let layout = Layout::new(&[1, 3, 2], 2).unwrap();
        let p_hat = random_kernel(&layout, &mut rng);
        let pi = random_policy(&layout, &mut rng);
        let u = comp_uob(&layout, &p_hat, &vec![0.0; layout.kernel_len()], &pi).unwrap();
        let occ = occupancy_from_policy(&layout, &p_hat, &pi).unwrap();
        for (a, b) in u.iter().zip(occ.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn upper_bounds_match_the_grid_oracle_on_a_tiny_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..5 {
            let layout = Layout::new(&[1, 2], 2).unwrap();
            let p_hat = random_kernel(&layout, &mut rng);
            let widths: Vec<f64> =
                (0..layout.kernel_len()).map(|_| rng.gen_range(0.0..0.5)).collect();
            let pi = random_policy(&layout, &mut rng);
            let u = comp_uob(&layout, &p_hat, &widths, &pi).unwrap();
            let grid = brute_force_uob(&layout, &p_hat, &widths, &pi, 1e-3).unwrap();
            for (i, (a, b)) in u.iter().zip(&grid).enumerate() {
                assert!((a - b).abs() <= 2e-3, "pair {i}: {a} vs {b}");
                // The grid never exceeds the exact maximum.
                assert!(b <= &(a + 1e-12));
            }
        }
    }

    #[test]
    fn epoch_count_over_a_run_respects_the_doubling_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let layout = Layout::new(&[1, 2, 2], 2).unwrap();
        let kernel = random_kernel(&layout, &mut rng);
        let pi = random_policy(&layout, &mut rng);
        let t_max = 512;
        let mut counters = Counters::new(&layout);
        let mut epochs = 1usize;
        for _ in 0..t_max {
            let traj =
                sample_trajectory(&layout, &kernel, &pi, |_, _, _| 0.0, &mut rng).unwrap();
            counters.update(&layout, &traj);
            if counters.epoch_trigger(&layout) {
                epochs += 1;
                counters.snapshot();
            }
        }
        assert!(epochs <= max_epochs(&layout, t_max), "{epochs} epochs");
        // Doubling means far fewer epochs than episodes.
        assert!(epochs < 12 * layout.num_pairs());
    }

    #[test]
    fn widths_cover_the_true_kernel_across_replicas() {
        // Coverage of the good event: on every epoch of every replica the
        // true kernel should sit inside the confidence box. With delta at
        // 1/T^3 the failure probability is far below one replica's worth.
        let (layout, kernel) = two_layer();
        let pi = Policy::uniform(&layout);
        let t_max = 128usize;
        let delta = 1.0 / (t_max as f64).powi(3);
        let li = log_iota(
            layout.horizon(),
            layout.num_states(),
            layout.num_actions(),
            t_max,
            delta,
        )
        .unwrap();
        let mut covered = 0usize;
        let replicas = 200usize;
        for r in 0..replicas {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + r as u64);
            let mut counters = Counters::new(&layout);
            let mut ok = true;
            let mut index = 1;
            for t in 1..=t_max {
                let traj =
                    sample_trajectory(&layout, &kernel, &pi, |_, _, _| 0.0, &mut rng)
                        .unwrap();
                counters.update(&layout, &traj);
                if counters.epoch_trigger(&layout) {
                    index += 1;
                    counters.snapshot();
                    let epoch =
                        EpochModel::from_counters(&layout, &counters, index, t + 1, li)
                            .unwrap();
                    for i in 0..layout.kernel_len() {
                        if (epoch.p_hat.as_slice()[i] - kernel.as_slice()[i]).abs()
                            > epoch.widths[i]
                        {
                            ok = false;
                        }
                    }
                }
            }
            covered += usize::from(ok);
        }
        assert_eq!(covered, replicas, "coverage {covered}/{replicas}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn greedy_box_max_matches_grid_search(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.gen_range(1..=4usize);
            let mut p_hat: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = p_hat.iter().sum();
            for p in &mut p_hat { *p /= total; }
            let width: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..0.6)).collect();
            let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let exact = box_row_max(&p_hat, &width, &weights);
            let grid = grid_row_max(&p_hat, &width, &weights, 1e-3).unwrap();
            // The grid is a restriction of the feasible set, so it sits
            // below the exact maximum, within resolution.
            prop_assert!(grid <= exact + 1e-9);
            prop_assert!(exact - grid <= 0.01);
        }

        #[test]
        fn upper_bounds_dominate_every_kernel_in_the_box(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = rng.gen_range(2..=3usize);
            let mut sizes = vec![1usize];
            for _ in 1..h { sizes.push(rng.gen_range(1..=3)); }
            let layout = Layout::new(&sizes, 2).unwrap();
            let p_hat = random_kernel(&layout, &mut rng);
            let widths: Vec<f64> =
                (0..layout.kernel_len()).map(|_| rng.gen_range(0.0..0.4)).collect();
            let pi = random_policy(&layout, &mut rng);
            let u = comp_uob(&layout, &p_hat, &widths, &pi).unwrap();
            // The empirical kernel itself.
            let occ = occupancy_from_policy(&layout, &p_hat, &pi).unwrap();
            for (a, b) in u.iter().zip(occ.as_slice()) {
                prop_assert!(*a >= b - 1e-12);
            }
            // A random perturbation inside the box.
            let mut probs = p_hat.as_slice().to_vec();
            for h in 0..layout.horizon() - 1 {
                for s in layout.states_in_layer(h) {
                    for a in 0..layout.num_actions() {
                        let range = layout.kernel_row_range(s, a);
                        let row = &mut probs[range.clone()];
                        let w = &widths[range];
                        for (q, b) in row.iter_mut().zip(w) {
                            *q = (*q + rng.gen_range(-b..=*b)).clamp(0.0, 1.0);
                        }
                        let total: f64 = row.iter().sum();
                        if total > 0.0 {
                            for q in row.iter_mut() { *q /= total; }
                        }
                    }
                }
            }
            // Renormalization can push entries outside the box; keep the
            // draw only when it stayed inside.
            let inside = probs
                .iter()
                .zip(p_hat.as_slice())
                .zip(&widths)
                .all(|((q, p), b)| (q - p).abs() <= *b + 1e-12);
            if inside {
                let tilde = Kernel::new(&layout, probs).unwrap();
                let occ = occupancy_from_policy(&layout, &tilde, &pi).unwrap();
                for (a, b) in u.iter().zip(occ.as_slice()) {
                    prop_assert!(*a >= b - 1e-10);
                }
            }
        }

        #[test]
        fn wider_boxes_never_shrink_the_bounds(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layout = Layout::new(&[1, 2, 2], 2).unwrap();
            let p_hat = random_kernel(&layout, &mut rng);
            let pi = random_policy(&layout, &mut rng);
            let w1: Vec<f64> =
                (0..layout.kernel_len()).map(|_| rng.gen_range(0.0..0.5)).collect();
            let w2: Vec<f64> =
                w1.iter().map(|b| (b + rng.gen_range(0.0..0.3)).min(1.0)).collect();
            let u1 = comp_uob(&layout, &p_hat, &w1, &pi).unwrap();
            let u2 = comp_uob(&layout, &p_hat, &w2, &pi).unwrap();
            for (a, b) in u1.iter().zip(&u2) {
                prop_assert!(b >= &(a - 1e-12));
            }
        }
    }
}
