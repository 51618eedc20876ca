//! Layered episodic MDPs: state layout, transition kernels, policies,
//! occupancy measures, value recursion, and trajectory rollout.
//!
//! A layered MDP has `H` layers of states. Layer 0 holds exactly one initial
//! state, and every transition goes from layer `h` to layer `h+1`; the final
//! layer exits to an implicit terminal state. An episode visits exactly one
//! state-action pair per layer. All tables (kernel, policy, occupancy, loss)
//! are stored dense over a flat, layer-major state enumeration, so instances
//! serialize and iterate in one canonical order.
//!
//! # Occupancy measures
//!
//! A policy `pi` together with a kernel `P` induces visitation probabilities
//! `rho(s, a)`. Valid occupancy tables are exactly those satisfying, per
//! layer, total mass one, and flow consistency between adjacent layers; the
//! set of all such tables for a fixed kernel is a convex polytope, and
//! `policy_from_occupancy` / `occupancy_from_policy` convert between the two
//! representations.
//!
//! # Instance text format
//!
//! [`write_instance`] and [`parse_instance`] implement a line-oriented
//! key-value schema:
//!
//! ```text
//! # layered mdp v1
//! horizon 3
//! layers 1 2 2
//! actions 2
//! row 0 0 0 : 5.0000000000000000e-1 5.0000000000000000e-1
//! row 0 0 1 : 1.0000000000000000e0 0.0000000000000000e0
//! ...
//! ```
//!
//! `layers` lists the layer sizes (the first must be 1). Each `row h i a :`
//! line gives the transition distribution of state `i` in layer `h` under
//! action `a`, over the states of layer `h+1`, and must appear exactly once
//! for every state-action pair outside the final layer. Probabilities are
//! written with 17 significant digits so that write -> parse -> write is
//! byte-identical. Blank lines and `#` comments are ignored.

use crate::error::{Error, Result};
use rand::Rng;

/// Tolerance for construction-time validation (row sums, policy rows).
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Tolerance for derived-quantity checks (occupancy invariants, value
/// identities), looser to absorb accumulation across layers.
pub const DERIVED_TOL: f64 = 1e-10;

/// State and action indexing for a layered MDP.
///
/// States are enumerated layer-major: all of layer 0 first (a single state),
/// then layer 1, and so on. A state-action pair `(s, a)` maps to the flat
/// pair index `s * num_actions + a`. Transition rows exist only for pairs
/// outside the final layer and are stored contiguously in pair order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    layer_sizes: Vec<usize>,
    layer_offsets: Vec<usize>,
    layer_of: Vec<usize>,
    num_actions: usize,
    kernel_row_offsets: Vec<usize>,
}

impl Layout {
    pub fn new(layer_sizes: &[usize], num_actions: usize) -> Result<Layout> {
        if layer_sizes.is_empty() {
            return Err(Error::structure("at least one layer required"));
        }
        if layer_sizes[0] != 1 {
            return Err(Error::structure(format!(
                "layer 0 must hold exactly the initial state, got size {}",
                layer_sizes[0]
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::structure("empty layer"));
        }
        if num_actions == 0 {
            return Err(Error::structure("at least one action required"));
        }
        let mut layer_offsets = Vec::with_capacity(layer_sizes.len() + 1);
        let mut acc = 0usize;
        layer_offsets.push(0);
        for &n in layer_sizes {
            acc += n;
            layer_offsets.push(acc);
        }
        let mut layer_of = Vec::with_capacity(acc);
        for (h, &n) in layer_sizes.iter().enumerate() {
            layer_of.extend(std::iter::repeat(h).take(n));
        }
        let num_states = acc;
        let mut kernel_row_offsets = Vec::with_capacity(num_states * num_actions + 1);
        kernel_row_offsets.push(0);
        let mut k = 0usize;
        for s in 0..num_states {
            let h = layer_of[s];
            let succ = if h + 1 < layer_sizes.len() { layer_sizes[h + 1] } else { 0 };
            for _ in 0..num_actions {
                k += succ;
                kernel_row_offsets.push(k);
            }
        }
        Ok(Layout {
            layer_sizes: layer_sizes.to_vec(),
            layer_offsets,
            layer_of,
            num_actions,
            kernel_row_offsets,
        })
    }

    pub fn horizon(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn num_states(&self) -> usize {
        *self.layer_offsets.last().unwrap()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states() * self.num_actions
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layer_size(&self, h: usize) -> usize {
        self.layer_sizes[h]
    }

    /// Size of the largest layer.
    pub fn max_layer_size(&self) -> usize {
        self.layer_sizes.iter().copied().max().unwrap()
    }

    /// Flat id of state `i` within layer `h`.
    pub fn state_id(&self, h: usize, i: usize) -> usize {
        debug_assert!(i < self.layer_sizes[h]);
        self.layer_offsets[h] + i
    }

    pub fn layer_of(&self, s: usize) -> usize {
        self.layer_of[s]
    }

    pub fn index_in_layer(&self, s: usize) -> usize {
        s - self.layer_offsets[self.layer_of[s]]
    }

    /// Flat states of layer `h`, contiguous by construction.
    pub fn states_in_layer(&self, h: usize) -> std::ops::Range<usize> {
        self.layer_offsets[h]..self.layer_offsets[h + 1]
    }

    pub fn pair(&self, s: usize, a: usize) -> usize {
        debug_assert!(a < self.num_actions);
        s * self.num_actions + a
    }

    pub fn pair_state(&self, p: usize) -> usize {
        p / self.num_actions
    }

    pub fn pair_action(&self, p: usize) -> usize {
        p % self.num_actions
    }

    /// Flat pair indices of layer `h`, contiguous because states are.
    pub fn pairs_in_layer(&self, h: usize) -> std::ops::Range<usize> {
        let states = self.states_in_layer(h);
        states.start * self.num_actions..states.end * self.num_actions
    }

    /// Range of the transition row for pair `(s, a)` inside a kernel's flat
    /// storage; empty for final-layer states.
    pub fn kernel_row_range(&self, s: usize, a: usize) -> std::ops::Range<usize> {
        let p = self.pair(s, a);
        self.kernel_row_offsets[p]..self.kernel_row_offsets[p + 1]
    }

    /// Total flat length of a kernel table.
    pub fn kernel_len(&self) -> usize {
        *self.kernel_row_offsets.last().unwrap()
    }
}

/// Transition kernel stored flat in pair order; index through a [`Layout`].
///
/// A kernel is always interpreted relative to the layout it was built
/// against; every operation cross-checks lengths and reports a structural
/// error on mismatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    probs: Vec<f64>,
}

impl Kernel {
    /// Validates row normalization (within [`CONSTRUCTION_TOL`]) and
    /// nonnegativity for every state-action pair outside the final layer.
    pub fn new(layout: &Layout, probs: Vec<f64>) -> Result<Kernel> {
        if probs.len() != layout.kernel_len() {
            return Err(Error::structure(format!(
                "kernel length {} does not match layout ({} expected)",
                probs.len(),
                layout.kernel_len()
            )));
        }
        for s in 0..layout.num_states() {
            if layout.layer_of(s) + 1 == layout.horizon() {
                continue;
            }
            for a in 0..layout.num_actions() {
                let row = &probs[layout.kernel_row_range(s, a)];
                let mut sum = 0.0;
                for &p in row {
                    if !p.is_finite() || p < 0.0 {
                        return Err(Error::structure(format!(
                            "kernel entry {p} at state {s} action {a} out of range"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > CONSTRUCTION_TOL {
                    return Err(Error::structure(format!(
                        "kernel row at state {s} action {a} sums to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(Kernel { probs })
    }

    /// Kernel with every row uniform over the successor layer.
    pub fn uniform(layout: &Layout) -> Kernel {
        let mut probs = vec![0.0; layout.kernel_len()];
        for s in 0..layout.num_states() {
            let h = layout.layer_of(s);
            if h + 1 == layout.horizon() {
                continue;
            }
            let w = 1.0 / layout.layer_size(h + 1) as f64;
            for a in 0..layout.num_actions() {
                for v in &mut probs[layout.kernel_row_range(s, a)] {
                    *v = w;
                }
            }
        }
        Kernel { probs }
    }

    pub fn row(&self, layout: &Layout, s: usize, a: usize) -> &[f64] {
        &self.probs[layout.kernel_row_range(s, a)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn check(&self, layout: &Layout) -> Result<()> {
        if self.probs.len() != layout.kernel_len() {
            return Err(Error::structure("kernel does not match layout"));
        }
        Ok(())
    }
}

/// A layered MDP: layout plus its true transition kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredMdp {
    layout: Layout,
    transition: Kernel,
}

impl LayeredMdp {
    pub fn new(layout: Layout, transition: Kernel) -> Result<LayeredMdp> {
        transition.check(&layout)?;
        Ok(LayeredMdp { layout, transition })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn kernel(&self) -> &Kernel {
        &self.transition
    }
}

/// Action distribution per state, rows stored flat in pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Vec<f64>,
}

impl Policy {
    /// Validates that every row is a distribution within
    /// [`CONSTRUCTION_TOL`].
    pub fn new(layout: &Layout, probs: Vec<f64>) -> Result<Policy> {
        if probs.len() != layout.num_pairs() {
            return Err(Error::structure(format!(
                "policy length {} does not match layout ({} pairs)",
                probs.len(),
                layout.num_pairs()
            )));
        }
        let a = layout.num_actions();
        for s in 0..layout.num_states() {
            let row = &probs[s * a..(s + 1) * a];
            let mut sum = 0.0;
            for &p in row {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::structure(format!(
                        "policy entry {p} at state {s} out of range"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > CONSTRUCTION_TOL {
                return Err(Error::structure(format!(
                    "policy row at state {s} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Policy { probs })
    }

    pub fn uniform(layout: &Layout) -> Policy {
        let w = 1.0 / layout.num_actions() as f64;
        Policy { probs: vec![w; layout.num_pairs()] }
    }

    /// Deterministic policy from one chosen action per state.
    pub fn deterministic(layout: &Layout, actions: &[usize]) -> Result<Policy> {
        if actions.len() != layout.num_states() {
            return Err(Error::structure("one action per state required"));
        }
        let mut probs = vec![0.0; layout.num_pairs()];
        for (s, &a) in actions.iter().enumerate() {
            if a >= layout.num_actions() {
                return Err(Error::structure(format!("action {a} out of range at state {s}")));
            }
            probs[layout.pair(s, a)] = 1.0;
        }
        Ok(Policy { probs })
    }

    pub fn prob(&self, layout: &Layout, s: usize, a: usize) -> f64 {
        self.probs[layout.pair(s, a)]
    }

    pub fn row(&self, layout: &Layout, s: usize) -> &[f64] {
        let a = layout.num_actions();
        &self.probs[s * a..(s + 1) * a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// The chosen action per state if the policy is deterministic.
    pub fn as_deterministic(&self, layout: &Layout) -> Option<Vec<usize>> {
        let mut actions = Vec::with_capacity(layout.num_states());
        for s in 0..layout.num_states() {
            let row = self.row(layout, s);
            let mut hit = None;
            for (a, &p) in row.iter().enumerate() {
                if p == 1.0 {
                    hit = Some(a);
                } else if p != 0.0 {
                    return None;
                }
            }
            actions.push(hit?);
        }
        Some(actions)
    }

    fn check(&self, layout: &Layout) -> Result<()> {
        if self.probs.len() != layout.num_pairs() {
            return Err(Error::structure("policy does not match layout"));
        }
        Ok(())
    }
}

/// Visitation probabilities `rho(s, a)` stored flat in pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    values: Vec<f64>,
}

impl OccupancyMeasure {
    pub(crate) fn from_raw(values: Vec<f64>) -> OccupancyMeasure {
        OccupancyMeasure { values }
    }

    pub fn get(&self, layout: &Layout, s: usize, a: usize) -> f64 {
        self.values[layout.pair(s, a)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// State marginal `rho(s) = sum_a rho(s, a)`.
    pub fn state_marginal(&self, layout: &Layout, s: usize) -> f64 {
        let a = layout.num_actions();
        self.values[s * a..(s + 1) * a].iter().sum()
    }

    /// Checks nonnegativity, per-layer normalization, and flow consistency
    /// under `kernel`, all within `tol`.
    pub fn validate(&self, layout: &Layout, kernel: &Kernel, tol: f64) -> Result<()> {
        kernel.check(layout)?;
        if self.values.len() != layout.num_pairs() {
            return Err(Error::structure("occupancy does not match layout"));
        }
        for (p, &v) in self.values.iter().enumerate() {
            if !v.is_finite() || v < -tol {
                return Err(Error::structure(format!("occupancy entry {v} at pair {p}")));
            }
        }
        for h in 0..layout.horizon() {
            let mass: f64 = self.values[layout.pairs_in_layer(h)].iter().sum();
            if (mass - 1.0).abs() > tol {
                return Err(Error::structure(format!(
                    "layer {h} occupancy mass {mass}, expected 1"
                )));
            }
        }
        for h in 0..layout.horizon().saturating_sub(1) {
            let next = layout.states_in_layer(h + 1);
            let mut inflow = vec![0.0; next.len()];
            for s in layout.states_in_layer(h) {
                for a in 0..layout.num_actions() {
                    let x = self.values[layout.pair(s, a)];
                    if x == 0.0 {
                        continue;
                    }
                    let row = kernel.row(layout, s, a);
                    for (j, &p) in row.iter().enumerate() {
                        inflow[j] += x * p;
                    }
                }
            }
            for (j, s2) in next.clone().enumerate() {
                let out = self.state_marginal(layout, s2);
                if (inflow[j] - out).abs() > tol {
                    return Err(Error::structure(format!(
                        "flow mismatch at state {s2}: inflow {} vs marginal {out}",
                        inflow[j]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Value and action-value tables from [`evaluate_value`].
#[derive(Debug, Clone)]
pub struct ValueTables {
    /// Per state.
    pub v: Vec<f64>,
    /// Per state-action pair.
    pub q: Vec<f64>,
}

impl ValueTables {
    /// Expected episode loss from the initial state.
    pub fn at_start(&self) -> f64 {
        self.v[0]
    }
}

/// One rolled-out episode: one `(state, action, loss)` step per layer, plus
/// the visitation indicator over pairs.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    visited: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryStep {
    pub state: usize,
    pub action: usize,
    pub loss: f64,
}

impl Trajectory {
    pub fn visited(&self, layout: &Layout, s: usize, a: usize) -> bool {
        self.visited[layout.pair(s, a)]
    }

    pub fn visited_pairs(&self) -> &[bool] {
        &self.visited
    }
}

/// Forward dynamic program: visitation probabilities of `policy` under
/// `kernel`, layer by layer.
pub fn occupancy_from_policy(
    layout: &Layout,
    kernel: &Kernel,
    policy: &Policy,
) -> Result<OccupancyMeasure> {
    kernel.check(layout)?;
    policy.check(layout)?;
    let num_a = layout.num_actions();
    let mut state_mass = vec![0.0; layout.num_states()];
    state_mass[0] = 1.0;
    let mut values = vec![0.0; layout.num_pairs()];
    for h in 0..layout.horizon() {
        for s in layout.states_in_layer(h) {
            let m = state_mass[s];
            if m == 0.0 {
                continue;
            }
            for a in 0..num_a {
                let x = m * policy.prob(layout, s, a);
                values[layout.pair(s, a)] = x;
                if x == 0.0 || h + 1 == layout.horizon() {
                    continue;
                }
                let row = kernel.row(layout, s, a);
                let base = layout.states_in_layer(h + 1).start;
                for (j, &p) in row.iter().enumerate() {
                    state_mass[base + j] += x * p;
                }
            }
        }
    }
    Ok(OccupancyMeasure { values })
}

/// Conditional action distribution of an occupancy table. States with zero
/// marginal get the uniform row (they contribute no loss, and a fixed
/// convention keeps runs reproducible). Negative entries are rejected.
pub fn policy_from_occupancy(layout: &Layout, values: &[f64]) -> Result<Policy> {
    if values.len() != layout.num_pairs() {
        return Err(Error::structure("occupancy does not match layout"));
    }
    let num_a = layout.num_actions();
    let mut probs = vec![0.0; layout.num_pairs()];
    for s in 0..layout.num_states() {
        let row = &values[s * num_a..(s + 1) * num_a];
        let mut mass = 0.0;
        for &v in row {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::structure(format!(
                    "occupancy entry {v} at state {s} out of range"
                )));
            }
            mass += v;
        }
        let out = &mut probs[s * num_a..(s + 1) * num_a];
        if mass > 0.0 {
            for (o, &v) in out.iter_mut().zip(row) {
                *o = v / mass;
            }
        } else {
            for o in out.iter_mut() {
                *o = 1.0 / num_a as f64;
            }
        }
    }
    Ok(Policy { probs })
}

/// Backward recursion for value and action-value tables under `loss`:
/// `Q(s, a) = loss(s, a) + sum_{s'} P[s'|s, a] V(s')` with terminal value 0,
/// and `V(s) = sum_a pi(a|s) Q(s, a)`.
pub fn evaluate_value(
    layout: &Layout,
    kernel: &Kernel,
    policy: &Policy,
    loss: &[f64],
) -> Result<ValueTables> {
    kernel.check(layout)?;
    policy.check(layout)?;
    if loss.len() != layout.num_pairs() {
        return Err(Error::structure("loss table does not match layout"));
    }
    let mut v = vec![0.0; layout.num_states()];
    let mut q = vec![0.0; layout.num_pairs()];
    for h in (0..layout.horizon()).rev() {
        let last = h + 1 == layout.horizon();
        for s in layout.states_in_layer(h) {
            let mut vs = 0.0;
            for a in 0..layout.num_actions() {
                let p = layout.pair(s, a);
                let mut qa = loss[p];
                if !last {
                    let row = kernel.row(layout, s, a);
                    let base = layout.states_in_layer(h + 1).start;
                    for (j, &pr) in row.iter().enumerate() {
                        qa += pr * v[base + j];
                    }
                }
                q[p] = qa;
                vs += policy.prob(layout, s, a) * qa;
            }
            v[s] = vs;
        }
    }
    Ok(ValueTables { v, q })
}

/// Expected episode loss `<rho, loss>` of a policy, via the occupancy table.
pub fn expected_loss(
    layout: &Layout,
    kernel: &Kernel,
    policy: &Policy,
    loss: &[f64],
) -> Result<f64> {
    let occ = occupancy_from_policy(layout, kernel, policy)?;
    Ok(inner(occ.as_slice(), loss))
}

/// Plain inner product of two flat tables.
pub fn inner(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Single categorical draw by inverse CDF walk; `u` uniform in [0, 1).
fn draw_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    // Row sums can fall a hair below 1; land on the last supported entry.
    last_positive
}

/// Rolls out one episode: per layer, draw the action, then the loss at the
/// visited pair (bandit feedback), then the successor state. That draw order
/// is fixed, so a seeded generator replays the identical trajectory.
pub fn sample_trajectory<R: Rng>(
    layout: &Layout,
    kernel: &Kernel,
    policy: &Policy,
    mut loss_at: impl FnMut(usize, usize, &mut R) -> f64,
    rng: &mut R,
) -> Result<Trajectory> {
    kernel.check(layout)?;
    policy.check(layout)?;
    let mut steps = Vec::with_capacity(layout.horizon());
    let mut visited = vec![false; layout.num_pairs()];
    let mut s = 0usize;
    for h in 0..layout.horizon() {
        let a = draw_categorical(policy.row(layout, s), rng.gen::<f64>());
        let loss = loss_at(s, a, rng);
        steps.push(TrajectoryStep { state: s, action: a, loss });
        visited[layout.pair(s, a)] = true;
        if h + 1 < layout.horizon() {
            let j = draw_categorical(kernel.row(layout, s, a), rng.gen::<f64>());
            s = layout.states_in_layer(h + 1).start + j;
        }
    }
    Ok(Trajectory { steps, visited })
}

/// Random kernel with rows drawn from a symmetric Dirichlet via normalized
/// exponentials; used by the instance generator and the test suites.
pub fn random_kernel<R: Rng>(layout: &Layout, rng: &mut R) -> Kernel {
    let mut probs = vec![0.0; layout.kernel_len()];
    for s in 0..layout.num_states() {
        if layout.layer_of(s) + 1 == layout.horizon() {
            continue;
        }
        for a in 0..layout.num_actions() {
            let row = &mut probs[layout.kernel_row_range(s, a)];
            let mut sum = 0.0;
            for v in row.iter_mut() {
                let e = -(1.0 - rng.gen::<f64>()).ln();
                *v = e;
                sum += e;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
    }
    Kernel { probs }
}

/// Random stochastic policy, rows normalized exponentials.
pub fn random_policy<R: Rng>(layout: &Layout, rng: &mut R) -> Policy {
    let a = layout.num_actions();
    let mut probs = vec![0.0; layout.num_pairs()];
    for s in 0..layout.num_states() {
        let row = &mut probs[s * a..(s + 1) * a];
        let mut sum = 0.0;
        for v in row.iter_mut() {
            let e = -(1.0 - rng.gen::<f64>()).ln();
            *v = e;
            sum += e;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Policy { probs }
}

/// Formats a float with 17 significant digits, enough to round-trip f64
/// exactly through text.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the instance text format described in the module docs.
pub fn write_instance(mdp: &LayeredMdp) -> String {
    let layout = mdp.layout();
    let mut out = String::from("# layered mdp v1\n");
    out.push_str(&format!("horizon {}\n", layout.horizon()));
    out.push_str("layers");
    for &n in layout.layer_sizes() {
        out.push_str(&format!(" {n}"));
    }
    out.push('\n');
    out.push_str(&format!("actions {}\n", layout.num_actions()));
    for h in 0..layout.horizon().saturating_sub(1) {
        for s in layout.states_in_layer(h) {
            for a in 0..layout.num_actions() {
                out.push_str(&format!("row {h} {} {a} :", layout.index_in_layer(s)));
                for &p in mdp.kernel().row(layout, s, a) {
                    out.push(' ');
                    out.push_str(&format_f64(p));
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Parses the instance text format; see the module docs for the schema.
pub fn parse_instance(text: &str) -> Result<LayeredMdp> {
    let mut horizon: Option<usize> = None;
    let mut layers: Option<Vec<usize>> = None;
    let mut actions: Option<usize> = None;
    let mut rows: Vec<(usize, usize, usize, Vec<f64>)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let key = toks.next().unwrap();
        let ctx = |what: &str| format!("line {}: {what}", lineno + 1);
        match key {
            "horizon" => {
                let v = toks
                    .next()
                    .ok_or_else(|| Error::parse(ctx("missing horizon value")))?;
                horizon = Some(
                    v.parse()
                        .map_err(|_| Error::parse(ctx("bad horizon value")))?,
                );
            }
            "layers" => {
                let mut sizes = Vec::new();
                for t in toks.by_ref() {
                    sizes.push(t.parse().map_err(|_| Error::parse(ctx("bad layer size")))?);
                }
                layers = Some(sizes);
            }
            "actions" => {
                let v = toks
                    .next()
                    .ok_or_else(|| Error::parse(ctx("missing action count")))?;
                actions = Some(v.parse().map_err(|_| Error::parse(ctx("bad action count")))?);
            }
            "row" => {
                let mut idx = [0usize; 3];
                for slot in idx.iter_mut() {
                    let t = toks
                        .next()
                        .ok_or_else(|| Error::parse(ctx("row needs layer, index, action")))?;
                    *slot = t.parse().map_err(|_| Error::parse(ctx("bad row index")))?;
                }
                match toks.next() {
                    Some(":") => {}
                    _ => return Err(Error::parse(ctx("expected ':' after row indices"))),
                }
                let mut probs = Vec::new();
                for t in toks {
                    probs.push(
                        t.parse::<f64>()
                            .map_err(|_| Error::parse(ctx("bad probability")))?,
                    );
                }
                rows.push((idx[0], idx[1], idx[2], probs));
            }
            other => return Err(Error::parse(ctx(&format!("unknown key '{other}'")))),
        }
    }
    let layers = layers.ok_or_else(|| Error::parse("missing 'layers' line"))?;
    let actions = actions.ok_or_else(|| Error::parse("missing 'actions' line"))?;
    if let Some(h) = horizon {
        if h != layers.len() {
            return Err(Error::parse(format!(
                "horizon {h} does not match {} layer sizes",
                layers.len()
            )));
        }
    } else {
        return Err(Error::parse("missing 'horizon' line"));
    }
    let layout = Layout::new(&layers, actions)?;
    let mut probs = vec![f64::NAN; layout.kernel_len()];
    let mut seen = vec![false; layout.num_pairs()];
    for (h, i, a, row) in rows {
        if h + 1 >= layout.horizon() {
            return Err(Error::parse(format!("row for final layer {h} not allowed")));
        }
        if i >= layout.layer_size(h) || a >= actions {
            return Err(Error::parse(format!("row {h} {i} {a} out of range")));
        }
        let s = layout.state_id(h, i);
        if row.len() != layout.layer_size(h + 1) {
            return Err(Error::parse(format!(
                "row {h} {i} {a} has {} entries, layer {} holds {}",
                row.len(),
                h + 1,
                layout.layer_size(h + 1)
            )));
        }
        let p = layout.pair(s, a);
        if seen[p] {
            return Err(Error::parse(format!("duplicate row {h} {i} {a}")));
        }
        seen[p] = true;
        probs[layout.kernel_row_range(s, a)].copy_from_slice(&row);
    }
    for s in 0..layout.num_states() {
        if layout.layer_of(s) + 1 == layout.horizon() {
            continue;
        }
        for a in 0..actions {
            if !seen[layout.pair(s, a)] {
                return Err(Error::parse(format!(
                    "missing row {} {} {a}",
                    layout.layer_of(s),
                    layout.index_in_layer(s)
                )));
            }
        }
    }
    let kernel = Kernel::new(&layout, probs)?;
    LayeredMdp::new(layout, kernel)
}

/// Reads an instance from a file.
pub fn load_instance(path: &std::path::Path) -> Result<LayeredMdp> {
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text)
}

/// Writes an instance to a file in the canonical text format.
pub fn save_instance(mdp: &LayeredMdp, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, write_instance(mdp))?;
    Ok(())
}
