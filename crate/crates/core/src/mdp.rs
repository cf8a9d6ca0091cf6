//! Finite-horizon tabular MDPs, time-indexed policies and occupancy measures.
//!
//! Every table is stored dense and time-indexed. Stage indices are zero-based
//! internally (`t = 0..horizon`), so slot `t` in the docs of the higher level
//! modules is `t - 1` here.

use rand::Rng;

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-9;

/// State, action and horizon sizes of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(Error::Dimension(format!(
                "states, actions and horizon must be positive (got {states}, {actions}, {horizon})"
            )));
        }
        Ok(Self { states, actions, horizon })
    }

    /// Number of `(t, s, a)` cells.
    pub fn stage_action_len(&self) -> usize {
        self.horizon * self.states * self.actions
    }

    /// Number of `(t, s, a, s')` cells.
    pub fn transition_len(&self) -> usize {
        self.stage_action_len() * self.states
    }

    #[inline]
    pub fn sa(&self, t: usize, s: usize, a: usize) -> usize {
        (t * self.states + s) * self.actions + a
    }

    #[inline]
    pub fn sas(&self, t: usize, s: usize, a: usize, next: usize) -> usize {
        self.sa(t, s, a) * self.states + next
    }

    fn expect(&self, other: &Dims, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::Dimension(format!("{what}: expected {self:?}, found {other:?}")));
        }
        Ok(())
    }
}

fn check_distribution(row: &[f64], what: impl Fn() -> String) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Probability(format!("{}: entry {p} is not a probability", what())));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Probability(format!("{}: sums to {sum}", what())));
    }
    Ok(())
}

/// Ground-truth episodic model with time-inhomogeneous kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    dims: Dims,
    kernel: Vec<f64>,
    loss: Vec<f64>,
    consumption: Vec<f64>,
    initial: Vec<f64>,
}

impl TabularMdp {
    /// Validates and builds a model. Tables are rejected rather than renormalized.
    ///
    /// `kernel` is laid out `[t][s][a][s']`, `loss` and `consumption` `[t][s][a]`.
    pub fn new(
        dims: Dims,
        kernel: Vec<f64>,
        loss: Vec<f64>,
        consumption: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if kernel.len() != dims.transition_len() {
            return Err(Error::Dimension(format!(
                "kernel has {} entries, expected {}",
                kernel.len(),
                dims.transition_len()
            )));
        }
        for (name, table) in [("loss", &loss), ("consumption", &consumption)] {
            if table.len() != dims.stage_action_len() {
                return Err(Error::Dimension(format!(
                    "{name} has {} entries, expected {}",
                    table.len(),
                    dims.stage_action_len()
                )));
            }
            if let Some(bad) = table.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Domain(format!("{name} entry {bad} outside [0, 1]")));
            }
        }
        if initial.len() != dims.states {
            return Err(Error::Dimension(format!(
                "initial distribution has {} entries, expected {}",
                initial.len(),
                dims.states
            )));
        }
        check_distribution(&initial, || "initial distribution".to_string())?;
        for (cell, row) in kernel.chunks_exact(dims.states).enumerate() {
            check_distribution(row, || {
                let a = cell % dims.actions;
                let s = (cell / dims.actions) % dims.states;
                let t = cell / (dims.actions * dims.states);
                format!("kernel row (t={t}, s={s}, a={a})")
            })?;
        }
        Ok(Self { dims, kernel, loss, consumption, initial })
    }

    /// Builds a model whose kernel and costs are the same at every stage.
    ///
    /// `kernel` is `[s][a][s']`, `loss`/`consumption` are `[s][a]`.
    pub fn stationary(
        states: usize,
        actions: usize,
        horizon: usize,
        kernel: &[f64],
        loss: &[f64],
        consumption: &[f64],
        initial: Vec<f64>,
    ) -> Result<Self> {
        let dims = Dims::new(states, actions, horizon)?;
        let repeat = |table: &[f64], len: usize| -> Result<Vec<f64>> {
            if table.len() != len {
                return Err(Error::Dimension(format!(
                    "stationary table has {} entries, expected {len}",
                    table.len()
                )));
            }
            Ok(table.iter().copied().cycle().take(len * horizon).collect())
        };
        let kernel = repeat(kernel, states * actions * states)?;
        let loss = repeat(loss, states * actions)?;
        let consumption = repeat(consumption, states * actions)?;
        Self::new(dims, kernel, loss, consumption, initial)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Next-state distribution `P_t(. | s, a)`.
    pub fn kernel(&self, t: usize, s: usize, a: usize) -> &[f64] {
        let start = self.dims.sas(t, s, a, 0);
        &self.kernel[start..start + self.dims.states]
    }

    pub fn loss(&self, t: usize, s: usize, a: usize) -> f64 {
        self.loss[self.dims.sa(t, s, a)]
    }

    pub fn consumption(&self, t: usize, s: usize, a: usize) -> f64 {
        self.consumption[self.dims.sa(t, s, a)]
    }

    pub fn loss_table(&self) -> &[f64] {
        &self.loss
    }

    pub fn consumption_table(&self) -> &[f64] {
        &self.consumption
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }
}

/// Time-indexed stochastic policy `pi_t(a | s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    dims: Dims,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(dims: Dims, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != dims.stage_action_len() {
            return Err(Error::Dimension(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                dims.stage_action_len()
            )));
        }
        for (cell, row) in probs.chunks_exact(dims.actions).enumerate() {
            check_distribution(row, || {
                format!("policy row (t={}, s={})", cell / dims.states, cell % dims.states)
            })?;
        }
        Ok(Self { dims, probs })
    }

    /// Deterministic policy choosing `choose(t, s)` at each stage and state.
    pub fn deterministic(dims: Dims, mut choose: impl FnMut(usize, usize) -> usize) -> Result<Self> {
        let mut probs = vec![0.0; dims.stage_action_len()];
        for t in 0..dims.horizon {
            for s in 0..dims.states {
                let a = choose(t, s);
                if a >= dims.actions {
                    return Err(Error::Domain(format!("action {a} out of range at (t={t}, s={s})")));
                }
                probs[dims.sa(t, s, a)] = 1.0;
            }
        }
        Ok(Self { dims, probs })
    }

    pub fn uniform(dims: Dims) -> Self {
        let p = 1.0 / dims.actions as f64;
        Self { dims, probs: vec![p; dims.stage_action_len()] }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn probs(&self, t: usize, s: usize) -> &[f64] {
        let start = self.dims.sa(t, s, 0);
        &self.probs[start..start + self.dims.actions]
    }

    pub fn prob(&self, t: usize, s: usize, a: usize) -> f64 {
        self.probs[self.dims.sa(t, s, a)]
    }

    pub fn table(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, t: usize, s: usize, rng: &mut R) -> usize {
        sample_index(self.probs(t, s), rng)
    }
}

/// Inverse-CDF draw from a probability row. Falls back to the last positive entry
/// when rounding leaves the cumulative sum marginally below `u`.
pub(crate) fn sample_index<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Augmented occupancy measure `q_t(s, a, s')`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMeasure {
    dims: Dims,
    values: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.transition_len() {
            return Err(Error::Dimension(format!(
                "occupancy has {} entries, expected {}",
                values.len(),
                dims.transition_len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("occupancy entry {bad} is negative or not finite")));
        }
        Ok(Self { dims, values })
    }

    /// Builds from solver output, clamping roundoff-level negatives to zero.
    pub(crate) fn from_solver(dims: Dims, mut values: Vec<f64>) -> Self {
        for v in &mut values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Self { dims, values }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, t: usize, s: usize, a: usize, next: usize) -> f64 {
        self.values[self.dims.sas(t, s, a, next)]
    }

    /// State-action marginal `w_t(s, a) = sum_{s'} q_t(s, a, s')`.
    pub fn state_action(&self, t: usize, s: usize, a: usize) -> f64 {
        let start = self.dims.sas(t, s, a, 0);
        self.values[start..start + self.dims.states].iter().sum()
    }

    pub fn state_marginal(&self, t: usize, s: usize) -> f64 {
        (0..self.dims.actions).map(|a| self.state_action(t, s, a)).sum()
    }

    /// Mass arriving in `s` at stage `t + 1`.
    pub fn inflow(&self, t: usize, s: usize) -> f64 {
        let mut total = 0.0;
        for prev in 0..self.dims.states {
            for a in 0..self.dims.actions {
                total += self.value(t, prev, a, s);
            }
        }
        total
    }

    pub fn stage_mass(&self, t: usize) -> f64 {
        let len = self.dims.states * self.dims.actions * self.dims.states;
        self.values[t * len..(t + 1) * len].iter().sum()
    }

    /// `<r, w>` for a `[t][s][a]` cost table.
    pub fn inner(&self, table: &[f64]) -> f64 {
        debug_assert_eq!(table.len(), self.dims.stage_action_len());
        self.values
            .chunks_exact(self.dims.states)
            .zip(table)
            .map(|(row, r)| r * row.iter().sum::<f64>())
            .sum()
    }

    /// Largest violation of the per-stage mass and flow-conservation constraints.
    pub fn flow_residual(&self, initial: &[f64]) -> f64 {
        let d = self.dims;
        let mut worst: f64 = 0.0;
        for t in 0..d.horizon {
            worst = worst.max((self.stage_mass(t) - 1.0).abs());
            for s in 0..d.states {
                let incoming = if t == 0 { initial[s] } else { self.inflow(t - 1, s) };
                worst = worst.max((self.state_marginal(t, s) - incoming).abs());
            }
        }
        worst
    }
}

/// Expected cumulative loss and consumption of a policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueResult {
    pub expected_loss: f64,
    pub expected_consumption: f64,
}

impl ValueResult {
    pub fn is_feasible(&self, budget: f64) -> bool {
        self.expected_consumption <= budget
    }
}

/// Exact values by forward propagation of the state distribution.
pub fn evaluate_policy(mdp: &TabularMdp, policy: &Policy) -> Result<ValueResult> {
    let d = mdp.dims();
    d.expect(&policy.dims(), "policy shape")?;
    let mut dist = mdp.initial().to_vec();
    let mut next = vec![0.0; d.states];
    let (mut loss, mut cons) = (0.0, 0.0);
    for t in 0..d.horizon {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (a, &p) in policy.probs(t, s).iter().enumerate() {
                let w = mass * p;
                if w == 0.0 {
                    continue;
                }
                loss += w * mdp.loss(t, s, a);
                cons += w * mdp.consumption(t, s, a);
                for (n, &pn) in mdp.kernel(t, s, a).iter().enumerate() {
                    next[n] += w * pn;
                }
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    Ok(ValueResult { expected_loss: loss, expected_consumption: cons })
}

/// Exact values by backward induction over value-to-go tables.
pub fn evaluate_policy_backward(mdp: &TabularMdp, policy: &Policy) -> Result<ValueResult> {
    let d = mdp.dims();
    d.expect(&policy.dims(), "policy shape")?;
    let mut v_loss = vec![0.0; d.states];
    let mut v_cons = vec![0.0; d.states];
    for t in (0..d.horizon).rev() {
        let mut nl = vec![0.0; d.states];
        let mut nc = vec![0.0; d.states];
        for s in 0..d.states {
            for (a, &p) in policy.probs(t, s).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let row = mdp.kernel(t, s, a);
                let cont_l: f64 = row.iter().zip(&v_loss).map(|(pn, v)| pn * v).sum();
                let cont_c: f64 = row.iter().zip(&v_cons).map(|(pn, v)| pn * v).sum();
                nl[s] += p * (mdp.loss(t, s, a) + cont_l);
                nc[s] += p * (mdp.consumption(t, s, a) + cont_c);
            }
        }
        v_loss = nl;
        v_cons = nc;
    }
    let rho = mdp.initial();
    Ok(ValueResult {
        expected_loss: rho.iter().zip(&v_loss).map(|(p, v)| p * v).sum(),
        expected_consumption: rho.iter().zip(&v_cons).map(|(p, v)| p * v).sum(),
    })
}

/// `q_t(s, a, s') = Pr(s_t = s, a_t = a) P_t(s' | s, a)`.
pub fn occupancy_of_policy(mdp: &TabularMdp, policy: &Policy) -> Result<OccupancyMeasure> {
    let d = mdp.dims();
    d.expect(&policy.dims(), "policy shape")?;
    let mut values = vec![0.0; d.transition_len()];
    let mut dist = mdp.initial().to_vec();
    for t in 0..d.horizon {
        let mut next = vec![0.0; d.states];
        for s in 0..d.states {
            for a in 0..d.actions {
                let w = dist[s] * policy.prob(t, s, a);
                if w == 0.0 {
                    continue;
                }
                for (n, &pn) in mdp.kernel(t, s, a).iter().enumerate() {
                    let v = w * pn;
                    values[d.sas(t, s, a, n)] = v;
                    next[n] += v;
                }
            }
        }
        dist = next;
    }
    Ok(OccupancyMeasure { dims: d, values })
}

/// Below this state mass a row is treated as unreached and completed uniformly.
pub const UNREACHED_MASS: f64 = 1e-12;

/// Normalizes an occupancy measure into the policy that generates it.
pub fn policy_from_occupancy(q: &OccupancyMeasure) -> Policy {
    let d = q.dims();
    let mut probs = vec![0.0; d.stage_action_len()];
    let uniform = 1.0 / d.actions as f64;
    for t in 0..d.horizon {
        for s in 0..d.states {
            let marg: Vec<f64> = (0..d.actions).map(|a| q.state_action(t, s, a)).collect();
            let total: f64 = marg.iter().sum();
            for a in 0..d.actions {
                probs[d.sa(t, s, a)] = if total > UNREACHED_MASS { marg[a] / total } else { uniform };
            }
        }
    }
    Policy { dims: d, probs }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;

    pub fn random_distribution<R: Rng>(rng: &mut R, n: usize, sparse: bool) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n)
            .map(|_| if sparse && rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() + 1e-3 })
            .collect();
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        let sum: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= sum);
        // absorb rounding so the row passes the strict constructor check
        let drift = 1.0 - v.iter().sum::<f64>();
        let i = v.iter().position(|x| *x > 0.0).unwrap();
        v[i] += drift;
        v
    }

    pub fn random_mdp<R: Rng>(rng: &mut R, dims: Dims) -> TabularMdp {
        let mut kernel = Vec::with_capacity(dims.transition_len());
        for _ in 0..dims.stage_action_len() {
            kernel.extend(random_distribution(rng, dims.states, true));
        }
        let loss = (0..dims.stage_action_len()).map(|_| rng.random::<f64>()).collect();
        let cons = (0..dims.stage_action_len()).map(|_| rng.random::<f64>()).collect();
        let initial = random_distribution(rng, dims.states, false);
        TabularMdp::new(dims, kernel, loss, cons, initial).unwrap()
    }

    pub fn random_policy<R: Rng>(rng: &mut R, dims: Dims) -> Policy {
        let mut probs = Vec::with_capacity(dims.stage_action_len());
        for _ in 0..dims.horizon * dims.states {
            probs.extend(random_distribution(rng, dims.actions, false));
        }
        Policy::new(dims, probs).unwrap()
    }

    /// Exhaustive expectation over every state/action trajectory.
    pub fn brute_force_values(mdp: &TabularMdp, policy: &Policy) -> (f64, f64) {
        fn walk(
            mdp: &TabularMdp,
            policy: &Policy,
            t: usize,
            s: usize,
            prob: f64,
            acc: (f64, f64),
            out: &mut (f64, f64),
        ) {
            let d = mdp.dims();
            if t == d.horizon {
                out.0 += prob * acc.0;
                out.1 += prob * acc.1;
                return;
            }
            for a in 0..d.actions {
                let pa = policy.prob(t, s, a);
                if pa == 0.0 {
                    continue;
                }
                let acc2 = (acc.0 + mdp.loss(t, s, a), acc.1 + mdp.consumption(t, s, a));
                for n in 0..d.states {
                    let pn = mdp.kernel(t, s, a)[n];
                    if pn > 0.0 {
                        walk(mdp, policy, t + 1, n, prob * pa * pn, acc2, out);
                    }
                }
            }
        }
        let mut out = (0.0, 0.0);
        for (s, &p) in mdp.initial().iter().enumerate() {
            if p > 0.0 {
                walk(mdp, policy, 0, s, p, (0.0, 0.0), &mut out);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_uniform(horizon: usize) -> TabularMdp {
        TabularMdp::stationary(
            2,
            2,
            horizon,
            &[0.5; 8],
            &[0.2, 0.4, 0.6, 0.8],
            &[0.0, 1.0, 0.0, 1.0],
            vec![0.3, 0.7],
        )
        .unwrap()
    }

    #[test]
    fn constructor_rejects_unnormalized_rows() {
        let err = TabularMdp::stationary(1, 1, 1, &[0.9], &[0.0], &[0.0], vec![1.0]);
        assert!(matches!(err, Err(Error::Probability(_))));
        let err = TabularMdp::stationary(1, 1, 1, &[1.0], &[1.5], &[0.0], vec![1.0]);
        assert!(matches!(err, Err(Error::Domain(_))));
        let err = TabularMdp::stationary(2, 1, 1, &[1.0, 0.0, 0.0, 1.0], &[0.0; 2], &[0.0; 2], vec![0.5, 0.6]);
        assert!(matches!(err, Err(Error::Probability(_))));
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let mdp = two_state_uniform(2);
        let policy = Policy::uniform(Dims::new(2, 2, 3).unwrap());
        assert!(matches!(evaluate_policy(&mdp, &policy), Err(Error::Dimension(_))));
        assert!(matches!(occupancy_of_policy(&mdp, &policy), Err(Error::Dimension(_))));
    }

    #[test]
    fn uniform_occupancy_is_product_at_first_stage() {
        let mdp = two_state_uniform(3);
        let q = occupancy_of_policy(&mdp, &Policy::uniform(mdp.dims())).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                for n in 0..2 {
                    assert!((q.value(0, s, a, n) - mdp.initial()[s] * 0.25).abs() < 1e-15);
                }
            }
        }
        assert!(q.flow_residual(mdp.initial()) < 1e-12);
    }

    #[test]
    fn deterministic_model_gives_indicator_occupancy() {
        // two states, the action picks the next state
        let kernel = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let mdp = TabularMdp::stationary(2, 2, 4, &kernel, &[0.5; 4], &[0.0; 4], vec![1.0, 0.0]).unwrap();
        let policy = Policy::deterministic(mdp.dims(), |t, _| (t + 1) % 2).unwrap();
        let q = occupancy_of_policy(&mdp, &policy).unwrap();
        for t in 0..4 {
            let ones = (0..mdp.dims().states * 4)
                .filter(|&i| q.values()[t * 8 + i] == 1.0)
                .count();
            let nonzero = q.values()[t * 8..(t + 1) * 8].iter().filter(|v| **v != 0.0).count();
            assert_eq!((ones, nonzero), (1, 1), "stage {t}");
        }
    }

    #[test]
    fn indicator_occupancy_recovers_deterministic_action() {
        let dims = Dims::new(3, 2, 1).unwrap();
        let mut values = vec![0.0; dims.transition_len()];
        values[dims.sas(0, 1, 1, 2)] = 1.0;
        let policy = policy_from_occupancy(&OccupancyMeasure::new(dims, values).unwrap());
        assert_eq!(policy.probs(0, 1), &[0.0, 1.0]);
        // unreached states complete uniformly
        assert_eq!(policy.probs(0, 0), &[0.5, 0.5]);
        assert_eq!(policy.probs(0, 2), &[0.5, 0.5]);
    }

    #[test]
    fn forward_backward_and_brute_force_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dims = Dims::new(2, 2, 2).unwrap();
        for _ in 0..20 {
            let mdp = random_mdp(&mut rng, dims);
            let policy = random_policy(&mut rng, dims);
            let fwd = evaluate_policy(&mdp, &policy).unwrap();
            let bwd = evaluate_policy_backward(&mdp, &policy).unwrap();
            let (bl, bc) = brute_force_values(&mdp, &policy);
            assert!((fwd.expected_loss - bl).abs() < 1e-9);
            assert!((fwd.expected_consumption - bc).abs() < 1e-9);
            assert!((fwd.expected_loss - bwd.expected_loss).abs() < 1e-9);
            assert!((fwd.expected_consumption - bwd.expected_consumption).abs() < 1e-9);
        }
    }

    #[test]
    fn occupancy_inner_products_match_values_on_three_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = Dims::new(3, 2, 4).unwrap();
        let mdp = random_mdp(&mut rng, dims);
        let policy = random_policy(&mut rng, dims);
        let v = evaluate_policy(&mdp, &policy).unwrap();
        let q = occupancy_of_policy(&mdp, &policy).unwrap();
        assert!((q.inner(mdp.consumption_table()) - v.expected_consumption).abs() < 1e-9);
        assert!((q.inner(mdp.loss_table()) - v.expected_loss).abs() < 1e-9);
    }

    #[test]
    fn feasibility_is_monotone_in_budget() {
        let v = ValueResult { expected_loss: 1.0, expected_consumption: 2.5 };
        assert!(!v.is_feasible(2.0));
        assert!(v.is_feasible(2.5));
        assert!(v.is_feasible(7.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn occupancy_is_consistent_and_round_trips(seed in any::<u64>(), s in 1usize..4, a in 1usize..4, t in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = Dims::new(s, a, t).unwrap();
            let mdp = random_mdp(&mut rng, dims);
            let policy = random_policy(&mut rng, dims);
            let q = occupancy_of_policy(&mdp, &policy).unwrap();
            prop_assert!(q.flow_residual(mdp.initial()) < 1e-9);
            let v = evaluate_policy(&mdp, &policy).unwrap();
            prop_assert!((q.inner(mdp.loss_table()) - v.expected_loss).abs() < 1e-9);
            prop_assert!((q.inner(mdp.consumption_table()) - v.expected_consumption).abs() < 1e-9);
            prop_assert!(v.expected_loss <= t as f64 + 1e-12);

            let back = policy_from_occupancy(&q);
            for tt in 0..t {
                for ss in 0..s {
                    if q.state_marginal(tt, ss) > 1e-9 {
                        for aa in 0..a {
                            prop_assert!((back.prob(tt, ss, aa) - policy.prob(tt, ss, aa)).abs() < 1e-8);
                        }
                    }
                }
            }
        }

        #[test]
        fn small_models_match_enumeration(seed in any::<u64>(), s in 1usize..3, a in 1usize..3, t in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = Dims::new(s, a, t).unwrap();
            let mdp = random_mdp(&mut rng, dims);
            let policy = random_policy(&mut rng, dims);
            let v = evaluate_policy(&mdp, &policy).unwrap();
            let (bl, bc) = brute_force_values(&mdp, &policy);
            prop_assert!((v.expected_loss - bl).abs() < 1e-9);
            prop_assert!((v.expected_consumption - bc).abs() < 1e-9);
        }
    }
}
