//! Upper-level budget provisioner: projected online gradient steps on the
//! provisioning cost, corrected by the scheduler's budget multiplier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// `f_k(b) = M1 b + M2 (b - rho_k)^2 + M0 (b - rho_0)^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProvisioningCost {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub rho0: f64,
}

impl Default for ProvisioningCost {
    fn default() -> Self {
        Self { m0: 0.25, m1: 0.01, m2: 0.05, rho0: 5.0 }
    }
}

impl ProvisioningCost {
    pub fn value(&self, b: f64, rho: f64) -> f64 {
        self.m1 * b + self.m2 * (b - rho).powi(2) + self.m0 * (b - self.rho0).powi(2)
    }

    pub fn gradient(&self, b: f64, rho: f64) -> f64 {
        self.m1 + 2.0 * self.m2 * (b - rho) + 2.0 * self.m0 * (b - self.rho0)
    }

    /// `2 (M2 + M0)`.
    pub fn strong_convexity(&self) -> f64 {
        2.0 * (self.m2 + self.m0)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.m0, self.m1, self.m2].iter().any(|m| !(*m >= 0.0 && m.is_finite())) || !self.rho0.is_finite() {
            return Err(Error::Config(format!("cost coefficients must be finite and nonnegative: {self:?}")));
        }
        if !(self.strong_convexity() > 0.0) {
            return Err(Error::Config("M0 + M2 must be positive".into()));
        }
        Ok(())
    }
}

/// Demand target `rho_k = base + amplitude sin(2 pi k / period) + N(0, noise_sd^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemandProfile {
    pub base: f64,
    pub amplitude: f64,
    pub period: f64,
    pub noise_sd: f64,
}

impl Default for DemandProfile {
    fn default() -> Self {
        Self { base: 5.0, amplitude: 0.5, period: 2000.0, noise_sd: 0.1 }
    }
}

impl DemandProfile {
    /// Constant demand `rho`.
    pub fn stationary(rho: f64) -> Self {
        Self { base: rho, amplitude: 0.0, period: 1.0, noise_sd: 0.0 }
    }

    /// `rho_1, ..., rho_K` for a seed (element `k - 1` is episode `k`).
    pub fn sample(&self, episodes: usize, seed: u64) -> Result<Vec<f64>> {
        if !(self.period > 0.0) || !(self.noise_sd >= 0.0) {
            return Err(Error::Config(format!("invalid demand profile {self:?}")));
        }
        let noise = Normal::new(0.0, self.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(crate::experiment::DEMAND_STREAM);
        Ok((1..=episodes)
            .map(|k| {
                let phase = 2.0 * std::f64::consts::PI * k as f64 / self.period;
                self.base + self.amplitude * phase.sin() + noise.sample(&mut rng)
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlolConfig {
    /// `B_0`.
    pub min_budget: f64,
    /// `T`.
    pub max_budget: f64,
    /// `K_0`.
    pub warmup: usize,
    /// `theta_g` in the step size `1 / (theta_g (k - K_0 + 1))`.
    pub theta_g: f64,
    /// Switching-cost weight.
    pub alpha: f64,
    /// Weight of the scheduling loss.
    pub beta: f64,
    /// `G`: the update direction is clipped to `[-G, G]`.
    pub grad_clip: f64,
}

impl BlolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_budget > 0.0 && self.min_budget <= self.max_budget) {
            return Err(Error::Config(format!(
                "budget domain [{}, {}] is empty or not positive",
                self.min_budget, self.max_budget
            )));
        }
        if !(self.theta_g > 0.0) || !(self.grad_clip > 0.0) || !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config(format!("invalid upper-level parameters {self:?}")));
        }
        Ok(())
    }

    /// `eta_k = 1 / (theta_g (k - K_0 + 1))`.
    pub fn step_size(&self, k: usize) -> f64 {
        1.0 / (self.theta_g * (k as f64 - self.warmup as f64 + 1.0))
    }

    /// `alpha G^2 pi^2 / (6 theta_g^2)`: cap on the post-warm-up switching cost.
    pub fn switching_bound(&self) -> f64 {
        self.alpha * self.grad_clip.powi(2) * std::f64::consts::PI.powi(2) / (6.0 * self.theta_g.powi(2))
    }
}

/// One projected update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetStep {
    /// Clipped direction `h`.
    pub direction: f64,
    pub step_size: f64,
    pub next: f64,
    /// `alpha (b_{k+1} - b_k)^2`.
    pub switching_cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlolState {
    config: BlolConfig,
    budget: f64,
    previous: f64,
}

impl BlolState {
    pub fn new(config: BlolConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { budget: config.min_budget, previous: 0.0, config })
    }

    pub fn config(&self) -> &BlolConfig {
        &self.config
    }

    /// Budget `b_k` for the current episode.
    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Budget of the previous episode (`b_0 = 0`).
    pub fn previous(&self) -> f64 {
        self.previous
    }

    fn project(&self, b: f64) -> f64 {
        b.clamp(self.config.min_budget, self.config.max_budget)
    }

    fn advance(&mut self, next: f64, direction: f64, step_size: f64) -> BudgetStep {
        let switching_cost = self.config.alpha * (next - self.budget).powi(2);
        self.previous = self.budget;
        self.budget = next;
        BudgetStep { direction, step_size, next, switching_cost }
    }

    /// Closes episode `k`: `b_{k+1} = B_0` during warm-up, otherwise
    /// `Proj(b_k - eta_k clip(grad_f - beta lambda))`.
    pub fn update_budget(&mut self, grad_f: f64, lambda: f64, k: usize) -> Result<BudgetStep> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("multiplier {lambda} must be nonnegative")));
        }
        if k <= self.config.warmup {
            let b0 = self.config.min_budget;
            return Ok(self.advance(b0, 0.0, 0.0));
        }
        let g = self.config.grad_clip;
        let direction = (grad_f - self.config.beta * lambda).clamp(-g, g);
        let eta = self.config.step_size(k);
        let next = self.project(self.budget - eta * direction);
        Ok(self.advance(next, direction, eta))
    }

    /// Switching-aware step used by the decoupled baseline: the gradient step on
    /// `f_k` is taken implicitly through `alpha (b - b_k)^2`, so
    /// `b_{k+1} = Proj(b_k - eta_k clip(grad_f) / (1 + 2 alpha eta_k))`.
    pub fn update_budget_switching(&mut self, grad_f: f64, k: usize) -> BudgetStep {
        if k <= self.config.warmup {
            let b0 = self.config.min_budget;
            return self.advance(b0, 0.0, 0.0);
        }
        let g = self.config.grad_clip;
        let direction = grad_f.clamp(-g, g);
        let eta = self.config.step_size(k);
        let damped = eta / (1.0 + 2.0 * self.config.alpha * eta);
        let next = self.project(self.budget - damped * direction);
        self.advance(next, direction, eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_upper(warmup: usize) -> BlolConfig {
        BlolConfig {
            min_budget: 2.0,
            max_budget: 10.0,
            warmup,
            theta_g: ProvisioningCost::default().strong_convexity(),
            alpha: 0.5,
            beta: 1.0,
            grad_clip: 50.0,
        }
    }

    #[test]
    fn gradient_at_the_demand_center_is_the_linear_coefficient() {
        let c = ProvisioningCost::default();
        assert!((c.gradient(5.0, 5.0) - 0.01).abs() < 1e-15);
        assert!((c.strong_convexity() - 0.6).abs() < 1e-15);
        let linear = ProvisioningCost { m0: 0.0, m2: 0.0, ..c };
        for b in [2.0, 3.3, 9.0] {
            assert_eq!(linear.gradient(b, 7.0), linear.m1);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let c = ProvisioningCost::default();
        let eps = 1e-5;
        for &(b, rho) in &[(2.0, 5.3), (4.7, 4.9), (9.5, 5.5)] {
            let fd = (c.value(b + eps, rho) - c.value(b - eps, rho)) / (2.0 * eps);
            assert!((fd - c.gradient(b, rho)).abs() < 1e-6);
        }
    }

    #[test]
    fn one_update_with_default_constants() {
        // eta = 0.1 at k = K_0 + 1 when theta_g = 5
        let cfg = BlolConfig { theta_g: 5.0, ..default_upper(0) };
        let mut st = BlolState::new(cfg).unwrap();
        st.budget = 5.0;
        let step = st.update_budget(0.01, 0.5, 1).unwrap();
        assert!((step.step_size - 0.1).abs() < 1e-15);
        assert!((step.direction + 0.49).abs() < 1e-15);
        assert!((step.next - 5.049).abs() < 1e-12);
        assert!((step.switching_cost - 0.5 * 0.049f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn zero_signal_is_a_fixed_point_and_projection_clamps() {
        let mut st = BlolState::new(default_upper(0)).unwrap();
        st.budget = 6.5;
        assert_eq!(st.update_budget(0.0, 0.0, 1).unwrap().next, 6.5);
        st.budget = 2.01;
        assert_eq!(st.update_budget(40.0, 0.0, 2).unwrap().next, 2.0);
        st.budget = 9.99;
        assert_eq!(st.update_budget(-40.0, 0.0, 3).unwrap().next, 10.0);
        assert!(st.update_budget(0.0, -1.0, 4).is_err());
    }

    #[test]
    fn warmup_holds_the_minimum_budget() {
        let mut st = BlolState::new(default_upper(5)).unwrap();
        assert_eq!(st.budget(), 2.0);
        assert_eq!(st.previous(), 0.0);
        for k in 1..=5 {
            let step = st.update_budget(-3.0, 4.0, k).unwrap();
            assert_eq!(step.next, 2.0);
        }
        assert!(st.update_budget(-3.0, 4.0, 6).unwrap().next > 2.0);
    }

    #[test]
    fn huge_switching_weight_freezes_the_decoupled_update() {
        let cfg = BlolConfig { alpha: 1e12, ..default_upper(3) };
        let mut st = BlolState::new(cfg).unwrap();
        for k in 1..200 {
            let next = st.update_budget_switching(-10.0, k).next;
            assert!((next - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn demand_profile_is_seeded() {
        let d = DemandProfile::default();
        let a = d.sample(100, 4).unwrap();
        assert_eq!(a, d.sample(100, 4).unwrap());
        assert_ne!(a, d.sample(100, 5).unwrap());
        let flat = DemandProfile::stationary(5.5).sample(10, 1).unwrap();
        assert!(flat.iter().all(|&r| r == 5.5));
        let long = d.sample(20_000, 1).unwrap();
        let mean = long.iter().sum::<f64>() / long.len() as f64;
        assert!((mean - 5.0).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn steps_respect_domain_and_clip(
            grads in proptest::collection::vec(-80.0f64..80.0, 60),
            lambdas in proptest::collection::vec(0.0f64..20.0, 60),
            warmup in 0usize..10,
        ) {
            let cfg = default_upper(warmup);
            let mut st = BlolState::new(cfg).unwrap();
            let mut path = 0.0;
            for (i, (g, l)) in grads.iter().zip(&lambdas).enumerate() {
                let k = i + 1;
                let before = st.budget();
                let step = st.update_budget(*g, *l, k).unwrap();
                prop_assert!(step.next >= 2.0 && step.next <= 10.0);
                if k > warmup {
                    prop_assert!((step.next - before).abs() <= cfg.grad_clip * cfg.step_size(k) + 1e-12);
                    path += step.switching_cost;
                }
                // a nonnegative multiplier never lowers the budget below the cost-only step
                let mut alone = BlolState::new(cfg).unwrap();
                alone.budget = before;
                let without = alone.update_budget(*g, 0.0, k).unwrap().next;
                prop_assert!(step.next >= without - 1e-12);
            }
            prop_assert!(path <= cfg.switching_bound() + 1e-9);
        }
    }
}
