//! Shared fixtures for the benchmarks: a queue model and a confidence set
//! populated by uniformly random exploration.

use bilevel_core::balde::shaped_costs;
use bilevel_core::env::{QueueEnv, QueueEnvConfig};
use bilevel_core::estimation::{ConfidenceModel, ConfidenceSnapshot};
use bilevel_core::mdp::Policy;
use bilevel_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A planning problem as the scheduler sees it mid-run.
pub struct PlanningFixture {
    pub env: QueueEnv,
    pub snapshot: ConfidenceSnapshot,
    pub l_bar: Vec<f64>,
    pub d_bar: Vec<f64>,
    pub budget: f64,
}

impl PlanningFixture {
    /// Queue with `s_max + 1` states and horizon `horizon`, explored for `episodes`
    /// uniform-policy episodes.
    pub fn new(s_max: usize, horizon: usize, episodes: usize, radius_scale: f64, budget: f64) -> Result<Self> {
        let env = QueueEnv::new(QueueEnvConfig { s_max, horizon, ..QueueEnvConfig::default() })?;
        let mdp = env.true_mdp();
        let mut model =
            ConfidenceModel::new(mdp.dims(), 0.05, episodes.max(1))?.with_radius_scale(radius_scale)?;
        let uniform = Policy::uniform(mdp.dims());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 0..episodes {
            model.update_counts(&env.rollout(&uniform, k, 0, &mut rng)?)?;
        }
        let snapshot = model.snapshot();
        let (l_bar, d_bar) = shaped_costs(&snapshot, mdp.loss_table(), mdp.consumption_table(), budget, 0.0)?;
        Ok(Self { env, snapshot, l_bar, d_bar, budget })
    }

    pub fn lambda_cap(&self) -> f64 {
        self.env.config().horizon as f64 / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bilevel_core::lp::{solve_balde_step, PlannerKind};

    #[test]
    fn fixture_is_plannable_by_both_planners() {
        let f = PlanningFixture::new(4, 5, 300, 0.001, 3.0).unwrap();
        let initial = f.env.true_mdp().initial();
        let a = solve_balde_step(&f.snapshot, &f.l_bar, &f.d_bar, f.budget, initial, f.lambda_cap(), PlannerKind::Simplex)
            .unwrap();
        let b =
            solve_balde_step(&f.snapshot, &f.l_bar, &f.d_bar, f.budget, initial, f.lambda_cap(), PlannerKind::Parametric)
                .unwrap();
        assert_eq!(a.status, b.status);
        assert!((a.objective - b.objective).abs() < 1e-6 * (1.0 + a.objective.abs()));
    }
}
