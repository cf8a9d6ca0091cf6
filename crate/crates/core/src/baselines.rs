//! Comparison learners: tabular Q-learning for the decoupled baseline.
//!
//! The fixed-budget baseline is the safe scheduler run at a constant budget and
//! needs no code of its own; both run loops live in [`crate::experiment`].

use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::mdp::{Dims, Policy};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QLearningConfig {
    pub learning_rate: f64,
    pub epsilon_floor: f64,
    /// `epsilon_k = max(floor, decay^k)`.
    pub epsilon_decay: f64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, epsilon_floor: 0.05, epsilon_decay: 0.995 }
    }
}

impl QLearningConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate <= 1.0
            && (0.0..=1.0).contains(&self.epsilon_floor)
            && (0.0..=1.0).contains(&self.epsilon_decay);
        if !ok {
            return Err(Error::Config(format!("invalid Q-learning parameters {self:?}")));
        }
        Ok(())
    }

    pub fn epsilon(&self, k: usize) -> f64 {
        self.epsilon_decay.powi(k.min(i32::MAX as usize) as i32).max(self.epsilon_floor)
    }
}

/// Horizon-indexed cost-minimizing Q-table, initialized to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct QLearner {
    dims: Dims,
    config: QLearningConfig,
    q: Vec<f64>,
}

impl QLearner {
    pub fn new(dims: Dims, config: QLearningConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { dims, config, q: vec![0.0; dims.stage_action_len()] })
    }

    pub fn q(&self, t: usize, s: usize, a: usize) -> f64 {
        self.q[self.dims.sa(t, s, a)]
    }

    /// Lowest-index action minimizing `Q_t(s, .)`.
    pub fn greedy_action(&self, t: usize, s: usize) -> usize {
        let row = &self.q[self.dims.sa(t, s, 0)..self.dims.sa(t, s, 0) + self.dims.actions];
        let mut best = 0;
        for (a, v) in row.iter().enumerate() {
            if *v < row[best] {
                best = a;
            }
        }
        best
    }

    pub fn greedy_policy(&self) -> Policy {
        Policy::deterministic(self.dims, |t, s| self.greedy_action(t, s)).expect("greedy action in range")
    }

    /// Epsilon-greedy behavior policy for episode `k`.
    pub fn behavior_policy(&self, k: usize) -> Policy {
        let d = self.dims;
        let eps = self.config.epsilon(k);
        let explore = eps / d.actions as f64;
        let mut probs = vec![explore; d.stage_action_len()];
        for t in 0..d.horizon {
            for s in 0..d.states {
                probs[d.sa(t, s, self.greedy_action(t, s))] += 1.0 - eps;
            }
        }
        Policy::new(d, probs).expect("epsilon-greedy rows are distributions")
    }

    /// Applies `Q <- Q + lr (l + min_a' Q_{t+1}(s', a') - Q)` along the trajectory.
    pub fn update(&mut self, trajectory: &Trajectory) -> Result<()> {
        let d = self.dims;
        for st in &trajectory.steps {
            if st.t >= d.horizon || st.state >= d.states || st.action >= d.actions || st.next_state >= d.states {
                return Err(Error::Domain(format!("trajectory step {st:?} outside {d:?}")));
            }
            let future = if st.t + 1 < d.horizon {
                (0..d.actions).map(|a| self.q(st.t + 1, st.next_state, a)).fold(f64::INFINITY, f64::min)
            } else {
                0.0
            };
            let cell = d.sa(st.t, st.state, st.action);
            self.q[cell] += self.config.learning_rate * (st.loss + future - self.q[cell]);
        }
        Ok(())
    }
}
