//! Lower-level safe scheduler: learns the kernel from its own trajectories and
//! plans with pessimistic consumption and optimistic loss on the extended LP.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{QueueEnv, Trajectory};
use crate::error::{Error, Result};
use crate::estimation::{ConfidenceModel, ConfidenceSnapshot};
use crate::lp::{solve_balde_step, LpStatus, PlannerKind, SolveStats};
use crate::mdp::{evaluate_policy, Policy, TabularMdp};

/// A policy known to be safe, with its exact expected consumption.
#[derive(Clone, Debug, PartialEq)]
pub struct SafeBaseline {
    policy: Policy,
    consumption: f64,
}

impl SafeBaseline {
    pub fn new(mdp: &TabularMdp, policy: Policy) -> Result<Self> {
        let consumption = evaluate_policy(mdp, &policy)?.expected_consumption;
        Ok(Self { policy, consumption })
    }

    /// Always plays action index 0.
    pub fn idle(mdp: &TabularMdp) -> Result<Self> {
        Self::new(mdp, Policy::deterministic(mdp.dims(), |_, _| 0)?)
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    /// `b_base`.
    pub fn consumption(&self) -> f64 {
        self.consumption
    }
}

/// How the executed policy of an episode was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanStatus {
    Warmup,
    Optimal,
    Infeasible,
    Reused,
    Qlearning,
}

impl fmt::Display for PlanStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanStatus::Warmup => "warmup",
            PlanStatus::Optimal => "optimal",
            PlanStatus::Infeasible => "infeasible",
            PlanStatus::Reused => "reused",
            PlanStatus::Qlearning => "qlearning",
        })
    }
}

/// Re-solve only when some visit count has doubled or the budget moved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LazyResolve {
    pub budget_threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaldeConfig {
    pub delta: f64,
    /// `K_0`: episodes played with the safe baseline before planning starts.
    pub warmup: usize,
    /// Run length `K` entering the confidence log term.
    pub planned_episodes: usize,
    /// `B_0`, the smallest budget the upper level may provision.
    pub min_budget: f64,
    /// Multiplier clip; `T / (B_0 - b_base)` when absent.
    pub lambda_cap: Option<f64>,
    pub radius_scale: f64,
    pub planner: PlannerKind,
    pub lazy: Option<LazyResolve>,
    /// Plan on the true kernel with zero radii instead of learning it.
    pub known_model: bool,
}

impl Default for BaldeConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            warmup: 500,
            planned_episodes: 5000,
            min_budget: 2.0,
            lambda_cap: None,
            radius_scale: 1.0,
            planner: PlannerKind::Parametric,
            lazy: None,
            known_model: false,
        }
    }
}

/// Shaped tables `(l_bar, d_bar)`:
/// `d_bar = min(T, d + T beta)` and `l_bar = l - T^2 beta / (b - b_base)`,
/// where `beta(t, s, a)` sums the radii over next states.
pub fn shaped_costs(
    snapshot: &ConfidenceSnapshot,
    loss: &[f64],
    consumption: &[f64],
    budget: f64,
    baseline_consumption: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = snapshot.dims;
    if loss.len() != d.stage_action_len() || consumption.len() != d.stage_action_len() {
        return Err(Error::Dimension("cost tables do not match the confidence snapshot".into()));
    }
    let slack = budget - baseline_consumption;
    if !(slack > 0.0) {
        return Err(Error::Budget(format!(
            "budget {budget} must exceed the baseline consumption {baseline_consumption}"
        )));
    }
    let horizon = d.horizon as f64;
    let beta = snapshot.radius_sums();
    let l_bar = loss.iter().zip(&beta).map(|(l, b)| l - horizon * horizon * b / slack).collect();
    let d_bar = consumption.iter().zip(&beta).map(|(c, b)| (c + horizon * b).min(horizon)).collect();
    Ok((l_bar, d_bar))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    /// Policy actually executed.
    pub policy: Policy,
    pub lambda: f64,
    pub status: PlanStatus,
    pub trajectory: Trajectory,
    pub stats: SolveStats,
}

#[derive(Clone, Debug)]
pub struct BaldeState {
    config: BaldeConfig,
    confidence: ConfidenceModel,
    baseline: SafeBaseline,
    model: TabularMdp,
    episode: usize,
    lambda_cap: f64,
    last: Option<(Policy, f64)>,
    /// Visit counts, budget and pessimistic consumption at the last solve.
    solved_at: Option<(Vec<u64>, f64, f64)>,
}

impl BaldeState {
    /// `model` supplies the known loss and consumption tables (and the kernel in
    /// known-model mode); its kernel is otherwise never read.
    pub fn new(config: BaldeConfig, model: TabularMdp, baseline: SafeBaseline) -> Result<Self> {
        let dims = model.dims();
        if baseline.policy().dims() != dims {
            return Err(Error::Dimension("baseline policy does not match the model".into()));
        }
        let gamma = config.min_budget - baseline.consumption();
        if !(gamma > 0.0) {
            return Err(Error::Config(format!(
                "minimum budget {} must exceed the baseline consumption {}",
                config.min_budget,
                baseline.consumption()
            )));
        }
        let lambda_cap = config.lambda_cap.unwrap_or(dims.horizon as f64 / gamma);
        if !(lambda_cap >= 0.0) {
            return Err(Error::Config(format!("lambda cap {lambda_cap} must be nonnegative")));
        }
        let confidence =
            ConfidenceModel::new(dims, config.delta, config.planned_episodes)?.with_radius_scale(config.radius_scale)?;
        Ok(Self { config, confidence, baseline, model, episode: 0, lambda_cap, last: None, solved_at: None })
    }

    pub fn config(&self) -> &BaldeConfig {
        &self.config
    }

    pub fn confidence(&self) -> &ConfidenceModel {
        &self.confidence
    }

    pub fn confidence_mut(&mut self) -> &mut ConfidenceModel {
        &mut self.confidence
    }

    pub fn baseline(&self) -> &SafeBaseline {
        &self.baseline
    }

    pub fn lambda_cap(&self) -> f64 {
        self.lambda_cap
    }

    /// Episodes played so far.
    pub fn episode(&self) -> usize {
        self.episode
    }

    fn reusable(&self, budget: f64) -> bool {
        let (Some(lazy), Some((counts, b, planned))) = (self.config.lazy, &self.solved_at) else {
            return false;
        };
        // a smaller budget may no longer cover the old plan
        if self.last.is_none() || (budget - b).abs() > lazy.budget_threshold || *planned > budget {
            return false;
        }
        let doubled = self.confidence.visit_table().iter().zip(counts).any(|(&now, &then)| now >= 2 * then.max(1));
        !doubled
    }

    /// Computes the policy and multiplier for the next episode without executing it.
    pub fn plan(&mut self, budget: f64) -> Result<(Policy, f64, PlanStatus, SolveStats)> {
        let k = self.episode + 1;
        let horizon = self.model.dims().horizon as f64;
        if !(budget >= self.config.min_budget - 1e-12 && budget <= horizon + 1e-12) {
            return Err(Error::Budget(format!(
                "budget {budget} outside [{}, {horizon}]",
                self.config.min_budget
            )));
        }
        if k <= self.config.warmup {
            return Ok((self.baseline.policy().clone(), 0.0, PlanStatus::Warmup, SolveStats::default()));
        }
        if self.reusable(budget) {
            let (policy, lambda) = self.last.clone().expect("checked by reusable");
            return Ok((policy, lambda, PlanStatus::Reused, SolveStats::default()));
        }
        let snapshot = if self.config.known_model {
            ConfidenceSnapshot::exact(&self.model)
        } else {
            self.confidence.snapshot()
        };
        let (l_bar, d_bar) = shaped_costs(
            &snapshot,
            self.model.loss_table(),
            self.model.consumption_table(),
            budget,
            self.baseline.consumption(),
        )?;
        let art = solve_balde_step(
            &snapshot,
            &l_bar,
            &d_bar,
            budget,
            self.model.initial(),
            self.lambda_cap,
            self.config.planner,
        )?;
        let (policy, status) = match (art.status, art.policy) {
            (LpStatus::Optimal, Some(p)) => (p, PlanStatus::Optimal),
            _ => (self.baseline.policy().clone(), PlanStatus::Infeasible),
        };
        if self.config.lazy.is_some() {
            self.last = Some((policy.clone(), art.lambda));
            let planned = art.occupancy.as_ref().map_or(0.0, |q| q.inner(&d_bar));
            self.solved_at = Some((self.confidence.visit_table().to_vec(), budget, planned));
        }
        Ok((policy, art.lambda, status, art.stats))
    }

    /// Plans, executes one episode and records its transitions.
    pub fn run_episode<R: Rng + ?Sized>(
        &mut self,
        budget: f64,
        env: &QueueEnv,
        seed: u64,
        rng: &mut R,
    ) -> Result<EpisodeOutcome> {
        let (policy, lambda, status, stats) = self.plan(budget)?;
        let trajectory = env.rollout(&policy, self.episode, seed, rng)?;
        self.confidence.update_counts(&trajectory)?;
        self.episode += 1;
        Ok(EpisodeOutcome { policy, lambda, status, trajectory, stats })
    }
}
