//! Occupancy-measure programs: the extended LP over `q_t(s, a, s')` with confidence
//! rows, and the known-model program over `w_t(s, a)`.

use std::time::{Duration, Instant};

use super::parametric::solve_parametric;
use super::simplex::solve;
use super::{LpProblem, LpStatus, Sense};
use crate::error::{Error, Result};
use crate::estimation::ConfidenceSnapshot;
use crate::mdp::{policy_from_occupancy, Dims, OccupancyMeasure, Policy, TabularMdp};

/// Which solver computes the per-episode plan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PlannerKind {
    /// Build the explicit LP and run the simplex solver.
    Simplex,
    /// Lagrangian dual search over backward induction (same optimum, much faster).
    #[default]
    Parametric,
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplex" => Ok(Self::Simplex),
            "parametric" => Ok(Self::Parametric),
            other => Err(Error::Config(format!("unknown planner `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    /// Simplex pivots or backward-induction passes.
    pub iterations: usize,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedLpArtifacts {
    pub occupancy: Option<OccupancyMeasure>,
    pub policy: Option<Policy>,
    /// Budget multiplier, `0` when the budget is slack.
    pub lambda: f64,
    pub status: LpStatus,
    pub objective: f64,
    pub stats: SolveStats,
}

/// Column and row positions of the extended LP.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExtendedLpLayout {
    pub dims: Dims,
}

impl ExtendedLpLayout {
    pub const BUDGET_ROW: usize = 0;

    pub fn column(&self, t: usize, s: usize, a: usize, next: usize) -> usize {
        self.dims.sas(t, s, a, next)
    }

    /// Flow row of state `s` at stage `t`.
    pub fn flow_row(&self, t: usize, s: usize) -> usize {
        1 + t * self.dims.states + s
    }

    /// First confidence row; these follow the flow rows.
    pub fn first_confidence_row(&self) -> usize {
        1 + self.dims.horizon * self.dims.states
    }
}

fn check_inputs(dims: Dims, l_bar: &[f64], d_bar: &[f64], budget: f64, initial: &[f64]) -> Result<()> {
    if l_bar.len() != dims.stage_action_len() || d_bar.len() != dims.stage_action_len() {
        return Err(Error::Dimension(format!(
            "cost tables have {} and {} entries, expected {}",
            l_bar.len(),
            d_bar.len(),
            dims.stage_action_len()
        )));
    }
    if initial.len() != dims.states {
        return Err(Error::Dimension("initial distribution length".into()));
    }
    if !budget.is_finite() || budget < 0.0 || budget > dims.horizon as f64 + 1e-9 {
        return Err(Error::Budget(format!("budget {budget} outside [0, {}]", dims.horizon)));
    }
    Ok(())
}

/// Assembles `min <l_bar, q>` subject to the budget row (row 0, designated),
/// flow rows pinned to `initial` at the first stage, and the linearized
/// confidence rows. Rows that can never bind (`p + beta >= 1`, `p - beta <= 0`)
/// are left out.
pub fn build_extended_lp(
    snapshot: &ConfidenceSnapshot,
    l_bar: &[f64],
    d_bar: &[f64],
    budget: f64,
    initial: &[f64],
) -> Result<LpProblem> {
    let d = snapshot.dims;
    check_inputs(d, l_bar, d_bar, budget, initial)?;
    let layout = ExtendedLpLayout { dims: d };
    let ns = d.states;
    let mut lp = LpProblem::new(d.transition_len());
    for t in 0..d.horizon {
        for s in 0..ns {
            for a in 0..d.actions {
                for n in 0..ns {
                    lp.objective[layout.column(t, s, a, n)] = l_bar[d.sa(t, s, a)];
                }
            }
        }
    }

    let budget_coeffs: Vec<(usize, f64)> = (0..d.transition_len()).map(|j| (j, d_bar[j / ns])).collect();
    let row = lp.add_row(budget_coeffs, Sense::Le, budget);
    lp.designated_row = Some(row);

    for t in 0..d.horizon {
        for s in 0..ns {
            let mut coeffs = Vec::new();
            for a in 0..d.actions {
                for n in 0..ns {
                    coeffs.push((layout.column(t, s, a, n), 1.0));
                }
            }
            let rhs = if t == 0 {
                initial[s]
            } else {
                for prev in 0..ns {
                    for a in 0..d.actions {
                        coeffs.push((layout.column(t - 1, prev, a, s), -1.0));
                    }
                }
                0.0
            };
            lp.add_row(coeffs, Sense::Eq, rhs);
        }
    }

    for t in 0..d.horizon {
        for s in 0..ns {
            for a in 0..d.actions {
                for n in 0..ns {
                    let k = d.sas(t, s, a, n);
                    let (p, r) = (snapshot.p_hat[k], snapshot.radius[k]);
                    for (bound, sense) in [(p + r, Sense::Le), (p - r, Sense::Ge)] {
                        let vacuous = match sense {
                            Sense::Le => bound >= 1.0,
                            _ => bound <= 0.0,
                        };
                        if vacuous {
                            continue;
                        }
                        let coeffs = (0..ns).map(|y| {
                            let own = if y == n { 1.0 } else { 0.0 };
                            (layout.column(t, s, a, y), own - bound)
                        });
                        lp.add_row(coeffs, sense, 0.0);
                    }
                }
            }
        }
    }
    Ok(lp)
}

/// Solves one planning step. `lambda` is clipped to `[0, lambda_cap]`.
pub fn solve_balde_step(
    snapshot: &ConfidenceSnapshot,
    l_bar: &[f64],
    d_bar: &[f64],
    budget: f64,
    initial: &[f64],
    lambda_cap: f64,
    planner: PlannerKind,
) -> Result<ExtendedLpArtifacts> {
    check_inputs(snapshot.dims, l_bar, d_bar, budget, initial)?;
    let start = Instant::now();
    let (status, occupancy, lambda, objective, iterations) = match planner {
        PlannerKind::Simplex => {
            let lp = build_extended_lp(snapshot, l_bar, d_bar, budget, initial)?;
            let sol = solve(&lp)?;
            let occupancy = (sol.status == LpStatus::Optimal)
                .then(|| OccupancyMeasure::from_solver(snapshot.dims, sol.primal.clone()));
            let lambda = sol.designated_dual(&lp).unwrap_or(0.0);
            (sol.status, occupancy, lambda, sol.objective, sol.iterations)
        }
        PlannerKind::Parametric => {
            let plan = solve_parametric(snapshot, l_bar, d_bar, budget, initial)?;
            (plan.status, plan.occupancy, plan.lambda, plan.objective, plan.evaluations)
        }
    };
    let lambda = if status == LpStatus::Optimal { lambda.clamp(0.0, lambda_cap) } else { lambda_cap };
    Ok(ExtendedLpArtifacts {
        policy: occupancy.as_ref().map(policy_from_occupancy),
        occupancy,
        lambda,
        status,
        objective,
        stats: SolveStats { iterations, elapsed: start.elapsed() },
    })
}

/// Known-model CMDP program over `w_t(s, a)`: `min <l, w>` subject to
/// `<d, w> <= budget` (row 0, designated) and flow conservation through the kernel.
pub fn build_known_model_lp(mdp: &TabularMdp, budget: f64) -> Result<LpProblem> {
    let d = mdp.dims();
    check_inputs(d, mdp.loss_table(), mdp.consumption_table(), budget, mdp.initial())?;
    let ns = d.states;
    let mut lp = LpProblem::new(d.stage_action_len());
    lp.objective.copy_from_slice(mdp.loss_table());
    let row = lp.add_row(mdp.consumption_table().iter().copied().enumerate(), Sense::Le, budget);
    lp.designated_row = Some(row);
    for t in 0..d.horizon {
        for s in 0..ns {
            let mut coeffs: Vec<(usize, f64)> = (0..d.actions).map(|a| (d.sa(t, s, a), 1.0)).collect();
            let rhs = if t == 0 {
                mdp.initial()[s]
            } else {
                for prev in 0..ns {
                    for a in 0..d.actions {
                        let p = mdp.kernel(t - 1, prev, a)[s];
                        if p != 0.0 {
                            coeffs.push((d.sa(t - 1, prev, a), -p));
                        }
                    }
                }
                0.0
            };
            lp.add_row(coeffs, Sense::Eq, rhs);
        }
    }
    Ok(lp)
}

/// Expands a state-action occupancy into `q_t(s, a, s') = w_t(s, a) P_t(s' | s, a)`.
pub fn occupancy_from_known_model(mdp: &TabularMdp, w: &[f64]) -> Result<OccupancyMeasure> {
    let d = mdp.dims();
    if w.len() != d.stage_action_len() {
        return Err(Error::Dimension("state-action occupancy length".into()));
    }
    let mut q = vec![0.0; d.transition_len()];
    for t in 0..d.horizon {
        for s in 0..d.states {
            for a in 0..d.actions {
                let mass = w[d.sa(t, s, a)].max(0.0);
                for (n, p) in mdp.kernel(t, s, a).iter().enumerate() {
                    q[d.sas(t, s, a, n)] = mass * p;
                }
            }
        }
    }
    Ok(OccupancyMeasure::from_solver(d, q))
}

/// Best expected loss over policies whose expected consumption is at most `budget`.
pub fn solve_known_model(mdp: &TabularMdp, budget: f64) -> Result<ExtendedLpArtifacts> {
    let start = Instant::now();
    let lp = build_known_model_lp(mdp, budget)?;
    let sol = solve(&lp)?;
    let occupancy = match sol.status {
        LpStatus::Optimal => Some(occupancy_from_known_model(mdp, &sol.primal)?),
        _ => None,
    };
    Ok(ExtendedLpArtifacts {
        policy: occupancy.as_ref().map(policy_from_occupancy),
        occupancy,
        lambda: sol.designated_dual(&lp).unwrap_or(0.0).max(0.0),
        status: sol.status,
        objective: sol.objective,
        stats: SolveStats { iterations: sol.iterations, elapsed: start.elapsed() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::solve;
    use crate::mdp::testutil::random_mdp;
    use crate::mdp::{evaluate_policy, Policy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Every deterministic policy of a tiny model with its (loss, consumption).
    fn deterministic_values(mdp: &TabularMdp) -> Vec<(f64, f64)> {
        let d = mdp.dims();
        let slots = d.horizon * d.states;
        let count = d.actions.pow(slots as u32);
        (0..count)
            .map(|code| {
                let policy = Policy::deterministic(d, |t, s| (code / d.actions.pow((t * d.states + s) as u32)) % d.actions).unwrap();
                let v = evaluate_policy(mdp, &policy).unwrap();
                (v.expected_loss, v.expected_consumption)
            })
            .collect()
    }

    /// Best loss within budget over deterministic policies and pairwise mixtures.
    fn brute_force_cmdp(mdp: &TabularMdp, budget: f64) -> Option<f64> {
        let vals = deterministic_values(mdp);
        let mut best: Option<f64> = None;
        let mut consider = |v: f64| best = Some(best.map_or(v, |b: f64| b.min(v)));
        for &(l, c) in &vals {
            if c <= budget + 1e-12 {
                consider(l);
            }
        }
        for &(l1, c1) in &vals {
            for &(l2, c2) in &vals {
                // mixture that spends the budget exactly
                if c1 > budget && c2 < budget {
                    let theta = (budget - c2) / (c1 - c2);
                    consider(theta * l1 + (1.0 - theta) * l2);
                }
            }
        }
        best
    }

    #[test]
    fn known_model_optimum_matches_policy_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dims = Dims::new(2, 2, 2).unwrap();
        for _ in 0..25 {
            let mdp = random_mdp(&mut rng, dims);
            let budget = rng.random_range(0.0..2.0);
            let expected = brute_force_cmdp(&mdp, budget);
            let snap = ConfidenceSnapshot::exact(&mdp);
            let ext = build_extended_lp(&snap, mdp.loss_table(), mdp.consumption_table(), budget, mdp.initial()).unwrap();
            let ext_sol = solve(&ext).unwrap();
            let w_sol = solve_known_model(&mdp, budget).unwrap();
            match expected {
                Some(v) => {
                    assert_eq!(ext_sol.status, LpStatus::Optimal);
                    assert!((ext_sol.objective - v).abs() < 1e-8, "{} vs {v}", ext_sol.objective);
                    assert!((w_sol.objective - v).abs() < 1e-8);
                    let policy = w_sol.policy.unwrap();
                    let value = evaluate_policy(&mdp, &policy).unwrap();
                    assert!(value.expected_consumption <= budget + 1e-8);
                    assert!((value.expected_loss - v).abs() < 1e-8);
                }
                None => {
                    assert_eq!(ext_sol.status, LpStatus::Infeasible);
                    assert_eq!(w_sol.status, LpStatus::Infeasible);
                }
            }
        }
    }

    #[test]
    fn unit_radii_reduce_to_the_flow_program() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dims = Dims::new(3, 2, 3).unwrap();
        let mdp = random_mdp(&mut rng, dims);
        let snap = ConfidenceSnapshot {
            dims,
            p_hat: vec![0.0; dims.transition_len()],
            radius: vec![1.0; dims.transition_len()],
        };
        let lp = build_extended_lp(&snap, mdp.loss_table(), mdp.consumption_table(), 1.5, mdp.initial()).unwrap();
        assert_eq!(lp.num_rows(), 1 + dims.horizon * dims.states);

        // with unconstrained transitions the best plan steers to the cheapest state each stage
        let sol = solve(&lp).unwrap();
        let para = solve_parametric(&snap, mdp.loss_table(), mdp.consumption_table(), 1.5, mdp.initial()).unwrap();
        assert!((sol.objective - para.objective).abs() < 1e-9);
    }

    #[test]
    fn slack_budget_has_zero_multiplier() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dims = Dims::new(3, 2, 3).unwrap();
        let mdp = random_mdp(&mut rng, dims);
        let snap = ConfidenceSnapshot::exact(&mdp);
        for planner in [PlannerKind::Simplex, PlannerKind::Parametric] {
            let art = solve_balde_step(&snap, mdp.loss_table(), mdp.consumption_table(), 3.0, mdp.initial(), 10.0, planner)
                .unwrap();
            assert_eq!(art.status, LpStatus::Optimal);
            assert_eq!(art.lambda, 0.0);
            // unconstrained optimum is the loss-minimizing policy value
            let unconstrained = solve_known_model(&mdp, 3.0).unwrap();
            assert!((art.objective - unconstrained.objective).abs() < 1e-9);
        }
    }

    #[test]
    fn feasible_plans_respect_the_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let dims = Dims::new(3, 2, 3).unwrap();
            let mdp = random_mdp(&mut rng, dims);
            let mut snap = ConfidenceSnapshot::exact(&mdp);
            snap.radius.iter_mut().for_each(|r| *r = rng.random_range(0.0..0.2));
            let budget = rng.random_range(0.3..2.0);
            for planner in [PlannerKind::Simplex, PlannerKind::Parametric] {
                let art = solve_balde_step(&snap, mdp.loss_table(), mdp.consumption_table(), budget, mdp.initial(), 5.0, planner)
                    .unwrap();
                if let Some(q) = &art.occupancy {
                    assert!(q.inner(mdp.consumption_table()) <= budget + 1e-8);
                    assert!(art.lambda >= 0.0 && art.lambda <= 5.0);
                } else {
                    assert_eq!(art.lambda, 5.0);
                }
            }
        }
    }

    #[test]
    fn dual_lies_in_the_finite_difference_bracket() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut checked = 0;
        while checked < 10 {
            let dims = Dims::new(rng.random_range(2..=3), 2, rng.random_range(2..=3)).unwrap();
            let mdp = random_mdp(&mut rng, dims);
            let budget = rng.random_range(0.2..0.8) * dims.horizon as f64;
            let eps = 1e-4;
            let at = solve_known_model(&mdp, budget).unwrap();
            if at.status != LpStatus::Optimal || at.lambda < 1e-6 {
                continue;
            }
            let up = solve_known_model(&mdp, budget + eps).unwrap();
            let down = solve_known_model(&mdp, budget - eps).unwrap();
            let right = -(up.objective - at.objective) / eps;
            let left = -(at.objective - down.objective) / eps;
            assert!(at.lambda >= right - 1e-3 && at.lambda <= left + 1e-3, "{} not in [{right}, {left}]", at.lambda);
            checked += 1;
        }
    }

    #[test]
    fn optimal_value_is_convex_and_nonincreasing_in_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = Dims::new(3, 2, 3).unwrap();
        let mdp = random_mdp(&mut rng, dims);
        let grid: Vec<f64> = (0..=30).map(|i| 0.1 * i as f64).collect();
        let values: Vec<f64> = grid
            .iter()
            .filter_map(|&b| {
                let s = solve_known_model(&mdp, b).unwrap();
                (s.status == LpStatus::Optimal).then_some(s.objective)
            })
            .collect();
        assert!(values.len() > 5);
        for w in values.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        for w in values.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-9);
        }
    }

    #[test]
    fn rejects_budgets_outside_the_horizon() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dims = Dims::new(2, 2, 2).unwrap();
        let mdp = random_mdp(&mut rng, dims);
        let snap = ConfidenceSnapshot::exact(&mdp);
        for b in [-0.5, 2.5, f64::NAN] {
            let err = build_extended_lp(&snap, mdp.loss_table(), mdp.consumption_table(), b, mdp.initial());
            assert!(matches!(err, Err(Error::Budget(_))));
        }
        assert!(matches!(solve_known_model(&mdp, 3.0), Err(Error::Budget(_))));
    }

    #[test]
    fn solves_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let dims = Dims::new(3, 2, 3).unwrap();
        let mdp = random_mdp(&mut rng, dims);
        let mut snap = ConfidenceSnapshot::exact(&mdp);
        snap.radius.iter_mut().for_each(|r| *r = 0.1);
        let lp = build_extended_lp(&snap, mdp.loss_table(), mdp.consumption_table(), 1.0, mdp.initial()).unwrap();
        assert_eq!(solve(&lp).unwrap(), solve(&lp).unwrap());
    }
}
