//! Exact solver for the extended occupancy LP through its Lagrangian dual.
//!
//! For fixed `lambda` the budget-free program separates per `(t, s, a)`: the inner
//! minimum over the confidence box intersected with the simplex is a greedy fill,
//! and the outer minimum over actions is backward induction. The dual function
//! `phi(lambda) = min_q <l + lambda d, q> - lambda b` is concave and piecewise
//! linear; its maximizer is found by intersecting supporting lines, and the primal
//! optimum mixes the two plans on either side so the budget holds with equality.

use super::LpStatus;
use crate::error::{Error, Result};
use crate::estimation::ConfidenceSnapshot;
use crate::mdp::{Dims, OccupancyMeasure};

#[derive(Clone, Debug, PartialEq)]
pub struct ParametricPlan {
    pub status: LpStatus,
    pub occupancy: Option<OccupancyMeasure>,
    pub lambda: f64,
    pub objective: f64,
    /// Number of backward-induction passes.
    pub evaluations: usize,
}

const MAX_REFINEMENTS: usize = 200;
const MAX_LAMBDA: f64 = 1e12;

#[derive(Clone, Debug)]
struct Plan {
    q: Vec<f64>,
    loss: f64,
    cons: f64,
}

struct Planner<'a> {
    dims: Dims,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Rows of the confidence set that admit a distribution.
    usable: Vec<bool>,
    l_bar: &'a [f64],
    d_bar: &'a [f64],
    initial: &'a [f64],
    evaluations: usize,
}

impl<'a> Planner<'a> {
    /// Backward induction for stage costs `l_bar + lambda d_bar`, or `d_bar` alone
    /// when `lambda` is infinite.
    fn plan(&mut self, lambda: f64) -> Option<Plan> {
        self.evaluations += 1;
        let d = self.dims;
        let ns = d.states;
        let mut value = vec![0.0f64; ns];
        let mut actions = vec![0usize; d.horizon * ns];
        let mut kernels = vec![0.0; d.horizon * ns * ns];
        let mut order: Vec<usize> = (0..ns).collect();
        let mut p = vec![0.0; ns];
        for t in (0..d.horizon).rev() {
            order.sort_by(|&x, &y| value[x].total_cmp(&value[y]));
            let mut next_value = vec![f64::INFINITY; ns];
            for s in 0..ns {
                let mut best = f64::INFINITY;
                for a in 0..d.actions {
                    let sa = d.sa(t, s, a);
                    if !self.usable[sa] {
                        continue;
                    }
                    let cost = if lambda.is_infinite() { self.d_bar[sa] } else { self.l_bar[sa] + lambda * self.d_bar[sa] };
                    let cont = self.inner_min(sa, &order, &value, &mut p);
                    let q = cost + cont;
                    if q < best {
                        best = q;
                        actions[t * ns + s] = a;
                        kernels[(t * ns + s) * ns..(t * ns + s + 1) * ns].copy_from_slice(&p);
                    }
                }
                next_value[s] = best;
            }
            value = next_value;
        }
        // forward pass through the chosen actions and kernels
        let mut q = vec![0.0; d.transition_len()];
        let mut dist = self.initial.to_vec();
        let (mut loss, mut cons) = (0.0, 0.0);
        for t in 0..d.horizon {
            let mut next = vec![0.0; ns];
            for s in 0..ns {
                let w = dist[s];
                if w == 0.0 {
                    continue;
                }
                if value_is_blocked(&kernels, t, s, ns) {
                    return None;
                }
                let a = actions[t * ns + s];
                let sa = d.sa(t, s, a);
                loss += w * self.l_bar[sa];
                cons += w * self.d_bar[sa];
                let row = &kernels[(t * ns + s) * ns..(t * ns + s + 1) * ns];
                for (n, &pn) in row.iter().enumerate() {
                    let v = w * pn;
                    q[d.sas(t, s, a, n)] = v;
                    next[n] += v;
                }
            }
            dist = next;
        }
        Some(Plan { q, loss, cons })
    }

    /// `min { sum p V : lo <= p <= hi, sum p = 1 }`, writing the minimizer to `p`.
    fn inner_min(&self, sa: usize, order: &[usize], value: &[f64], p: &mut [f64]) -> f64 {
        let ns = self.dims.states;
        let lo = &self.lo[sa * ns..(sa + 1) * ns];
        let hi = &self.hi[sa * ns..(sa + 1) * ns];
        p.copy_from_slice(lo);
        let mut room = 1.0 - lo.iter().sum::<f64>();
        for &n in order {
            if room <= 0.0 {
                break;
            }
            let add = (hi[n] - lo[n]).min(room);
            p[n] += add;
            room -= add;
        }
        let mut total = 0.0;
        for n in 0..ns {
            if p[n] > 0.0 {
                total += p[n] * value[n];
            }
        }
        total
    }
}

/// A state without any admissible action leaves an all-zero kernel row.
fn value_is_blocked(kernels: &[f64], t: usize, s: usize, ns: usize) -> bool {
    kernels[(t * ns + s) * ns..(t * ns + s + 1) * ns].iter().all(|&v| v == 0.0)
}

fn mix(a: &Plan, b: &Plan, theta: f64) -> Plan {
    Plan {
        q: a.q.iter().zip(&b.q).map(|(x, y)| theta * x + (1.0 - theta) * y).collect(),
        loss: theta * a.loss + (1.0 - theta) * b.loss,
        cons: theta * a.cons + (1.0 - theta) * b.cons,
    }
}

/// Solves the extended LP `min <l_bar, q>` over the confidence polytope with
/// `<d_bar, q> <= budget`. Returns the plan, the budget multiplier and the value.
pub fn solve_parametric(
    snapshot: &ConfidenceSnapshot,
    l_bar: &[f64],
    d_bar: &[f64],
    budget: f64,
    initial: &[f64],
) -> Result<ParametricPlan> {
    let dims = snapshot.dims;
    let ns = dims.states;
    if l_bar.len() != dims.stage_action_len() || d_bar.len() != dims.stage_action_len() || initial.len() != ns {
        return Err(Error::Dimension("cost tables or initial distribution do not match the snapshot".into()));
    }
    if snapshot.p_hat.len() != dims.transition_len() || snapshot.radius.len() != dims.transition_len() {
        return Err(Error::Dimension("confidence snapshot tables have the wrong length".into()));
    }
    let lo: Vec<f64> = snapshot.p_hat.iter().zip(&snapshot.radius).map(|(p, r)| (p - r).max(0.0)).collect();
    let hi: Vec<f64> = snapshot.p_hat.iter().zip(&snapshot.radius).map(|(p, r)| (p + r).min(1.0)).collect();
    let usable = lo
        .chunks_exact(ns)
        .zip(hi.chunks_exact(ns))
        .map(|(l, h)| l.iter().sum::<f64>() <= 1.0 + 1e-12 && h.iter().sum::<f64>() >= 1.0 - 1e-12)
        .collect();
    let mut planner = Planner { dims, lo, hi, usable, l_bar, d_bar, initial, evaluations: 0 };
    let tol = 1e-9 * budget.abs().max(1.0);

    let infeasible = |evaluations| ParametricPlan {
        status: LpStatus::Infeasible,
        occupancy: None,
        lambda: f64::INFINITY,
        objective: f64::INFINITY,
        evaluations,
    };
    let done = |plan: Plan, lambda: f64, evaluations: usize| ParametricPlan {
        status: LpStatus::Optimal,
        objective: plan.loss,
        occupancy: Some(OccupancyMeasure::from_solver(dims, plan.q)),
        lambda,
        evaluations,
    };

    let Some(cheapest) = planner.plan(f64::INFINITY) else {
        return Ok(infeasible(planner.evaluations));
    };
    if cheapest.cons > budget + tol {
        return Ok(infeasible(planner.evaluations));
    }
    let free = planner.plan(0.0).expect("admissible under the consumption-only pass");
    if free.cons <= budget + tol {
        return Ok(done(free, 0.0, planner.evaluations));
    }

    let mut lo_plan = free;
    let mut lo_lambda = 0.0;
    let mut lambda = 1.0;
    let (mut hi_plan, mut hi_lambda) = loop {
        let plan = planner.plan(lambda).expect("admissible");
        if plan.cons <= budget + tol {
            break (plan, lambda);
        }
        lo_plan = plan;
        lo_lambda = lambda;
        lambda *= 2.0;
        if lambda > MAX_LAMBDA {
            break (cheapest.clone(), MAX_LAMBDA);
        }
    };

    for _ in 0..MAX_REFINEMENTS {
        let gap = lo_plan.cons - hi_plan.cons;
        // lines L + lambda (C - b) of the two plans meet here
        let cross = ((hi_plan.loss - lo_plan.loss) / gap).clamp(lo_lambda, hi_lambda);
        let line = lo_plan.loss + cross * (lo_plan.cons - budget);
        let plan = planner.plan(cross).expect("admissible");
        let phi = plan.loss + cross * (plan.cons - budget);
        if phi >= line - 1e-10 * (1.0 + line.abs()) {
            let theta = ((budget - hi_plan.cons) / gap).clamp(0.0, 1.0);
            let mixed = mix(&lo_plan, &hi_plan, theta);
            return Ok(done(mixed, cross, planner.evaluations));
        }
        if (plan.cons - budget).abs() <= tol {
            return Ok(done(plan, cross, planner.evaluations));
        }
        if plan.cons > budget {
            lo_plan = plan;
            lo_lambda = cross;
        } else {
            hi_plan = plan;
            hi_lambda = cross;
        }
    }
    Err(Error::Solver(format!(
        "dual search did not settle after {MAX_REFINEMENTS} refinements (lambda in [{lo_lambda}, {hi_lambda}])"
    )))
}
