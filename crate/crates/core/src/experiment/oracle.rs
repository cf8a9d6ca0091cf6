//! Best static budget-policy pair in hindsight.

use rayon::prelude::*;

use crate::blol::ProvisioningCost;
use crate::error::{Error, Result};
use crate::lp::solve_known_model;
use crate::lp::LpStatus;
use crate::mdp::{Policy, TabularMdp};

/// `B_0, B_0 + step, ...` up to `T`, with `T` appended when the step does not land on it.
pub fn budget_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(min <= max) || !min.is_finite() || !max.is_finite() {
        return Err(Error::Config(format!("bad budget grid [{min}, {max}] step {step}")));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| min + i as f64 * step).collect();
    if max - grid[n] > 1e-9 {
        grid.push(max);
    } else {
        grid[n] = grid[n].min(max);
    }
    Ok(grid)
}

/// Known-model optimal scheduling loss `L*(b)` on a budget grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueCurve {
    pub budgets: Vec<f64>,
    pub values: Vec<f64>,
    /// Expected consumption of each optimal policy.
    pub consumption: Vec<f64>,
    pub policies: Vec<Policy>,
}

impl ValueCurve {
    /// Linear interpolation of `L*` between grid points (clamped at the ends).
    pub fn interpolate(&self, b: f64) -> f64 {
        let i = self.budgets.partition_point(|&x| x < b);
        if i == 0 {
            return self.values[0];
        }
        if i == self.budgets.len() {
            return *self.values.last().expect("nonempty curve");
        }
        let (b0, b1) = (self.budgets[i - 1], self.budgets[i]);
        let w = (b - b0) / (b1 - b0);
        self.values[i - 1] * (1.0 - w) + self.values[i] * w
    }
}

/// Solves the known-model CMDP at every grid budget (in parallel).
pub fn value_curve(mdp: &TabularMdp, grid: &[f64]) -> Result<ValueCurve> {
    if grid.is_empty() {
        return Err(Error::Config("empty budget grid".into()));
    }
    let solved: Vec<(f64, f64, Policy)> = grid
        .par_iter()
        .map(|&b| {
            let art = solve_known_model(mdp, b)?;
            match (art.status, art.occupancy, art.policy) {
                (LpStatus::Optimal, Some(q), Some(p)) => Ok((art.objective, q.inner(mdp.consumption_table()), p)),
                (status, ..) => Err(Error::Solver(format!("known-model LP at budget {b}: {status:?}"))),
            }
        })
        .collect::<Result<_>>()?;
    let mut curve =
        ValueCurve { budgets: grid.to_vec(), values: vec![], consumption: vec![], policies: vec![] };
    for (v, c, p) in solved {
        curve.values.push(v);
        curve.consumption.push(c);
        curve.policies.push(p);
    }
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkResult {
    pub b_star: f64,
    pub pi_star: Policy,
    /// `L*(b_star)`.
    pub star_loss: f64,
    pub curve: ValueCurve,
    /// `total(b)` for every grid budget.
    pub totals: Vec<f64>,
    /// Per-episode comparator cost `C_k(b_star, pi_star)`, `k = 1..K`.
    pub comparator: Vec<f64>,
    /// `sum_k C_k(b_star, pi_star)`.
    pub total: f64,
}

/// `total(b) = sum_k f_k(b) + alpha b^2 + beta K L*(b)` minimized over the grid; the
/// comparator pays the switch from `b_0 = 0` once.
pub fn static_oracle(
    curve: &ValueCurve,
    cost: &ProvisioningCost,
    rho: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<BenchmarkResult> {
    if rho.is_empty() {
        return Err(Error::Config("static oracle needs at least one episode".into()));
    }
    let k = rho.len() as f64;
    let totals: Vec<f64> = curve
        .budgets
        .iter()
        .zip(&curve.values)
        .map(|(&b, &l)| rho.iter().map(|&r| cost.value(b, r)).sum::<f64>() + alpha * b * b + beta * k * l)
        .collect();
    let mut best = 0;
    for (i, t) in totals.iter().enumerate() {
        if *t < totals[best] {
            best = i;
        }
    }
    let b_star = curve.budgets[best];
    let star_loss = curve.values[best];
    let comparator: Vec<f64> = rho
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let switch = if i == 0 { alpha * b_star * b_star } else { 0.0 };
            cost.value(b_star, r) + switch + beta * star_loss
        })
        .collect();
    Ok(BenchmarkResult {
        b_star,
        pi_star: curve.policies[best].clone(),
        star_loss,
        curve: curve.clone(),
        total: totals[best],
        totals,
        comparator,
    })
}
