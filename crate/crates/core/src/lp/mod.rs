//! Sparse linear programs, a bounded primal simplex solver with row duals, and the
//! occupancy-measure programs solved by the scheduler.

mod dump;
mod extended;
mod parametric;
mod simplex;

use std::fmt;

pub use dump::{read_lp, write_lp};
pub use extended::{
    build_extended_lp, build_known_model_lp, occupancy_from_known_model, solve_balde_step,
    solve_known_model, ExtendedLpArtifacts, ExtendedLpLayout, PlannerKind, SolveStats,
};
pub use parametric::{solve_parametric, ParametricPlan};
pub use simplex::{solve, solve_with, SimplexOptions};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> char {
        match self {
            Sense::Le => 'L',
            Sense::Eq => 'E',
            Sense::Ge => 'G',
        }
    }
}

/// `min c'x` subject to sparse rows `a_i x (<=|=|>=) b_i` and `lower <= x <= upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    /// `(row, col, coeff)`; duplicates are summed.
    pub triplets: Vec<(usize, usize, f64)>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Row whose dual is reported as the budget multiplier.
    pub designated_row: Option<usize>,
}

impl LpProblem {
    /// Empty problem over `cols` nonnegative variables with zero objective.
    pub fn new(cols: usize) -> Self {
        Self {
            objective: vec![0.0; cols],
            triplets: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; cols],
            upper: vec![f64::INFINITY; cols],
            designated_row: None,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.senses.len()
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: impl IntoIterator<Item = (usize, f64)>, sense: Sense, rhs: f64) -> usize {
        let row = self.senses.len();
        self.triplets.extend(coeffs.into_iter().filter(|(_, v)| *v != 0.0).map(|(c, v)| (row, c, v)));
        self.senses.push(sense);
        self.rhs.push(rhs);
        row
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.num_rows(), self.num_cols());
        if self.rhs.len() != m || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension("inconsistent LP vector lengths".into()));
        }
        if let Some(&(r, c, v)) = self.triplets.iter().find(|(r, c, v)| *r >= m || *c >= n || !v.is_finite()) {
            return Err(Error::Domain(format!("bad coefficient ({r}, {c}, {v})")));
        }
        if self.objective.iter().chain(&self.rhs).any(|v| !v.is_finite()) {
            return Err(Error::Domain("objective and right-hand sides must be finite".into()));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(Error::Domain(format!(
                    "column {j} has empty bounds [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(Error::Domain(format!("column {j} has an infinite fixed bound")));
            }
        }
        if let Some(row) = self.designated_row {
            match self.senses.get(row) {
                Some(Sense::Le) => {}
                Some(_) => return Err(Error::Domain(format!("designated row {row} must be a <= row"))),
                None => return Err(Error::Domain(format!("designated row {row} out of range"))),
            }
        }
        Ok(())
    }

    /// Row activities `A x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows()];
        for &(r, c, v) in &self.triplets {
            act[r] += v * x[c];
        }
        act
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        })
    }
}

/// Solver output with a primal/dual certificate.
///
/// `duals[i]` is the decrease of the optimal value per unit increase of `rhs[i]`,
/// so a `<=` row has a nonnegative dual and a `>=` row a nonpositive one.
#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    /// Largest row or bound violation, each scaled by the row's magnitude.
    pub primal_residual: f64,
    /// Largest sign violation of duals and reduced costs.
    pub dual_residual: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn designated_dual(&self, problem: &LpProblem) -> Option<f64> {
        problem.designated_row.and_then(|r| self.duals.get(r).copied())
    }

    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs()
    }
}
