//! Two-phase bounded primal revised simplex.
//!
//! Rows are turned into equalities `a_i x + s_i = b_i` with a bounded logical
//! column `s_i`; phase one minimizes the sum of artificial columns. Pricing is
//! Dantzig's rule with a Harris ratio test, switching to Bland's rule once the
//! iteration cap is reached or after a long run of degenerate pivots. The basis
//! inverse is kept dense (column-major) and refactorized periodically.

use super::{LpProblem, LpSolution, LpStatus, Sense};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub refactor_every: usize,
    /// Iterations before Bland's rule is engaged; defaults to `20 (m + n)`.
    pub bland_after: Option<usize>,
    /// Consecutive degenerate pivots tolerated before Bland's rule is engaged.
    pub stall_limit: usize,
    /// Hard iteration limit; defaults to `200 (m + n) + 10_000`.
    pub max_iterations: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            refactor_every: 100,
            bland_after: None,
            stall_limit: 500,
            max_iterations: None,
        }
    }
}

pub fn solve(problem: &LpProblem) -> Result<LpSolution> {
    solve_with(problem, &SimplexOptions::default())
}

pub fn solve_with(problem: &LpProblem, opts: &SimplexOptions) -> Result<LpSolution> {
    problem.validate()?;
    let mut solver = Solver::new(problem, opts);
    solver.run()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    Lower,
    Upper,
    Free,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Solver<'a> {
    problem: &'a LpProblem,
    opts: &'a SimplexOptions,
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    art_sign: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    /// Column-major `B^{-1}`: entry `(p, i)` at `binv[i * m + p]`.
    binv: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
    bland: bool,
    stall: usize,
}

impl<'a> Solver<'a> {
    fn new(problem: &'a LpProblem, opts: &'a SimplexOptions) -> Self {
        let m = problem.num_rows();
        let n = problem.num_cols();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut sorted = problem.triplets.clone();
        sorted.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        for (r, c, v) in sorted {
            match cols[c].last_mut() {
                Some(last) if last.0 == r => last.1 += v,
                _ => cols[c].push((r, v)),
            }
        }
        for col in &mut cols {
            col.retain(|(_, v)| *v != 0.0);
        }
        let total = n + 2 * m;
        let mut lower = Vec::with_capacity(total);
        let mut upper = Vec::with_capacity(total);
        lower.extend_from_slice(&problem.lower);
        upper.extend_from_slice(&problem.upper);
        for sense in &problem.senses {
            let (lo, hi) = match sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
        }
        lower.extend(std::iter::repeat(0.0).take(m));
        upper.extend(std::iter::repeat(f64::INFINITY).take(m));
        Self {
            problem,
            opts,
            m,
            n,
            cols,
            art_sign: vec![1.0; m],
            lower,
            upper,
            cost: vec![0.0; total],
            x: vec![0.0; total],
            state: vec![VarState::Lower; total],
            basis: Vec::new(),
            binv: Vec::new(),
            iterations: 0,
            since_refactor: 0,
            bland: false,
            stall: 0,
        }
    }

    fn total(&self) -> usize {
        self.n + 2 * self.m
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n + self.m
    }

    fn for_each_entry(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(r, v) in &self.cols[j] {
                f(r, v);
            }
        } else if j < self.n + self.m {
            f(j - self.n, 1.0);
        } else {
            let i = j - self.n - self.m;
            f(i, self.art_sign[i]);
        }
    }

    fn run(&mut self) -> Result<LpSolution> {
        let (m, n) = (self.m, self.n);
        // nonbasic structurals start at a finite bound, or zero when free
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            let (st, val) = if lo.is_finite() {
                (VarState::Lower, lo)
            } else if hi.is_finite() {
                (VarState::Upper, hi)
            } else {
                (VarState::Free, 0.0)
            };
            self.state[j] = st;
            self.x[j] = val;
        }
        for i in 0..m {
            self.state[n + i] = if self.lower[n + i].is_finite() { VarState::Lower } else { VarState::Upper };
            self.x[n + i] = 0.0;
        }
        let mut resid = self.problem.rhs.clone();
        for j in 0..n {
            let xj = self.x[j];
            if xj != 0.0 {
                for &(r, v) in &self.cols[j] {
                    resid[r] -= v * xj;
                }
            }
        }
        self.basis = (0..m).map(|i| n + m + i).collect();
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            let sign = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
            self.art_sign[i] = sign;
            self.binv[i * m + i] = sign;
            self.x[n + m + i] = resid[i].abs();
            self.state[n + m + i] = VarState::Basic(i);
        }

        // phase one
        for j in 0..self.total() {
            self.cost[j] = if self.is_artificial(j) { 1.0 } else { 0.0 };
        }
        self.optimize()?;
        let infeasibility: f64 = (0..m).map(|i| self.x[n + m + i]).sum();
        let scale = self.problem.rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        if infeasibility > self.opts.feasibility_tol * scale * (m.max(1) as f64).sqrt() {
            return Ok(self.failure(LpStatus::Infeasible));
        }
        self.drive_out_artificials()?;
        for i in 0..m {
            let j = n + m + i;
            self.upper[j] = 0.0;
            if !matches!(self.state[j], VarState::Basic(_)) {
                self.x[j] = 0.0;
            }
        }

        // phase two
        self.bland = false;
        self.stall = 0;
        for j in 0..self.total() {
            self.cost[j] = if j < n { self.problem.objective[j] } else { 0.0 };
        }
        match self.optimize()? {
            PhaseEnd::Unbounded => Ok(self.failure(LpStatus::Unbounded)),
            PhaseEnd::Optimal => Ok(self.certificate()),
        }
    }

    /// Iterates until optimal, refactorizing and re-pricing before declaring optimality.
    fn optimize(&mut self) -> Result<PhaseEnd> {
        let bland_after = self.opts.bland_after.unwrap_or(20 * (self.m + self.n));
        let max_iter = self.opts.max_iterations.unwrap_or(200 * (self.m + self.n) + 10_000);
        let mut confirmations = 0;
        loop {
            if self.iterations >= max_iter {
                return Err(Error::Solver(format!(
                    "iteration limit {max_iter} reached ({} rows, {} columns)",
                    self.m, self.n
                )));
            }
            if self.iterations >= bland_after || self.stall >= self.opts.stall_limit {
                self.bland = true;
            }
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
            let duals = self.row_prices();
            let Some((j, dir)) = self.price(&duals) else {
                if self.since_refactor == 0 || confirmations > 2 {
                    return Ok(PhaseEnd::Optimal);
                }
                confirmations += 1;
                self.refactor()?;
                continue;
            };
            let alpha = self.ftran(j);
            match self.ratio_test(j, dir, &alpha) {
                None => return Ok(PhaseEnd::Unbounded),
                Some((theta, leave)) => self.step(j, dir, theta, leave, &alpha),
            }
            self.iterations += 1;
            self.since_refactor += 1;
        }
    }

    /// `y = c_B B^{-1}`.
    fn row_prices(&self) -> Vec<f64> {
        let m = self.m;
        let cb: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
        (0..m)
            .map(|i| {
                let col = &self.binv[i * m..(i + 1) * m];
                col.iter().zip(&cb).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        let mut d = self.cost[j];
        self.for_each_entry(j, |r, v| d -= y[r] * v);
        d
    }

    fn price(&self, y: &[f64]) -> Option<(usize, f64)> {
        let tol = self.opts.optimality_tol;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.total() {
            let st = self.state[j];
            if matches!(st, VarState::Basic(_)) || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced_cost(j, y);
            let dir = match st {
                VarState::Lower if d < -tol => 1.0,
                VarState::Upper if d > tol => -1.0,
                VarState::Free if d.abs() > tol => -d.signum(),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.map_or(true, |(_, _, score)| d.abs() > score) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// `B^{-1} a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        self.for_each_entry(j, |r, v| {
            let col = &self.binv[r * m..(r + 1) * m];
            for (a, b) in alpha.iter_mut().zip(col) {
                *a += v * b;
            }
        });
        alpha
    }

    /// Returns the step length and the leaving basis position (`None` for a bound flip).
    fn ratio_test(&self, j: usize, dir: f64, alpha: &[f64]) -> Option<(f64, Option<usize>)> {
        let tol = self.opts.feasibility_tol;
        let piv = self.opts.pivot_tol;
        let flip = self.upper[j] - self.lower[j];
        // distance to the blocking bound of basic position p, exact and relaxed by tol
        let limit = |p: usize, slack: f64| -> Option<f64> {
            let a = alpha[p];
            if a.abs() <= piv {
                return None;
            }
            let rate = -dir * a;
            let bv = self.basis[p];
            let xb = self.x[bv];
            if rate < 0.0 {
                let lo = self.lower[bv];
                lo.is_finite().then(|| ((xb - lo + slack) / -rate).max(0.0))
            } else {
                let hi = self.upper[bv];
                hi.is_finite().then(|| ((hi - xb + slack) / rate).max(0.0))
            }
        };

        if self.bland {
            let mut best: Option<(f64, usize)> = None;
            for p in 0..self.m {
                if let Some(t) = limit(p, 0.0) {
                    let better = match best {
                        None => true,
                        Some((bt, bp)) => t < bt - 1e-12 || ((t - bt).abs() <= 1e-12 && self.basis[p] < self.basis[bp]),
                    };
                    if better {
                        best = Some((t, p));
                    }
                }
            }
            return match best {
                Some((t, _)) if flip <= t => Some((flip, None)),
                Some((t, p)) => Some((t, Some(p))),
                None if flip.is_finite() => Some((flip, None)),
                None => None,
            };
        }

        // Harris: bound the step with relaxed limits, then take the largest pivot under it
        let mut theta_max = f64::INFINITY;
        for p in 0..self.m {
            if let Some(t) = limit(p, tol) {
                theta_max = theta_max.min(t);
            }
        }
        if !theta_max.is_finite() {
            return flip.is_finite().then_some((flip, None));
        }
        let mut chosen: Option<(usize, f64)> = None;
        for p in 0..self.m {
            if let Some(t) = limit(p, 0.0) {
                if t <= theta_max && chosen.map_or(true, |(_, a)| alpha[p].abs() > a) {
                    chosen = Some((p, alpha[p].abs()));
                }
            }
        }
        let (p, _) = chosen?;
        let t = limit(p, 0.0).unwrap();
        if flip <= t {
            Some((flip, None))
        } else {
            Some((t, Some(p)))
        }
    }

    fn step(&mut self, j: usize, dir: f64, theta: f64, leave: Option<usize>, alpha: &[f64]) {
        if theta <= 1e-12 {
            self.stall += 1;
        } else {
            self.stall = 0;
        }
        if theta != 0.0 {
            self.x[j] += dir * theta;
            for p in 0..self.m {
                let bv = self.basis[p];
                self.x[bv] -= dir * theta * alpha[p];
            }
        }
        match leave {
            None => {
                // bound flip
                if dir > 0.0 {
                    self.x[j] = self.upper[j];
                    self.state[j] = VarState::Upper;
                } else {
                    self.x[j] = self.lower[j];
                    self.state[j] = VarState::Lower;
                }
            }
            Some(r) => {
                let out = self.basis[r];
                let rate = -dir * alpha[r];
                if rate < 0.0 {
                    self.x[out] = self.lower[out];
                    self.state[out] = VarState::Lower;
                } else {
                    self.x[out] = self.upper[out];
                    self.state[out] = VarState::Upper;
                }
                self.basis[r] = j;
                self.state[j] = VarState::Basic(r);
                self.pivot(r, alpha);
            }
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let ar = alpha[r];
        for i in 0..m {
            let col = &mut self.binv[i * m..(i + 1) * m];
            let e = col[r];
            if e == 0.0 {
                continue;
            }
            let scaled = e / ar;
            for (p, v) in col.iter_mut().enumerate() {
                if p == r {
                    *v = scaled;
                } else {
                    *v -= alpha[p] * scaled;
                }
            }
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        // dense B, row-major, augmented with identity; Gauss-Jordan with partial pivoting
        let mut b = vec![0.0; m * m];
        for (p, &j) in self.basis.iter().enumerate() {
            self.for_each_entry(j, |r, v| b[r * m + p] = v);
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (piv_row, piv_abs) = (c..m)
                .map(|r| (r, b[r * m + c].abs()))
                .fold((c, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if piv_abs < 1e-12 {
                return Err(Error::Solver(format!(
                    "singular basis at column {c} (pivot {piv_abs:e}) after {} iterations",
                    self.iterations
                )));
            }
            if piv_row != c {
                for k in 0..m {
                    b.swap(piv_row * m + k, c * m + k);
                    inv.swap(piv_row * m + k, c * m + k);
                }
            }
            let d = b[c * m + c];
            for k in 0..m {
                b[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = b[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    b[r * m + k] -= f * b[c * m + k];
                    inv[r * m + k] -= f * inv[c * m + k];
                }
            }
        }
        // inv is row-major B^{-1}; store column-major
        for p in 0..m {
            for i in 0..m {
                self.binv[i * m + p] = inv[p * m + i];
            }
        }
        // recompute basic values from the nonbasic ones
        let mut resid = self.problem.rhs.clone();
        for j in 0..self.total() {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let xj = self.x[j];
            if xj != 0.0 {
                self.for_each_entry(j, |r, v| resid[r] -= v * xj);
            }
        }
        for p in 0..m {
            let mut v = 0.0;
            for (i, ri) in resid.iter().enumerate() {
                v += self.binv[i * m + p] * ri;
            }
            let bv = self.basis[p];
            self.x[bv] = v;
        }
        Ok(())
    }

    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.m;
        for r in 0..m {
            let bv = self.basis[r];
            if !self.is_artificial(bv) {
                continue;
            }
            // row r of B^{-1} A over non-artificial nonbasic columns
            let row: Vec<f64> = (0..m).map(|i| self.binv[i * m + r]).collect();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n + self.m {
                if matches!(self.state[j], VarState::Basic(_)) {
                    continue;
                }
                let mut a = 0.0;
                self.for_each_entry(j, |i, v| a += row[i] * v);
                if a.abs() > 1e-7 && best.map_or(true, |(_, b)| a.abs() > b) {
                    best = Some((j, a.abs()));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.ftran(j);
                self.x[bv] = 0.0;
                self.state[bv] = VarState::Lower;
                self.basis[r] = j;
                self.state[j] = VarState::Basic(r);
                self.pivot(r, &alpha);
            }
        }
        self.refactor()
    }

    fn failure(&self, status: LpStatus) -> LpSolution {
        LpSolution {
            status,
            primal: self.x[..self.n].to_vec(),
            duals: Vec::new(),
            objective: match status {
                LpStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            dual_objective: f64::INFINITY,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            iterations: self.iterations,
        }
    }

    fn certificate(&self) -> LpSolution {
        let (m, n) = (self.m, self.n);
        let pb = self.problem;
        let mut primal = self.x[..n].to_vec();
        for (j, v) in primal.iter_mut().enumerate() {
            *v = v.clamp(pb.lower[j], pb.upper[j]);
        }
        let objective: f64 = primal.iter().zip(&pb.objective).map(|(x, c)| x * c).sum();
        let y = self.row_prices();

        let mut primal_residual: f64 = 0.0;
        let mut magnitude = vec![0.0f64; m];
        let mut act = vec![0.0; m];
        for j in 0..n {
            for &(r, v) in &self.cols[j] {
                act[r] += v * primal[j];
                magnitude[r] += (v * primal[j]).abs();
            }
        }
        for i in 0..m {
            let b = pb.rhs[i];
            let viol = match pb.senses[i] {
                Sense::Le => (act[i] - b).max(0.0),
                Sense::Ge => (b - act[i]).max(0.0),
                Sense::Eq => (act[i] - b).abs(),
            };
            primal_residual = primal_residual.max(viol / magnitude[i].max(b.abs()).max(1.0));
        }

        let mut dual_residual: f64 = 0.0;
        let mut dual_objective: f64 = y.iter().zip(&pb.rhs).map(|(a, b)| a * b).sum();
        for j in 0..n {
            let d = self.reduced_cost(j, &y);
            let scale = pb.objective[j].abs().max(1.0);
            if d > 0.0 {
                if pb.lower[j].is_finite() {
                    dual_objective += d * pb.lower[j];
                } else {
                    dual_residual = dual_residual.max(d / scale);
                }
            } else if d < 0.0 {
                if pb.upper[j].is_finite() {
                    dual_objective += d * pb.upper[j];
                } else {
                    dual_residual = dual_residual.max(-d / scale);
                }
            }
        }
        for i in 0..m {
            let viol = match pb.senses[i] {
                Sense::Le => y[i].max(0.0),
                Sense::Ge => (-y[i]).max(0.0),
                Sense::Eq => 0.0,
            };
            dual_residual = dual_residual.max(viol);
        }
        LpSolution {
            status: LpStatus::Optimal,
            primal,
            duals: y.iter().map(|v| -v).collect(),
            objective,
            dual_objective,
            primal_residual,
            dual_residual,
            iterations: self.iterations,
        }
    }
}
