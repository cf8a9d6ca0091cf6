//! Cumulative gap against the static comparator, and cumulative violation.

use super::oracle::BenchmarkResult;
use super::records::EpisodeRecord;
use crate::balde::PlanStatus;
use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::mdp::ValueResult;

/// Builds [`EpisodeRecord`]s one episode at a time.
#[derive(Clone, Debug)]
pub struct Accountant {
    comparator: Vec<f64>,
    alpha: f64,
    beta: f64,
    previous_budget: f64,
    cum_gap: f64,
    cum_viol: f64,
    k: usize,
}

impl Accountant {
    pub fn new(benchmark: &BenchmarkResult, alpha: f64, beta: f64) -> Self {
        Self {
            comparator: benchmark.comparator.clone(),
            alpha,
            beta,
            previous_budget: 0.0,
            cum_gap: 0.0,
            cum_viol: 0.0,
            k: 0,
        }
    }

    /// Episodes accounted so far.
    pub fn episodes(&self) -> usize {
        self.k
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        b: f64,
        lambda: Option<f64>,
        expected: ValueResult,
        trajectory: &Trajectory,
        f_k: f64,
        lp_status: PlanStatus,
        solve_ms: Option<f64>,
    ) -> Result<EpisodeRecord> {
        let Some(&comparator) = self.comparator.get(self.k) else {
            return Err(Error::Data(format!("benchmark covers only {} episodes", self.comparator.len())));
        };
        self.k += 1;
        let switch_cost = self.alpha * (b - self.previous_budget).powi(2);
        self.previous_budget = b;
        let episode_cost = f_k + switch_cost + self.beta * expected.expected_loss;
        self.cum_gap += episode_cost - comparator;
        self.cum_viol += (expected.expected_consumption - b).max(0.0);
        Ok(EpisodeRecord {
            k: self.k,
            b,
            lambda,
            exp_loss: expected.expected_loss,
            exp_cons: expected.expected_consumption,
            real_loss: trajectory.total_loss(),
            real_cons: trajectory.total_consumption(),
            f_k,
            switch_cost,
            episode_cost,
            cum_gap: self.cum_gap,
            cum_viol: self.cum_viol,
            lp_status,
            solve_ms,
        })
    }
}

/// Cumulative series indexed by episode (`series[k - 1]` covers episodes `1..=k`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricSeries {
    pub cum_gap: Vec<f64>,
    pub cum_viol: Vec<f64>,
    /// Gap with the realized trajectory loss in place of the expected loss.
    pub cum_realized_gap: Vec<f64>,
    /// Violation of the realized consumption.
    pub cum_realized_viol: Vec<f64>,
}

/// Recomputes the cumulative series from stored records.
pub fn compute_metrics(records: &[EpisodeRecord], benchmark: &BenchmarkResult, beta: f64) -> Result<MetricSeries> {
    if records.len() > benchmark.comparator.len() {
        return Err(Error::Data(format!(
            "{} records but the benchmark covers {} episodes",
            records.len(),
            benchmark.comparator.len()
        )));
    }
    let mut out = MetricSeries::default();
    let (mut gap, mut viol, mut rgap, mut rviol) = (0.0, 0.0, 0.0, 0.0);
    for (i, (r, c)) in records.iter().zip(&benchmark.comparator).enumerate() {
        if r.k != i + 1 {
            return Err(Error::Data(format!("missing episode {} (found k = {})", i + 1, r.k)));
        }
        gap += r.episode_cost - c;
        viol += r.violation();
        rgap += r.f_k + r.switch_cost + beta * r.real_loss - c;
        rviol += (r.real_cons - r.b).max(0.0);
        out.cum_gap.push(gap);
        out.cum_viol.push(viol);
        out.cum_realized_gap.push(rgap);
        out.cum_realized_viol.push(rviol);
    }
    Ok(out)
}
