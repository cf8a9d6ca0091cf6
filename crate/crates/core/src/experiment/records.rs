//! Per-episode telemetry rows and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::balde::PlanStatus;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "k,b,lambda,exp_loss,exp_cons,real_loss,real_cons,f_k,switch_cost,episode_cost,cum_gap,cum_viol,lp_status,solve_ms";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// One-based episode index.
    pub k: usize,
    pub b: f64,
    /// Absent for the decoupled baseline, whose provisioner never sees a multiplier.
    pub lambda: Option<f64>,
    pub exp_loss: f64,
    pub exp_cons: f64,
    pub real_loss: f64,
    pub real_cons: f64,
    pub f_k: f64,
    /// `alpha (b_k - b_{k-1})^2`.
    pub switch_cost: f64,
    /// `f_k + switch_cost + beta exp_loss`.
    pub episode_cost: f64,
    pub cum_gap: f64,
    pub cum_viol: f64,
    pub lp_status: PlanStatus,
    pub solve_ms: Option<f64>,
}

impl EpisodeRecord {
    /// Violation contribution `[exp_cons - b]_+`.
    pub fn violation(&self) -> f64 {
        (self.exp_cons - self.b).max(0.0)
    }

    /// Recomputes the episode cost from its components.
    pub fn recomputed_cost(&self, beta: f64) -> f64 {
        self.f_k + self.switch_cost + beta * self.exp_loss
    }
}

pub fn write_records<W: Write>(records: &[EpisodeRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<EpisodeRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Data(format!("unexpected CSV header `{header}`")));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}
