//! Visit counts, empirical kernels and empirical-Bernstein confidence radii.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::mdp::Dims;

/// Half-width of the confidence interval around `p_hat` after `n` visits.
///
/// `sqrt(4 p(1-p) L / n) + (14 L / 3) / n`, multiplied by `scale` and clipped to
/// `[0, 1]`. An unvisited pair is vacuous (radius 1) whatever the scale.
pub fn bernstein_radius(p_hat: f64, visits: u64, log_term: f64, scale: f64) -> f64 {
    if visits == 0 {
        return 1.0;
    }
    let n = visits as f64;
    let var = p_hat * (1.0 - p_hat);
    let raw = (4.0 * var * log_term / n).sqrt() + (14.0 * log_term / 3.0) / n;
    (scale * raw).clamp(0.0, 1.0)
}

/// Immutable view of the confidence set handed to the planner.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceSnapshot {
    pub dims: Dims,
    /// `[t][s][a][s']`
    pub p_hat: Vec<f64>,
    /// `[t][s][a][s']`
    pub radius: Vec<f64>,
}

impl ConfidenceSnapshot {
    /// Point confidence set at a known model (zero radii).
    pub fn exact(mdp: &crate::mdp::TabularMdp) -> Self {
        let d = mdp.dims();
        let mut p_hat = Vec::with_capacity(d.transition_len());
        for t in 0..d.horizon {
            for s in 0..d.states {
                for a in 0..d.actions {
                    p_hat.extend_from_slice(mdp.kernel(t, s, a));
                }
            }
        }
        Self { dims: d, p_hat, radius: vec![0.0; d.transition_len()] }
    }

    /// Aggregate radius `sum_{s'} beta(s, a, s')` per `(t, s, a)`.
    pub fn radius_sums(&self) -> Vec<f64> {
        self.radius.chunks_exact(self.dims.states).map(|r| r.iter().sum()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceModel {
    dims: Dims,
    visits: Vec<u64>,
    transitions: Vec<u64>,
    delta: f64,
    planned_episodes: usize,
    radius_scale: f64,
}

impl ConfidenceModel {
    /// `planned_episodes` is the run length `K` entering the log term.
    pub fn new(dims: Dims, delta: f64, planned_episodes: usize) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain(format!("confidence level delta = {delta} outside (0, 1)")));
        }
        if planned_episodes == 0 {
            return Err(Error::Domain("planned episode count must be positive".into()));
        }
        Ok(Self {
            dims,
            visits: vec![0; dims.stage_action_len()],
            transitions: vec![0; dims.transition_len()],
            delta,
            planned_episodes,
            radius_scale: 1.0,
        })
    }

    /// Multiplies every radius before clipping. `1.0` is the unscaled bound.
    pub fn with_radius_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("radius scale {scale} must be positive")));
        }
        self.radius_scale = scale;
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn radius_scale(&self) -> f64 {
        self.radius_scale
    }

    /// `L' = ln(2 S A T K / delta)`.
    pub fn log_term(&self) -> f64 {
        let d = self.dims;
        (2.0 * (d.states * d.actions * d.horizon * self.planned_episodes) as f64 / self.delta).ln()
    }

    pub fn visits(&self, t: usize, s: usize, a: usize) -> u64 {
        self.visits[self.dims.sa(t, s, a)]
    }

    pub fn transitions(&self, t: usize, s: usize, a: usize, next: usize) -> u64 {
        self.transitions[self.dims.sas(t, s, a, next)]
    }

    pub fn visit_table(&self) -> &[u64] {
        &self.visits
    }

    /// Total visits recorded at stage `t` (one per episode).
    pub fn stage_visits(&self, t: usize) -> u64 {
        let len = self.dims.states * self.dims.actions;
        self.visits[t * len..(t + 1) * len].iter().sum()
    }

    pub fn record(&mut self, t: usize, s: usize, a: usize, next: usize) -> Result<()> {
        let d = self.dims;
        if t >= d.horizon || s >= d.states || a >= d.actions || next >= d.states {
            return Err(Error::Domain(format!(
                "transition (t={t}, s={s}, a={a}, s'={next}) outside {d:?}"
            )));
        }
        self.visits[d.sa(t, s, a)] += 1;
        self.transitions[d.sas(t, s, a, next)] += 1;
        Ok(())
    }

    /// Adds every transition of an episode. Nothing is recorded if any index is invalid.
    pub fn update_counts(&mut self, trajectory: &Trajectory) -> Result<()> {
        let d = self.dims;
        for st in &trajectory.steps {
            if st.t >= d.horizon || st.state >= d.states || st.action >= d.actions || st.next_state >= d.states {
                return Err(Error::Domain(format!("trajectory step {st:?} outside {d:?}")));
            }
        }
        for st in &trajectory.steps {
            self.record(st.t, st.state, st.action, st.next_state)?;
        }
        Ok(())
    }

    /// `p_hat(s' | s, a) = n(s, a, s') / max(1, n(s, a))`.
    pub fn empirical_kernel(&self) -> Vec<f64> {
        let s_count = self.dims.states;
        self.transitions
            .chunks_exact(s_count)
            .zip(&self.visits)
            .flat_map(|(row, &n)| {
                let denom = n.max(1) as f64;
                row.iter().map(move |&c| c as f64 / denom)
            })
            .collect()
    }

    pub fn bernstein_radius(&self) -> Vec<f64> {
        let log_term = self.log_term();
        let s_count = self.dims.states;
        self.empirical_kernel()
            .chunks_exact(s_count)
            .zip(&self.visits)
            .flat_map(|(row, &n)| {
                row.iter()
                    .map(move |&p| bernstein_radius(p, n, log_term, self.radius_scale))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn snapshot(&self) -> ConfidenceSnapshot {
        ConfidenceSnapshot { dims: self.dims, p_hat: self.empirical_kernel(), radius: self.bernstein_radius() }
    }

    /// Writes nonzero transition counts as `t,s,a,next,count` CSV.
    pub fn write_counts(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.dims;
        writeln!(f, "# states={} actions={} horizon={}", d.states, d.actions, d.horizon)?;
        writeln!(f, "t,s,a,next,count")?;
        for t in 0..d.horizon {
            for s in 0..d.states {
                for a in 0..d.actions {
                    for n in 0..d.states {
                        let c = self.transitions(t, s, a, n);
                        if c > 0 {
                            writeln!(f, "{t},{s},{a},{n},{c}")?;
                        }
                    }
                }
            }
        }
        f.flush()?;
        Ok(())
    }

    /// Loads counts written by [`ConfidenceModel::write_counts`] into an empty model.
    pub fn read_counts(&mut self, path: &Path) -> Result<()> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        for (i, line) in f.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("t,") {
                continue;
            }
            let fields: Vec<u64> = line
                .split(',')
                .map(|x| x.trim().parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            if fields.len() != 5 {
                return Err(Error::Parse { line: i + 1, msg: "expected t,s,a,next,count".into() });
            }
            let [t, s, a, n, c] = [fields[0], fields[1], fields[2], fields[3], fields[4]].map(|v| v as usize);
            self.record(t, s, a, n).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            self.visits[self.dims.sa(t, s, a)] += c as u64 - 1;
            self.transitions[self.dims.sas(t, s, a, n)] += c as u64 - 1;
        }
        Ok(())
    }
}
