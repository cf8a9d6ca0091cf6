//! Single-queue slice scheduling environment.
//!
//! The backlog evolves as `s' = min(s_max, max(0, s - a + A))` where `a` is the
//! number of resource blocks served in the slot and `A` the packet arrivals.
//! Stage loss is `mu + (1 - mu) (s / s_max)^2`, consumption is
//! `a / consumption_scale`. Each episode starts from an empty queue.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::mdp::{sample_index, Policy, TabularMdp};

/// Tail mass allowed to be discarded by Poisson truncation.
pub const TRUNCATION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum ArrivalSpec {
    Poisson { rate: f64, cap: usize },
    /// Replays a packet-count trace scaled to `target_mean`. Counts above `cap`
    /// are clamped to `cap` both in the replay and in the empirical model.
    Trace { path: PathBuf, target_mean: f64, cap: usize },
}

impl ArrivalSpec {
    pub fn cap(&self) -> usize {
        match self {
            ArrivalSpec::Poisson { cap, .. } | ArrivalSpec::Trace { cap, .. } => *cap,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueueEnvConfig {
    pub s_max: usize,
    /// Resource blocks per slot for each action index.
    pub actions: Vec<usize>,
    pub horizon: usize,
    pub mu: f64,
    pub consumption_scale: f64,
    pub arrival: ArrivalSpec,
}

impl Default for QueueEnvConfig {
    fn default() -> Self {
        Self {
            s_max: 10,
            actions: vec![0, 1, 2],
            horizon: 10,
            mu: 0.1,
            consumption_scale: 2.0,
            arrival: ArrivalSpec::Poisson { rate: 1.12, cap: 9 },
        }
    }
}

impl QueueEnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_max < 1 {
            return Err(Error::Config("s_max must be at least 1".into()));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.actions.is_empty() {
            return Err(Error::Config("action list is empty".into()));
        }
        let mut sorted = self.actions.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.actions.len() {
            return Err(Error::Config("actions must be distinct".into()));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::Config(format!("mu = {} outside [0, 1]", self.mu)));
        }
        if !(self.consumption_scale > 0.0) {
            return Err(Error::Config("consumption_scale must be positive".into()));
        }
        let worst = *sorted.last().unwrap() as f64 / self.consumption_scale;
        if worst > 1.0 {
            return Err(Error::Config(format!(
                "consumption {worst} of action {} exceeds 1",
                sorted.last().unwrap()
            )));
        }
        match &self.arrival {
            ArrivalSpec::Poisson { rate, .. } if !(*rate > 0.0) => {
                Err(Error::Config("poisson rate must be positive".into()))
            }
            ArrivalSpec::Trace { target_mean, .. } if !(*target_mean > 0.0) => {
                Err(Error::Config("trace target mean must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn num_states(&self) -> usize {
        self.s_max + 1
    }

    pub fn stage_loss(&self, s: usize) -> f64 {
        let x = s as f64 / self.s_max as f64;
        self.mu + (1.0 - self.mu) * x * x
    }

    pub fn consumption(&self, action: usize) -> f64 {
        self.actions[action] as f64 / self.consumption_scale
    }

    pub fn next_state(&self, s: usize, action: usize, arrivals: usize) -> usize {
        (s.saturating_sub(self.actions[action]) + arrivals).min(self.s_max)
    }
}

/// Poisson pmf on `0..=cap`, renormalized after checking the discarded tail.
pub fn truncated_poisson(rate: f64, cap: usize) -> Result<Vec<f64>> {
    let mut pmf = Vec::with_capacity(cap + 1);
    let mut p = (-rate).exp();
    for k in 0..=cap {
        pmf.push(p);
        p *= rate / (k + 1) as f64;
    }
    let mass: f64 = pmf.iter().sum();
    if mass < 1.0 - TRUNCATION_TOL {
        return Err(Error::Config(format!(
            "poisson truncation at {cap} keeps only {mass:.9} of the mass"
        )));
    }
    pmf.iter_mut().for_each(|v| *v /= mass);
    Ok(pmf)
}

/// A scaled integer trace plus its stationary arrival histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceData {
    pub arrivals: Vec<usize>,
    pub distribution: Vec<f64>,
}

impl TraceData {
    pub fn mean(&self) -> f64 {
        self.arrivals.iter().sum::<usize>() as f64 / self.arrivals.len() as f64
    }
}

/// Parses a trace file: one non-negative packet count per line, optional header.
pub fn read_trace_counts(path: &Path) -> Result<Vec<u64>> {
    let text = fs::read_to_string(path)?;
    parse_trace_counts(&text)
}

pub fn parse_trace_counts(text: &str) -> Result<Vec<u64>> {
    let mut counts = Vec::new();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        match field.parse::<i64>() {
            Ok(v) if v < 0 => {
                return Err(Error::Parse { line: i + 1, msg: format!("negative count {v}") })
            }
            Ok(v) => counts.push(v as u64),
            Err(_) if first => {}
            Err(_) => {
                return Err(Error::Parse { line: i + 1, msg: format!("not an integer count: {field:?}") })
            }
        }
        first = false;
    }
    if counts.is_empty() {
        return Err(Error::Parse { line: 0, msg: "trace contains no counts".into() });
    }
    Ok(counts)
}

/// Linearly rescales raw counts to `target_mean` and rounds with error diffusion.
///
/// The rounding residual is carried to the next bin, so the output sum differs
/// from the scaled sum by at most one half.
pub fn scale_counts(counts: &[u64], target_mean: f64, cap: usize) -> Result<TraceData> {
    if counts.is_empty() {
        return Err(Error::Parse { line: 0, msg: "trace contains no counts".into() });
    }
    let raw_mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
    if raw_mean == 0.0 {
        return Err(Error::Data("trace has zero mean".into()));
    }
    let scale = target_mean / raw_mean;
    let mut carry = 0.0;
    let mut arrivals = Vec::with_capacity(counts.len());
    for &c in counts {
        let v = c as f64 * scale + carry;
        let out = v.round().max(0.0);
        carry = v - out;
        arrivals.push(out as usize);
    }
    let mut distribution = vec![0.0; cap + 1];
    for &a in &arrivals {
        distribution[a.min(cap)] += 1.0;
    }
    let n = arrivals.len() as f64;
    distribution.iter_mut().for_each(|v| *v /= n);
    Ok(TraceData { arrivals, distribution })
}

pub fn ingest_trace(path: &Path, target_mean: f64, cap: usize) -> Result<TraceData> {
    scale_counts(&read_trace_counts(path)?, target_mean, cap)
}

/// Two-state Markov-modulated Poisson source used to synthesize bursty traces.
#[derive(Clone, Debug, PartialEq)]
pub struct OnOffSource {
    pub rate_on: f64,
    pub rate_off: f64,
    pub p_on_to_off: f64,
    pub p_off_to_on: f64,
}

impl Default for OnOffSource {
    fn default() -> Self {
        Self { rate_on: 4.0, rate_off: 0.2, p_on_to_off: 0.1, p_off_to_on: 0.03 }
    }
}

impl OnOffSource {
    pub fn generate(&self, bins: usize, seed: u64) -> Result<Vec<u64>> {
        for p in [self.p_on_to_off, self.p_off_to_on] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("switching probability {p} outside [0, 1]")));
            }
        }
        let on = Poisson::new(self.rate_on).map_err(|e| Error::Config(e.to_string()))?;
        let off = Poisson::new(self.rate_off).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut is_on = false;
        let mut out = Vec::with_capacity(bins);
        for _ in 0..bins {
            let draw: f64 = if is_on { on.sample(&mut rng) } else { off.sample(&mut rng) };
            out.push(draw as u64);
            let flip = if is_on { self.p_on_to_off } else { self.p_off_to_on };
            if rng.random_bool(flip) {
                is_on = !is_on;
            }
        }
        Ok(out)
    }
}

pub fn write_trace(path: &Path, counts: &[u64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "packets")?;
    for c in counts {
        writeln!(f, "{c}")?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub consumption: f64,
    pub next_state: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub loss: f64,
    pub consumption: f64,
    pub next_state: usize,
}

/// One episode of realized transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub episode: usize,
    pub seed: u64,
    pub steps: Vec<Transition>,
}

impl Trajectory {
    pub fn total_loss(&self) -> f64 {
        self.steps.iter().map(|s| s.loss).sum()
    }

    pub fn total_consumption(&self) -> f64 {
        self.steps.iter().map(|s| s.consumption).sum()
    }
}

/// The queue environment: a sampler plus the reference model used by oracles.
#[derive(Clone, Debug)]
pub struct QueueEnv {
    config: QueueEnvConfig,
    arrival_pmf: Vec<f64>,
    trace: Option<Vec<usize>>,
    true_mdp: TabularMdp,
}

impl QueueEnv {
    pub fn new(config: QueueEnvConfig) -> Result<Self> {
        config.validate()?;
        let (arrival_pmf, trace) = match &config.arrival {
            ArrivalSpec::Poisson { rate, cap } => (truncated_poisson(*rate, *cap)?, None),
            ArrivalSpec::Trace { path, target_mean, cap } => {
                let data = ingest_trace(path, *target_mean, *cap)?;
                let replay = data.arrivals.iter().map(|a| (*a).min(*cap)).collect();
                (data.distribution, Some(replay))
            }
        };
        let true_mdp = kernel_model(&config, &arrival_pmf)?;
        Ok(Self { config, arrival_pmf, trace, true_mdp })
    }

    /// Builds an environment that replays an in-memory trace.
    pub fn from_trace(config: QueueEnvConfig, data: TraceData) -> Result<Self> {
        config.validate()?;
        let cap = config.arrival.cap();
        let replay = data.arrivals.iter().map(|a| (*a).min(cap)).collect();
        let mut pmf = data.distribution;
        pmf.resize(cap + 1, 0.0);
        let true_mdp = kernel_model(&config, &pmf)?;
        Ok(Self { config, arrival_pmf: pmf, trace: Some(replay), true_mdp })
    }

    pub fn config(&self) -> &QueueEnvConfig {
        &self.config
    }

    pub fn true_mdp(&self) -> &TabularMdp {
        &self.true_mdp
    }

    pub fn arrival_pmf(&self) -> &[f64] {
        &self.arrival_pmf
    }

    pub fn initial_state(&self) -> usize {
        0
    }

    fn check(&self, state: usize, action: usize) -> Result<()> {
        if state > self.config.s_max {
            return Err(Error::Domain(format!("state {state} exceeds s_max {}", self.config.s_max)));
        }
        if action >= self.config.actions.len() {
            return Err(Error::Domain(format!("action index {action} out of range")));
        }
        Ok(())
    }

    /// Applies the queue recursion for a known arrival count.
    pub fn step_with_arrivals(&self, state: usize, action: usize, arrivals: usize) -> Result<StepOutcome> {
        self.check(state, action)?;
        Ok(StepOutcome {
            loss: self.config.stage_loss(state),
            consumption: self.config.consumption(action),
            next_state: self.config.next_state(state, action, arrivals),
        })
    }

    /// Arrivals for slot `t` of episode `episode` (zero-based): a draw from the
    /// arrival distribution, or the aligned trace bin `[kT, (k+1)T)` with wrap-around.
    pub fn arrivals<R: Rng + ?Sized>(&self, episode: usize, t: usize, rng: &mut R) -> usize {
        match &self.trace {
            Some(trace) => trace[(episode * self.config.horizon + t) % trace.len()],
            None => sample_index(&self.arrival_pmf, rng),
        }
    }

    /// Samples one transition (stationary arrival model).
    pub fn step<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> Result<StepOutcome> {
        self.check(state, action)?;
        let arrivals = sample_index(&self.arrival_pmf, rng);
        self.step_with_arrivals(state, action, arrivals)
    }

    /// Executes `policy` for one episode. `episode` is zero-based and selects the
    /// trace window in trace mode.
    pub fn rollout<R: Rng + ?Sized>(
        &self,
        policy: &Policy,
        episode: usize,
        seed: u64,
        rng: &mut R,
    ) -> Result<Trajectory> {
        let horizon = self.config.horizon;
        if policy.dims() != self.true_mdp.dims() {
            return Err(Error::Dimension("policy does not match environment".into()));
        }
        let mut state = self.initial_state();
        let mut steps = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let action = policy.sample_action(t, state, rng);
            let arrivals = self.arrivals(episode, t, rng);
            let out = self.step_with_arrivals(state, action, arrivals)?;
            steps.push(Transition {
                t,
                state,
                action,
                loss: out.loss,
                consumption: out.consumption,
                next_state: out.next_state,
            });
            state = out.next_state;
        }
        Ok(Trajectory { episode, seed, steps })
    }
}

fn kernel_model(cfg: &QueueEnvConfig, arrival_pmf: &[f64]) -> Result<TabularMdp> {
    let states = cfg.num_states();
    let actions = cfg.actions.len();
    let mut kernel = vec![0.0; states * actions * states];
    let mut loss = vec![0.0; states * actions];
    let mut cons = vec![0.0; states * actions];
    for s in 0..states {
        for a in 0..actions {
            let cell = s * actions + a;
            loss[cell] = cfg.stage_loss(s);
            cons[cell] = cfg.consumption(a);
            for (arr, &p) in arrival_pmf.iter().enumerate() {
                kernel[cell * states + cfg.next_state(s, a, arr)] += p;
            }
        }
    }
    let mut initial = vec![0.0; states];
    initial[0] = 1.0;
    TabularMdp::stationary(states, actions, cfg.horizon, &kernel, &loss, &cons, initial)
}

/// Ground-truth tabular model of the queue under the configured arrival process.
pub fn build_true_mdp(cfg: &QueueEnvConfig) -> Result<TabularMdp> {
    Ok(QueueEnv::new(cfg.clone())?.true_mdp)
}
