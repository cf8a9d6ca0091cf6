//! Run configuration and its `key = value` text format.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::balde::{BaldeConfig, LazyResolve};
use crate::baselines::QLearningConfig;
use crate::blol::{BlolConfig, DemandProfile, ProvisioningCost};
use crate::env::{ArrivalSpec, QueueEnvConfig};
use crate::error::{Error, Result};
use crate::lp::PlannerKind;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm {
    Blol,
    FixedBudget(f64),
    Decoupled,
}

impl Algorithm {
    /// File-name friendly label: `blol`, `fixed-b4`, `decoupled`.
    pub fn label(&self) -> String {
        match self {
            Algorithm::Blol => "blol".into(),
            Algorithm::FixedBudget(b) => format!("fixed-b{b}"),
            Algorithm::Decoupled => "decoupled".into(),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    /// Accepts `blol`, `decoupled`, `fixed:<b>` and `fixed-b<b>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "blol" => return Ok(Algorithm::Blol),
            "decoupled" => return Ok(Algorithm::Decoupled),
            _ => {}
        }
        let budget = s.strip_prefix("fixed:").or_else(|| s.strip_prefix("fixed-b"));
        match budget.map(str::parse::<f64>) {
            Some(Ok(b)) if b.is_finite() => Ok(Algorithm::FixedBudget(b)),
            _ => Err(Error::Config(format!("unknown algorithm `{s}` (blol, decoupled, fixed:<budget>)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArrivalKind {
    Poisson,
    Trace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub s_max: usize,
    pub actions: Vec<usize>,
    pub horizon: usize,
    pub mu: f64,
    pub consumption_scale: f64,
    pub arrival: ArrivalKind,
    pub arrival_rate: f64,
    pub arrival_cap: usize,
    pub trace_path: Option<PathBuf>,
    pub trace_mean: f64,

    pub algorithm: Algorithm,
    pub episodes: usize,
    pub warmup: usize,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub min_budget: f64,
    pub cost: ProvisioningCost,
    pub demand: DemandProfile,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,

    pub lazy_resolve: bool,
    pub lazy_threshold: f64,
    pub grid_step: f64,
    pub radius_scale: f64,
    pub planner: PlannerKind,
    pub grad_clip: f64,
    /// Defaults to `2 (M2 + M0)`.
    pub theta_g: Option<f64>,
    /// Defaults to `T / (B_0 - b_base)`.
    pub lambda_cap: Option<f64>,
    pub known_model: bool,
    pub qlearning: QLearningConfig,
    /// Fill the `solve_ms` column (makes output timing dependent).
    pub record_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            s_max: 10,
            actions: vec![0, 1, 2],
            horizon: 10,
            mu: 0.1,
            consumption_scale: 2.0,
            arrival: ArrivalKind::Poisson,
            arrival_rate: 1.12,
            arrival_cap: 9,
            trace_path: None,
            trace_mean: 1.12,
            algorithm: Algorithm::Blol,
            episodes: 5000,
            warmup: 500,
            delta: 0.05,
            alpha: 0.5,
            beta: 1.0,
            min_budget: 2.0,
            cost: ProvisioningCost::default(),
            demand: DemandProfile::default(),
            seeds: vec![0],
            output: None,
            lazy_resolve: false,
            lazy_threshold: 0.25,
            grid_step: 0.05,
            radius_scale: 1.0,
            planner: PlannerKind::Parametric,
            grad_clip: 50.0,
            theta_g: None,
            lambda_cap: None,
            known_model: false,
            qlearning: QLearningConfig::default(),
            record_timing: false,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

fn parse_optional(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Every recognized key, in rendering order.
    pub const KEYS: &'static [&'static str] = &[
        "s_max", "actions", "horizon", "mu", "consumption_scale", "arrival", "arrival_rate", "arrival_cap",
        "trace_path", "trace_mean", "algorithm", "episodes", "warmup", "delta", "alpha", "beta", "b0", "m0", "m1",
        "m2", "rho0", "demand_base", "demand_amplitude", "demand_period", "demand_noise", "seeds", "output",
        "lazy_resolve", "lazy_threshold", "grid_step", "radius_scale", "planner", "grad_clip", "theta_g",
        "lambda_cap", "known_model", "q_learning_rate", "q_epsilon_floor", "q_epsilon_decay", "record_timing",
    ];

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "s_max" => self.s_max = parse_num(key, v)?,
            "actions" => self.actions = parse_list(key, v)?,
            "horizon" => self.horizon = parse_num(key, v)?,
            "mu" => self.mu = parse_num(key, v)?,
            "consumption_scale" => self.consumption_scale = parse_num(key, v)?,
            "arrival" => {
                self.arrival = match v {
                    "poisson" => ArrivalKind::Poisson,
                    "trace" => ArrivalKind::Trace,
                    _ => return Err(Error::Config(format!("`arrival`: expected poisson or trace, got `{v}`"))),
                }
            }
            "arrival_rate" => self.arrival_rate = parse_num(key, v)?,
            "arrival_cap" => self.arrival_cap = parse_num(key, v)?,
            "trace_path" => self.trace_path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "trace_mean" => self.trace_mean = parse_num(key, v)?,
            "algorithm" => self.algorithm = v.parse()?,
            "episodes" => self.episodes = parse_num(key, v)?,
            "warmup" => self.warmup = parse_num(key, v)?,
            "delta" => self.delta = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "b0" => self.min_budget = parse_num(key, v)?,
            "m0" => self.cost.m0 = parse_num(key, v)?,
            "m1" => self.cost.m1 = parse_num(key, v)?,
            "m2" => self.cost.m2 = parse_num(key, v)?,
            "rho0" => self.cost.rho0 = parse_num(key, v)?,
            "demand_base" => self.demand.base = parse_num(key, v)?,
            "demand_amplitude" => self.demand.amplitude = parse_num(key, v)?,
            "demand_period" => self.demand.period = parse_num(key, v)?,
            "demand_noise" => self.demand.noise_sd = parse_num(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "output" => self.output = (!v.is_empty()).then(|| PathBuf::from(v)),
            "lazy_resolve" => self.lazy_resolve = parse_bool(key, v)?,
            "lazy_threshold" => self.lazy_threshold = parse_num(key, v)?,
            "grid_step" => self.grid_step = parse_num(key, v)?,
            "radius_scale" => self.radius_scale = parse_num(key, v)?,
            "planner" => self.planner = v.parse()?,
            "grad_clip" => self.grad_clip = parse_num(key, v)?,
            "theta_g" => self.theta_g = parse_optional(key, v)?,
            "lambda_cap" => self.lambda_cap = parse_optional(key, v)?,
            "known_model" => self.known_model = parse_bool(key, v)?,
            "q_learning_rate" => self.qlearning.learning_rate = parse_num(key, v)?,
            "q_epsilon_floor" => self.qlearning.epsilon_floor = parse_num(key, v)?,
            "q_epsilon_decay" => self.qlearning.epsilon_decay = parse_num(key, v)?,
            "record_timing" => self.record_timing = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse { line: i + 1, msg: format!("expected `key = value`, got `{line}`") });
            };
            cfg.set(key, value).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Writes every key; `parse(render())` reproduces the configuration.
    pub fn render(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |x| x.to_string());
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let values: Vec<String> = vec![
            self.s_max.to_string(),
            join(&self.actions),
            self.horizon.to_string(),
            self.mu.to_string(),
            self.consumption_scale.to_string(),
            match self.arrival {
                ArrivalKind::Poisson => "poisson".into(),
                ArrivalKind::Trace => "trace".into(),
            },
            self.arrival_rate.to_string(),
            self.arrival_cap.to_string(),
            path(&self.trace_path),
            self.trace_mean.to_string(),
            match self.algorithm {
                Algorithm::FixedBudget(b) => format!("fixed:{b}"),
                a => a.label(),
            },
            self.episodes.to_string(),
            self.warmup.to_string(),
            self.delta.to_string(),
            self.alpha.to_string(),
            self.beta.to_string(),
            self.min_budget.to_string(),
            self.cost.m0.to_string(),
            self.cost.m1.to_string(),
            self.cost.m2.to_string(),
            self.cost.rho0.to_string(),
            self.demand.base.to_string(),
            self.demand.amplitude.to_string(),
            self.demand.period.to_string(),
            self.demand.noise_sd.to_string(),
            join(&self.seeds),
            path(&self.output),
            self.lazy_resolve.to_string(),
            self.lazy_threshold.to_string(),
            self.grid_step.to_string(),
            self.radius_scale.to_string(),
            match self.planner {
                PlannerKind::Simplex => "simplex".into(),
                PlannerKind::Parametric => "parametric".into(),
            },
            self.grad_clip.to_string(),
            opt(self.theta_g),
            opt(self.lambda_cap),
            self.known_model.to_string(),
            self.qlearning.learning_rate.to_string(),
            self.qlearning.epsilon_floor.to_string(),
            self.qlearning.epsilon_decay.to_string(),
            self.record_timing.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in Self::KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.warmup >= self.episodes {
            return Err(Error::Config(format!(
                "need episodes > warmup >= 0 (episodes = {}, warmup = {})",
                self.episodes, self.warmup
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta = {} outside (0, 1)", self.delta)));
        }
        if !(self.grid_step > 0.0) {
            return Err(Error::Config("grid_step must be positive".into()));
        }
        if !(self.radius_scale > 0.0) || !(self.lazy_threshold >= 0.0) {
            return Err(Error::Config("radius_scale must be positive and lazy_threshold nonnegative".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.arrival == ArrivalKind::Trace && self.trace_path.is_none() {
            return Err(Error::Config("trace arrivals need `trace_path`".into()));
        }
        if let Algorithm::FixedBudget(b) = self.algorithm {
            if !(b >= self.min_budget && b <= self.horizon as f64) {
                return Err(Error::Config(format!(
                    "fixed budget {b} outside [{}, {}]",
                    self.min_budget, self.horizon
                )));
            }
        }
        self.cost.validate()?;
        self.qlearning.validate()?;
        self.upper_level().validate()?;
        self.queue_config().validate()
    }

    pub fn queue_config(&self) -> QueueEnvConfig {
        let arrival = match self.arrival {
            ArrivalKind::Poisson => ArrivalSpec::Poisson { rate: self.arrival_rate, cap: self.arrival_cap },
            ArrivalKind::Trace => ArrivalSpec::Trace {
                path: self.trace_path.clone().unwrap_or_default(),
                target_mean: self.trace_mean,
                cap: self.arrival_cap,
            },
        };
        QueueEnvConfig {
            s_max: self.s_max,
            actions: self.actions.clone(),
            horizon: self.horizon,
            mu: self.mu,
            consumption_scale: self.consumption_scale,
            arrival,
        }
    }

    pub fn upper_level(&self) -> BlolConfig {
        BlolConfig {
            min_budget: self.min_budget,
            max_budget: self.horizon as f64,
            warmup: self.warmup,
            theta_g: self.theta_g.unwrap_or(self.cost.strong_convexity()),
            alpha: self.alpha,
            beta: self.beta,
            grad_clip: self.grad_clip,
        }
    }

    pub fn scheduler(&self) -> BaldeConfig {
        BaldeConfig {
            delta: self.delta,
            warmup: self.warmup,
            planned_episodes: self.episodes,
            min_budget: self.min_budget,
            lambda_cap: self.lambda_cap,
            radius_scale: self.radius_scale,
            planner: self.planner,
            lazy: self.lazy_resolve.then_some(LazyResolve { budget_threshold: self.lazy_threshold }),
            known_model: self.known_model,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_render_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);

        let mut odd = cfg.clone();
        odd.algorithm = Algorithm::FixedBudget(4.5);
        odd.theta_g = Some(0.3);
        odd.seeds = vec![3, 1, 4];
        odd.output = Some(PathBuf::from("out/r.csv"));
        odd.planner = PlannerKind::Simplex;
        assert_eq!(RunConfig::parse(&odd.render()).unwrap(), odd);
    }

    #[test]
    fn comments_blank_lines_and_overrides() {
        let text = "# desk run\n\nepisodes = 200  # short\nwarmup=20\nalgorithm = fixed:4\nseeds = 1, 2,3\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.episodes, 200);
        assert_eq!(cfg.warmup, 20);
        assert_eq!(cfg.algorithm, Algorithm::FixedBudget(4.0));
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
    }

    #[test]
    fn errors_name_the_line() {
        match RunConfig::parse("episodes = 10\nbogus = 1\n") {
            Err(Error::Parse { line: 2, msg }) => assert!(msg.contains("bogus")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(RunConfig::parse("episodes 10"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(RunConfig::parse("episodes = 10\nwarmup = 10"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("delta = 1.5"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("algorithm = fixed:12"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("arrival = trace"), Err(Error::Config(_))));
    }

    #[test]
    fn algorithm_labels() {
        for a in [Algorithm::Blol, Algorithm::Decoupled, Algorithm::FixedBudget(4.0), Algorithm::FixedBudget(6.5)] {
            assert_eq!(a.label().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!(Algorithm::FixedBudget(8.0).label(), "fixed-b8");
        assert!("fixed:x".parse::<Algorithm>().is_err());
    }

    #[test]
    fn derived_parameters() {
        let cfg = RunConfig::default();
        assert!((cfg.upper_level().theta_g - 0.6).abs() < 1e-15);
        assert_eq!(cfg.upper_level().max_budget, 10.0);
        assert_eq!(cfg.scheduler().planned_episodes, 5000);
        assert!(cfg.scheduler().lazy.is_none());
    }
}
