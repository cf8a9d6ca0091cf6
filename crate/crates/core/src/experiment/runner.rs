//! Seeded run loops for BLOL, the fixed-budget learner and the decoupled baseline.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Algorithm, RunConfig};
use super::metrics::Accountant;
use super::oracle::{budget_grid, static_oracle, value_curve, BenchmarkResult, ValueCurve};
use super::records::EpisodeRecord;
use super::ENV_STREAM;
use crate::balde::{BaldeState, PlanStatus, SafeBaseline};
use crate::baselines::QLearner;
use crate::blol::{BlolState, BudgetStep};
use crate::env::QueueEnv;
use crate::error::{Error, Result};
use crate::estimation::ConfidenceModel;
use crate::mdp::evaluate_policy;

/// Result of one seeded run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub benchmark: BenchmarkResult,
    /// Final visit counts of the safe scheduler (absent for the decoupled baseline).
    pub confidence: Option<ConfidenceModel>,
}

/// A validated configuration with its environment and known-model value curve.
#[derive(Clone, Debug)]
pub struct Experiment {
    config: RunConfig,
    env: QueueEnv,
    curve: ValueCurve,
}

/// Checks the step-size law and the switching-cost series after every update.
struct StabilityMonitor {
    bound: f64,
    grad_clip: f64,
    warmup: usize,
    post_warmup_switching: f64,
}

impl StabilityMonitor {
    fn check(&mut self, k: usize, previous: f64, step: &BudgetStep) -> Result<()> {
        if k <= self.warmup {
            return Ok(());
        }
        let moved = (step.next - previous).abs();
        if moved > self.grad_clip * step.step_size + 1e-12 {
            return Err(Error::Domain(format!(
                "episode {k}: budget moved {moved}, more than G eta = {}",
                self.grad_clip * step.step_size
            )));
        }
        self.post_warmup_switching += step.switching_cost;
        if self.post_warmup_switching > self.bound + 1e-12 {
            return Err(Error::Domain(format!(
                "episode {k}: switching cost {} exceeds the bound {}",
                self.post_warmup_switching, self.bound
            )));
        }
        Ok(())
    }
}

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let env = QueueEnv::new(config.queue_config())?;
        let grid = budget_grid(config.min_budget, config.horizon as f64, config.grid_step)?;
        let curve = value_curve(env.true_mdp(), &grid)?;
        Ok(Self { config, env, curve })
    }

    /// Same environment and value curve, different algorithm.
    pub fn with_algorithm(&self, algorithm: Algorithm) -> Result<Self> {
        let mut config = self.config.clone();
        config.algorithm = algorithm;
        config.validate()?;
        Ok(Self { config, env: self.env.clone(), curve: self.curve.clone() })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn env(&self) -> &QueueEnv {
        &self.env
    }

    pub fn curve(&self) -> &ValueCurve {
        &self.curve
    }

    pub fn demand(&self, seed: u64) -> Result<Vec<f64>> {
        self.config.demand.sample(self.config.episodes, seed)
    }

    pub fn benchmark(&self, seed: u64) -> Result<BenchmarkResult> {
        static_oracle(&self.curve, &self.config.cost, &self.demand(seed)?, self.config.alpha, self.config.beta)
    }

    pub fn run(&self, seed: u64) -> Result<RunOutcome> {
        self.run_with(seed, |_| Ok(()))
    }

    /// Runs one seed and streams each record to `sink` as soon as it is complete.
    pub fn run_with(&self, seed: u64, mut sink: impl FnMut(&EpisodeRecord) -> Result<()>) -> Result<RunOutcome> {
        let benchmark = self.benchmark(seed)?;
        let rho = self.demand(seed)?;
        let mut records = Vec::with_capacity(self.config.episodes);
        let mut emit = |r: EpisodeRecord| -> Result<()> {
            sink(&r)?;
            records.push(r);
            Ok(())
        };
        let confidence = match self.config.algorithm {
            Algorithm::Decoupled => {
                self.decoupled(seed, &benchmark, &rho, &mut emit)?;
                None
            }
            alg => Some(self.scheduled(alg, seed, &benchmark, &rho, &mut emit)?),
        };
        Ok(RunOutcome { seed, records, benchmark, confidence })
    }

    /// Runs one seed and writes the CSV to `path` row by row.
    pub fn run_to_file(&self, seed: u64, path: &Path) -> Result<RunOutcome> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        // serde headers come from the field names, which spell CSV_HEADER
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        let out = self.run_with(seed, |r| Ok(w.serialize(r)?))?;
        w.flush()?;
        Ok(out)
    }

    fn monitor(&self, upper: &BlolState) -> StabilityMonitor {
        StabilityMonitor {
            bound: upper.config().switching_bound(),
            grad_clip: upper.config().grad_clip,
            warmup: self.config.warmup,
            post_warmup_switching: 0.0,
        }
    }

    fn solve_ms(&self, elapsed: std::time::Duration) -> Option<f64> {
        self.config.record_timing.then(|| elapsed.as_secs_f64() * 1e3)
    }

    /// BLOL, or the safe scheduler at a constant budget.
    fn scheduled(
        &self,
        algorithm: Algorithm,
        seed: u64,
        benchmark: &BenchmarkResult,
        rho: &[f64],
        emit: &mut impl FnMut(EpisodeRecord) -> Result<()>,
    ) -> Result<ConfidenceModel> {
        let cfg = &self.config;
        let mdp = self.env.true_mdp();
        let baseline = SafeBaseline::idle(mdp)?;
        let mut balde = BaldeState::new(cfg.scheduler(), mdp.clone(), baseline)?;
        let mut upper = BlolState::new(cfg.upper_level())?;
        let mut monitor = self.monitor(&upper);
        let mut acc = Accountant::new(benchmark, cfg.alpha, cfg.beta);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ENV_STREAM);
        for (i, &rho_k) in rho.iter().enumerate() {
            let k = i + 1;
            let b = match algorithm {
                Algorithm::FixedBudget(b) => b,
                _ => upper.budget(),
            };
            let out = balde.run_episode(b, &self.env, seed, &mut rng)?;
            let expected = evaluate_policy(mdp, &out.policy)?;
            let f_k = cfg.cost.value(b, rho_k);
            let ms = self.solve_ms(out.stats.elapsed);
            emit(acc.record(b, Some(out.lambda), expected, &out.trajectory, f_k, out.status, ms)?)?;
            if algorithm == Algorithm::Blol {
                let step = upper.update_budget(cfg.cost.gradient(b, rho_k), out.lambda, k)?;
                monitor.check(k, b, &step)?;
            }
        }
        Ok(balde.confidence().clone())
    }

    /// Switching-aware gradient descent on `f_k` above a budget-blind Q-learner.
    fn decoupled(
        &self,
        seed: u64,
        benchmark: &BenchmarkResult,
        rho: &[f64],
        emit: &mut impl FnMut(EpisodeRecord) -> Result<()>,
    ) -> Result<()> {
        let cfg = &self.config;
        let mdp = self.env.true_mdp();
        let mut learner = QLearner::new(mdp.dims(), cfg.qlearning)?;
        let mut upper = BlolState::new(cfg.upper_level())?;
        let mut monitor = self.monitor(&upper);
        let mut acc = Accountant::new(benchmark, cfg.alpha, cfg.beta);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ENV_STREAM);
        for (i, &rho_k) in rho.iter().enumerate() {
            let k = i + 1;
            let b = upper.budget();
            let policy = learner.behavior_policy(k);
            let trajectory = self.env.rollout(&policy, i, seed, &mut rng)?;
            learner.update(&trajectory)?;
            let expected = evaluate_policy(mdp, &policy)?;
            let f_k = cfg.cost.value(b, rho_k);
            let ms = self.solve_ms(std::time::Duration::ZERO);
            emit(acc.record(b, None, expected, &trajectory, f_k, PlanStatus::Qlearning, ms)?)?;
            let step = upper.update_budget_switching(cfg.cost.gradient(b, rho_k), k);
            monitor.check(k, b, &step)?;
        }
        Ok(())
    }
}

/// `{algorithm}_seed{seed}.csv`.
pub fn cell_file_name(algorithm: Algorithm, seed: u64) -> String {
    format!("{}_seed{seed}.csv", algorithm.label())
}

/// Runs every (algorithm, seed) cell in parallel, one CSV per cell in `out_dir`.
pub fn sweep(base: &Experiment, algorithms: &[Algorithm], seeds: &[u64], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let cells: Vec<(Algorithm, u64)> =
        algorithms.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    cells
        .par_iter()
        .map(|&(alg, seed)| {
            let path = out_dir.join(cell_file_name(alg, seed));
            base.with_algorithm(alg)?.run_to_file(seed, &path)?;
            Ok(path)
        })
        .collect()
}
