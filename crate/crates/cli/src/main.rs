//! `bilevel`: run, sweep and inspect bi-level provisioning experiments.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bilevel_core::balde::{shaped_costs, SafeBaseline};
use bilevel_core::env::{write_trace, OnOffSource};
use bilevel_core::estimation::ConfidenceModel;
use bilevel_core::experiment::{sweep, Algorithm, Experiment, RunConfig};
use bilevel_core::lp::{build_extended_lp, write_lp};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bilevel", version, about = "Bi-level online provisioning and safe scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` configuration file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a single key, e.g. `--set radius_scale=0.001`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    episodes: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.overrides {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            cfg.set(k, v)?;
        }
        if let Some(k) = self.episodes {
            cfg.episodes = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm for one seed and write the per-episode CSV.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// `blol`, `decoupled` or `fixed:<budget>`.
        #[arg(long)]
        algorithm: Option<Algorithm>,
        /// Defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// CSV path; defaults to the configured output, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the scheduler's final visit counts here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run every algorithm x seed cell in parallel, one CSV per cell.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "blol,fixed:4,fixed:8,decoupled")]
        algorithms: Vec<Algorithm>,
        /// Defaults to the configured seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Print the static benchmark: b_star and the L*(b) curve as CSV.
    Oracle {
        #[command(flatten)]
        config: ConfigArgs,
        /// Seed of the demand sequence used for `total(b)`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic bursty packet-count trace.
    GenTrace {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = OnOffSource::default().rate_on)]
        rate_on: f64,
        #[arg(long, default_value_t = OnOffSource::default().rate_off)]
        rate_off: f64,
        #[arg(long, default_value_t = OnOffSource::default().p_on_to_off)]
        p_on_to_off: f64,
        #[arg(long, default_value_t = OnOffSource::default().p_off_to_on)]
        p_off_to_on: f64,
    },
    /// Summarize a counts checkpoint and optionally dump its extended LP.
    Inspect {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        counts: PathBuf,
        /// Budget for the dumped LP; defaults to B_0.
        #[arg(long)]
        budget: Option<f64>,
        /// Write the extended LP in the sparse text format.
        #[arg(long)]
        lp_out: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, algorithm, seed, out, checkpoint } => {
            let mut cfg = config.load()?;
            if let Some(a) = algorithm {
                cfg.algorithm = a;
            }
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let out = out.or_else(|| cfg.output.clone());
            let exp = Experiment::new(cfg)?;
            let outcome = match &out {
                Some(path) => exp.run_to_file(seed, path)?,
                None => {
                    let outcome = exp.run(seed)?;
                    bilevel_core::experiment::write_records(&outcome.records, std::io::stdout().lock())?;
                    outcome
                }
            };
            if let Some(path) = checkpoint {
                match &outcome.confidence {
                    Some(model) => model.write_counts(&path)?,
                    None => bail!("the decoupled baseline keeps no visit counts to checkpoint"),
                }
            }
            if let Some(last) = outcome.records.last() {
                eprintln!(
                    "{} seed {seed}: {} episodes, b_star {}, cum_gap {:.4}, cum_viol {:.4}",
                    exp.config().algorithm,
                    last.k,
                    outcome.benchmark.b_star,
                    last.cum_gap,
                    last.cum_viol
                );
            }
        }
        Command::Sweep { config, algorithms, seeds, out_dir } => {
            let cfg = config.load()?;
            let seeds = if seeds.is_empty() { cfg.seeds.clone() } else { seeds };
            let exp = Experiment::new(cfg)?;
            for path in sweep(&exp, &algorithms, &seeds, &out_dir)? {
                println!("{}", path.display());
            }
        }
        Command::Oracle { config, seed, out } => {
            let cfg = config.load()?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let exp = Experiment::new(cfg)?;
            let bench = exp.benchmark(seed)?;
            let mut w = output(out.as_deref())?;
            writeln!(w, "# b_star = {}", bench.b_star)?;
            writeln!(w, "# L_star(b_star) = {}", bench.star_loss)?;
            writeln!(w, "# total = {}", bench.total)?;
            writeln!(w, "b,l_star,consumption,total")?;
            let c = &bench.curve;
            for i in 0..c.budgets.len() {
                writeln!(w, "{},{},{},{}", c.budgets[i], c.values[i], c.consumption[i], bench.totals[i])?;
            }
            w.flush()?;
        }
        Command::GenTrace { out, bins, seed, rate_on, rate_off, p_on_to_off, p_off_to_on } => {
            let source = OnOffSource { rate_on, rate_off, p_on_to_off, p_off_to_on };
            write_trace(&out, &source.generate(bins, seed)?)?;
        }
        Command::Inspect { config, counts, budget, lp_out } => {
            let cfg = config.load()?;
            let exp = Experiment::new(cfg.clone())?;
            let mdp = exp.env().true_mdp();
            let dims = mdp.dims();
            let mut model = ConfidenceModel::new(dims, cfg.delta, cfg.episodes)?.with_radius_scale(cfg.radius_scale)?;
            model.read_counts(&counts)?;
            let snap = model.snapshot();
            println!("states {} actions {} horizon {}", dims.states, dims.actions, dims.horizon);
            println!("t,visits,unvisited_pairs,mean_radius_sum");
            let sums = snap.radius_sums();
            for t in 0..dims.horizon {
                let cells = t * dims.states * dims.actions..(t + 1) * dims.states * dims.actions;
                let unvisited = model.visit_table()[cells.clone()].iter().filter(|n| **n == 0).count();
                let mean = sums[cells.clone()].iter().sum::<f64>() / cells.len() as f64;
                println!("{t},{},{unvisited},{mean:.6}", model.stage_visits(t));
            }
            if let Some(path) = lp_out {
                let b = budget.unwrap_or(cfg.min_budget);
                let baseline = SafeBaseline::idle(mdp)?;
                let (l_bar, d_bar) =
                    shaped_costs(&snap, mdp.loss_table(), mdp.consumption_table(), b, baseline.consumption())?;
                let lp = build_extended_lp(&snap, &l_bar, &d_bar, b, mdp.initial())?;
                write_lp(&lp, output(Some(&path))?)?;
                eprintln!("wrote {} rows x {} columns to {}", lp.num_rows(), lp.num_cols(), path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
