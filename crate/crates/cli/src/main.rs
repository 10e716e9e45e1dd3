use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seqtr_cli::commands;
use seqtr_cli::config::{Check, RunConfig};
use seqtr_cli::error::{CliError, CliResult};
use seqtr_core::delay::C1Convention;
use seqtr_core::glm::Link;
use seqtr_core::sim::Floors;

/// Label recovery for censored, corrupted fraud labels.
///
/// Exit codes: 0 ok, 1 validation, 2 IO, 3 numerical failure, 4 golden-file mismatch.
#[derive(Parser)]
#[command(name = "seqtr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population: records, truth and the simulation config.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
        /// Also write this many audited (y_obs, y_true) pairs.
        #[arg(long)]
        audit_size: Option<usize>,
    },
    /// Cross-fit the nuisance models and save them.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Estimate the fraud rate, score every record and fit pseudo-labels.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Saved nuisances from `fit`; refit when absent.
        #[arg(long)]
        nuisances: Option<PathBuf>,
        /// Simulator truth for the oracle quantities.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Add the closed-form naive bias and efficiency bound (needs --truth).
        #[arg(long)]
        with_oracle: bool,
        /// Clip pseudo-outcomes to [0, 1] before the label regression.
        #[arg(long)]
        clip: bool,
    },
    /// Choose the training delay for a network.
    PlanDelay {
        #[command(flatten)]
        common: Common,
        /// typical, fastdrift or realtime.
        #[arg(long)]
        preset: Option<String>,
        /// Write the three reference networks' plans.
        #[arg(long)]
        paper_examples: bool,
        /// Compare the reference plans byte-for-byte against this directory.
        #[arg(long)]
        golden: Option<PathBuf>,
        #[arg(long, value_enum)]
        convention: Option<ConventionArg>,
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long)]
        eps_b: Option<f64>,
        /// Override the drift rate of the chosen network.
        #[arg(long)]
        nu: Option<f64>,
    },
    /// Balance, overlap, discrimination, corruption sweep, tilt and window checks.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_enum, value_delimiter = ',')]
        checks: Vec<Check>,
        /// Corruption pairs as `eps10:eps01`, comma separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
        eps_grid: Vec<(f64, f64)>,
        #[arg(long, value_delimiter = ',')]
        gammas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        windows: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $SEQTR_OUT_DIR, then the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-fitting folds.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct SimArgs {
    /// example1 or baseline.
    #[arg(long = "sim-preset", alias = "preset")]
    preset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    records: Option<PathBuf>,
    /// Take floors and corruption rates from a simulation config.
    #[arg(long)]
    sim_config: Option<PathBuf>,
    /// Estimate the corruption rates from audited pairs.
    #[arg(long)]
    audit: Option<PathBuf>,
    #[arg(long)]
    eps10: Option<f64>,
    #[arg(long)]
    eps01: Option<f64>,
    /// Propensity floors as `e,r,p`.
    #[arg(long, value_delimiter = ',')]
    floors: Option<Vec<f64>>,
    /// Shrink issuer propensities toward the pooled model.
    #[arg(long)]
    shrinkage: bool,
    #[arg(long, value_enum)]
    mu_link: Option<LinkArg>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ConventionArg {
    Model,
    Marginal,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum LinkArg {
    Logit,
    Identity,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected eps10:eps01, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

impl Common {
    fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.out {
            cfg.out_dir = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        Ok(cfg)
    }
}

impl SimArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.preset {
            cfg.sim.preset = Some(p.clone());
            cfg.sim.config = None;
        }
        if let Some(n) = self.n {
            cfg.sim.n = Some(n);
        }
    }
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                *slot = v.clone();
            }
        };
        set(&mut cfg.data.records, &self.records);
        set(&mut cfg.data.sim_config, &self.sim_config);
        set(&mut cfg.data.audit, &self.audit);
        if let Some(v) = self.eps10 {
            cfg.fit.eps10 = v;
        }
        if let Some(v) = self.eps01 {
            cfg.fit.eps01 = v;
        }
        if let Some(f) = &self.floors {
            let [e, r, p] = f[..] else {
                return Err(CliError::Validation("--floors takes three values e,r,p".into()));
            };
            cfg.fit.floors = Floors::new(e, r, p);
        }
        if self.shrinkage {
            cfg.fit.shrinkage = true;
        }
        if let Some(l) = self.mu_link {
            cfg.fit.mu_link = match l {
                LinkArg::Logit => Link::Logit,
                LinkArg::Identity => Link::Identity,
            };
        }
        Ok(())
    }
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    match cli.command {
        Command::Simulate { common, sim, audit_size } => {
            let mut cfg = common.load()?;
            sim.apply(&mut cfg);
            if audit_size.is_some() {
                cfg.sim.audit_size = audit_size;
            }
            commands::cmd_simulate(&cfg)
        }
        Command::Fit { common, data } => {
            let mut cfg = common.load()?;
            data.apply(&mut cfg)?;
            commands::cmd_fit(&cfg)
        }
        Command::Estimate { common, data, nuisances, truth, with_oracle, clip } => {
            let mut cfg = common.load()?;
            data.apply(&mut cfg)?;
            if nuisances.is_some() {
                cfg.data.nuisances = nuisances;
            }
            if truth.is_some() {
                cfg.data.truth = truth;
            }
            cfg.fit.with_oracle |= with_oracle;
            cfg.fit.clip |= clip;
            commands::cmd_estimate(&cfg)
        }
        Command::PlanDelay { common, preset, paper_examples, golden, convention, zeta, eps_b, nu } => {
            let mut cfg = common.load()?;
            if preset.is_some() {
                cfg.delay.preset = preset;
                cfg.delay.params = None;
            }
            cfg.delay.paper_examples |= paper_examples;
            if golden.is_some() {
                cfg.delay.golden_dir = golden;
            }
            if let Some(c) = convention {
                cfg.delay.convention = match c {
                    ConventionArg::Model => C1Convention::Model,
                    ConventionArg::Marginal => C1Convention::Marginal,
                };
            }
            if zeta.is_some() {
                cfg.delay.zeta = zeta;
            }
            if eps_b.is_some() {
                cfg.delay.eps_b = eps_b;
            }
            if let Some(nu) = nu {
                let (mut params, zeta, eps_b) = cfg.delay_inputs()?;
                params.nu = nu;
                cfg.delay.preset = None;
                cfg.delay.params = Some(params);
                cfg.delay.zeta = Some(zeta);
                cfg.delay.eps_b = Some(eps_b);
            }
            commands::cmd_plan_delay(&cfg)
        }
        Command::Diagnose { common, data, sim, checks, eps_grid, gammas, windows } => {
            let mut cfg = common.load()?;
            data.apply(&mut cfg)?;
            sim.apply(&mut cfg);
            if !checks.is_empty() {
                cfg.sensitivity.checks = checks;
            }
            if !eps_grid.is_empty() {
                cfg.sensitivity.eps_grid = eps_grid;
            }
            if !gammas.is_empty() {
                cfg.sensitivity.gammas = gammas;
            }
            if !windows.is_empty() {
                cfg.sensitivity.windows = windows;
            }
            commands::cmd_diagnose(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
