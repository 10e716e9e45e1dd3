//! Run configuration, built-in presets and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqtr_core::delay::{example_networks, C1Convention, NetworkParams};
use seqtr_core::glm::Link;
use seqtr_core::nuisance::MisspecPlan;
use seqtr_core::sim::{Floors, SimConfig};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 42;
pub const OUT_DIR_ENV: &str = "SEQTR_OUT_DIR";

/// Simulation presets.
pub const SIM_PRESETS: [&str; 2] = ["example1", "baseline"];
/// Delay-planner presets.
pub const DELAY_PRESETS: [&str; 3] = ["typical", "fastdrift", "realtime"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub k: usize,
    pub alpha: f64,
    pub out_dir: Option<PathBuf>,
    pub sim: SimBlock,
    pub data: DataBlock,
    pub fit: FitBlock,
    pub delay: DelayBlock,
    pub sensitivity: SensitivityBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            k: 5,
            alpha: 0.05,
            out_dir: None,
            sim: SimBlock::default(),
            data: DataBlock::default(),
            fit: FitBlock::default(),
            delay: DelayBlock::default(),
            sensitivity: SensitivityBlock::default(),
        }
    }
}

/// Where the simulated population comes from: a preset, optionally resized, or an explicit config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimBlock {
    pub preset: Option<String>,
    pub n: Option<usize>,
    pub config: Option<SimConfig>,
    /// Also write an audit sample of this many `(y_obs, y_true)` pairs.
    pub audit_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataBlock {
    pub records: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub nuisances: Option<PathBuf>,
    pub audit: Option<PathBuf>,
    /// Simulation config whose floors and corruption rates override the fit block.
    pub sim_config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitBlock {
    pub eps10: f64,
    pub eps01: f64,
    pub floors: Floors,
    pub shrinkage: bool,
    pub mu_link: Link,
    pub misspec: MisspecPlan,
    pub clip: bool,
    pub critical_eps: f64,
    pub with_oracle: bool,
}

impl Default for FitBlock {
    fn default() -> Self {
        Self {
            eps10: 0.0,
            eps01: 0.0,
            floors: Floors::new(0.05, 0.05, 0.05),
            shrinkage: false,
            mu_link: Link::Logit,
            misspec: MisspecPlan::NONE,
            clip: false,
            critical_eps: 0.001,
            with_oracle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayBlock {
    pub preset: Option<String>,
    pub params: Option<NetworkParams>,
    pub zeta: Option<f64>,
    pub eps_b: Option<f64>,
    pub convention: C1Convention,
    pub paper_examples: bool,
    pub golden_dir: Option<PathBuf>,
}

impl Default for DelayBlock {
    fn default() -> Self {
        Self {
            preset: None,
            params: None,
            zeta: None,
            eps_b: None,
            convention: C1Convention::Model,
            paper_examples: false,
            golden_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityBlock {
    pub checks: Vec<Check>,
    pub eps_grid: Vec<(f64, f64)>,
    pub gammas: Vec<f64>,
    pub windows: Vec<f64>,
}

impl Default for SensitivityBlock {
    fn default() -> Self {
        Self {
            checks: vec![Check::Balance, Check::Overlap, Check::Auc],
            eps_grid: Vec::new(),
            gammas: vec![1.0, 1.25, 1.5, 2.0],
            windows: vec![30.0, 90.0, 365.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Balance,
    Overlap,
    Auc,
    Sweep,
    Tilt,
    Window,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))
    }

    /// The simulation this config describes, or `None` if it names none.
    pub fn sim_config(&self) -> CliResult<Option<SimConfig>> {
        let cfg = match (&self.sim.config, &self.sim.preset) {
            (Some(_), Some(_)) => {
                return Err(CliError::Validation("give either a simulation preset or an explicit config, not both".into()))
            }
            (Some(c), None) => {
                let mut c = c.clone();
                if let Some(n) = self.sim.n {
                    c.n = n;
                }
                c
            }
            (None, Some(p)) => sim_preset(p, self.sim.n.unwrap_or(0), self.seed)?,
            (None, None) => return Ok(None),
        };
        cfg.validate()?;
        Ok(Some(cfg))
    }

    /// Delay network, selection contrast and tolerated bias.
    pub fn delay_inputs(&self) -> CliResult<(NetworkParams, f64, f64)> {
        let (params, zeta, eps_b) = match (&self.delay.params, &self.delay.preset) {
            (Some(_), Some(_)) => {
                return Err(CliError::Validation("give either a delay preset or explicit params, not both".into()))
            }
            (Some(p), None) => (p.clone(), self.delay.zeta, self.delay.eps_b),
            (None, Some(name)) => {
                let ex = example_networks()
                    .into_iter()
                    .find(|e| e.name == *name)
                    .ok_or_else(|| unknown_preset(name, &DELAY_PRESETS))?;
                (ex.params, Some(self.delay.zeta.unwrap_or(ex.zeta)), Some(self.delay.eps_b.unwrap_or(ex.eps_b)))
            }
            (None, None) => {
                return Err(CliError::Validation("plan-delay needs --preset, delay params in --config, or --paper-examples".into()))
            }
        };
        let zeta = zeta.ok_or_else(|| CliError::Validation("zeta is required with explicit delay params".into()))?;
        let eps_b = eps_b.ok_or_else(|| CliError::Validation("eps_b is required with explicit delay params".into()))?;
        params.validate()?;
        Ok((params, zeta, eps_b))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.k < 2 {
            return Err(CliError::Validation(format!("k must be at least 2, got {}", self.k)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Validation(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.fit.critical_eps > 0.0) {
            return Err(CliError::Validation("critical_eps must be positive".into()));
        }
        self.fit.floors.validate()?;
        for g in &self.sensitivity.gammas {
            if !(*g >= 1.0 && g.is_finite()) {
                return Err(CliError::Validation(format!("odds ratios must be >= 1, got {g}")));
            }
        }
        for path in [&self.data.records, &self.data.truth, &self.data.nuisances, &self.data.audit, &self.data.sim_config].into_iter().flatten() {
            if !path.is_file() {
                return Err(CliError::io(path, "input file not found"));
            }
        }
        Ok(())
    }

    /// Flag, then config, then environment, then the working directory.
    pub fn resolve_out_dir(&self) -> CliResult<PathBuf> {
        let dir = self
            .out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        if !dir.is_dir() {
            return Err(CliError::io(&dir, "output directory does not exist"));
        }
        Ok(dir)
    }
}

fn unknown_preset(name: &str, known: &[&str]) -> CliError {
    CliError::Validation(format!("unknown preset {name:?}; expected one of {}", known.join(", ")))
}

/// Built-in simulation; `n = 0` keeps the preset's default size.
pub fn sim_preset(name: &str, n: usize, seed: u64) -> CliResult<SimConfig> {
    let pick = |default: usize| if n == 0 { default } else { n };
    match name {
        "example1" => Ok(SimConfig::example1(pick(1_000_000), seed)),
        "baseline" => Ok(SimConfig::baseline(pick(100_000), seed)),
        _ => Err(unknown_preset(name, &SIM_PRESETS)),
    }
}
