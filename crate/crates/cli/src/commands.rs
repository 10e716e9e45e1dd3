//! Subcommand implementations. Each returns the paths it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use seqtr_core::delay::{plan_delay, reproduce_paper_examples, DelayPlan, Days};
use seqtr_core::estimator::{
    self, efficiency_bound_closed_form, naive_bias_with_corruption, run_algorithm_1, AlgorithmConfig,
    AlgorithmOutput, EstimateReport,
};
use seqtr_core::nuisance::{crossfit_nuisances, CorruptionSource, NuisanceConfig, NuisanceDocument, NUISANCE_SCHEMA_VERSION};
use seqtr_core::sensitivity::{
    balance_diagnostics, corruption_sweep, maturity_window_stability, nuisance_auc, overlap_summary,
    tilted_simulation, DiagnosticsReport,
};
use seqtr_core::sim::{generate_population, PopulationTruth, SimConfig, TransactionRecord};

use crate::config::{Check, RunConfig};
use crate::csvio;
use crate::error::{CliError, CliResult};
use crate::jsonio::{read_json, write_json};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const RECORDS_FILE: &str = "records.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const AUDIT_FILE: &str = "audit.csv";
pub const SIM_CONFIG_FILE: &str = "sim_config.json";
pub const NUISANCES_FILE: &str = "nuisances.json";
pub const SCORED_FILE: &str = "scored.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const DELAY_FILE: &str = "delay_plan.json";
pub const DELAY_CURVE_FILE: &str = "delay_curve.csv";
pub const SHRINKAGE_FILE: &str = "shrinkage.csv";
pub const SMD_FILE: &str = "smd.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub psi_true: f64,
    pub naive_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPlan {
    pub name: String,
    pub plan: DelayPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool_version: String,
    pub command: String,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<Vec<NamedPlan>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsReport>,
    /// Wall-clock timings live in this sibling file so the report stays reproducible.
    pub timings_file: String,
}

impl ReportDocument {
    fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            config: config.clone(),
            estimate: None,
            oracle: None,
            delay: None,
            diagnostics: None,
            timings_file: TIMINGS_FILE.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub command: String,
    pub stages: Vec<(String, f64)>,
}

struct Clock {
    timings: Timings,
    last: Instant,
}

impl Clock {
    fn start(command: &str) -> Self {
        Self { timings: Timings { command: command.into(), stages: Vec::new() }, last: Instant::now() }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.timings.stages.push((name.into(), (now - self.last).as_secs_f64()));
        self.last = now;
    }
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(cfg: &RunConfig) -> CliResult<Self> {
        Ok(Self { dir: cfg.resolve_out_dir()?, written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn finish(mut self, report: &ReportDocument, clock: Clock) -> CliResult<Vec<PathBuf>> {
        let p = self.path(REPORT_FILE);
        write_json(&p, report)?;
        let p = self.path(TIMINGS_FILE);
        write_json(&p, &clock.timings)?;
        Ok(self.written)
    }
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    path.as_deref().ok_or_else(|| CliError::Validation(format!("{what} is required")))
}

pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let sim = cfg
        .sim_config()?
        .ok_or_else(|| CliError::Validation("simulate needs --preset or a sim config".into()))?;
    let mut out = Outputs::new(cfg)?;
    let mut clock = Clock::start("simulate");
    let (records, truth) = generate_population(&sim)?;
    clock.lap("generate");
    let ids: Vec<u64> = records.iter().map(|r| r.id).collect();
    csvio::write_records(&out.path(RECORDS_FILE), &records)?;
    csvio::write_truth(&out.path(TRUTH_FILE), &ids, &truth)?;
    write_json(&out.path(SIM_CONFIG_FILE), &sim)?;
    if let Some(size) = cfg.sim.audit_size {
        csvio::write_audit(&out.path(AUDIT_FILE), &audit_sample(&records, &truth, size))?;
    }
    clock.lap("write");
    let report = ReportDocument::new("simulate", cfg);
    out.finish(&report, clock)
}

/// The first `size` labelled records with their latent labels.
pub fn audit_sample(records: &[TransactionRecord], truth: &PopulationTruth, size: usize) -> Vec<(bool, bool)> {
    records
        .iter()
        .zip(&truth.y_star)
        .filter_map(|(r, &y)| r.y_obs.map(|obs| (obs, y)))
        .take(size)
        .collect()
}

fn load_records(cfg: &RunConfig) -> CliResult<Vec<TransactionRecord>> {
    let records = csvio::read_records(require(&cfg.data.records, "--records")?)?;
    if records.is_empty() {
        return Err(CliError::Validation("the records file has no rows".into()));
    }
    Ok(records)
}

/// Nuisance settings from the fit block, overridden by a simulation sidecar or an audit file.
pub fn nuisance_config(cfg: &RunConfig, records: &[TransactionRecord]) -> CliResult<NuisanceConfig> {
    let (mut floors, mut eps10, mut eps01) = (cfg.fit.floors, cfg.fit.eps10, cfg.fit.eps01);
    if let Some(path) = &cfg.data.sim_config {
        let sim: SimConfig = read_json(path)?;
        floors = sim.positivity_floors;
        eps10 = sim.eps10;
        eps01 = sim.eps01;
    }
    let mut ncfg = NuisanceConfig::for_records(records, floors, eps10, eps01);
    ncfg.shrinkage = cfg.fit.shrinkage;
    ncfg.mu_link = cfg.fit.mu_link;
    if let Some(path) = &cfg.data.audit {
        ncfg.corruption = CorruptionSource::Audit { pairs: csvio::read_audit(path)? };
    }
    ncfg.corruption.resolve()?;
    Ok(ncfg)
}

pub fn algorithm_config(cfg: &RunConfig, ncfg: NuisanceConfig) -> AlgorithmConfig {
    let mut a = AlgorithmConfig::new(ncfg, cfg.seed);
    a.k = cfg.k;
    a.alpha = cfg.alpha;
    a.misspec = cfg.fit.misspec;
    a.clip = cfg.fit.clip;
    a.critical_eps = cfg.fit.critical_eps;
    a
}

pub fn cmd_fit(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let mut out = Outputs::new(cfg)?;
    let mut clock = Clock::start("fit");
    let records = load_records(cfg)?;
    clock.lap("read");
    let ncfg = nuisance_config(cfg, &records)?;
    let doc = crossfit_nuisances(&records, cfg.k, cfg.seed, &cfg.fit.misspec, &ncfg)?;
    clock.lap("crossfit");
    write_json(&out.path(NUISANCES_FILE), &doc)?;
    write_shrinkage(&mut out, &doc)?;
    let report = ReportDocument::new("fit", cfg);
    out.finish(&report, clock)
}

/// Per-fold, per-stage issuer pools; nothing is written when shrinkage is off.
fn write_shrinkage(out: &mut Outputs, doc: &NuisanceDocument) -> CliResult<()> {
    let rows: Vec<Vec<String>> = doc
        .sets
        .iter()
        .flat_map(|set| {
            set.pools.iter().flat_map(move |pool| {
                pool.per_issuer.iter().map(move |s| {
                    vec![
                        set.fold.to_string(),
                        pool.stage.name().to_string(),
                        s.issuer.to_string(),
                        s.n_i.to_string(),
                        s.lambda.to_string(),
                        s.local_est.to_string(),
                        pool.global_est.to_string(),
                        s.eb_est.to_string(),
                    ]
                })
            })
        })
        .collect();
    if rows.is_empty() {
        return Ok(());
    }
    let header = ["fold", "stage", "issuer", "n_i", "lambda", "local_est", "global_est", "eb_est"];
    csvio::write_table(&out.path(SHRINKAGE_FILE), &header, rows)
}

fn load_nuisances(path: &Path, records: &[TransactionRecord]) -> CliResult<NuisanceDocument> {
    let doc: NuisanceDocument = read_json(path)?;
    if doc.schema_version != NUISANCE_SCHEMA_VERSION {
        return Err(CliError::Validation(format!(
            "{}: nuisance schema version {} is not supported (expected {NUISANCE_SCHEMA_VERSION})",
            path.display(),
            doc.schema_version
        )));
    }
    if doc.plan.assignment.len() != records.len() {
        return Err(CliError::Validation(format!(
            "{}: fold plan covers {} records but the dataset has {}",
            path.display(),
            doc.plan.assignment.len(),
            records.len()
        )));
    }
    Ok(doc)
}

/// Fit (or load) nuisances, score, estimate and label, as the estimate command does.
pub fn estimate_records(cfg: &RunConfig, records: &[TransactionRecord], ncfg: NuisanceConfig) -> CliResult<AlgorithmOutput> {
    let algo = algorithm_config(cfg, ncfg);
    let Some(path) = &cfg.data.nuisances else {
        return Ok(run_algorithm_1(records, &algo)?);
    };
    let nuisances = load_nuisances(path, records)?;
    let floors = algo.nuisance.floors;
    let scored = estimator::score_all(records, &nuisances.plan, &nuisances.sets, &floors)?;
    let (eps10, eps01) = (nuisances.sets[0].eps10_hat, nuisances.sets[0].eps01_hat);
    let mut report = estimator::str_estimate(
        &scored,
        algo.alpha,
        estimator::weight_bound(&floors, eps10, eps01),
        algo.critical_eps,
        nuisances.plan.k,
    )?;
    report.naive_psi = estimator::naive_estimate(records).ok();
    let (label_model, labels) = estimator::pseudo_labels(records, &scored, &algo.learner, algo.clip)?;
    Ok(AlgorithmOutput { report, nuisances, scored, label_model, labels })
}

fn load_truth(cfg: &RunConfig, records: &[TransactionRecord]) -> CliResult<PopulationTruth> {
    let path = require(&cfg.data.truth, "--truth (with --with-oracle)")?;
    let (ids, truth) = csvio::read_truth(path)?;
    if ids.len() != records.len() || ids.iter().zip(records).any(|(a, r)| *a != r.id) {
        return Err(CliError::Validation(format!("{}: truth ids do not match the records", path.display())));
    }
    Ok(truth)
}

pub fn cmd_estimate(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let mut out = Outputs::new(cfg)?;
    let mut clock = Clock::start("estimate");
    let records = load_records(cfg)?;
    let truth = if cfg.fit.with_oracle { Some(load_truth(cfg, &records)?) } else { None };
    clock.lap("read");
    let ncfg = nuisance_config(cfg, &records)?;
    let fitted_here = cfg.data.nuisances.is_none();
    let mut result = estimate_records(cfg, &records, ncfg)?;
    clock.lap("estimate");
    let mut report = ReportDocument::new("estimate", cfg);
    if let Some(truth) = &truth {
        let (eps10, eps01) = (result.nuisances.sets[0].eps10_hat, result.nuisances.sets[0].eps01_hat);
        result.report.naive_bias_closed_form = Some(naive_bias_with_corruption(truth, eps10, eps01));
        result.report.eff_bound_closed_form = Some(efficiency_bound_closed_form(truth, eps10, eps01));
        report.oracle = Some(OracleSummary {
            psi_true: truth.psi_true,
            naive_gap: result.report.naive_psi.map(|v| v - truth.psi_true),
        });
    }
    csvio::write_scored(&out.path(SCORED_FILE), &result.scored, &result.labels)?;
    if fitted_here {
        write_json(&out.path(NUISANCES_FILE), &result.nuisances)?;
        write_shrinkage(&mut out, &result.nuisances)?;
    }
    clock.lap("write");
    report.estimate = Some(result.report);
    out.finish(&report, clock)
}

fn delay_file(name: &str) -> String {
    format!("delay_{name}.json")
}

pub fn cmd_plan_delay(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let mut out = Outputs::new(cfg)?;
    let mut clock = Clock::start("plan-delay");
    let mut report = ReportDocument::new("plan-delay", cfg);
    if cfg.delay.paper_examples {
        let plans: Vec<NamedPlan> = reproduce_paper_examples()?
            .into_iter()
            .map(|(ex, plan)| NamedPlan { name: ex.name, plan })
            .collect();
        clock.lap("plan");
        let mut mismatches = Vec::new();
        for p in &plans {
            let path = out.path(&delay_file(&p.name));
            write_json(&path, p)?;
            if let Some(golden) = &cfg.delay.golden_dir {
                if !same_bytes(&path, &golden.join(delay_file(&p.name)))? {
                    mismatches.push(p.name.clone());
                }
            }
        }
        report.delay = Some(plans);
        let written = out.finish(&report, clock)?;
        if !mismatches.is_empty() {
            return Err(CliError::Golden(format!("{} differ from the golden files", mismatches.join(", "))));
        }
        return Ok(written);
    }
    let (params, zeta, eps_b) = cfg.delay_inputs()?;
    let plan = plan_delay(&params, cfg.delay.convention, zeta, eps_b)?;
    clock.lap("plan");
    let named = NamedPlan { name: cfg.delay.preset.clone().unwrap_or_else(|| "custom".into()), plan };
    write_json(&out.path(DELAY_FILE), &named)?;
    write_delay_curve(&out.path(DELAY_CURVE_FILE), &named.plan)?;
    report.delay = Some(vec![named]);
    out.finish(&report, clock)
}

fn same_bytes(produced: &Path, golden: &Path) -> CliResult<bool> {
    let a = std::fs::read(produced).map_err(|e| CliError::io(produced, e))?;
    let b = std::fs::read(golden).map_err(|e| CliError::io(golden, e))?;
    Ok(a == b)
}

fn days_cell(d: Days) -> String {
    match d {
        Days::Finite(v) => v.to_string(),
        Days::Unbounded => "unbounded".into(),
    }
}

fn write_delay_curve(path: &Path, plan: &DelayPlan) -> CliResult<()> {
    let mut text = String::from("delta,e_stat,e_drift,e_total\n");
    for t in &plan.error_curve {
        text.push_str(&format!("{},{},{},{}\n", t.delta, days_cell(t.e_stat), t.e_drift, days_cell(t.e_total)));
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn cmd_diagnose(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let mut out = Outputs::new(cfg)?;
    let mut clock = Clock::start("diagnose");
    let checks = &cfg.sensitivity.checks;
    let wants = |c: Check| checks.contains(&c);
    let mut diag = DiagnosticsReport::default();

    let data_checks = [Check::Balance, Check::Overlap, Check::Auc, Check::Sweep];
    if data_checks.iter().any(|&c| wants(c)) {
        let records = load_records(cfg)?;
        let ncfg = nuisance_config(cfg, &records)?;
        let result = estimate_records(cfg, &records, ncfg.clone())?;
        clock.lap("estimate");
        if wants(Check::Balance) {
            diag.smd_table = Some(balance_diagnostics(&records, &result.scored)?);
        }
        if wants(Check::Overlap) {
            diag.overlap = Some(overlap_summary(&records, &result.scored, &ncfg.floors)?);
        }
        if wants(Check::Auc) {
            diag.nuisance_auc = Some(nuisance_auc(&records, &result.nuisances));
        }
        if wants(Check::Sweep) {
            if cfg.sensitivity.eps_grid.is_empty() {
                return Err(CliError::Validation("the sweep check needs a non-empty eps grid".into()));
            }
            let algo = algorithm_config(cfg, ncfg);
            diag.corruption_sweep =
                Some(corruption_sweep(&records, &result.nuisances.plan, &algo, &cfg.sensitivity.eps_grid)?);
        }
        clock.lap("data checks");
    }
    if wants(Check::Tilt) || wants(Check::Window) {
        let sim = cfg
            .sim_config()?
            .ok_or_else(|| CliError::Validation("tilt and window checks need a simulation preset or config".into()))?;
        if wants(Check::Tilt) {
            let gammas = &cfg.sensitivity.gammas;
            let mut rows = Vec::new();
            for &ga in gammas {
                for &gr in gammas {
                    rows.push(tilted_simulation(&sim, ga, gr)?);
                }
            }
            diag.tilt = Some(rows);
        }
        if wants(Check::Window) {
            let ncfg = NuisanceConfig {
                d: sim.d,
                issuer_count: sim.issuer_count,
                floors: sim.positivity_floors,
                mu_link: cfg.fit.mu_link,
                shrinkage: cfg.fit.shrinkage,
                use_w1: sim.post_auth_signal,
                corruption: CorruptionSource::Known { eps10: sim.eps10, eps01: sim.eps01 },
            };
            let algo = algorithm_config(cfg, ncfg);
            diag.window_stability = Some(maturity_window_stability(&sim, &cfg.sensitivity.windows, &algo)?);
        }
        clock.lap("simulation checks");
    }
    if let Some(rows) = &diag.smd_table {
        let cells = rows.iter().map(|r| {
            vec![r.feature.clone(), r.raw.to_string(), r.weighted.to_string(), (r.zero_variance as u8).to_string()]
        });
        csvio::write_table(&out.path(SMD_FILE), &["feature", "raw", "weighted", "zero_variance"], cells)?;
    }
    if let Some(rows) = &diag.corruption_sweep {
        let cells = rows
            .iter()
            .map(|r| vec![r.eps10.to_string(), r.eps01.to_string(), r.psi_hat.to_string(), r.se.to_string()]);
        csvio::write_table(&out.path(SWEEP_FILE), &["eps10", "eps01", "psi_hat", "se"], cells)?;
    }
    let mut report = ReportDocument::new("diagnose", cfg);
    report.diagnostics = Some(diag);
    out.finish(&report, clock)
}
