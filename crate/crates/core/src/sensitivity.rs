//! Ignorability-violation bounds, corruption-rate sweeps and validation diagnostics.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_channel, Error, Result};
use crate::estimator::{self, AlgorithmConfig, ScoredRecord};
use crate::math;
use crate::nuisance::{self, stage_outcome, CorruptionSource, FoldPlan, NuisanceDocument};
use crate::shrinkage::Stage;
use crate::sim::{self, Floors, SimConfig, TransactionRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityParams {
    pub gamma_a: f64,
    pub gamma_r: f64,
    pub eps_grid: Vec<(f64, f64)>,
}

impl SensitivityParams {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma_a)?;
        check_gamma(self.gamma_r)?;
        for &(a, b) in &self.eps_grid {
            check_channel(a, b)?;
        }
        Ok(())
    }
}

fn check_gamma(g: f64) -> Result<()> {
    if !(g >= 1.0 && g.is_finite()) {
        return Err(Error::Argument(format!("odds ratio must be >= 1, got {g}")));
    }
    Ok(())
}

/// `(gamma - 1) / gamma`.
pub fn tilt_factor(gamma: f64) -> f64 {
    (gamma - 1.0) / gamma
}

/// Per-record fraud probability and stage propensities, from truth or fitted nuisances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundInputs {
    pub f: Vec<f64>,
    pub e: Vec<f64>,
    pub r: Vec<f64>,
}

impl BoundInputs {
    pub fn from_truth(truth: &sim::PopulationTruth) -> Self {
        Self { f: truth.f_true.clone(), e: truth.e_true.clone(), r: truth.r_true.clone() }
    }

    /// Fitted values: `mu0` as the fraud probability and the out-of-fold propensities.
    pub fn from_nuisances(records: &[TransactionRecord], doc: &NuisanceDocument) -> Self {
        let mut out = Self::default();
        for (rec, &fold) in records.iter().zip(&doc.plan.assignment) {
            let set = &doc.sets[fold];
            out.f.push(set.mu0_hat.predict(rec));
            out.e.push(set.e_hat.predict(rec));
            out.r.push(set.r_hat.predict(rec));
        }
        out
    }
}

/// `(G_A - 1)/G_A * E[f (1 - e) / e]`.
pub fn auth_bias_bound(inputs: &BoundInputs, gamma_a: f64) -> Result<f64> {
    check_gamma(gamma_a)?;
    let terms: Vec<f64> = inputs.f.iter().zip(&inputs.e).map(|(f, e)| f * (1.0 - e) / e).collect();
    Ok(tilt_factor(gamma_a) * math::mean(&terms))
}

/// `(G_R - 1)/G_R * E[f (1 - r) / (e r)]`.
pub fn reporting_bias_bound(inputs: &BoundInputs, gamma_r: f64) -> Result<f64> {
    check_gamma(gamma_r)?;
    let terms: Vec<f64> = (0..inputs.f.len())
        .map(|i| inputs.f[i] * (1.0 - inputs.r[i]) / (inputs.e[i] * inputs.r[i]))
        .collect();
    Ok(tilt_factor(gamma_r) * math::mean(&terms))
}

/// Sum of the stage bounds plus the interaction `(G_A - 1)(G_R - 1)/(G_A G_R)` with unit constant.
pub fn joint_bias_bound(inputs: &BoundInputs, gamma_a: f64, gamma_r: f64) -> Result<f64> {
    Ok(auth_bias_bound(inputs, gamma_a)?
        + reporting_bias_bound(inputs, gamma_r)?
        + tilt_factor(gamma_a) * tilt_factor(gamma_r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltResult {
    pub gamma_a: f64,
    pub gamma_r: f64,
    pub psi_hat: f64,
    pub psi_true: f64,
    pub bias: f64,
    pub se: f64,
    pub auth_bound: f64,
    pub reporting_bound: f64,
    pub joint_bound: f64,
}

/// Regenerate the population with fraud-tilted gates and score it with the untilted true nuisances.
pub fn tilted_simulation(cfg: &SimConfig, gamma_a: f64, gamma_r: f64) -> Result<TiltResult> {
    check_gamma(gamma_a)?;
    check_gamma(gamma_r)?;
    let mut tilted = cfg.clone();
    tilted.tilt_auth = gamma_a;
    tilted.tilt_report = gamma_r;
    let (records, truth) = sim::generate_population(&tilted)?;
    let scored = estimator::oracle_scores(&records, &truth, cfg.eps10, cfg.eps01, &cfg.positivity_floors)?;
    let u: Vec<f64> = scored.iter().map(|s| s.u).collect();
    let psi_hat = math::mean(&u);
    let se = libm::sqrt(math::variance(&u) / u.len() as f64);
    let inputs = BoundInputs::from_truth(&truth);
    Ok(TiltResult {
        gamma_a,
        gamma_r,
        psi_hat,
        psi_true: truth.psi_true,
        bias: psi_hat - truth.psi_true,
        se,
        auth_bound: auth_bias_bound(&inputs, gamma_a)?,
        reporting_bound: reporting_bias_bound(&inputs, gamma_r)?,
        joint_bound: joint_bias_bound(&inputs, gamma_a, gamma_r)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps10: f64,
    pub eps01: f64,
    pub psi_hat: f64,
    pub se: f64,
}

/// Re-estimate at each assumed corruption pair, holding the folds fixed.
pub fn corruption_sweep(
    records: &[TransactionRecord],
    plan: &FoldPlan,
    cfg: &AlgorithmConfig,
    eps_grid: &[(f64, f64)],
) -> Result<Vec<SweepPoint>> {
    eps_grid
        .iter()
        .map(|&(eps10, eps01)| {
            let mut ncfg = cfg.nuisance.clone();
            ncfg.corruption = CorruptionSource::Known { eps10, eps01 };
            let sets = nuisance::crossfit_with_plan(records, plan, &cfg.misspec, &ncfg)?;
            let scored = estimator::score_all(records, plan, &sets, &ncfg.floors)?;
            let rep = estimator::str_estimate(
                &scored,
                cfg.alpha,
                estimator::weight_bound(&ncfg.floors, eps10, eps01),
                cfg.critical_eps,
                plan.k,
            )?;
            Ok(SweepPoint { eps10, eps01, psi_hat: rep.psi_hat, se: rep.se })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmdRow {
    pub feature: String,
    pub raw: f64,
    pub weighted: f64,
    /// Set when the feature has zero variance and the SMD is reported as 0.
    pub zero_variance: bool,
}

/// Standardized mean differences between the observed subsample and the full
/// population, unweighted and with inverse observation-propensity weights.
pub fn balance_diagnostics(records: &[TransactionRecord], scored: &[ScoredRecord]) -> Result<Vec<SmdRow>> {
    if records.len() != scored.len() {
        return Err(Error::Argument("scores must align with records".into()));
    }
    let observed: Vec<usize> = (0..records.len()).filter(|&i| records[i].o).collect();
    if observed.is_empty() {
        return Err(Error::InsufficientData("no observed records".into()));
    }
    let d = records[0].x.len();
    let w: Vec<f64> = observed.iter().map(|&i| scored[i].weight_total).collect();
    let sw = math::stable_sum(&w);
    (0..d)
        .map(|j| {
            let col: Vec<f64> = records.iter().map(|r| r.x[j]).collect();
            let mean = math::mean(&col);
            let sd = libm::sqrt(math::variance(&col));
            let obs: Vec<f64> = observed.iter().map(|&i| records[i].x[j]).collect();
            let wx: Vec<f64> = obs.iter().zip(&w).map(|(x, w)| x * w).collect();
            let raw_mean = math::mean(&obs);
            let weighted_mean = math::stable_sum(&wx) / sw;
            let zero_variance = !(sd > 0.0);
            let smd = |m: f64| if zero_variance { 0.0 } else { (m - mean) / sd };
            Ok(SmdRow { feature: format!("x{j}"), raw: smd(raw_mean), weighted: smd(weighted_mean), zero_variance })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub stage: Stage,
    pub floor: f64,
    pub min: f64,
    /// 10th..90th percentiles.
    pub deciles: Vec<f64>,
    /// Minimum is below twice the floor.
    pub warning: bool,
}

/// Propensity distribution among the records at risk at each stage.
pub fn overlap_summary(records: &[TransactionRecord], scored: &[ScoredRecord], floors: &Floors) -> Result<Vec<OverlapRow>> {
    if records.len() != scored.len() {
        return Err(Error::Argument("scores must align with records".into()));
    }
    Stage::ALL
        .iter()
        .map(|&stage| {
            let mut vals: Vec<f64> = records
                .iter()
                .zip(scored)
                .filter(|(r, _)| stage_outcome(stage, r).is_some())
                .map(|(_, s)| match stage {
                    Stage::Auth => s.e_hat,
                    Stage::Report => s.r_hat,
                    Stage::Maturity => s.p_hat,
                })
                .collect();
            if vals.is_empty() {
                return Err(Error::InsufficientData(format!("no records at risk at the {} stage", stage.name())));
            }
            vals.sort_by(f64::total_cmp);
            let floor = match stage {
                Stage::Auth => floors.e_min,
                Stage::Report => floors.r_min,
                Stage::Maturity => floors.p_min,
            };
            let min = vals[0];
            Ok(OverlapRow {
                stage,
                floor,
                min,
                deciles: (1..10).map(|k| math::sorted_quantile(&vals, k as f64 / 10.0)).collect(),
                warning: min < 2.0 * floor,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub stage: Stage,
    pub auc: Option<f64>,
}

/// Held-out discrimination of each fitted propensity, scoring every record with its own fold's set.
pub fn nuisance_auc(records: &[TransactionRecord], doc: &NuisanceDocument) -> Vec<AucRow> {
    Stage::ALL
        .iter()
        .map(|&stage| {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for (rec, &fold) in records.iter().zip(&doc.plan.assignment) {
                if let Some(y) = stage_outcome(stage, rec) {
                    scores.push(doc.sets[fold].propensity(stage).predict(rec));
                    labels.push(y);
                }
            }
            AucRow { stage, auc: math::auc(&scores, &labels) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_days: f64,
    pub psi_hat: f64,
    pub se: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStability {
    pub rows: Vec<WindowRow>,
    /// Every pair of estimates differs by at most `z sqrt(se_i^2 + se_j^2)`.
    pub stable: bool,
    pub max_standardized_gap: f64,
}

/// Re-simulate at each training horizon and compare the estimates.
pub fn maturity_window_stability(
    base: &SimConfig,
    windows: &[f64],
    algo: &AlgorithmConfig,
) -> Result<WindowStability> {
    if windows.len() < 2 {
        return Err(Error::Argument("window stability needs at least two windows".into()));
    }
    let mut rows = Vec::with_capacity(windows.len());
    for &w in windows {
        let mut cfg = base.clone();
        cfg.window_days = w;
        let (records, _) = sim::generate_population(&cfg)?;
        let out = estimator::run_algorithm_1(&records, algo)?;
        rows.push(WindowRow { window_days: w, psi_hat: out.report.psi_hat, se: out.report.se, ci: out.report.ci });
    }
    let z = math::normal_quantile(1.0 - algo.alpha / 2.0)?;
    let mut max_gap: f64 = 0.0;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let joint = libm::sqrt(rows[i].se * rows[i].se + rows[j].se * rows[j].se);
            max_gap = max_gap.max((rows[i].psi_hat - rows[j].psi_hat).abs() / joint);
        }
    }
    Ok(WindowStability { rows, stable: max_gap <= z, max_standardized_gap: max_gap })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smd_table: Option<Vec<SmdRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<Vec<OverlapRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nuisance_auc: Option<Vec<AucRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_stability: Option<WindowStability>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilt: Option<Vec<TiltResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corruption_sweep: Option<Vec<SweepPoint>>,
}
