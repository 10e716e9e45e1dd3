//! Corruption-corrected sequential score, the point estimate and its
//! uncertainty, the naive baseline, and pseudo-label regression.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_channel, Error, Result};
use crate::glm::{self, FeatureSpec, GlmModel, Link};
use crate::math;
use crate::nuisance::{self, FoldPlan, MisspecPlan, NuisanceConfig, NuisanceDocument, NuisanceSet};
use crate::sim::{Floors, PopulationTruth, TransactionRecord};

/// `(y - eps01) / (1 - eps10 - eps01)`; unbiased for the true label.
pub fn noise_correct(y_obs: bool, eps10: f64, eps01: f64) -> Result<f64> {
    check_channel(eps10, eps01)?;
    Ok((y_obs as u8 as f64 - eps01) / (1.0 - eps10 - eps01))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub id: u64,
    pub fold: usize,
    pub u: f64,
    pub base: f64,
    pub auth_corr: f64,
    pub report_corr: f64,
    pub delay_corr: f64,
    /// `1 / (e r p)` when the label is observed, else 0.
    pub weight_total: f64,
    pub y_corr: Option<f64>,
    pub e_hat: f64,
    pub r_hat: f64,
    pub p_hat: f64,
}

/// Nuisance values at one record, however they were obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuisanceValues {
    pub e: f64,
    pub r: f64,
    pub p: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
}

/// Score a record from explicit nuisance values.
pub fn score_with(
    rec: &TransactionRecord,
    fold: usize,
    v: NuisanceValues,
    eps10: f64,
    eps01: f64,
    max_weight: f64,
) -> Result<ScoredRecord> {
    let reported = rec.a && rec.reported();
    let y_corr = match (rec.o, rec.y_obs) {
        (true, Some(y)) => Some(noise_correct(y, eps10, eps01)?),
        (true, None) => {
            return Err(Error::DataIntegrity(format!("record {} is observed but has no label", rec.id)))
        }
        _ => None,
    };
    let weight_total = if rec.o { 1.0 / (v.e * v.r * v.p) } else { 0.0 };
    if weight_total > max_weight * (1.0 + 1e-9) || !weight_total.is_finite() {
        return Err(Error::Internal(format!(
            "record {}: inverse weight {weight_total} exceeds the floor-implied cap {max_weight}",
            rec.id
        )));
    }
    let base = v.mu0;
    let auth_corr = if rec.a { (v.mu1 - v.mu0) / v.e } else { 0.0 };
    let report_corr = if reported { (v.mu2 - v.mu1) / (v.e * v.r) } else { 0.0 };
    let delay_corr = match y_corr {
        Some(yc) => (yc - v.mu2) * weight_total,
        None => 0.0,
    };
    Ok(ScoredRecord {
        id: rec.id,
        fold,
        u: base + auth_corr + report_corr + delay_corr,
        base,
        auth_corr,
        report_corr,
        delay_corr,
        weight_total,
        y_corr,
        e_hat: v.e,
        r_hat: v.r,
        p_hat: v.p,
    })
}

/// Score a record with the nuisance set fitted without its fold.
pub fn sequential_score(
    rec: &TransactionRecord,
    record_fold: usize,
    set: &NuisanceSet,
    floors: &Floors,
) -> Result<ScoredRecord> {
    if record_fold != set.fold {
        return Err(Error::Contract(format!(
            "record {} is in fold {record_fold} but the nuisance set was fitted for fold {}",
            rec.id, set.fold
        )));
    }
    let reported = rec.a && rec.reported();
    let mu0 = set.mu0_hat.predict(rec);
    let mu1 = if rec.a { set.mu1_hat.predict(rec) } else { mu0 };
    let mu2 = if reported { set.mu2_hat.predict(rec) } else { mu1 };
    let v = NuisanceValues {
        e: set.e_hat.predict(rec),
        r: set.r_hat.predict(rec),
        p: set.p_hat.predict(rec),
        mu0,
        mu1,
        mu2,
    };
    score_with(rec, record_fold, v, set.eps10_hat, set.eps01_hat, floors.max_inverse_weight())
}

/// Score every record with its out-of-fold nuisance set.
pub fn score_all(
    records: &[TransactionRecord],
    plan: &FoldPlan,
    sets: &[NuisanceSet],
    floors: &Floors,
) -> Result<Vec<ScoredRecord>> {
    if plan.assignment.len() != records.len() {
        return Err(Error::Argument("fold plan does not match the record count".into()));
    }
    records
        .iter()
        .zip(&plan.assignment)
        .map(|(rec, &fold)| {
            let set = sets
                .iter()
                .find(|s| s.fold == fold)
                .ok_or_else(|| Error::Contract(format!("no nuisance set for fold {fold}")))?;
            sequential_score(rec, fold, set, floors)
        })
        .collect()
}

/// Scores at the true nuisances in the collapsed case: every regression is `f0`.
pub fn oracle_scores(
    records: &[TransactionRecord],
    truth: &PopulationTruth,
    eps10: f64,
    eps01: f64,
    floors: &Floors,
) -> Result<Vec<ScoredRecord>> {
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let f = truth.f_true[i];
            let v = NuisanceValues {
                e: truth.e_true[i],
                r: truth.r_true[i],
                p: truth.p_true[i],
                mu0: f,
                mu1: f,
                mu2: f,
            };
            score_with(rec, 0, v, eps10, eps01, floors.max_inverse_weight())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub psi_hat: f64,
    pub sigma2_hat: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub n: usize,
    pub alpha: f64,
    /// Largest inverse weight the floors and corruption rates allow.
    pub b_bound: f64,
    pub bernstein_curve: Vec<(f64, f64)>,
    /// Tolerance the critical sample size is computed for.
    pub critical_eps: f64,
    pub critical_n: f64,
    pub naive_psi: Option<f64>,
    pub naive_bias_closed_form: Option<f64>,
    pub eff_bound_closed_form: Option<f64>,
    pub k_folds: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// `B = 1 / (e_min r_min p_min (1 - eps10 - eps01))`.
pub fn weight_bound(floors: &Floors, eps10: f64, eps01: f64) -> f64 {
    floors.max_inverse_weight() / (1.0 - eps10 - eps01)
}

/// Point estimate, plug-in variance, Wald interval and concentration figures from scores.
pub fn str_estimate(
    scored: &[ScoredRecord],
    alpha: f64,
    b_bound: f64,
    critical_eps: f64,
    k_folds: usize,
) -> Result<EstimateReport> {
    if scored.is_empty() {
        return Err(Error::Argument("cannot estimate from an empty dataset".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let u: Vec<f64> = scored.iter().map(|s| s.u).collect();
    let n = u.len();
    let psi_hat = math::mean(&u);
    let sigma2_hat = math::variance(&u);
    let se = libm::sqrt(sigma2_hat / n as f64);
    let z = math::normal_quantile(1.0 - alpha / 2.0)?;
    let ci = (psi_hat - z * se, psi_hat + z * se);
    let bernstein_curve = [0.5, 1.0, 2.0, 3.0, 4.0, 6.0]
        .iter()
        .map(|m| {
            let t = m * se.max(f64::MIN_POSITIVE);
            (t, bernstein_bound(t, sigma2_hat, b_bound, n))
        })
        .collect();
    let mut warnings = Vec::new();
    for fold in 0..k_folds {
        if !scored.iter().any(|s| s.fold == fold && s.y_corr.is_some()) {
            warnings.push(format!("fold {fold} has no observed labels; its delay corrections are all zero"));
        }
    }
    Ok(EstimateReport {
        psi_hat,
        sigma2_hat,
        se,
        ci,
        n,
        alpha,
        b_bound,
        bernstein_curve,
        critical_eps,
        critical_n: critical_n(critical_eps, alpha, sigma2_hat, b_bound)?,
        naive_psi: None,
        naive_bias_closed_form: None,
        eff_bound_closed_form: None,
        k_folds,
        warnings,
    })
}

/// Mean observed label among fully observed records.
pub fn naive_estimate(records: &[TransactionRecord]) -> Result<f64> {
    let obs: Vec<f64> = records
        .iter()
        .filter_map(|r| r.y_obs.map(|y| y as u8 as f64))
        .collect();
    if obs.is_empty() {
        return Err(Error::InsufficientData("no observed labels".into()));
    }
    Ok(math::mean(&obs))
}

/// `Cov(f, q) / E[q]` with `q = e r p`: the naive estimator's bias without corruption.
pub fn naive_bias_closed_form(truth: &PopulationTruth) -> f64 {
    let q = truth.q_true();
    math::covariance(&truth.f_true, &q) / math::mean(&q)
}

/// Naive bias including the corruption channel:
/// `((1 - eps10 - eps01) E[q f] + eps01 E[q]) / E[q] - E[f]`.
pub fn naive_bias_with_corruption(truth: &PopulationTruth, eps10: f64, eps01: f64) -> f64 {
    let q = truth.q_true();
    let qf: Vec<f64> = q.iter().zip(&truth.f_true).map(|(a, b)| a * b).collect();
    let eq = math::mean(&q);
    ((1.0 - eps10 - eps01) * math::mean(&qf) + eps01 * eq) / eq - math::mean(&truth.f_true)
}

/// `E[f(1 - f) / (e r p gamma)] + Var(f)` with `gamma = (1 - eps10 - eps01)^2`.
///
/// This is the collapsed-case expansion; with nonzero corruption it omits the
/// variance of the flips themselves (see [`efficiency_bound_exact`]).
pub fn efficiency_bound_closed_form(truth: &PopulationTruth, eps10: f64, eps01: f64) -> f64 {
    let gamma = (1.0 - eps10 - eps01) * (1.0 - eps10 - eps01);
    let terms: Vec<f64> = (0..truth.f_true.len())
        .map(|i| {
            let f = truth.f_true[i];
            f * (1.0 - f) / (truth.e_true[i] * truth.r_true[i] * truth.p_true[i] * gamma)
        })
        .collect();
    math::mean(&terms) + math::variance(&truth.f_true)
}

/// Variance of the oracle collapsed score including the label flips:
/// `E[v / (e r p)] + Var(f)` with `v = Var(Y_obs | f) / (1 - eps10 - eps01)^2`.
pub fn efficiency_bound_exact(truth: &PopulationTruth, eps10: f64, eps01: f64) -> f64 {
    let c = 1.0 - eps10 - eps01;
    let terms: Vec<f64> = (0..truth.f_true.len())
        .map(|i| {
            let f = truth.f_true[i];
            let m = c * f + eps01;
            m * (1.0 - m) / (c * c * truth.e_true[i] * truth.r_true[i] * truth.p_true[i])
        })
        .collect();
    math::mean(&terms) + math::variance(&truth.f_true)
}

/// `2 exp(-n t^2 / (2 sigma^2 + 2 B t / 3))`.
pub fn bernstein_bound(t: f64, sigma2: f64, b: f64, n: usize) -> f64 {
    let denom = 2.0 * sigma2 + 2.0 * b * t / 3.0;
    if denom <= 0.0 {
        return if t > 0.0 { 0.0 } else { 2.0 };
    }
    2.0 * libm::exp(-(n as f64) * t * t / denom)
}

/// `2 sigma^2 log(2/alpha) / eps^2 + 2 B log(2/alpha) / (3 eps)`.
pub fn critical_n(eps: f64, alpha: f64, sigma2: f64, b: f64) -> Result<f64> {
    if !(eps > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!("critical n needs eps > 0 and alpha in (0, 1), got ({eps}, {alpha})")));
    }
    let l = libm::log(2.0 / alpha);
    Ok(2.0 * sigma2 * l / (eps * eps) + 2.0 * b * l / (3.0 * eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub link: Link,
    pub x_dim: usize,
}

/// Regress pseudo-outcomes on the features and predict a label for every record.
pub fn pseudo_labels(
    records: &[TransactionRecord],
    scored: &[ScoredRecord],
    learner: &LearnerConfig,
    clip: bool,
) -> Result<(GlmModel, Vec<f64>)> {
    if scored.len() != records.len() {
        return Err(Error::Argument("scores must align with records".into()));
    }
    let spec = FeatureSpec { issuers: 0, x_dim: learner.x_dim, log_delta: false, w1: false };
    let rows: Vec<&TransactionRecord> = records.iter().collect();
    let design = spec.design(&rows);
    let y: Vec<f64> = scored
        .iter()
        .map(|s| if clip { s.u.clamp(0.0, 1.0) } else { s.u })
        .collect();
    let model = glm::fit(spec, &design, &y, learner.link, None)?;
    let labels = model.predict_design(&design);
    Ok((model, labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    pub nuisance: NuisanceConfig,
    pub misspec: MisspecPlan,
    pub clip: bool,
    pub learner: LearnerConfig,
    pub critical_eps: f64,
}

impl AlgorithmConfig {
    pub fn new(nuisance: NuisanceConfig, seed: u64) -> Self {
        let x_dim = nuisance.d;
        Self {
            k: 5,
            alpha: 0.05,
            seed,
            nuisance,
            misspec: MisspecPlan::NONE,
            clip: false,
            learner: LearnerConfig { link: Link::Logit, x_dim },
            critical_eps: 0.001,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlgorithmOutput {
    pub report: EstimateReport,
    pub nuisances: NuisanceDocument,
    pub scored: Vec<ScoredRecord>,
    pub label_model: GlmModel,
    pub labels: Vec<f64>,
}

/// Cross-fit nuisances, score, estimate, then fit pseudo-labels, in that order.
pub fn run_algorithm_1(records: &[TransactionRecord], cfg: &AlgorithmConfig) -> Result<AlgorithmOutput> {
    if records.is_empty() {
        return Err(Error::Argument("cannot estimate from an empty dataset".into()));
    }
    let nuisances = nuisance::crossfit_nuisances(records, cfg.k, cfg.seed, &cfg.misspec, &cfg.nuisance)?;
    let floors = cfg.nuisance.floors;
    let scored = score_all(records, &nuisances.plan, &nuisances.sets, &floors)?;
    let (eps10, eps01) = (nuisances.sets[0].eps10_hat, nuisances.sets[0].eps01_hat);
    let mut report = str_estimate(
        &scored,
        cfg.alpha,
        weight_bound(&floors, eps10, eps01),
        cfg.critical_eps,
        cfg.k,
    )?;
    report.naive_psi = naive_estimate(records).ok();
    let unknown = records
        .iter()
        .zip(&nuisances.plan.assignment)
        .filter(|(r, &f)| {
            let set = &nuisances.sets[f];
            [&set.e_hat, &set.r_hat, &set.p_hat].iter().any(|m| m.predict_flagged(r).1)
        })
        .count();
    if unknown > 0 {
        report
            .warnings
            .push(format!("{unknown} records have issuers unknown to the shrinkage pool; pooled estimates used"));
    }
    let (label_model, labels) = pseudo_labels(records, &scored, &cfg.learner, cfg.clip)?;
    Ok(AlgorithmOutput { report, nuisances, scored, label_model, labels })
}
