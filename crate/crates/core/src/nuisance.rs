//! Cross-fitted stage propensities, nested outcome regressions and corruption rates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{check_channel, Error, Result};
use crate::estimator::noise_correct;
use crate::glm::{self, FeatureSpec, GlmModel, Link};
use crate::shrinkage::{self, PropensityModel, ShrinkagePool, Stage};
use crate::sim::{block_rng, Floors, TransactionRecord};

/// Upper clamp on every fitted propensity.
pub const PROPENSITY_CEILING: f64 = 1.0 - 1e-6;

pub const NUISANCE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index per record position.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Balanced random assignment of `records` to `k` folds.
pub fn make_folds(records: &[TransactionRecord], k: usize, seed: u64) -> Result<FoldPlan> {
    make_folds_n(records.len(), k, seed)
}

pub fn make_folds_n(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::Argument(format!("fold count {k} must lie in [2, {n}]")));
    }
    let mut assignment: Vec<usize> = (0..n).map(|i| i % k).collect();
    // Fisher-Yates on a stream distinct from the simulator's.
    let mut rng = block_rng(seed, u64::MAX);
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        assignment.swap(i, j);
    }
    Ok(FoldPlan { k, assignment })
}

/// Switches that replace a nuisance model with an intercept-only fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MisspecPlan {
    pub break_e: bool,
    pub break_r: bool,
    pub break_p: bool,
    pub break_mu0: bool,
    pub break_mu1: bool,
    pub break_mu2: bool,
}

impl MisspecPlan {
    pub const NONE: MisspecPlan = MisspecPlan {
        break_e: false,
        break_r: false,
        break_p: false,
        break_mu0: false,
        break_mu1: false,
        break_mu2: false,
    };

    /// Break all three outcome regressions.
    pub fn break_mu(mut self) -> Self {
        self.break_mu0 = true;
        self.break_mu1 = true;
        self.break_mu2 = true;
        self
    }

    pub fn breaks_stage(&self, stage: Stage) -> bool {
        match stage {
            Stage::Auth => self.break_e,
            Stage::Report => self.break_r,
            Stage::Maturity => self.break_p,
        }
    }
}

/// Where the corruption rates come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "source")]
pub enum CorruptionSource {
    Known { eps10: f64, eps01: f64 },
    /// Audited `(y_obs, y_true)` pairs.
    Audit { pairs: Vec<(bool, bool)> },
}

impl CorruptionSource {
    pub fn resolve(&self) -> Result<(f64, f64)> {
        match self {
            CorruptionSource::Known { eps10, eps01 } => {
                check_channel(*eps10, *eps01)?;
                Ok((*eps10, *eps01))
            }
            CorruptionSource::Audit { pairs } => estimate_corruption_from_audit(pairs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    pub d: usize,
    pub issuer_count: usize,
    pub floors: Floors,
    /// Link of the nested regressions.
    pub mu_link: Link,
    pub shrinkage: bool,
    /// Whether the post-authorization signal enters the reporting model and `mu1`/`mu2`.
    pub use_w1: bool,
    pub corruption: CorruptionSource,
}

impl NuisanceConfig {
    /// Defaults inferred from the records: feature width, issuer range, W1 presence.
    pub fn for_records(records: &[TransactionRecord], floors: Floors, eps10: f64, eps01: f64) -> Self {
        let d = records.first().map_or(0, |r| r.x.len());
        let issuer_count = records.iter().map(|r| r.issuer as usize + 1).max().unwrap_or(1);
        let use_w1 = records.iter().any(|r| r.w1.is_some());
        Self {
            d,
            issuer_count,
            floors,
            mu_link: Link::Logit,
            shrinkage: false,
            use_w1,
            corruption: CorruptionSource::Known { eps10, eps01 },
        }
    }

    fn floor(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Auth => self.floors.e_min,
            Stage::Report => self.floors.r_min,
            Stage::Maturity => self.floors.p_min,
        }
    }

    fn stage_link(stage: Stage) -> Link {
        match stage {
            Stage::Maturity => Link::Cloglog,
            _ => Link::Logit,
        }
    }

    /// Feature spec of a stage model; `issuers = false` gives the pooled variant.
    pub fn stage_features(&self, stage: Stage, issuers: bool) -> FeatureSpec {
        FeatureSpec {
            issuers: if issuers { self.issuer_count } else { 0 },
            x_dim: self.d,
            log_delta: stage == Stage::Maturity,
            w1: stage == Stage::Report && self.use_w1,
        }
    }

    /// Features of `mu2` and `mu1` (the reporting history adds nothing beyond W1).
    pub fn mu_post_auth_features(&self) -> FeatureSpec {
        FeatureSpec { issuers: 0, x_dim: self.d, log_delta: false, w1: self.use_w1 }
    }

    pub fn mu0_features(&self) -> FeatureSpec {
        FeatureSpec { issuers: 0, x_dim: self.d, log_delta: false, w1: false }
    }
}

/// Whether a record is at risk at a stage, and its gate outcome there.
pub fn stage_outcome(stage: Stage, rec: &TransactionRecord) -> Option<bool> {
    match stage {
        Stage::Auth => Some(rec.a),
        Stage::Report => rec.a.then_some(rec.r).flatten(),
        Stage::Maturity => (rec.a && rec.reported()).then_some(rec.m).flatten(),
    }
}

fn training_indices(plan: &FoldPlan, held_out: usize) -> Vec<usize> {
    (0..plan.assignment.len()).filter(|&i| plan.assignment[i] != held_out).collect()
}

/// Fit one stage propensity on the records outside `held_out`.
pub fn fit_propensity(
    stage: Stage,
    records: &[TransactionRecord],
    plan: &FoldPlan,
    held_out: usize,
    misspec: &MisspecPlan,
    cfg: &NuisanceConfig,
) -> Result<(PropensityModel, Option<ShrinkagePool>)> {
    check_plan(records, plan, held_out)?;
    let train: Vec<(&TransactionRecord, bool)> = training_indices(plan, held_out)
        .into_iter()
        .filter_map(|i| stage_outcome(stage, &records[i]).map(|o| (&records[i], o)))
        .collect();
    if train.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no training records at the {} stage",
            stage.name()
        )));
    }
    let floor = cfg.floor(stage);
    let clamp = [floor, PROPENSITY_CEILING];
    let link = NuisanceConfig::stage_link(stage);
    let rows: Vec<&TransactionRecord> = train.iter().map(|(r, _)| *r).collect();
    let y: Vec<f64> = train.iter().map(|(_, o)| *o as u8 as f64).collect();

    if misspec.breaks_stage(stage) {
        let spec = FeatureSpec::INTERCEPT;
        let model = glm::fit(spec, &spec.design(&rows), &y, link, Some(clamp))?;
        return Ok((PropensityModel::unshrunk(stage, model, clamp), None));
    }
    let local_spec = cfg.stage_features(stage, true);
    local_spec.validate(cfg.d)?;
    let local = glm::fit(local_spec, &local_spec.design(&rows), &y, link, Some(clamp))?;
    if !cfg.shrinkage || cfg.issuer_count < 2 {
        return Ok((PropensityModel::unshrunk(stage, local, clamp), None));
    }
    let global_spec = cfg.stage_features(stage, false);
    let global = glm::fit(global_spec, &global_spec.design(&rows), &y, link, Some(clamp))?;
    let pool = shrinkage::build_pool(
        stage,
        cfg.issuer_count,
        train.iter().map(|(r, o)| (r.issuer, *o)),
        floor,
    )?;
    let model = shrinkage::apply_shrinkage(stage, local, global, &pool, clamp)?;
    Ok((model, Some(pool)))
}

/// Inside-out nested regressions on the records outside `held_out`.
///
/// `corrected` holds the noise-corrected label for every `o = 1` record (other
/// entries are ignored). `mu2` regresses it on the post-authorization history
/// among observed records, `mu1` regresses `mu2`'s predictions among reported
/// records, and `mu0` regresses `mu1`'s predictions over all records.
pub fn fit_nested_regressions(
    records: &[TransactionRecord],
    corrected: &[f64],
    plan: &FoldPlan,
    held_out: usize,
    misspec: &MisspecPlan,
    cfg: &NuisanceConfig,
) -> Result<(GlmModel, GlmModel, GlmModel)> {
    check_plan(records, plan, held_out)?;
    if corrected.len() != records.len() {
        return Err(Error::Argument("corrected labels must align with records".into()));
    }
    let train = training_indices(plan, held_out);
    let link = cfg.mu_link;
    let pick = |broken: bool, spec: FeatureSpec| if broken { FeatureSpec::INTERCEPT } else { spec };

    let observed: Vec<usize> = train.iter().copied().filter(|&i| records[i].o).collect();
    if observed.is_empty() {
        return Err(Error::InsufficientData("no observed labels in the training folds".into()));
    }
    let spec2 = pick(misspec.break_mu2, cfg.mu_post_auth_features());
    let rows: Vec<&TransactionRecord> = observed.iter().map(|&i| &records[i]).collect();
    let y2: Vec<f64> = observed.iter().map(|&i| corrected[i]).collect();
    let mu2 = fit_mu(spec2, &spec2.design(&rows), &y2, link)?;

    let reported: Vec<&TransactionRecord> =
        train.iter().map(|&i| &records[i]).filter(|r| r.a && r.reported()).collect();
    let spec1 = pick(misspec.break_mu1, cfg.mu_post_auth_features());
    let y1: Vec<f64> = reported.iter().map(|r| mu2.predict(r)).collect();
    let mu1 = fit_mu(spec1, &spec1.design(&reported), &y1, link)?;

    let all: Vec<&TransactionRecord> = train.iter().map(|&i| &records[i]).collect();
    let spec0 = pick(misspec.break_mu0, cfg.mu0_features());
    let y0: Vec<f64> = all.iter().map(|r| mu1.predict(r)).collect();
    let mu0 = fit_mu(spec0, &spec0.design(&all), &y0, link)?;
    Ok((mu2, mu1, mu0))
}

/// Outcome regression; falls back to least squares when the quasi-likelihood has no
/// finite maximizer, which happens once overstated flip rates push a group mean below zero.
fn fit_mu(spec: FeatureSpec, design: &glm::Design, y: &[f64], link: Link) -> Result<GlmModel> {
    match glm::fit(spec, design, y, link, None) {
        Err(Error::Convergence { .. }) if y.iter().any(|v| !(0.0..=1.0).contains(v)) => {
            glm::fit(spec, design, y, Link::Identity, None)
        }
        other => other,
    }
}

/// Flip rates measured on an audited sample of `(y_obs, y_true)` pairs.
pub fn estimate_corruption_from_audit(audit: &[(bool, bool)]) -> Result<(f64, f64)> {
    let pos = audit.iter().filter(|(_, t)| *t).count();
    let neg = audit.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientData(
            "audit needs both truly fraudulent and truly legitimate cases".into(),
        ));
    }
    let missed = audit.iter().filter(|(o, t)| *t && !*o).count();
    let false_alarm = audit.iter().filter(|(o, t)| !*t && *o).count();
    let eps10 = missed as f64 / pos as f64;
    let eps01 = false_alarm as f64 / neg as f64;
    let sum = eps10 + eps01;
    if sum >= 1.0 {
        return Err(Error::UninformativeChannel { sum });
    }
    Ok((eps10, eps01))
}

/// All nuisances for one cross-fitting fold; applied only to records of `fold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSet {
    pub fold: usize,
    pub e_hat: PropensityModel,
    pub r_hat: PropensityModel,
    pub p_hat: PropensityModel,
    pub mu2_hat: GlmModel,
    pub mu1_hat: GlmModel,
    pub mu0_hat: GlmModel,
    pub eps10_hat: f64,
    pub eps01_hat: f64,
    #[serde(default)]
    pub pools: Vec<ShrinkagePool>,
}

impl NuisanceSet {
    pub fn propensity(&self, stage: Stage) -> &PropensityModel {
        match stage {
            Stage::Auth => &self.e_hat,
            Stage::Report => &self.r_hat,
            Stage::Maturity => &self.p_hat,
        }
    }
}

/// Versioned on-disk form of a cross-fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceDocument {
    pub schema_version: u32,
    pub plan: FoldPlan,
    pub sets: Vec<NuisanceSet>,
}

/// Fit every nuisance once per fold, each on the complement of that fold.
pub fn crossfit_nuisances(
    records: &[TransactionRecord],
    k: usize,
    seed: u64,
    misspec: &MisspecPlan,
    cfg: &NuisanceConfig,
) -> Result<NuisanceDocument> {
    let plan = make_folds(records, k, seed)?;
    let sets = crossfit_with_plan(records, &plan, misspec, cfg)?;
    Ok(NuisanceDocument { schema_version: NUISANCE_SCHEMA_VERSION, plan, sets })
}

pub fn crossfit_with_plan(
    records: &[TransactionRecord],
    plan: &FoldPlan,
    misspec: &MisspecPlan,
    cfg: &NuisanceConfig,
) -> Result<Vec<NuisanceSet>> {
    let (eps10, eps01) = cfg.corruption.resolve()?;
    let corrected: Vec<f64> = records
        .iter()
        .map(|r| match r.y_obs {
            Some(y) => noise_correct(y, eps10, eps01),
            None => Ok(0.0),
        })
        .collect::<Result<_>>()?;
    (0..plan.k)
        .map(|fold| {
            let mut pools = Vec::new();
            let mut fit_stage = |stage| -> Result<PropensityModel> {
                let (m, pool) = fit_propensity(stage, records, plan, fold, misspec, cfg)?;
                pools.extend(pool);
                Ok(m)
            };
            let e_hat = fit_stage(Stage::Auth)?;
            let r_hat = fit_stage(Stage::Report)?;
            let p_hat = fit_stage(Stage::Maturity)?;
            let (mu2_hat, mu1_hat, mu0_hat) =
                fit_nested_regressions(records, &corrected, plan, fold, misspec, cfg)?;
            Ok(NuisanceSet {
                fold,
                e_hat,
                r_hat,
                p_hat,
                mu2_hat,
                mu1_hat,
                mu0_hat,
                eps10_hat: eps10,
                eps01_hat: eps01,
                pools,
            })
        })
        .collect()
}

fn check_plan(records: &[TransactionRecord], plan: &FoldPlan, held_out: usize) -> Result<()> {
    if plan.assignment.len() != records.len() {
        return Err(Error::Argument("fold plan does not match the record count".into()));
    }
    if held_out >= plan.k {
        return Err(Error::Argument(format!("fold {held_out} out of range for k = {}", plan.k)));
    }
    Ok(())
}
