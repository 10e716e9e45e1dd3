//! Empirical Bayes pooling of issuer-level propensities toward the network estimate.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::GlmModel;
use crate::sim::TransactionRecord;

/// Selection gate a propensity model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Auth,
    Report,
    Maturity,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Auth, Stage::Report, Stage::Maturity];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Auth => "auth",
            Stage::Report => "report",
            Stage::Maturity => "maturity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IssuerStats {
    pub issuer: u32,
    pub n_i: usize,
    pub local_est: f64,
    /// Per-observation sampling variance proxy; the estimate's variance is `local_var / n_i`.
    pub local_var: f64,
}

/// Method-of-moments `(sigma_B^2, global)` from issuer summaries.
///
/// `global` is the precision-weighted mean of the local estimates and
/// `sigma_B^2` the weighted between-issuer variance less the mean sampling
/// variance, floored at zero.
pub fn estimate_variance_components(stats: &[IssuerStats]) -> Result<(f64, f64)> {
    let used: Vec<&IssuerStats> = stats.iter().filter(|s| s.n_i > 0).collect();
    if used.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "variance components need at least 2 issuers with data, got {}",
            used.len()
        )));
    }
    let v: Vec<f64> = used.iter().map(|s| s.local_var / s.n_i as f64).collect();
    let w: Vec<f64> = v.iter().map(|vi| 1.0 / vi.max(1e-12)).collect();
    let sw: f64 = w.iter().sum();
    let global = used.iter().zip(&w).map(|(s, wi)| wi * s.local_est).sum::<f64>() / sw;
    let between = used
        .iter()
        .zip(&w)
        .map(|(s, wi)| wi * (s.local_est - global) * (s.local_est - global))
        .sum::<f64>()
        / sw;
    let mean_v = v.iter().sum::<f64>() / v.len() as f64;
    Ok(((between - mean_v).max(0.0), global))
}

/// `lambda_i = sigma_B^2 / (sigma_B^2 + sigma_i^2 / n_i)`.
///
/// `n_i = 0` pools completely (0); zero variances on both sides trust the local value (1).
pub fn shrinkage_weight(sigma_b2: f64, sigma_i2: f64, n_i: usize) -> f64 {
    if n_i == 0 {
        return 0.0;
    }
    let sampling = sigma_i2 / n_i as f64;
    if sigma_b2 <= 0.0 && sampling <= 0.0 {
        return 1.0;
    }
    (sigma_b2 / (sigma_b2 + sampling)).clamp(0.0, 1.0)
}

/// Convex combination `lambda * local + (1 - lambda) * global`.
pub fn shrink(local: f64, global: f64, lambda: f64) -> f64 {
    lambda * local + (1.0 - lambda) * global
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssuerShrinkage {
    pub issuer: u32,
    pub n_i: usize,
    pub lambda: f64,
    pub local_est: f64,
    pub eb_est: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkagePool {
    pub stage: Stage,
    pub global_est: f64,
    pub sigma_b2: f64,
    pub per_issuer: Vec<IssuerShrinkage>,
}

impl ShrinkagePool {
    pub fn lambda(&self, issuer: u32) -> Option<f64> {
        self.per_issuer.iter().find(|s| s.issuer == issuer).map(|s| s.lambda)
    }
}

/// Pool from raw per-issuer gate rates at one stage.
///
/// `observations` yields `(issuer, passed)` for every record at risk at the
/// stage. The sampling variance is binomial at the pooled rate, clamped below by `floor`,
/// so an issuer with few, unanimous outcomes cannot claim near-infinite precision.
pub fn build_pool(
    stage: Stage,
    issuer_count: usize,
    observations: impl Iterator<Item = (u32, bool)>,
    floor: f64,
) -> Result<ShrinkagePool> {
    let mut n = vec![0usize; issuer_count];
    let mut pos = vec![0usize; issuer_count];
    for (issuer, passed) in observations {
        let i = issuer as usize;
        if i < issuer_count {
            n[i] += 1;
            pos[i] += passed as usize;
        }
    }
    let total: usize = n.iter().sum();
    let pooled = if total > 0 { pos.iter().sum::<usize>() as f64 / total as f64 } else { 0.0 };
    let c = pooled.clamp(floor, 1.0 - 1e-6);
    let stats: Vec<IssuerStats> = (0..issuer_count)
        .map(|i| {
            let est = if n[i] > 0 { pos[i] as f64 / n[i] as f64 } else { 0.0 };
            IssuerStats { issuer: i as u32, n_i: n[i], local_est: est, local_var: c * (1.0 - c) }
        })
        .collect();
    pool_from_stats(stage, &stats)
}

pub fn pool_from_stats(stage: Stage, stats: &[IssuerStats]) -> Result<ShrinkagePool> {
    let (sigma_b2, global_est) = estimate_variance_components(stats)?;
    let per_issuer = stats
        .iter()
        .map(|s| {
            let lambda = shrinkage_weight(sigma_b2, s.local_var, s.n_i);
            IssuerShrinkage {
                issuer: s.issuer,
                n_i: s.n_i,
                lambda,
                local_est: s.local_est,
                eb_est: shrink(s.local_est, global_est, lambda),
            }
        })
        .collect();
    Ok(ShrinkagePool { stage, global_est, sigma_b2, per_issuer })
}

/// A propensity model, optionally shrunk per issuer toward a pooled model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub stage: Stage,
    /// Issuer-aware model.
    pub local: GlmModel,
    /// Pooled model without issuer effects; absent when shrinkage is off.
    pub global: Option<GlmModel>,
    /// Shrinkage weight per issuer id; ids past the end are treated as unknown.
    pub lambda: Vec<f64>,
    pub clamp: [f64; 2],
}

impl PropensityModel {
    pub fn unshrunk(stage: Stage, local: GlmModel, clamp: [f64; 2]) -> Self {
        Self { stage, local, global: None, lambda: Vec::new(), clamp }
    }

    /// Prediction and whether the issuer was unknown to the pool.
    pub fn predict_flagged(&self, rec: &TransactionRecord) -> (f64, bool) {
        let local = self.local.predict(rec);
        let (v, unknown) = match &self.global {
            None => (local, false),
            Some(global) => {
                let g = global.predict(rec);
                match self.lambda.get(rec.issuer as usize) {
                    Some(&l) => (shrink(local, g, l), false),
                    None => (g, true),
                }
            }
        };
        (v.clamp(self.clamp[0], self.clamp[1]), unknown)
    }

    pub fn predict(&self, rec: &TransactionRecord) -> f64 {
        self.predict_flagged(rec).0
    }
}

/// Combine local and pooled models with the pool's issuer weights.
pub fn apply_shrinkage(
    stage: Stage,
    local: GlmModel,
    global: GlmModel,
    pool: &ShrinkagePool,
    clamp: [f64; 2],
) -> Result<PropensityModel> {
    if pool.stage != stage {
        return Err(Error::Argument(format!(
            "pool is for the {} stage, model for {}",
            pool.stage.name(),
            stage.name()
        )));
    }
    let size = pool.per_issuer.iter().map(|s| s.issuer as usize + 1).max().unwrap_or(0);
    let mut lambda = vec![0.0; size];
    for s in &pool.per_issuer {
        lambda[s.issuer as usize] = s.lambda;
    }
    Ok(PropensityModel { stage, local, global: Some(global), lambda, clamp })
}
