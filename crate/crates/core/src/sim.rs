//! Ground-truth simulator for the authorization / reporting / maturity
//! pipeline with class-conditional label corruption.
//!
//! Every record draws a fixed number of uniforms from a ChaCha8 stream keyed by
//! `(seed, record_index / BLOCK)`, so generation is reproducible, can be split
//! across index ranges, and two configurations that differ only in
//! `window_days` produce the same latent population.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_channel, Error, Result};
use crate::math::{self, sigmoid};

/// Records per RNG stream.
pub const BLOCK: usize = 4096;

/// Lower bounds on the three stage propensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Floors {
    pub e_min: f64,
    pub r_min: f64,
    pub p_min: f64,
}

impl Floors {
    pub fn new(e_min: f64, r_min: f64, p_min: f64) -> Self {
        Self { e_min, r_min, p_min }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("e_min", self.e_min), ("r_min", self.r_min), ("p_min", self.p_min)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    /// Largest total inverse weight the floors allow.
    pub fn max_inverse_weight(&self) -> f64 {
        1.0 / (self.e_min * self.r_min * self.p_min)
    }
}

/// Reporting propensity: `logistic(issuer_base[i] + coef . x + w1_coef * w1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub issuer_base: Vec<f64>,
    pub coef: Vec<f64>,
    #[serde(default)]
    pub w1_coef: f64,
}

/// Label-arrival delay: Weibull with rate `issuer_rate[i] * exp(coef . x)` and shared shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayParams {
    pub issuer_rate: Vec<f64>,
    pub shape: f64,
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub d: usize,
    pub issuer_count: usize,
    /// Issuer sampling weights; empty means uniform.
    #[serde(default)]
    pub issuer_weights: Vec<f64>,
    /// Intercept-first coefficients of `f0(x) = logistic(coef . [1; x])`.
    pub fraud_coef: Vec<f64>,
    /// Intercept-first coefficients of the authorization propensity.
    pub auth_coef: Vec<f64>,
    pub report_params: ReportParams,
    pub delay_params: DelayParams,
    /// Training horizon; each record's window is uniform on `(0, window_days]`.
    pub window_days: f64,
    pub eps10: f64,
    pub eps01: f64,
    pub positivity_floors: Floors,
    pub seed: u64,
    pub post_auth_signal: bool,
    /// Mean shift of the post-authorization signal between fraud and legitimate records.
    #[serde(default = "default_w1_strength")]
    pub w1_strength: f64,
    /// Exponential tilt of the authorization odds for `Y* = 1` (1 = ignorable).
    #[serde(default = "one")]
    pub tilt_auth: f64,
    /// Exponential tilt of the reporting odds for `Y* = 1` (1 = ignorable).
    #[serde(default = "one")]
    pub tilt_report: f64,
}

fn one() -> f64 {
    1.0
}

fn default_w1_strength() -> f64 {
    1.0
}

impl SimConfig {
    /// Balanced, mildly selective population used as a starting point by tests and presets.
    pub fn baseline(n: usize, seed: u64) -> Self {
        let issuer_count = 4;
        Self {
            n,
            d: 3,
            issuer_count,
            issuer_weights: Vec::new(),
            fraud_coef: vec![-3.0, 1.0, -0.5, 0.0],
            auth_coef: vec![1.5, -0.8, 0.0, 0.3],
            report_params: ReportParams {
                issuer_base: vec![0.5, 1.0, 1.5, 0.0],
                coef: vec![-0.5, 0.4, 0.0],
                w1_coef: 0.0,
            },
            delay_params: DelayParams {
                issuer_rate: vec![0.05, 0.03, 0.08, 0.02],
                shape: 1.0,
                coef: vec![-0.4, 0.0, 0.2],
            },
            window_days: 120.0,
            eps10: 0.0,
            eps01: 0.0,
            positivity_floors: Floors::new(0.05, 0.05, 0.05),
            seed,
            post_auth_signal: false,
            w1_strength: 1.0,
            tilt_auth: 1.0,
            tilt_report: 1.0,
        }
    }

    /// A 1% fraud network in which 40% of fraud is declined, a third of the
    /// approved fraud goes unreported, 37.5% of the reported fraud has not
    /// matured, and 8% of matured fraud labels are flipped to legitimate.
    ///
    /// Legitimate traffic passes every gate with high probability, so the
    /// observed fraud rate is roughly a quarter of the true rate.
    pub fn example1(n: usize, seed: u64) -> Self {
        Self {
            n,
            d: 3,
            issuer_count: 5,
            issuer_weights: Vec::new(),
            fraud_coef: vec![EXAMPLE1_FRAUD_INTERCEPT, 4.0, 0.0, 0.0],
            auth_coef: vec![7.763_9, -3.0, 0.0, 0.0],
            report_params: ReportParams {
                issuer_base: vec![7.418_1; 5],
                coef: vec![-3.0, 0.0, 0.0],
                w1_coef: 0.0,
            },
            delay_params: DelayParams {
                issuer_rate: vec![0.383_52; 5],
                shape: 1.0,
                coef: vec![-2.0, 0.0, 0.0],
            },
            window_days: 365.0,
            eps10: 0.08,
            eps01: 0.0,
            positivity_floors: Floors::new(0.1, 0.1, 0.1),
            seed,
            post_auth_signal: false,
            w1_strength: 1.0,
            tilt_auth: 1.0,
            tilt_report: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.issuer_count == 0 {
            return Err(Error::Config("issuer_count must be at least 1".into()));
        }
        let d = self.d;
        let lens = [
            ("fraud_coef", self.fraud_coef.len(), d + 1),
            ("auth_coef", self.auth_coef.len(), d + 1),
            ("report_params.coef", self.report_params.coef.len(), d),
            ("delay_params.coef", self.delay_params.coef.len(), d),
            ("report_params.issuer_base", self.report_params.issuer_base.len(), self.issuer_count),
            ("delay_params.issuer_rate", self.delay_params.issuer_rate.len(), self.issuer_count),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(Error::Config(format!("{name} has length {got}, expected {want}")));
            }
        }
        if !self.issuer_weights.is_empty() {
            if self.issuer_weights.len() != self.issuer_count {
                return Err(Error::Config("issuer_weights must have one entry per issuer".into()));
            }
            if self.issuer_weights.iter().any(|w| !(*w >= 0.0)) || self.issuer_weights.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Config("issuer_weights must be non-negative with positive sum".into()));
            }
        }
        if self.delay_params.issuer_rate.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("delay rates must be positive".into()));
        }
        if !(self.delay_params.shape > 0.0) {
            return Err(Error::Config("delay shape must be positive".into()));
        }
        if !(self.window_days > 0.0) {
            return Err(Error::Config("window_days must be positive".into()));
        }
        if !(self.tilt_auth >= 1.0 && self.tilt_report >= 1.0) {
            return Err(Error::Config("tilt odds ratios must be >= 1".into()));
        }
        self.positivity_floors.validate()?;
        check_channel(self.eps10, self.eps01)
    }

    pub fn fraud_prob(&self, x: &[f64]) -> f64 {
        sigmoid(linear(&self.fraud_coef, x))
    }

    pub fn auth_prob(&self, x: &[f64]) -> f64 {
        sigmoid(linear(&self.auth_coef, x)).max(self.positivity_floors.e_min)
    }

    pub fn report_prob(&self, x: &[f64], issuer: usize, w1: f64) -> f64 {
        let rp = &self.report_params;
        let z = rp.issuer_base[issuer] + dot(&rp.coef, x) + rp.w1_coef * w1;
        sigmoid(z).max(self.positivity_floors.r_min)
    }

    /// Unclamped Weibull CDF of the label delay at `delta`.
    pub fn arrival_cdf(&self, x: &[f64], issuer: usize, delta: f64) -> f64 {
        let rate = self.arrival_rate(x, issuer);
        -libm::expm1(-libm::pow(rate * delta, self.delay_params.shape))
    }

    pub fn maturity_prob(&self, x: &[f64], issuer: usize, delta: f64) -> f64 {
        self.arrival_cdf(x, issuer, delta).max(self.positivity_floors.p_min)
    }

    fn arrival_rate(&self, x: &[f64], issuer: usize) -> f64 {
        self.delay_params.issuer_rate[issuer] * libm::exp(dot(&self.delay_params.coef, x))
    }

    /// Population fraud rate `E[f0(X)]` for `X ~ N(0, I)`, by quadrature.
    pub fn population_psi(&self) -> f64 {
        let b0 = self.fraud_coef[0];
        let scale = libm::sqrt(self.fraud_coef[1..].iter().map(|b| b * b).sum::<f64>());
        math::gaussian_expectation(|z| sigmoid(b0 + scale * z))
    }
}

/// Intercept giving the `example1` preset a population fraud rate of 1%.
pub const EXAMPLE1_FRAUD_INTERCEPT: f64 = -10.249_2;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn linear(intercept_first: &[f64], x: &[f64]) -> f64 {
    intercept_first[0] + dot(&intercept_first[1..], x)
}

/// One transaction as the learner sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub id: u64,
    pub x: Vec<f64>,
    pub issuer: u32,
    /// Days available for the label to mature.
    pub delta: f64,
    pub a: bool,
    pub r: Option<bool>,
    pub m: Option<bool>,
    pub o: bool,
    pub y_obs: Option<bool>,
    pub w1: Option<f64>,
}

impl TransactionRecord {
    /// Checks the monotone-missingness structure.
    pub fn check_integrity(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::DataIntegrity(format!("record {}: {msg}", self.id)));
        match (self.a, self.r, self.m) {
            (false, None, None) => {}
            (true, Some(false), None) => {}
            (true, Some(true), Some(_)) => {}
            (false, _, _) => return bad("r or m present on a declined transaction"),
            (true, None, _) => return bad("approved transaction without a reporting outcome"),
            (true, Some(false), Some(_)) => return bad("maturity present on an unreported transaction"),
            (true, Some(true), None) => return bad("reported transaction without a maturity outcome"),
        }
        let o = self.a && self.r == Some(true) && self.m == Some(true);
        if o != self.o {
            return bad("o disagrees with a*r*m");
        }
        if self.o != self.y_obs.is_some() {
            return bad("y_obs must be present exactly when o = 1");
        }
        Ok(())
    }

    pub fn reported(&self) -> bool {
        self.r == Some(true)
    }
}

/// Latent quantities known only to the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTruth {
    pub y_star: Vec<bool>,
    /// Untilted stage propensities at each record's history.
    pub e_true: Vec<f64>,
    pub r_true: Vec<f64>,
    pub p_true: Vec<f64>,
    pub f_true: Vec<f64>,
    /// Label-arrival delay, drawn only for approved and reported records.
    pub tau: Vec<Option<f64>>,
    pub psi_true: f64,
}

impl PopulationTruth {
    pub fn q_true(&self) -> Vec<f64> {
        self.e_true
            .iter()
            .zip(&self.r_true)
            .zip(&self.p_true)
            .map(|((e, r), p)| e * r * p)
            .collect()
    }
}

/// Flip a label through the class-conditional corruption channel, given a uniform draw.
pub fn corrupt_with(y: bool, eps10: f64, eps01: f64, u: f64) -> bool {
    if y {
        u >= eps10
    } else {
        u < eps01
    }
}

/// Flip a label through the class-conditional corruption channel.
pub fn apply_corruption<R: RngCore>(y: bool, eps10: f64, eps01: f64, rng: &mut R) -> Result<bool> {
    check_channel(eps10, eps01)?;
    Ok(corrupt_with(y, eps10, eps01, open_unit(rng)))
}

/// Uniform on the open interval (0, 1) from 53 random bits.
pub fn open_unit<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Independent RNG stream for a block of records.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

fn tilt(p: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        p
    } else {
        p * gamma / (1.0 - p + p * gamma)
    }
}

fn normal<R: RngCore>(rng: &mut R) -> f64 {
    // Inverse-CDF sampling keeps the per-record draw count fixed.
    math::normal_quantile(open_unit(rng)).unwrap_or(0.0)
}

/// Generate records `range` of the population described by `cfg`.
pub fn generate_range(
    cfg: &SimConfig,
    range: core::ops::Range<usize>,
) -> (Vec<TransactionRecord>, PopulationTruth) {
    let len = range.len();
    let mut records = Vec::with_capacity(len);
    let mut truth = PopulationTruth {
        y_star: Vec::with_capacity(len),
        e_true: Vec::with_capacity(len),
        r_true: Vec::with_capacity(len),
        p_true: Vec::with_capacity(len),
        f_true: Vec::with_capacity(len),
        tau: Vec::with_capacity(len),
        psi_true: 0.0,
    };
    let cum_weights = cumulative_weights(cfg);
    let mut block = usize::MAX;
    let mut rng = block_rng(cfg.seed, 0);
    for idx in range {
        if idx / BLOCK != block {
            block = idx / BLOCK;
            rng = block_rng(cfg.seed, block as u64);
            // Skip to this record's position inside the block.
            for _ in 0..(idx % BLOCK) * DRAWS_PER_RECORD {
                rng.next_u64();
            }
        }
        let (rec, y, e, r, p, f, tau) = draw_record(cfg, idx, &cum_weights, &mut rng);
        records.push(rec);
        truth.y_star.push(y);
        truth.e_true.push(e);
        truth.r_true.push(r);
        truth.p_true.push(p);
        truth.f_true.push(f);
        truth.tau.push(tau);
    }
    let frauds = truth.y_star.iter().filter(|&&y| y).count();
    truth.psi_true = frauds as f64 / len.max(1) as f64;
    (records, truth)
}

const FIXED_DRAWS: usize = 8;
const MAX_FEATURES: usize = 64;
const DRAWS_PER_RECORD: usize = FIXED_DRAWS + MAX_FEATURES;

fn cumulative_weights(cfg: &SimConfig) -> Vec<f64> {
    let w: Vec<f64> = if cfg.issuer_weights.is_empty() {
        vec![1.0; cfg.issuer_count]
    } else {
        cfg.issuer_weights.clone()
    };
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    w.iter()
        .map(|v| {
            acc += v / total;
            acc
        })
        .collect()
}

#[allow(clippy::type_complexity)]
fn draw_record(
    cfg: &SimConfig,
    idx: usize,
    cum_weights: &[f64],
    rng: &mut ChaCha8Rng,
) -> (TransactionRecord, bool, f64, f64, f64, f64, Option<f64>) {
    // Fixed draw budget per record: MAX_FEATURES feature slots, then eight scalars.
    let mut x = Vec::with_capacity(cfg.d);
    for j in 0..MAX_FEATURES {
        let u = open_unit(rng);
        if j < cfg.d {
            x.push(math::normal_quantile(u).unwrap_or(0.0));
        }
    }
    let u_issuer = open_unit(rng);
    let u_fraud = open_unit(rng);
    let w1_noise = normal(rng);
    let u_auth = open_unit(rng);
    let u_report = open_unit(rng);
    let u_delta = open_unit(rng);
    let u_tau = open_unit(rng);
    let u_corrupt = open_unit(rng);

    let issuer = cum_weights
        .iter()
        .position(|&c| u_issuer < c)
        .unwrap_or(cfg.issuer_count - 1);
    let f = cfg.fraud_prob(&x);
    let y_star = u_fraud < f;
    let w1 = if cfg.post_auth_signal {
        Some(cfg.w1_strength * if y_star { 1.0 } else { 0.0 } + w1_noise)
    } else {
        None
    };
    let delta = cfg.window_days * (1.0 - u_delta + f64::EPSILON).min(1.0);

    let e = cfg.auth_prob(&x);
    let r = cfg.report_prob(&x, issuer, w1.unwrap_or(0.0));
    let raw_p = cfg.arrival_cdf(&x, issuer, delta);
    let p = raw_p.max(cfg.positivity_floors.p_min);

    let (e_draw, r_draw) = if y_star {
        (tilt(e, cfg.tilt_auth), tilt(r, cfg.tilt_report))
    } else {
        (e, r)
    };
    let a = u_auth < e_draw;
    let (r_gate, m_gate, tau) = if !a {
        (None, None, None)
    } else if u_report >= r_draw {
        (Some(false), None, None)
    } else {
        let rate = cfg.arrival_rate(&x, issuer);
        let mut tau = libm::pow(-libm::log1p(-u_tau), 1.0 / cfg.delay_params.shape) / rate;
        let matured = u_tau < p;
        if matured && tau > delta {
            // The maturity floor forces arrival inside the window.
            tau = delta;
        }
        (Some(true), Some(matured), Some(tau))
    };
    let o = a && r_gate == Some(true) && m_gate == Some(true);
    let y_obs = o.then(|| corrupt_with(y_star, cfg.eps10, cfg.eps01, u_corrupt));

    let rec = TransactionRecord {
        id: idx as u64,
        x,
        issuer: issuer as u32,
        delta,
        a,
        r: r_gate,
        m: m_gate,
        o,
        y_obs,
        w1,
    };
    (rec, y_star, e, r, p, f, tau)
}

/// Generate the full population. Deterministic in `cfg` (including the seed).
pub fn generate_population(cfg: &SimConfig) -> Result<(Vec<TransactionRecord>, PopulationTruth)> {
    cfg.validate()?;
    if cfg.d > MAX_FEATURES {
        return Err(Error::Config(format!("at most {MAX_FEATURES} features are supported")));
    }
    Ok(generate_range(cfg, 0..cfg.n))
}

/// Horvitz-Thompson identification estimate `mean(o * y / (e r p))` with true propensities.
///
/// Returns the estimate and the Monte Carlo standard error of the weighted terms.
pub fn oracle_psi_ht(
    cfg: &SimConfig,
    records: &[TransactionRecord],
    truth: &PopulationTruth,
) -> Result<(f64, f64)> {
    if cfg.eps10 != 0.0 || cfg.eps01 != 0.0 {
        return Err(Error::Contract(
            "the identification oracle assumes uncorrupted observed labels".into(),
        ));
    }
    if records.is_empty() || records.len() != truth.e_true.len() {
        return Err(Error::Argument("records and truth must be non-empty and aligned".into()));
    }
    let terms: Vec<f64> = records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            if rec.y_obs == Some(true) {
                1.0 / (truth.e_true[i] * truth.r_true[i] * truth.p_true[i])
            } else {
                0.0
            }
        })
        .collect();
    let est = math::mean(&terms);
    let se = libm::sqrt(math::variance(&terms) / terms.len() as f64);
    Ok((est, se))
}

/// `(mean(1/p), 1/mean(p))`: the two sides of the Jensen delay penalty.
pub fn jensen_delay_sides(p: &[f64]) -> (f64, f64) {
    let inv: Vec<f64> = p.iter().map(|v| 1.0 / v).collect();
    (math::mean(&inv), 1.0 / math::mean(p))
}
