//! Clamped generalized linear models fitted by damped Newton / Fisher scoring.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, cholesky_solve, inv_cloglog, sigmoid};
use crate::sim::TransactionRecord;

pub const MAX_ITER: usize = 100;
/// Convergence tolerance on the gradient norm divided by the sample size.
pub const GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Identity,
    /// Complementary log-log; a Weibull arrival CDF with log-delay as a
    /// feature is exactly linear on this scale.
    Cloglog,
}

impl Link {
    pub fn inverse(self, z: f64) -> f64 {
        match self {
            Link::Logit => sigmoid(z),
            Link::Identity => z,
            Link::Cloglog => inv_cloglog(z),
        }
    }
}

/// Which record fields enter a model, in column order after the intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// One dummy for each issuer `1..issuers` (issuer 0 and unknown issuers are the baseline).
    pub issuers: usize,
    /// Number of leading feature columns `x0..` used.
    pub x_dim: usize,
    pub log_delta: bool,
    pub w1: bool,
}

impl FeatureSpec {
    pub const INTERCEPT: FeatureSpec = FeatureSpec { issuers: 0, x_dim: 0, log_delta: false, w1: false };

    pub fn width(&self) -> usize {
        1 + self.issuers.saturating_sub(1) + self.x_dim + self.log_delta as usize + self.w1 as usize
    }

    pub fn is_intercept_only(&self) -> bool {
        self.width() == 1
    }

    /// Appends this record's design row to `out`.
    pub fn push_row(&self, rec: &TransactionRecord, out: &mut Vec<f64>) {
        out.push(1.0);
        for i in 1..self.issuers {
            out.push(if rec.issuer as usize == i { 1.0 } else { 0.0 });
        }
        out.extend_from_slice(&rec.x[..self.x_dim]);
        if self.log_delta {
            out.push(libm::log(rec.delta));
        }
        if self.w1 {
            out.push(rec.w1.unwrap_or(0.0));
        }
    }

    pub fn design(&self, records: &[&TransactionRecord]) -> Design {
        let p = self.width();
        let mut rows = Vec::with_capacity(records.len() * p);
        for rec in records {
            self.push_row(rec, &mut rows);
        }
        Design { rows, p }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.x_dim > d {
            return Err(Error::Config(format!("model uses {} features but records have {d}", self.x_dim)));
        }
        Ok(())
    }
}

/// Dense row-major design matrix.
#[derive(Debug, Clone)]
pub struct Design {
    pub rows: Vec<f64>,
    pub p: usize,
}

impl Design {
    pub fn n(&self) -> usize {
        self.rows.len() / self.p.max(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.p..(i + 1) * self.p]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    /// Intercept-first coefficients, in [`FeatureSpec`] column order.
    pub coef: Vec<f64>,
    pub link: Link,
    pub features: FeatureSpec,
    /// Output clamp `[lo, hi]`; absent for unbounded regressions.
    pub clamp: Option<[f64; 2]>,
}

impl GlmModel {
    pub fn constant(link: Link, value: f64) -> Self {
        let z = match link {
            Link::Identity => value,
            Link::Logit => math::logit(value),
            Link::Cloglog => libm::log(-libm::log1p(-value)),
        };
        Self { coef: vec![z], link, features: FeatureSpec::INTERCEPT, clamp: None }
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coef.iter().zip(row).map(|(b, v)| b * v).sum()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let v = self.link.inverse(self.linear_predictor(row));
        match self.clamp {
            Some([lo, hi]) => v.clamp(lo, hi),
            None => v,
        }
    }

    pub fn predict(&self, rec: &TransactionRecord) -> f64 {
        let mut z = self.coef[0];
        let mut c = 1;
        let f = &self.features;
        if f.issuers > 1 {
            let i = rec.issuer as usize;
            if i >= 1 && i < f.issuers {
                z += self.coef[i];
            }
            c += f.issuers - 1;
        }
        for v in &rec.x[..f.x_dim] {
            z += self.coef[c] * v;
            c += 1;
        }
        if f.log_delta {
            z += self.coef[c] * libm::log(rec.delta);
            c += 1;
        }
        if f.w1 {
            z += self.coef[c] * rec.w1.unwrap_or(0.0);
        }
        let v = self.link.inverse(z);
        match self.clamp {
            Some([lo, hi]) => v.clamp(lo, hi),
            None => v,
        }
    }

    pub fn predict_design(&self, design: &Design) -> Vec<f64> {
        (0..design.n()).map(|i| self.predict_row(design.row(i))).collect()
    }
}

/// Fit `y ~ link^{-1}(X b)` and wrap the result as a model.
pub fn fit(
    features: FeatureSpec,
    design: &Design,
    y: &[f64],
    link: Link,
    clamp: Option<[f64; 2]>,
) -> Result<GlmModel> {
    let coef = fit_coef(design, y, link)?;
    Ok(GlmModel { coef, link, features, clamp })
}

/// Coefficients maximizing the (quasi-)Bernoulli likelihood, or least squares for the identity link.
///
/// Targets outside `[0, 1]` are allowed with the logit link: the quasi-likelihood
/// `y z - log(1 + e^z)` stays concave in `z`.
pub fn fit_coef(design: &Design, y: &[f64], link: Link) -> Result<Vec<f64>> {
    let n = design.n();
    if n == 0 {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if y.len() != n {
        return Err(Error::Argument(format!("{} targets for {n} design rows", y.len())));
    }
    match link {
        Link::Identity => least_squares(design, y),
        Link::Logit | Link::Cloglog => newton(design, y, link),
    }
}

fn least_squares(design: &Design, y: &[f64]) -> Result<Vec<f64>> {
    let p = design.p;
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for (row, yi) in design.rows.chunks_exact(p).zip(y) {
        accumulate_outer(&mut xtx, row, 1.0);
        for (acc, v) in xty.iter_mut().zip(row) {
            *acc += v * yi;
        }
    }
    symmetrize(&mut xtx, p);
    cholesky_solve(&xtx, &xty, p)
}

fn accumulate_outer(acc: &mut [f64], row: &[f64], w: f64) {
    let p = row.len();
    for j in 0..p {
        let wj = w * row[j];
        if wj == 0.0 {
            continue;
        }
        for k in 0..=j {
            acc[j * p + k] += wj * row[k];
        }
    }
}

fn symmetrize(a: &mut [f64], p: usize) {
    for j in 0..p {
        for k in j + 1..p {
            a[j * p + k] = a[k * p + j];
        }
    }
}

/// Per-observation pieces for one linear predictor value: (log-likelihood, score factor, information weight).
fn pieces(link: Link, y: f64, z: f64) -> (f64, f64, f64) {
    match link {
        Link::Logit => {
            let e = libm::exp(-z.abs());
            let mu = if z >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
            let softplus = z.max(0.0) + libm::log1p(e);
            (y * z - softplus, y - mu, mu * (1.0 - mu))
        }
        Link::Cloglog => {
            let ez = libm::exp(z.min(700.0));
            let mu = -libm::expm1(-ez);
            let mu_safe = mu.max(1e-300);
            let ll = y * libm::log(mu_safe) - (1.0 - y) * ez;
            let score = (y - mu) * ez / mu_safe;
            let info = ez * ez * (1.0 - mu) / mu_safe;
            (ll, score, info)
        }
        Link::Identity => unreachable!("identity link is solved in closed form"),
    }
}

struct Pass {
    ll: f64,
    grad: Vec<f64>,
    info: Vec<f64>,
}

/// Log-likelihood, score and Fisher information at `coef` in one sweep.
fn pass(design: &Design, y: &[f64], link: Link, coef: &[f64]) -> Pass {
    let p = design.p;
    let mut ll = 0.0;
    let mut carry = 0.0;
    let mut grad = vec![0.0; p];
    let mut info = vec![0.0; p * p];
    for (i, row) in design.rows.chunks_exact(p).enumerate() {
        let z: f64 = coef.iter().zip(row).map(|(b, v)| b * v).sum();
        let (l, s, w) = pieces(link, y[i], z);
        let t = l - carry;
        let next = ll + t;
        carry = (next - ll) - t;
        ll = next;
        for j in 0..p {
            grad[j] += s * row[j];
        }
        accumulate_outer(&mut info, row, w);
    }
    symmetrize(&mut info, p);
    Pass { ll, grad, info }
}

fn newton(design: &Design, y: &[f64], link: Link) -> Result<Vec<f64>> {
    let n = design.n();
    let p = design.p;
    let ybar = math::mean(y).clamp(1e-6, 1.0 - 1e-6);
    let mut coef = vec![0.0; p];
    coef[0] = match link {
        Link::Logit => math::logit(ybar),
        _ => libm::log(-libm::log1p(-ybar)),
    };
    let mut cur = pass(design, y, link, &coef);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..MAX_ITER {
        grad_norm = libm::sqrt(cur.grad.iter().map(|g| g * g).sum::<f64>()) / n as f64;
        if grad_norm <= GRAD_TOL {
            return Ok(coef);
        }
        let mut info = cur.info.clone();
        // A vanishing ridge keeps nearly separated fits solvable.
        for j in 0..p {
            info[j * p + j] += 1e-12 * (1.0 + info[j * p + j]);
        }
        let step = cholesky_solve(&info, &cur.grad, p)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = coef.iter().zip(&step).map(|(c, s)| c + t * s).collect();
            let next = pass(design, y, link, &trial);
            if next.ll.is_finite() && next.ll >= cur.ll - 1e-12 * cur.ll.abs() {
                coef = trial;
                cur = next;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::Convergence { iterations: MAX_ITER, grad_norm, last_coef: coef })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{block_rng, open_unit};

    fn synthetic(n: usize, b: &[f64], link: Link, seed: u64) -> (Design, Vec<f64>) {
        let mut rng = block_rng(seed, 0);
        let p = b.len();
        let mut rows = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            rows.push(1.0);
            for _ in 1..p {
                rows.push(math::normal_quantile(open_unit(&mut rng)).unwrap());
            }
            let row = &rows[rows.len() - p..];
            let z: f64 = b.iter().zip(row).map(|(c, v)| c * v).sum();
            let mu = link.inverse(z);
            y.push(if open_unit(&mut rng) < mu { 1.0 } else { 0.0 });
        }
        (Design { rows, p }, y)
    }

    #[test]
    fn logistic_recovers_coefficients() {
        let truth = [-1.0, 0.8, -0.5];
        let (design, y) = synthetic(200_000, &truth, Link::Logit, 1);
        let coef = fit_coef(&design, &y, Link::Logit).unwrap();
        for (c, t) in coef.iter().zip(truth) {
            assert!((c - t).abs() < 0.03, "{coef:?}");
        }
    }

    #[test]
    fn cloglog_recovers_coefficients() {
        let truth = [-0.7, 0.5, 0.3];
        let (design, y) = synthetic(200_000, &truth, Link::Cloglog, 2);
        let coef = fit_coef(&design, &y, Link::Cloglog).unwrap();
        for (c, t) in coef.iter().zip(truth) {
            assert!((c - t).abs() < 0.03, "{coef:?}");
        }
    }

    #[test]
    fn constant_target_is_a_fixpoint() {
        let (design, _) = synthetic(1000, &[0.0, 0.0, 0.0], Link::Logit, 3);
        let y = vec![0.37; 1000];
        for link in [Link::Identity, Link::Logit] {
            let coef = fit_coef(&design, &y, link).unwrap();
            let m = GlmModel { coef, link, features: FeatureSpec::INTERCEPT, clamp: None };
            for i in 0..design.n() {
                assert!((m.predict_row(design.row(i)) - 0.37).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn separated_intercept_fit_saturates_without_error() {
        let design = Design { rows: vec![1.0; 50], p: 1 };
        let coef = fit_coef(&design, &[1.0; 50], Link::Logit).unwrap();
        assert!(sigmoid(coef[0]) > 1.0 - 1e-6);
    }

    #[test]
    fn quasi_likelihood_accepts_targets_outside_unit_interval() {
        let design = Design { rows: vec![1.0; 4], p: 1 };
        let coef = fit_coef(&design, &[-0.1, 1.1, 0.0, 0.2], Link::Logit).unwrap();
        assert!((sigmoid(coef[0]) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn empty_and_singular_designs_error() {
        let empty = Design { rows: vec![], p: 2 };
        assert!(matches!(fit_coef(&empty, &[], Link::Logit), Err(Error::InsufficientData(_))));
        let collinear = Design { rows: vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0], p: 2 };
        assert!(fit_coef(&collinear, &[0.0, 1.0, 2.0], Link::Identity).is_err());
    }

    #[test]
    fn clamp_bounds_predictions() {
        let m = GlmModel { coef: vec![-30.0], link: Link::Logit, features: FeatureSpec::INTERCEPT, clamp: Some([0.1, 0.9]) };
        assert_eq!(m.predict_row(&[1.0]), 0.1);
    }
}
