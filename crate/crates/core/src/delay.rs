//! Training-delay planning: maturity curves, the statistical/staleness error
//! trade-off, and the delays that minimize it for the corrected and the naive
//! estimators.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weibull maturity curve `p(d) = p_inf (1 - exp(-(lambda d)^beta))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaturityCurve {
    pub lambda: f64,
    pub beta: f64,
    pub p_inf: f64,
}

impl MaturityCurve {
    pub fn exponential(lambda: f64) -> Self {
        Self { lambda, beta: 1.0, p_inf: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.p_inf > 0.0 && self.p_inf <= 1.0) {
            return Err(Error::Config(format!("p_inf must lie in (0, 1], got {}", self.p_inf)));
        }
        Ok(())
    }

    fn value(&self, delta: f64) -> f64 {
        -self.p_inf * libm::expm1(-libm::pow(self.lambda * delta, self.beta))
    }

    fn derivative(&self, delta: f64) -> f64 {
        if delta == 0.0 {
            return if self.beta == 1.0 {
                self.lambda * self.p_inf
            } else if self.beta > 1.0 {
                0.0
            } else {
                f64::INFINITY
            };
        }
        let s = libm::pow(self.lambda * delta, self.beta);
        self.p_inf * self.beta * s / delta * libm::exp(-s)
    }
}

pub fn maturity(curve: &MaturityCurve, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(curve.value(delta))
}

pub fn maturity_derivative(curve: &MaturityCurve, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(curve.derivative(delta))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0) {
        return Err(Error::Argument(format!("delay must be non-negative, got {delta}")));
    }
    Ok(())
}

/// A day count that may be infinite, serialized as a number or `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Days {
    Finite(f64),
    Unbounded,
}

impl Days {
    pub fn finite(self) -> Option<f64> {
        match self {
            Days::Finite(v) => Some(v),
            Days::Unbounded => None,
        }
    }

    fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            Days::Finite(v)
        } else {
            Days::Unbounded
        }
    }
}

impl Serialize for Days {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Days::Finite(v) => s.serialize_f64(*v),
            Days::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Days {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Days;
            fn expecting(&self, f: &mut core::fmt::Formatter) -> core::fmt::Result {
                f.write_str("a number or \"unbounded\"")
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> core::result::Result<Days, E> {
                Ok(Days::Finite(v))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> core::result::Result<Days, E> {
                Ok(Days::Finite(v as f64))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> core::result::Result<Days, E> {
                Ok(Days::Finite(v as f64))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> core::result::Result<Days, E> {
                if v == "unbounded" {
                    Ok(Days::Unbounded)
                } else {
                    Err(E::invalid_value(serde::de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Ingredients of the heterogeneity penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaComponents {
    pub cv_e2: f64,
    pub cv_r2: f64,
    pub cv_p2: f64,
    pub rho_fq: f64,
    pub cv_f: f64,
    pub cv_invq: f64,
}

impl EtaComponents {
    /// `(1 + CV_e^2 + CV_r^2 + CV_p^2)(1 + rho CV_f CV_{1/q})`.
    pub fn eta(&self) -> f64 {
        (1.0 + self.cv_e2 + self.cv_r2 + self.cv_p2) * (1.0 + self.rho_fq * self.cv_f * self.cv_invq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum C1Convention {
    /// Error of the population fraud-rate estimate; divides by `n`.
    Marginal,
    /// Per-observation error of a trained model; no `n`.
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub pi: f64,
    pub e_bar: f64,
    pub r_bar: f64,
    pub gamma: f64,
    pub eta: f64,
    pub nu: f64,
    pub n: f64,
    pub curve: MaturityCurve,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_components: Option<EtaComponents>,
}

impl NetworkParams {
    /// Replace `eta` with the value implied by its components.
    pub fn with_eta_components(mut self, c: EtaComponents) -> Self {
        self.eta = c.eta();
        self.eta_components = Some(c);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::Config(format!("pi must lie in (0, 1), got {}", self.pi)));
        }
        unit("e_bar", self.e_bar)?;
        unit("r_bar", self.r_bar)?;
        unit("gamma", self.gamma)?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!("nu must be non-negative, got {}", self.nu)));
        }
        if !(self.n >= 1.0) {
            return Err(Error::Config(format!("n must be at least 1, got {}", self.n)));
        }
        self.curve.validate()
    }

    pub fn c1(&self, convention: C1Convention) -> f64 {
        let model = self.pi * (1.0 - self.pi) * self.eta / (self.e_bar * self.r_bar * self.gamma);
        match convention {
            C1Convention::Model => model,
            C1Convention::Marginal => model / self.n,
        }
    }

    pub fn c2(&self) -> f64 {
        self.nu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTerms {
    pub delta: f64,
    pub e_stat: Days,
    pub e_drift: f64,
    pub e_total: Days,
}

/// Statistical, staleness and total error at `delta` (the irreducible term is omitted).
pub fn total_error(params: &NetworkParams, convention: C1Convention, delta: f64) -> Result<ErrorTerms> {
    let p = maturity(&params.curve, delta)?;
    let e_stat = if p > 0.0 { params.c1(convention) / p } else { f64::INFINITY };
    let e_drift = params.nu * delta;
    Ok(ErrorTerms {
        delta,
        e_stat: Days::from_f64(e_stat),
        e_drift,
        e_total: Days::from_f64(e_stat + e_drift),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrDelay {
    pub convention: C1Convention,
    pub c1: f64,
    pub c2: f64,
    /// `C1 lambda / (C2 p_inf)`; the boundary rule applies when it is at most 1.
    pub argument: Days,
    pub boundary_case: bool,
    /// Delay by the boundary rule: 0 in the boundary case, else the exact minimizer.
    pub delta_star_str: Days,
    /// Exact minimizer of the total error.
    pub delta_star_exact: Days,
    /// Leading-order approximation `log(argument) / lambda` (exponential curves only).
    pub delta_star_approx: Option<f64>,
    /// `exp(-lambda delta_star_exact)` (exponential curves only).
    pub u_star: Option<f64>,
}

/// Smaller root of `c2 u^2 - (2 c2 + c1 lambda) u + c2 = 0`, computed without cancellation.
pub fn quadratic_root(c1: f64, c2: f64, lambda: f64) -> f64 {
    let b = 2.0 * c2 + c1 * lambda;
    let disc = (c1 * lambda) * (c1 * lambda + 4.0 * c2);
    // The roots multiply to 1, so the smaller one is the reciprocal of the larger.
    2.0 * c2 / (b + libm::sqrt(disc))
}

pub fn solve_delta_star_str(params: &NetworkParams, convention: C1Convention) -> Result<StrDelay> {
    params.validate()?;
    let c1 = params.c1(convention);
    let c2 = params.c2();
    let curve = params.curve;
    if c2 == 0.0 {
        return Ok(StrDelay {
            convention,
            c1,
            c2,
            argument: Days::Unbounded,
            boundary_case: false,
            delta_star_str: Days::Unbounded,
            delta_star_exact: Days::Unbounded,
            delta_star_approx: None,
            u_star: None,
        });
    }
    let c2_eff = c2 * curve.p_inf;
    let argument = c1 * curve.lambda / c2_eff;
    let boundary_case = argument <= 1.0;
    let (exact, approx, u_star) = if curve.beta == 1.0 {
        let u = quadratic_root(c1, c2_eff, curve.lambda);
        (-libm::log(u) / curve.lambda, Some(libm::log(argument) / curve.lambda), Some(u))
    } else {
        (bisect_foc(&curve, c1, c2)?, None, None)
    };
    Ok(StrDelay {
        convention,
        c1,
        c2,
        argument: Days::Finite(argument),
        boundary_case,
        delta_star_str: Days::Finite(if boundary_case { 0.0 } else { exact }),
        delta_star_exact: Days::Finite(exact),
        delta_star_approx: approx,
        u_star,
    })
}

/// Root of `C1 p'(d) - C2 p(d)^2` on `(0, 10 / lambda]`, bracketed on a grid then bisected.
fn bisect_foc(curve: &MaturityCurve, c1: f64, c2: f64) -> Result<f64> {
    let g = |d: f64| c1 * curve.derivative(d) - c2 * curve.value(d) * curve.value(d);
    let hi = 10.0 / curve.lambda;
    const GRID: usize = 10_000;
    let mut prev = hi / GRID as f64 * 1e-3;
    let mut g_prev = g(prev);
    for k in 1..=GRID {
        let d = hi * k as f64 / GRID as f64;
        let gd = g(d);
        if g_prev > 0.0 && gd <= 0.0 {
            let (mut lo, mut up) = (prev, d);
            for _ in 0..200 {
                let mid = 0.5 * (lo + up);
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    up = mid;
                }
            }
            return Ok(0.5 * (lo + up));
        }
        prev = d;
        g_prev = gd;
    }
    Err(Error::Convergence { iterations: GRID, grad_norm: g_prev.abs(), last_coef: alloc::vec![hi] })
}

/// Delay at which the naive estimator's selection bias falls to `eps_b`.
///
/// Solves `p(d) / p_inf = 1 - eps_b / zeta`, which is `ln(zeta / eps_b) / lambda`
/// for an exponential curve. Returns 0 when the bias is already tolerable.
pub fn solve_delta_star_naive(curve: &MaturityCurve, zeta: f64, eps_b: f64) -> Result<f64> {
    curve.validate()?;
    if !(eps_b > 0.0 && zeta > 0.0) {
        return Err(Error::Argument(format!("zeta and eps_b must be positive, got ({zeta}, {eps_b})")));
    }
    if eps_b >= zeta {
        return Ok(0.0);
    }
    Ok(libm::pow(libm::log(zeta / eps_b), 1.0 / curve.beta) / curve.lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayPlan {
    pub params: NetworkParams,
    pub zeta: f64,
    pub eps_b: f64,
    #[serde(flatten)]
    pub str_delay: StrDelay,
    /// Constant of the other convention, for reference.
    pub c1_marginal: f64,
    pub c1_model: f64,
    pub delta_star_naive: f64,
    pub maturity_at_naive: f64,
    pub maturity_at_str: Option<f64>,
    pub staleness_at_naive: f64,
    /// `delta_star_naive - delta_star_str`; absent when the corrected delay is unbounded.
    pub freshness_gain: Option<f64>,
    pub error_curve: Vec<ErrorTerms>,
    pub warnings: Vec<String>,
}

pub fn freshness_gain(str_delay: &StrDelay, delta_star_naive: f64) -> Option<f64> {
    str_delay.delta_star_str.finite().map(|s| delta_star_naive - s)
}

/// Error curve on `points` evenly spaced delays over `[0, horizon]`.
pub fn error_curve(params: &NetworkParams, convention: C1Convention, horizon: f64, points: usize) -> Result<Vec<ErrorTerms>> {
    (0..points)
        .map(|k| {
            let d = if points > 1 { horizon * k as f64 / (points - 1) as f64 } else { 0.0 };
            total_error(params, convention, d)
        })
        .collect()
}

pub fn plan_delay(params: &NetworkParams, convention: C1Convention, zeta: f64, eps_b: f64) -> Result<DelayPlan> {
    let str_delay = solve_delta_star_str(params, convention)?;
    let delta_star_naive = solve_delta_star_naive(&params.curve, zeta, eps_b)?;
    let mut warnings = Vec::new();
    if str_delay.delta_star_str == Days::Unbounded {
        warnings.push(String::from("no drift: the total error decreases forever, so waiting is always better"));
    }
    if eps_b >= zeta {
        warnings.push(String::from("tolerable bias exceeds the selection contrast; naive delay is 0"));
    }
    if str_delay.boundary_case {
        warnings.push(format!(
            "boundary rule gives 0 days; the exact minimizer of the total error is {} days",
            str_delay.delta_star_exact.finite().unwrap_or(f64::NAN)
        ));
    }
    let horizon = 10.0 / params.curve.lambda;
    Ok(DelayPlan {
        params: params.clone(),
        zeta,
        eps_b,
        c1_marginal: params.c1(C1Convention::Marginal),
        c1_model: params.c1(C1Convention::Model),
        maturity_at_naive: params.curve.value(delta_star_naive),
        maturity_at_str: str_delay.delta_star_str.finite().map(|d| params.curve.value(d)),
        staleness_at_naive: params.nu * delta_star_naive,
        freshness_gain: freshness_gain(&str_delay, delta_star_naive),
        error_curve: error_curve(params, convention, horizon, 101)?,
        str_delay,
        delta_star_naive,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleNetwork {
    pub name: String,
    pub params: NetworkParams,
    pub zeta: f64,
    pub eps_b: f64,
}

/// The three reference networks: typical card-present, fast drift, real-time payments.
pub fn example_networks() -> Vec<ExampleNetwork> {
    let typical = NetworkParams {
        pi: 0.01,
        e_bar: 0.85,
        r_bar: 0.70,
        gamma: 0.81,
        eta: 1.5,
        nu: 0.001,
        n: 1e7,
        curve: MaturityCurve::exponential(0.03),
        eta_components: None,
    };
    let fastdrift = NetworkParams { nu: 0.01, ..typical.clone() };
    let realtime = NetworkParams {
        pi: 0.005,
        e_bar: 0.95,
        r_bar: 0.20,
        gamma: 0.64,
        eta: 2.0,
        nu: 0.02,
        n: 5e7,
        curve: MaturityCurve::exponential(0.005),
        eta_components: None,
    };
    alloc::vec![
        ExampleNetwork { name: "typical".into(), params: typical, zeta: 0.05, eps_b: 0.005 },
        ExampleNetwork { name: "fastdrift".into(), params: fastdrift, zeta: 0.05, eps_b: 0.005 },
        ExampleNetwork { name: "realtime".into(), params: realtime, zeta: 0.03, eps_b: 0.005 },
    ]
}

/// Model-level plans for the three reference networks.
pub fn reproduce_paper_examples() -> Result<Vec<(ExampleNetwork, DelayPlan)>> {
    example_networks()
        .into_iter()
        .map(|ex| {
            let plan = plan_delay(&ex.params, C1Convention::Model, ex.zeta, ex.eps_b)?;
            Ok((ex, plan))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn typical() -> NetworkParams {
        example_networks()[0].params.clone()
    }

    #[test]
    fn maturity_values() {
        let c = MaturityCurve::exponential(0.03);
        assert_eq!(maturity(&c, 0.0).unwrap(), 0.0);
        assert!((maturity(&c, 1.0 / 0.03).unwrap() - (1.0 - libm::exp(-1.0))).abs() < 1e-15);
        assert!((maturity_derivative(&c, 0.0).unwrap() - 0.03).abs() < 1e-15);
        assert!(maturity(&c, -1.0).is_err());
    }

    #[test]
    fn error_terms_edge_cases() {
        let p = typical();
        let t = total_error(&p, C1Convention::Model, 0.0).unwrap();
        assert_eq!(t.e_stat, Days::Unbounded);
        let mut big = p.clone();
        big.n *= 2.0;
        let a = total_error(&p, C1Convention::Marginal, 20.0).unwrap().e_stat.finite().unwrap();
        let b = total_error(&big, C1Convention::Marginal, 20.0).unwrap().e_stat.finite().unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn typical_network_constants() {
        let d = solve_delta_star_str(&typical(), C1Convention::Model).unwrap();
        assert!((d.c1 - 0.0308).abs() < 5e-5, "{}", d.c1);
        assert!((d.argument.finite().unwrap() - 0.924).abs() < 1e-3);
        assert!(d.boundary_case);
        assert_eq!(d.delta_star_str, Days::Finite(0.0));
    }

    #[test]
    fn naive_delays() {
        let c = MaturityCurve::exponential(0.03);
        let d = solve_delta_star_naive(&c, 0.05, 0.005).unwrap();
        assert!((d - libm::log(10.0) / 0.03).abs() < 1e-12);
        assert!((d - 76.75).abs() < 0.01);
        let rt = solve_delta_star_naive(&MaturityCurve::exponential(0.005), 0.03, 0.005).unwrap();
        assert!((rt - 358.35).abs() < 0.01);
        let e = solve_delta_star_naive(&c, 0.005 * core::f64::consts::E, 0.005).unwrap();
        assert!((e - 1.0 / 0.03).abs() < 1e-9);
        assert_eq!(solve_delta_star_naive(&c, 0.005, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn zero_drift_is_unbounded() {
        let mut p = typical();
        p.nu = 0.0;
        let d = solve_delta_star_str(&p, C1Convention::Model).unwrap();
        assert_eq!(d.delta_star_str, Days::Unbounded);
        assert!(!d.boundary_case);
    }

    #[test]
    fn general_shape_satisfies_foc() {
        let mut p = typical();
        p.curve.beta = 1.7;
        p.nu = 1e-4;
        let d = solve_delta_star_str(&p, C1Convention::Model).unwrap();
        let x = d.delta_star_exact.finite().unwrap();
        let lhs = p.curve.derivative(x);
        let rhs = d.c2 * p.curve.value(x).powi(2) / d.c1;
        assert!((lhs - rhs).abs() <= 1e-9 * d.c2, "{lhs} vs {rhs}");
    }

    #[test]
    fn quadratic_root_matches_textbook_formula() {
        let (c1, c2, l) = (0.03, 0.001, 0.03);
        let b = 2.0 * c2 + c1 * l;
        let naive = (b - libm::sqrt(b * b - 4.0 * c2 * c2)) / (2.0 * c2);
        assert!((quadratic_root(c1, c2, l) - naive).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn foc_residual_and_positive_root(
            log_c1 in -6.0f64..0.0, log_c2 in -5.0f64..-1.0, lambda in 0.001f64..0.2, p_inf in 0.3f64..=1.0
        ) {
            let c1 = libm::pow(10.0, log_c1);
            let nu = libm::pow(10.0, log_c2);
            let mut p = typical();
            p.curve = MaturityCurve { lambda, beta: 1.0, p_inf };
            p.nu = nu;
            // Choose eta so that the model-level constant equals c1.
            p.eta = c1 * p.e_bar * p.r_bar * p.gamma / (p.pi * (1.0 - p.pi));
            let d = solve_delta_star_str(&p, C1Convention::Model).unwrap();
            let x = d.delta_star_exact.finite().unwrap();
            prop_assert!(x > 0.0);
            let resid = p.curve.derivative(x) - d.c2 * p.curve.value(x).powi(2) / d.c1;
            prop_assert!(resid.abs() <= 1e-9 * d.c2 + 1e-12 * p.curve.derivative(x));
            prop_assert_eq!(d.boundary_case, d.c1 * lambda <= nu * p_inf);
        }

        #[test]
        fn eta_at_least_one_for_nonnegative_components(
            a in 0.0f64..2.0, b in 0.0f64..2.0, c in 0.0f64..2.0, rho in 0.0f64..1.0, f in 0.0f64..3.0, q in 0.0f64..3.0
        ) {
            let e = EtaComponents { cv_e2: a, cv_r2: b, cv_p2: c, rho_fq: rho, cv_f: f, cv_invq: q };
            prop_assert!(e.eta() >= 1.0);
        }

        #[test]
        fn gain_does_not_shrink_with_n(log_n in 3.0f64..9.0) {
            let mut p = typical();
            p.n = libm::pow(10.0, log_n);
            let mut q = p.clone();
            q.n *= 2.0;
            let g1 = plan_delay(&p, C1Convention::Marginal, 0.05, 0.005).unwrap().freshness_gain.unwrap();
            let g2 = plan_delay(&q, C1Convention::Marginal, 0.05, 0.005).unwrap().freshness_gain.unwrap();
            prop_assert!(g2 >= g1 - 1e-12);
        }
    }
}
