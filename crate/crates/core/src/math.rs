//! Scalar numerics shared by the estimators: link functions, the normal
//! distribution, deterministic summation, and a small dense SPD solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

/// Inverse complementary log-log link: `1 - exp(-exp(z))`.
#[inline]
pub fn inv_cloglog(z: f64) -> f64 {
    -libm::expm1(-libm::exp(z))
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by
/// one Halley step against `erfc`, which brings it to near machine precision.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(alloc::format!(
            "normal quantile needs p in (0, 1), got {p}"
        )));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement.
    let e = normal_cdf(x) - p;
    let u = e * libm::sqrt(2.0 * core::f64::consts::PI) * libm::exp(x * x / 2.0);
    Ok(x - u / (1.0 + x * u / 2.0))
}

const CHUNK: usize = 256;

/// Sum with a fixed chunking and pairwise reduction of chunk totals.
///
/// The summation order depends only on `xs.len()`, so a parallel caller that
/// reproduces the same chunk boundaries gets bit-identical results.
pub fn stable_sum(xs: &[f64]) -> f64 {
    if xs.len() <= CHUNK {
        return xs.iter().sum();
    }
    let mut partial: Vec<f64> = xs.chunks(CHUNK).map(|c| c.iter().sum()).collect();
    while partial.len() > 1 {
        partial = partial
            .chunks(2)
            .map(|p| if p.len() == 2 { p[0] + p[1] } else { p[0] })
            .collect();
    }
    partial[0]
}

/// Mean, computed about the first element so constant inputs are reproduced exactly.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let x0 = xs[0];
    let d: Vec<f64> = xs.iter().map(|x| x - x0).collect();
    x0 + stable_sum(&d) / xs.len() as f64
}

/// Population (divisor `n`) variance about the sample mean; exactly 0 for constant input.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let x0 = xs[0];
    let d: Vec<f64> = xs.iter().map(|x| x - x0).collect();
    let m = stable_sum(&d) / d.len() as f64;
    let sq: Vec<f64> = d.iter().map(|x| (x - m) * (x - m)).collect();
    stable_sum(&sq) / xs.len() as f64
}

/// Population covariance (divisor `n`).
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let prod: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    stable_sum(&prod) / xs.len() as f64
}

/// Linear-interpolated quantile of an ascending-sorted slice.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = libm::ceil(pos) as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Area under the ROC curve via the Mann-Whitney rank statistic (ties get mid-ranks).
///
/// Returns `None` when either class is empty.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum_pos += mid_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos as f64) * (n_pos as f64 + 1.0) / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// `E[g(Z)]` for `Z ~ N(0, 1)` by the trapezoid rule on `[-12, 12]`.
///
/// The integrand decays like the Gaussian density, so the rule converges
/// geometrically for smooth `g`.
pub fn gaussian_expectation(g: impl Fn(f64) -> f64) -> f64 {
    const STEPS: usize = 8000;
    const HALF: f64 = 12.0;
    let h = 2.0 * HALF / STEPS as f64;
    let norm = 1.0 / libm::sqrt(2.0 * core::f64::consts::PI);
    let mut acc = 0.0;
    for k in 0..=STEPS {
        let z = -HALF + k as f64 * h;
        let w = if k == 0 || k == STEPS { 0.5 } else { 1.0 };
        acc += w * g(z) * norm * libm::exp(-0.5 * z * z);
    }
    acc * h
}

/// Solve `A x = b` for symmetric positive-definite `A` (row-major, `p x p`) by Cholesky.
pub fn cholesky_solve(a: &[f64], b: &[f64], p: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                let scale = a[i * p + i].abs().max(1.0);
                if !(s > 1e-13 * scale) {
                    return Err(Error::Singular(alloc::format!(
                        "non-positive pivot {s:e} at column {i}"
                    )));
                }
                l[i * p + i] = libm::sqrt(s);
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    Ok(x)
}
