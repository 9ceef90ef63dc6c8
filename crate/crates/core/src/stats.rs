//! Regression and resampling utilities shared by the experiments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Weighted least squares `y ≈ X beta`. Returns `beta` and `r²`.
pub fn least_squares(
    columns: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<(Vec<f64>, f64)> {
    let n = y.len();
    let p = columns.len();
    if n < p || columns.iter().any(|c| c.len() != n) {
        return Err(Error::DegenerateFit(format!(
            "{n} observations for {p} parameters"
        )));
    }
    if y.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite regression data".into()));
    }
    let w: Vec<f64> = match weights {
        Some(w) if w.len() == n => w.to_vec(),
        Some(_) => return Err(Error::DegenerateFit("weight length mismatch".into())),
        None => vec![1.0; n],
    };
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i] * sw[i]);
    let b = DVector::from_fn(n, |i, _| y[i] * sw[i]);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::DegenerateFit("design matrix is rank deficient".into()));
    }
    let beta = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let wsum: f64 = w.iter().sum();
    let ybar = y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let ss_tot: f64 = y.iter().zip(&w).map(|(y, w)| w * (y - ybar).powi(2)).sum();
    let fitted = &x * &beta;
    let ss_res: f64 = (0..n).map(|i| (b[i] - fitted[i]).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok((beta.iter().copied().collect(), r2))
}

/// Straight-line fit `y ≈ intercept + slope x`.
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<Line> {
    let (beta, r_squared) = least_squares(&[vec![1.0; x.len()], x.to_vec()], y, weights)?;
    Ok(Line {
        intercept: beta[0],
        slope: beta[1],
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    InverseVariance,
}

/// How the exponential factor `e^{-c sqrt(mu) r}` is handled when fitting
/// a power law.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RateModel {
    /// Multiply by `e^{+c_hat sqrt(mu) r}` before a two-parameter fit.
    Fixed { c_hat: f64 },
    /// Fit `log m = log C - c sqrt(mu) r + s log r` with `c` free.
    #[default]
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// Power of `r`: the fitted value is `C r^exponent` (times the
    /// exponential factor).
    pub exponent: f64,
    /// `log C`.
    pub intercept: f64,
    /// Exponential rate `c`; fixed or fitted.
    pub rate: f64,
    pub r_squared: f64,
    pub radii: Vec<f64>,
    pub weighting: Weighting,
    pub rate_model: RateModel,
}

/// Fits `m(r) ≈ C e^{-c sqrt(mu) r} r^exponent`. `variances` are the
/// variances of `log m`; they are required for inverse-variance weighting
/// and ignored otherwise. A vanishing variance falls back to uniform
/// weights.
pub fn fit_scaling(
    radii: &[f64],
    values: &[f64],
    mu: f64,
    rate_model: RateModel,
    weighting: Weighting,
    log_variances: Option<&[f64]>,
) -> Result<ScalingFit> {
    if radii.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 radii, got {}",
            radii.len()
        )));
    }
    if radii.len() != values.len() {
        return Err(Error::DegenerateFit("radii/values length mismatch".into()));
    }
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateFit("power-law fit needs positive values".into()));
    }
    let first = radii[0];
    if radii.iter().all(|r| (r - first).abs() < 1e-12) {
        return Err(Error::DegenerateFit("all radii are equal".into()));
    }
    let weights: Option<Vec<f64>> = match (weighting, log_variances) {
        (Weighting::InverseVariance, Some(v)) if v.iter().all(|v| *v > 0.0) => {
            Some(v.iter().map(|v| 1.0 / v).collect())
        }
        (Weighting::InverseVariance, None) => {
            return Err(Error::DegenerateFit(
                "inverse-variance weighting needs variances".into(),
            ))
        }
        _ => None,
    };
    let weighting = if weights.is_some() {
        Weighting::InverseVariance
    } else {
        Weighting::Uniform
    };
    let logr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let z: Vec<f64> = radii.iter().map(|r| mu.sqrt() * r).collect();
    let (exponent, intercept, rate, r_squared) = match rate_model {
        RateModel::Fixed { c_hat } => {
            let y: Vec<f64> = values
                .iter()
                .zip(&z)
                .map(|(m, z)| m.ln() + c_hat * z)
                .collect();
            let line = linear_fit(&logr, &y, weights.as_deref())?;
            (line.slope, line.intercept, c_hat, line.r_squared)
        }
        RateModel::Joint => {
            let y: Vec<f64> = values.iter().map(|m| m.ln()).collect();
            let neg_z: Vec<f64> = z.iter().map(|z| -z).collect();
            let (beta, r2) = least_squares(
                &[vec![1.0; radii.len()], neg_z, logr.clone()],
                &y,
                weights.as_deref(),
            )?;
            (beta[2], beta[0], beta[1], r2)
        }
    };
    Ok(ScalingFit {
        exponent,
        intercept,
        rate,
        r_squared,
        radii: radii.to_vec(),
        weighting,
        rate_model,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolation percentile (`p` in `[0, 1]`) of unsorted data.
pub fn percentile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    percentile_sorted(&v, p)
}

pub fn percentile_sorted(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    percentile(xs, 0.5)
}

/// `<x^q>^{1/q}`.
pub fn moment(xs: &[f64], q: f64) -> f64 {
    (xs.iter().map(|x| x.abs().powf(q)).sum::<f64>() / xs.len() as f64).powf(1.0 / q)
}

/// Percentile bootstrap interval of `statistic` at level `level`, using a
/// deterministic resampling stream derived from `seed`.
pub fn bootstrap_ci(
    xs: &[f64],
    statistic: impl Fn(&[f64]) -> f64,
    resamples: usize,
    level: f64,
    seed: u64,
) -> (f64, f64) {
    let n = xs.len();
    let mut rng = seed::rng(seed);
    let mut buf = vec![0.0; n];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[rng.random_range(0..n)];
            }
            statistic(&buf)
        })
        .collect();
    stats.sort_by(|a, b| a.total_cmp(b));
    let alpha = 0.5 * (1.0 - level);
    (
        percentile_sorted(&stats, alpha),
        percentile_sorted(&stats, 1.0 - alpha),
    )
}
