//! Strong and weak fluctuations of `u_n` solving
//! `mu_n u - div(A grad u) = n^{-2} phi(x / n)` on periodic boxes of
//! half-width `window * n`, with `mu_n = mu / n²` and `eps = 1 / n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{sample, EnsembleSpec};
use crate::error::{Error, Result};
use crate::lattice::{Boundary, Lattice, SiteField};
use crate::profile::{sample_macro, MacroProfile};
use crate::seed::{self, child_seed};
use crate::solver::{solve_into, LinearOperator, ProblemSpec};
use crate::stats::{self, Line};

/// `(Σ_x (mean_{B_eps(x)} |f|^λ)^{q/λ})^{1/q}`, sums standing in for
/// integrals.
pub fn mixed_norm(f: &SiteField, q: f64, lambda: f64, eps_ball: usize) -> Result<f64> {
    if !(q >= 1.0 && lambda >= 1.0) {
        return Err(Error::param(format!(
            "mixed norm needs q, lambda >= 1 (got q = {q}, lambda = {lambda})"
        )));
    }
    let lat = f.lattice();
    let offsets = lat.ball_offsets(eps_ball as f64);
    let powered: Vec<f64> = f.values().iter().map(|v| v.abs().powf(lambda)).collect();
    let mut total = 0.0;
    for i in 0..lat.num_sites() {
        let x = lat.site(i);
        let mut acc = 0.0;
        for &o in &offsets {
            if let Some(j) = lat.index(x.offset(o)) {
                acc += powered[j];
            }
        }
        total += (acc / offsets.len() as f64).powf(q / lambda);
    }
    // Sites outside a Dirichlet box whose ball reaches in.
    if lat.boundary() == Boundary::Dirichlet {
        let r = lat.radius() as i64 + eps_ball as i64;
        let outer = Lattice::new(lat.dim(), r as usize, Boundary::Dirichlet)?;
        for x in outer.sites().filter(|s| !lat.contains(*s)) {
            let acc: f64 = offsets
                .iter()
                .filter_map(|&o| lat.index(x.offset(o)))
                .map(|j| powered[j])
                .sum();
            total += (acc / offsets.len() as f64).powf(q / lambda);
        }
    }
    Ok(total.powf(1.0 / q))
}

/// Exponents of the fluctuation estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub p: f64,
    pub theta: f64,
    /// Integrability of the local average in the strong estimate.
    pub lambda: f64,
    /// `q` and `r` with `1 + 1/p = 1/r + 1/q`, when declared.
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub r: Option<f64>,
    /// Weak estimate exponents with `1/λ₁ + 1/λ₂ < (d+2)/d`.
    #[serde(default = "default_lambda12")]
    pub lambda1: f64,
    #[serde(default = "default_lambda12")]
    pub lambda2: f64,
}

fn default_lambda12() -> f64 {
    2.0
}

impl Exponents {
    pub fn standard(dim: usize) -> Self {
        Exponents {
            p: 2.0,
            theta: 1.0,
            lambda: dim as f64 / 2.0 + 1.0,
            q: None,
            r: None,
            lambda1: 2.0,
            lambda2: 2.0,
        }
    }

    pub fn validate_strong(&self, dim: usize) -> Result<()> {
        if !(self.p >= 1.0 && self.theta >= 1.0) {
            return Err(Error::param("p and theta must be at least 1"));
        }
        let half = dim as f64 / 2.0;
        if !(self.lambda > half) {
            return Err(Error::param(format!(
                "lambda = {} violates lambda > d/2 = {half}",
                self.lambda
            )));
        }
        if let (Some(q), Some(r)) = (self.q, self.r) {
            let lhs = 1.0 + 1.0 / self.p;
            let rhs = 1.0 / r + 1.0 / q;
            if (lhs - rhs).abs() > 1e-9 {
                return Err(Error::param(format!(
                    "exponents violate 1 + 1/p = 1/r + 1/q ({lhs} vs {rhs})"
                )));
            }
        }
        Ok(())
    }

    pub fn validate_weak(&self, dim: usize) -> Result<()> {
        if !(self.theta >= 1.0) {
            return Err(Error::param("theta must be at least 1"));
        }
        let d = dim as f64;
        let s = 1.0 / self.lambda1 + 1.0 / self.lambda2;
        if !(s < (d + 2.0) / d) {
            return Err(Error::param(format!(
                "1/lambda1 + 1/lambda2 = {s} violates the bound (d+2)/d = {}",
                (d + 2.0) / d
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctuationConfig {
    pub dim: usize,
    pub sizes: Vec<usize>,
    /// Macroscopic massive term; the lattice uses `mu / n²`.
    pub mu: f64,
    pub rhs: MacroProfile,
    /// Test profile `g` of the weak statistic.
    pub test: MacroProfile,
    pub n_samples: usize,
    pub exponents: Exponents,
    /// Box half-width in macroscopic units.
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
}

fn default_window() -> f64 {
    1.0
}

fn default_resamples() -> usize {
    1000
}

impl FluctuationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::param("dim must be 2 or 3"));
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|&n| n < 2) {
            return Err(Error::param("sizes must be at least 2"));
        }
        if self.n_samples < 2 {
            return Err(Error::param("need at least two samples per size"));
        }
        if !(self.mu > 0.0) || !(self.window > 0.0) {
            return Err(Error::param("mu and window must be positive"));
        }
        Ok(())
    }

    fn box_radius(&self, n: usize) -> usize {
        ((self.window * n as f64).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeStatistic {
    pub n: usize,
    pub mu_n: f64,
    pub value: f64,
    /// `value` divided by `|ln mu_n|^{1/2} + 1`.
    pub deflated: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl From<Line> for SlopeFit {
    fn from(l: Line) -> Self {
        SlopeFit {
            slope: l.slope,
            intercept: l.intercept,
            r_squared: l.r_squared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationResult {
    pub mode: Mode,
    pub dim: usize,
    pub sizes: Vec<SizeStatistic>,
    /// Fit of `log value` against `log(1/n)`.
    pub fit_raw: Option<SlopeFit>,
    /// Same for the deflated values.
    pub fit_deflated: Option<SlopeFit>,
    /// All statistics vanish (deterministic ensemble or zero test profile).
    pub degenerate: bool,
    /// The bias of the empirical mean is corrected only for `p = 2`,
    /// `theta = 1`.
    pub bias_corrected: bool,
}

impl FluctuationResult {
    /// The slope the theory speaks about: deflated for strong `d = 2`,
    /// raw otherwise.
    pub fn primary_slope(&self) -> Option<f64> {
        let fit = if self.mode == Mode::Strong && self.dim == 2 {
            &self.fit_deflated
        } else {
            &self.fit_raw
        };
        fit.as_ref().map(|f| f.slope)
    }
}

/// Strong and weak results computed from the same solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationRun {
    pub strong: FluctuationResult,
    pub weak: FluctuationResult,
}

/// `d = 2` deflation factor `|ln mu_n|^{1/2} + 1`.
pub fn log_deflation(mu_n: f64) -> f64 {
    mu_n.ln().abs().sqrt() + 1.0
}

/// Per-sample strong contributions `(n^{-d} Σ |u_i - ū|^p)^θ`, with `ū`
/// the per-site mean over the given samples.
pub fn strong_contributions(us: &[Vec<f64>], n: usize, dim: usize, p: f64, theta: f64) -> Vec<f64> {
    // Accumulated as offsets from the first sample, so identical samples
    // give an exactly zero deviation.
    let m = us.len() as f64;
    let mut shift = vec![0.0; us[0].len()];
    for u in &us[1..] {
        for ((a, b), c) in shift.iter_mut().zip(u).zip(&us[0]) {
            *a += b - c;
        }
    }
    let mean: Vec<f64> = us[0].iter().zip(&shift).map(|(c, a)| c + a / m).collect();
    let scale = (n as f64).powi(-(dim as i32));
    us.iter()
        .map(|u| {
            let s: f64 = u.iter().zip(&mean).map(|(a, b)| (a - b).abs().powf(p)).sum();
            (scale * s).powf(theta)
        })
        .collect()
}

/// Per-sample weak contributions `|n^{-d} Σ (u_i - ū) g|^θ`.
pub fn weak_contributions(us: &[Vec<f64>], g: &[f64], n: usize, dim: usize, theta: f64) -> Vec<f64> {
    let scale = (n as f64).powi(-(dim as i32));
    let proj: Vec<f64> = us
        .iter()
        .map(|u| scale * u.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let mean = proj[0] + proj.iter().map(|v| v - proj[0]).sum::<f64>() / proj.len() as f64;
    proj.iter().map(|v| (v - mean).abs().powf(theta)).collect()
}

fn fit_slopes(stats_: &[SizeStatistic]) -> (Option<SlopeFit>, Option<SlopeFit>) {
    if stats_.len() < 3 || stats_.iter().any(|s| !(s.value > 0.0)) {
        return (None, None);
    }
    let x: Vec<f64> = stats_.iter().map(|s| -(s.n as f64).ln()).collect();
    let raw: Vec<f64> = stats_.iter().map(|s| s.value.ln()).collect();
    let defl: Vec<f64> = stats_.iter().map(|s| s.deflated.ln()).collect();
    (
        stats::linear_fit(&x, &raw, None).ok().map(Into::into),
        stats::linear_fit(&x, &defl, None).ok().map(Into::into),
    )
}

/// Solves all samples for all sizes once and evaluates both statistics.
pub fn fluctuation_experiment(
    spec: &EnsembleSpec,
    cfg: &FluctuationConfig,
    master_seed: u64,
) -> Result<FluctuationRun> {
    let spec = spec.validated()?;
    cfg.validate()?;
    let e = cfg.exponents;
    let d = cfg.dim;
    let bias_corrected = e.p == 2.0 && e.theta == 1.0;
    let mut strong = Vec::new();
    let mut weak = Vec::new();
    for (si, &n) in cfg.sizes.iter().enumerate() {
        let lattice = Lattice::new(d, cfg.box_radius(n), Boundary::Periodic)?;
        let mu_n = cfg.mu / (n * n) as f64;
        let problem = ProblemSpec::new(mu_n)?;
        let f = sample_macro(lattice, &cfg.rhs, n, 1.0 / (n * n) as f64);
        let g = sample_macro(lattice, &cfg.test, n, 1.0);
        let size_seed = child_seed(master_seed, si as u64);
        let us = (0..cfg.n_samples)
            .into_par_iter()
            .map(|i| {
                let s = child_seed(size_seed, i as u64);
                let a = sample(&spec, &lattice, child_seed(s, seed::stream::FIELD))?;
                let op = LinearOperator::new(&a, mu_n)?;
                let mut u = vec![0.0; lattice.num_sites()];
                solve_into(&op, f.values(), &mut u, &problem)?;
                Ok(u)
            })
            .enumerate()
            .map(|(i, r): (usize, Result<Vec<f64>>)| r.map_err(|e| e.in_sample(i)))
            .collect::<Result<Vec<_>>>()?;

        let boot = child_seed(size_seed, u64::MAX - seed::stream::BOOTSTRAP);
        let m = cfg.n_samples as f64;
        let correction = if bias_corrected { (1.0 - 1.0 / m).powf(-0.5) } else { 1.0 };
        let exponent = 1.0 / (e.p * e.theta);
        let xs = strong_contributions(&us, n, d, e.p, e.theta);
        let stat = |v: &[f64]| correction * stats::mean(v).powf(exponent);
        let (lo, hi) = stats::bootstrap_ci(&xs, stat, cfg.bootstrap_resamples, 0.95, child_seed(boot, 0));
        let value = stat(&xs);
        let defl = log_deflation(mu_n);
        strong.push(SizeStatistic {
            n,
            mu_n,
            value,
            deflated: value / defl,
            ci_lo: lo,
            ci_hi: hi,
            samples: us.len(),
        });

        let ws = weak_contributions(&us, g.values(), n, d, e.theta);
        let wstat = |v: &[f64]| stats::mean(v).powf(1.0 / e.theta);
        let (lo, hi) = stats::bootstrap_ci(&ws, wstat, cfg.bootstrap_resamples, 0.95, child_seed(boot, 1));
        let value = wstat(&ws);
        weak.push(SizeStatistic {
            n,
            mu_n,
            value,
            deflated: value / defl,
            ci_lo: lo,
            ci_hi: hi,
            samples: us.len(),
        });
    }
    let build = |mode, sizes: Vec<SizeStatistic>| {
        let degenerate = sizes.iter().all(|s| s.value == 0.0);
        let (fit_raw, fit_deflated) = fit_slopes(&sizes);
        FluctuationResult {
            mode,
            dim: d,
            sizes,
            fit_raw,
            fit_deflated,
            degenerate,
            bias_corrected,
        }
    };
    Ok(FluctuationRun {
        strong: build(Mode::Strong, strong),
        weak: build(Mode::Weak, weak),
    })
}

fn require_sizes(cfg: &FluctuationConfig) -> Result<()> {
    if cfg.sizes.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "a scaling fit needs at least 3 sizes, got {}",
            cfg.sizes.len()
        )));
    }
    Ok(())
}

pub fn strong_fluctuation_experiment(
    spec: &EnsembleSpec,
    cfg: &FluctuationConfig,
    master_seed: u64,
) -> Result<FluctuationResult> {
    require_sizes(cfg)?;
    cfg.exponents.validate_strong(cfg.dim)?;
    Ok(fluctuation_experiment(spec, cfg, master_seed)?.strong)
}

pub fn weak_fluctuation_experiment(
    spec: &EnsembleSpec,
    cfg: &FluctuationConfig,
    master_seed: u64,
) -> Result<FluctuationResult> {
    require_sizes(cfg)?;
    cfg.exponents.validate_weak(cfg.dim)?;
    Ok(fluctuation_experiment(spec, cfg, master_seed)?.weak)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub strong_slope: Option<f64>,
    pub weak_slope: Option<f64>,
    /// `weak - strong`; `None` when either fit is undefined.
    pub gap: Option<f64>,
    pub expected: f64,
    pub degenerate: bool,
}

/// Difference of the weak and strong slopes; about `d/2 - 1`.
pub fn strong_vs_weak_gap(strong: &FluctuationResult, weak: &FluctuationResult) -> Result<GapReport> {
    let ns = |r: &FluctuationResult| r.sizes.iter().map(|s| s.n).collect::<Vec<_>>();
    if strong.dim != weak.dim || ns(strong) != ns(weak) {
        return Err(Error::Mismatch("strong and weak runs use different sizes".into()));
    }
    let s = strong.primary_slope();
    let w = weak.primary_slope();
    Ok(GapReport {
        strong_slope: s,
        weak_slope: w,
        gap: s.zip(w).map(|(s, w)| w - s),
        expected: strong.dim as f64 / 2.0 - 1.0,
        degenerate: strong.degenerate || weak.degenerate,
    })
}
