//! Oscillation of solution functionals under local coefficient changes, the
//! sensitivity kernel `K(x, z)` and the spectral-gap (variance by summed
//! squared oscillations) inequality.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{checkerboard_site_value, sample, CoefficientField, EdgeRef, EnsembleKind, EnsembleSpec};
use crate::error::{Error, Result};
use crate::green::{ball_rms_gradient, local_avg_gradient_from};
use crate::lattice::{Boundary, Lattice, Site, SiteField};
use crate::profile;
use crate::seed::{self, child_seed};
use crate::solver::{green_column, solve_into, LinearOperator, ProblemSpec};
use crate::stats;

/// Number of random patches in the standard candidate set.
pub const DEFAULT_RANDOM_PATCHES: usize = 6;

/// Admissible replacements of the conductances on the edges near `center`.
/// Candidate 0 is always the unperturbed patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    center: Site,
    radius: f64,
    edges: Vec<EdgeRef>,
    candidates: Vec<Vec<f64>>,
    lambda: f64,
}

impl PerturbationSet {
    /// The unperturbed patch only.
    pub fn unperturbed(a: &CoefficientField, center: Site, radius: f64) -> Result<Self> {
        let edges = a.edges_near(center, radius);
        if edges.is_empty() {
            return Err(Error::ProbeOutOfRange(format!(
                "no edges within {radius} of {:?}",
                center.0
            )));
        }
        let current = edges
            .iter()
            .map(|&e| a.edge_value(e).expect("edges_near returns box edges"))
            .collect();
        Ok(PerturbationSet {
            center,
            radius,
            edges,
            candidates: vec![current],
            lambda: a.lambda(),
        })
    }

    /// Unperturbed, all-lambda, all-one and `k_random` uniform patches.
    pub fn standard(
        a: &CoefficientField,
        center: Site,
        radius: f64,
        k_random: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut set = Self::unperturbed(a, center, radius)?;
        let m = set.edges.len();
        let lambda = a.lambda();
        set.push(vec![lambda; m])?;
        set.push(vec![1.0; m])?;
        let mut rng = seed::rng(seed);
        for _ in 0..k_random {
            set.push((0..m).map(|_| rng.random_range(lambda..=1.0)).collect())?;
        }
        Ok(set)
    }

    /// Adds a candidate patch.
    pub fn push(&mut self, patch: Vec<f64>) -> Result<()> {
        if patch.len() != self.edges.len() {
            return Err(Error::param("patch length differs from the edge count"));
        }
        if let Some(v) = patch.iter().find(|v| !(self.lambda..=1.0).contains(*v)) {
            return Err(Error::param(format!(
                "patch value {v} outside [{}, 1]",
                self.lambda
            )));
        }
        self.candidates.push(patch);
        Ok(())
    }

    pub fn center(&self) -> Site {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn edges(&self) -> &[EdgeRef] {
        &self.edges
    }

    pub fn candidates(&self) -> &[Vec<f64>] {
        &self.candidates
    }

    /// `op` (the operator of the unperturbed field) with candidate `k`
    /// written into the patch.
    pub fn operator(&self, op: &LinearOperator, k: usize) -> Result<LinearOperator> {
        let changes: Vec<_> = self
            .edges
            .iter()
            .zip(self.candidates[0].iter().zip(&self.candidates[k]))
            .map(|(&e, (&old, &new))| (e, old, new))
            .collect();
        op.patched(&changes)
    }

    /// `a` with candidate `k` written into the patch.
    pub fn apply(&self, a: &CoefficientField, k: usize) -> Result<CoefficientField> {
        let mut out = a.clone();
        for (&e, &v) in self.edges.iter().zip(&self.candidates[k]) {
            out.set_edge_value(e, v)?;
        }
        Ok(out)
    }
}

/// Solutions for every candidate of `pert`, warm-started from `u` (the
/// unperturbed solution for `op`, returned as entry 0).
pub fn candidate_solutions(
    op: &LinearOperator,
    f: &SiteField,
    u: &[f64],
    pert: &PerturbationSet,
    spec: &ProblemSpec,
) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![u.to_vec()];
    for k in 1..pert.candidates.len() {
        let mut v = u.to_vec();
        solve_into(&pert.operator(op, k)?, f.values(), &mut v, spec)?;
        out.push(v);
    }
    Ok(out)
}

/// Mean of `|u - v|` over `B_radius(x)`.
pub fn ball_mean_abs_diff(lattice: &Lattice, u: &[f64], v: &[f64], x: Site, radius: f64) -> Result<f64> {
    let ball = lattice.ball(x, radius)?;
    Ok(ball.iter().map(|&i| (u[i] - v[i]).abs()).sum::<f64>() / ball.len() as f64)
}

/// Lower bound on the oscillation of `u` near `x` under the patches of
/// `pert`: the largest ball mean of `|u - ũ|` over candidates.
pub fn oscillation(
    a: &CoefficientField,
    mu: f64,
    f: &SiteField,
    x: Site,
    ell: f64,
    pert: &PerturbationSet,
    spec: &ProblemSpec,
) -> Result<f64> {
    let op = LinearOperator::new(a, mu)?;
    let mut u = vec![0.0; a.lattice().num_sites()];
    solve_into(&op, f.values(), &mut u, spec)?;
    let sols = candidate_solutions(&op, f, &u, pert, spec)?;
    max_ball_diff(a.lattice(), &sols, x, ell)
}

fn max_ball_diff(lattice: &Lattice, sols: &[Vec<f64>], x: Site, ell: f64) -> Result<f64> {
    let mut best = 0.0f64;
    for v in &sols[1..] {
        best = best.max(ball_mean_abs_diff(lattice, &sols[0], v, x, ell)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `|x - z| <= 6 ell`
    Near,
    /// `|x - z| > 6 ell`
    Far,
}

pub fn branch_of(distance: f64, ell: f64) -> Branch {
    if distance > 6.0 * ell {
        Branch::Far
    } else {
        Branch::Near
    }
}

/// Solution data entering the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionData {
    pub sample: u64,
    /// `(∇u)_ell(z)`
    pub grad_u_ell: f64,
    /// `(∇u)_{9 ell}(z)`
    pub grad_u_9ell: f64,
    /// `‖f‖_{L²(B_{2 ell}(x))}`
    pub f_norm: f64,
}

/// Green-function data entering the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenData {
    pub sample: u64,
    /// `(∇G)_{2 ell}(x, z)`
    pub green_grad: f64,
}

/// `K(x, z)`: `(∇G)_{2ℓ}(x,z) (∇u)_ℓ(z)` beyond `6ℓ`, otherwise
/// `‖f‖_{L²(B_{2ℓ}(x))} + (∇u)_{9ℓ}(z)`.
pub fn kernel_k(
    x: Site,
    z: Site,
    ell: f64,
    u: &SolutionData,
    g: Option<&GreenData>,
) -> Result<(Branch, f64)> {
    let dist = x.minus(z).norm();
    match branch_of(dist, ell) {
        Branch::Near => Ok((Branch::Near, u.f_norm + u.grad_u_9ell)),
        Branch::Far => {
            let g = g.ok_or_else(|| Error::param("far branch needs Green data"))?;
            if g.sample != u.sample {
                return Err(Error::Mismatch(format!(
                    "Green data of sample {} combined with solution of sample {}",
                    g.sample, u.sample
                )));
            }
            Ok((Branch::Far, g.green_grad * u.grad_u_ell))
        }
    }
}

/// `(Σ_{B_r(x)} |f|²)^{1/2}`.
pub fn local_l2(f: &SiteField, x: Site, r: f64) -> Result<f64> {
    let ball = f.lattice().ball(x, r)?;
    Ok(ball.iter().map(|&i| f.values()[i].powi(2)).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    pub dim: usize,
    pub box_radius: usize,
    pub mu: f64,
    /// Bump source of this radius at the origin.
    pub source_radius: f64,
    pub pairs: Vec<(Site, Site)>,
    pub n: usize,
    #[serde(default = "default_random_patches")]
    pub random_patches: usize,
    #[serde(default = "default_ell")]
    pub ell: f64,
}

fn default_random_patches() -> usize {
    DEFAULT_RANDOM_PATCHES
}

fn default_ell() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRecord {
    pub sample: usize,
    pub x: Site,
    pub z: Site,
    pub distance: f64,
    pub branch: Branch,
    pub osc_lower: f64,
    pub kernel_value: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub records: Vec<SensitivityRecord>,
    pub median_ratio: f64,
    pub p99_ratio: f64,
    pub max_ratio: f64,
    pub near: usize,
    pub far: usize,
    /// Records with `|x - z|` within one of the `6 ell` threshold.
    pub near_threshold: usize,
}

impl SensitivityReport {
    /// `p99 / median`.
    pub fn spread(&self) -> f64 {
        self.p99_ratio / self.median_ratio
    }
}

/// Pairs with `z = ±z_distance e_k` on every axis and `x` further out on
/// the same ray, `|x - z|` running over `x_distances`.
pub fn axis_pair_design(dim: usize, z_distance: i64, x_distances: &[i64]) -> Vec<(Site, Site)> {
    let mut pairs = Vec::new();
    for axis in 0..dim {
        for sign in [1, -1] {
            let z = Site::on_axis(axis, sign * z_distance);
            for &d in x_distances {
                pairs.push((z.shifted(axis, sign * d), z));
            }
        }
    }
    pairs
}

/// Records `osc / K` for every pair and sample.
pub fn sensitivity_bound_experiment(
    spec: &EnsembleSpec,
    cfg: &SensitivityConfig,
    master_seed: u64,
) -> Result<SensitivityReport> {
    let spec = spec.validated()?;
    if cfg.pairs.is_empty() {
        return Err(Error::param("no (x, z) pairs"));
    }
    let ell = cfg.ell;
    let branches: Vec<Branch> = cfg
        .pairs
        .iter()
        .map(|(x, z)| branch_of(x.minus(*z).norm(), ell))
        .collect();
    if !(branches.contains(&Branch::Near) && branches.contains(&Branch::Far)) {
        return Err(Error::param("pairs must span both kernel branches"));
    }
    let lattice = Lattice::new(cfg.dim, cfg.box_radius, Boundary::Dirichlet)?;
    for &(x, z) in &cfg.pairs {
        lattice.ball(z, 9.0 * ell)?;
        lattice.ball(x, 2.0 * ell)?;
    }
    let problem = ProblemSpec::new(cfg.mu)?;
    let f = profile::bump(lattice, Site::ORIGIN, cfg.source_radius, 1.0);
    let mut zs: Vec<Site> = cfg.pairs.iter().map(|p| p.1).collect();
    zs.sort();
    zs.dedup();

    let per_sample = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let s = child_seed(master_seed, i as u64);
            sensitivity_sample(&spec, &lattice, &f, cfg, &zs, &problem, i, s)
                .map_err(|e| e.in_sample(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<SensitivityRecord> = per_sample.into_iter().flatten().collect();
    let ratios: Vec<f64> = records.iter().map(|r| r.ratio).collect();
    Ok(SensitivityReport {
        median_ratio: stats::median(&ratios),
        p99_ratio: stats::percentile(&ratios, 0.99),
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        near: records.iter().filter(|r| r.branch == Branch::Near).count(),
        far: records.iter().filter(|r| r.branch == Branch::Far).count(),
        near_threshold: records
            .iter()
            .filter(|r| (r.distance - 6.0 * ell).abs() <= 1.0)
            .count(),
        records,
    })
}

#[allow(clippy::too_many_arguments)]
fn sensitivity_sample(
    spec: &EnsembleSpec,
    lattice: &Lattice,
    f: &SiteField,
    cfg: &SensitivityConfig,
    zs: &[Site],
    problem: &ProblemSpec,
    index: usize,
    s: u64,
) -> Result<Vec<SensitivityRecord>> {
    let ell = cfg.ell;
    let a = sample(spec, lattice, child_seed(s, seed::stream::FIELD))?;
    let op = LinearOperator::new(&a, cfg.mu)?;
    let mut u = vec![0.0; lattice.num_sites()];
    solve_into(&op, f.values(), &mut u, problem)?;
    let u_field = SiteField::from_values(*lattice, u.clone())?;

    let mut records = Vec::new();
    for (zi, &z) in zs.iter().enumerate() {
        let pert = PerturbationSet::standard(
            &a,
            z,
            ell,
            cfg.random_patches,
            child_seed(child_seed(s, seed::stream::PATCHES), zi as u64),
        )?;
        let sols = candidate_solutions(&op, f, &u, &pert, problem)?;
        let pairs: Vec<Site> = cfg
            .pairs
            .iter()
            .filter(|p| p.1 == z)
            .map(|p| p.0)
            .collect();
        let needs_green = pairs
            .iter()
            .any(|x| branch_of(x.minus(z).norm(), ell) == Branch::Far);
        let g = if needs_green {
            Some(green_column(&op, z, problem)?)
        } else {
            None
        };
        for x in pairs {
            let osc = max_ball_diff(lattice, &sols, x, ell)?;
            let udata = SolutionData {
                sample: s,
                grad_u_ell: ball_rms_gradient(&u_field, z, ell)?,
                grad_u_9ell: ball_rms_gradient(&u_field, z, 9.0 * ell)?,
                f_norm: local_l2(f, x, 2.0 * ell)?,
            };
            let gdata = match &g {
                Some(g) if branch_of(x.minus(z).norm(), ell) == Branch::Far => Some(GreenData {
                    sample: s,
                    green_grad: local_avg_gradient_from(g, z, x, (2.0 * ell) as usize)?,
                }),
                _ => None,
            };
            let (branch, k) = kernel_k(x, z, ell, &udata, gdata.as_ref())?;
            if !(k > 0.0) {
                return Err(Error::param(format!(
                    "kernel vanishes at x = {:?}, z = {:?}",
                    x.0, z.0
                )));
            }
            records.push(SensitivityRecord {
                sample: index,
                x,
                z,
                distance: x.minus(z).norm(),
                branch,
                osc_lower: osc,
                kernel_value: k,
                ratio: osc / k,
            });
        }
    }
    Ok(records)
}

/// Functionals `ζ(A)` for the spectral-gap inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Functional {
    /// `u(x)` for the solution with the configured source.
    PointValue { x: Site },
    /// Mean of `u` over `B_radius(center)`.
    BallAverage { center: Site, radius: f64 },
    /// Conductance of one edge.
    EdgeConductance { edge: EdgeRef },
    /// Underlying checkerboard value of one site.
    SiteValue { site: Site },
}

impl Functional {
    fn needs_solution(&self) -> bool {
        matches!(self, Functional::PointValue { .. } | Functional::BallAverage { .. })
    }

    fn anchor(&self) -> [f64; 3] {
        match *self {
            Functional::PointValue { x } => x.0.map(|c| c as f64),
            Functional::BallAverage { center, .. } => center.0.map(|c| c as f64),
            Functional::EdgeConductance { edge } => edge.midpoint(),
            Functional::SiteValue { site } => site.0.map(|c| c as f64),
        }
    }
}

/// What is varied inside the ball around `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OscillationModel {
    /// Conductances of the edges within `ell` of `z` range over the
    /// standard candidate set.
    #[default]
    EdgePatch,
    /// The checkerboard value at site `z` ranges over `{lo, hi}`.
    SiteResample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralGapConfig {
    pub dim: usize,
    pub box_radius: usize,
    pub mu: f64,
    pub source_radius: f64,
    pub n: usize,
    /// Index of the first sample; disjoint batches use disjoint ranges.
    #[serde(default)]
    pub first_sample: u64,
    #[serde(default)]
    pub model: OscillationModel,
    #[serde(default = "default_random_patches")]
    pub random_patches: usize,
    #[serde(default = "default_ell")]
    pub ell: f64,
    /// Shell truncation threshold relative to the running sum.
    #[serde(default = "default_truncation")]
    pub truncation: f64,
}

fn default_truncation() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGapReport {
    pub functional: Functional,
    pub model: OscillationModel,
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub variance_se: f64,
    /// Sample mean of `Σ_z osc_z(ζ)²`.
    pub osc_sum: f64,
    pub osc_sum_se: f64,
    /// `variance / osc_sum`, zero when the variance vanishes.
    pub ratio: f64,
    pub ratio_se: f64,
    pub max_shell: usize,
    /// Set when some sample's shell sum hit the box before the truncation
    /// criterion.
    pub truncated_by_box: bool,
    /// Exact ratio where one is available.
    pub analytic: Option<f64>,
}

/// Exact `var ζ / <Σ osc²>` for a checkerboard functional under
/// [`OscillationModel::SiteResample`].
pub fn checkerboard_ratio(functional: &Functional, lo: f64, hi: f64, p: f64) -> Option<f64> {
    match functional {
        Functional::SiteValue { .. } => Some(p * (1.0 - p)),
        Functional::EdgeConductance { .. } => {
            let h = |a: f64, b: f64| 2.0 * a * b / (a + b);
            let states = [(lo, 1.0 - p), (hi, p)];
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for &(a, pa) in &states {
                for &(b, pb) in &states {
                    m1 += pa * pb * h(a, b);
                    m2 += pa * pb * h(a, b).powi(2);
                }
            }
            let var = m2 - m1 * m1;
            let osc2: f64 = states.iter().map(|&(b, pb)| pb * (h(hi, b) - h(lo, b)).powi(2)).sum();
            Some(if var == 0.0 { 0.0 } else { var / (2.0 * osc2) })
        }
        _ => None,
    }
}

struct SampleOsc {
    value: f64,
    osc_sum: f64,
    max_shell: usize,
    hit_box: bool,
}

/// Estimates `var ζ` and `<Σ_z osc_z(ζ)²>` over `cfg.n` samples and reports
/// their ratio.
pub fn spectral_gap_check(
    functional: Functional,
    spec: &EnsembleSpec,
    cfg: &SpectralGapConfig,
    master_seed: u64,
) -> Result<SpectralGapReport> {
    let spec = spec.validated()?;
    if cfg.n < 2 {
        return Err(Error::param("spectral gap check needs at least two samples"));
    }
    if matches!(functional, Functional::SiteValue { .. })
        && !(cfg.model == OscillationModel::SiteResample)
    {
        return Err(Error::param("site values only move under site resampling"));
    }
    if cfg.model == OscillationModel::SiteResample
        && !matches!(spec.kind, EnsembleKind::Checkerboard { .. } | EnsembleKind::Constant)
    {
        return Err(Error::param("site resampling requires a checkerboard ensemble"));
    }
    let lattice = Lattice::new(cfg.dim, cfg.box_radius, Boundary::Dirichlet)?;
    let problem = ProblemSpec::new(cfg.mu)?;
    let f = profile::bump(lattice, Site::ORIGIN, cfg.source_radius, 1.0);

    let samples = (0..cfg.n as u64)
        .into_par_iter()
        .map(|k| {
            let i = cfg.first_sample + k;
            let s = child_seed(master_seed, i);
            gap_sample(&functional, &spec, &lattice, &f, cfg, &problem, s)
                .map_err(|e| e.in_sample(i as usize))
        })
        .collect::<Result<Vec<_>>>()?;

    let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let sums: Vec<f64> = samples.iter().map(|s| s.osc_sum).collect();
    let n = values.len() as f64;
    let mean = stats::mean(&values);
    let variance = stats::variance(&values);
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let variance_se = ((m4 - variance * variance).max(0.0) / n).sqrt();
    let osc_sum = stats::mean(&sums);
    let osc_sum_se = (stats::variance(&sums) / n).sqrt();
    let (ratio, ratio_se) = if variance == 0.0 {
        (0.0, 0.0)
    } else {
        let r = variance / osc_sum;
        let rel = (variance_se / variance).powi(2) + (osc_sum_se / osc_sum).powi(2);
        (r, r * rel.sqrt())
    };
    let analytic = match (cfg.model, spec.kind) {
        (OscillationModel::SiteResample, EnsembleKind::Checkerboard { lo, hi, p_hi }) => {
            checkerboard_ratio(&functional, lo, hi, p_hi)
        }
        _ => None,
    };
    Ok(SpectralGapReport {
        functional,
        model: cfg.model,
        n: values.len(),
        mean,
        variance,
        variance_se,
        osc_sum,
        osc_sum_se,
        ratio,
        ratio_se,
        max_shell: samples.iter().map(|s| s.max_shell).max().unwrap_or(0),
        truncated_by_box: samples.iter().any(|s| s.hit_box),
        analytic,
    })
}

fn evaluate(functional: &Functional, a: &CoefficientField, u: Option<&SiteField>, site_value: impl Fn(Site) -> f64) -> Result<f64> {
    match *functional {
        Functional::PointValue { x } => {
            let u = u.expect("solution functional");
            u.lattice()
                .index(x)
                .map(|i| u.values()[i])
                .ok_or_else(|| Error::ProbeOutOfRange(format!("{:?} outside the box", x.0)))
        }
        Functional::BallAverage { center, radius } => {
            let u = u.expect("solution functional");
            let ball = u.lattice().ball(center, radius)?;
            Ok(ball.iter().map(|&i| u.values()[i]).sum::<f64>() / ball.len() as f64)
        }
        Functional::EdgeConductance { edge } => a
            .edge_value(edge)
            .ok_or_else(|| Error::ProbeOutOfRange(format!("edge {:?} outside the box", edge.site.0))),
        Functional::SiteValue { site } => Ok(site_value(site)),
    }
}

fn gap_sample(
    functional: &Functional,
    spec: &EnsembleSpec,
    lattice: &Lattice,
    f: &SiteField,
    cfg: &SpectralGapConfig,
    problem: &ProblemSpec,
    s: u64,
) -> Result<SampleOsc> {
    let field_seed = child_seed(s, seed::stream::FIELD);
    let a = sample(spec, lattice, field_seed)?;
    let (lo, hi, p_hi) = match spec.kind {
        EnsembleKind::Checkerboard { lo, hi, p_hi } => (lo, hi, p_hi),
        _ => (1.0, 1.0, 1.0),
    };
    let base_site = |site: Site| checkerboard_site_value(lattice, field_seed, lo, hi, p_hi, site);
    let solve_for = |field: &CoefficientField, guess: &[f64]| -> Result<SiteField> {
        let op = LinearOperator::new(field, cfg.mu)?;
        let mut v = guess.to_vec();
        solve_into(&op, f.values(), &mut v, problem)?;
        SiteField::from_values(*lattice, v)
    };
    let base_op = if functional.needs_solution() {
        Some(LinearOperator::new(&a, cfg.mu)?)
    } else {
        None
    };
    let u = match &base_op {
        Some(op) => {
            let mut v = vec![0.0; lattice.num_sites()];
            solve_into(op, f.values(), &mut v, problem)?;
            Some(SiteField::from_values(*lattice, v)?)
        }
        None => None,
    };
    let value = evaluate(functional, &a, u.as_ref(), base_site)?;

    // Oscillation caused by the ball around z.
    let osc_at = |z: Site, zi: u64| -> Result<f64> {
        let mut vals = vec![value];
        match cfg.model {
            OscillationModel::EdgePatch => {
                let pert = PerturbationSet::standard(
                    &a,
                    z,
                    cfg.ell,
                    cfg.random_patches,
                    child_seed(child_seed(s, seed::stream::PATCHES), zi),
                )?;
                if !functional.needs_solution() {
                    if let Functional::EdgeConductance { edge } = functional {
                        let canon = EdgeRef {
                            site: lattice.canonical(edge.site).unwrap_or(edge.site),
                            axis: edge.axis,
                        };
                        if !pert.edges().contains(&canon) {
                            return Ok(0.0);
                        }
                    }
                }
                for k in 1..pert.candidates().len() {
                    let ak = pert.apply(&a, k)?;
                    let uk = match (&u, &base_op) {
                        (Some(u), Some(op)) => {
                            let mut v = u.values().to_vec();
                            solve_into(&pert.operator(op, k)?, f.values(), &mut v, problem)?;
                            Some(SiteField::from_values(*lattice, v)?)
                        }
                        _ => None,
                    };
                    vals.push(evaluate(functional, &ak, uk.as_ref(), base_site)?);
                }
            }
            OscillationModel::SiteResample => {
                let zc = lattice.canonical(z).unwrap_or(z);
                for v in [lo, hi] {
                    let sv = |site: Site| {
                        if lattice.canonical(site).unwrap_or(site) == zc {
                            v
                        } else {
                            base_site(site)
                        }
                    };
                    let ak = CoefficientField::from_site_values(*lattice, spec.lambda, sv)?;
                    let uk = match &u {
                        Some(u) => Some(solve_for(&ak, u.values())?),
                        None => None,
                    };
                    vals.push(evaluate(functional, &ak, uk.as_ref(), sv)?);
                }
            }
        }
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(max - min)
    };

    // Shells k <= |z - anchor| < k + 1, in lexicographic order inside a shell.
    let anchor = functional.anchor();
    let mut by_shell: std::collections::BTreeMap<usize, Vec<Site>> = Default::default();
    for z in lattice.sites() {
        let d2: f64 = (0..3).map(|j| (z.0[j] as f64 - anchor[j]).powi(2)).sum();
        by_shell.entry(d2.sqrt().floor() as usize).or_default().push(z);
    }
    let reach = cfg.ell + 1.0;
    let mut total = 0.0;
    let mut zi = 0u64;
    let mut max_shell = 0;
    let mut hit_box = true;
    for (&shell, zs) in &by_shell {
        let mut contribution = 0.0;
        for &z in zs {
            zi += 1;
            if lattice.distance_to_boundary(z) < reach {
                continue;
            }
            let o = osc_at(z, zi)?;
            contribution += o * o;
        }
        total += contribution;
        max_shell = shell;
        if shell >= 1 && contribution <= cfg.truncation * total {
            hit_box = false;
            break;
        }
    }
    Ok(SampleOsc {
        value,
        osc_sum: total,
        max_shell,
        hit_box,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(radius: usize) -> CoefficientField {
        let l = Lattice::new(2, radius, Boundary::Dirichlet).unwrap();
        CoefficientField::constant(l, 1.0, 0.25).unwrap()
    }

    #[test]
    fn unperturbed_only_has_zero_oscillation() {
        let a = unit(8);
        let f = profile::bump(*a.lattice(), Site::ORIGIN, 2.0, 1.0);
        let spec = ProblemSpec::new(1.0).unwrap();
        let pert = PerturbationSet::unperturbed(&a, Site::new(&[2, 0]), 1.0).unwrap();
        let o = oscillation(&a, 1.0, &f, Site::new(&[4, 0]), 1.0, &pert, &spec).unwrap();
        assert_eq!(o, 0.0);
    }

    #[test]
    fn all_one_candidates_on_unit_field_give_zero() {
        let a = unit(8);
        let f = profile::bump(*a.lattice(), Site::ORIGIN, 2.0, 1.0);
        let spec = ProblemSpec::new(1.0).unwrap();
        let mut pert = PerturbationSet::unperturbed(&a, Site::new(&[2, 0]), 1.0).unwrap();
        let m = pert.edges().len();
        pert.push(vec![1.0; m]).unwrap();
        pert.push(vec![1.0; m]).unwrap();
        let o = oscillation(&a, 1.0, &f, Site::new(&[4, 0]), 1.0, &pert, &spec).unwrap();
        assert_eq!(o, 0.0);
    }

    #[test]
    fn standard_set_contents() {
        let a = unit(8);
        let pert = PerturbationSet::standard(&a, Site::ORIGIN, 1.0, 6, 3).unwrap();
        assert_eq!(pert.candidates().len(), 9);
        assert_eq!(pert.edges().len(), 4);
        assert!(pert.candidates()[1].iter().all(|&v| v == 0.25));
        assert!(pert.candidates()[2].iter().all(|&v| v == 1.0));
        for c in pert.candidates() {
            assert!(c.iter().all(|v| (0.25..=1.0).contains(v)));
        }
        let mut p = pert.clone();
        assert!(p.push(vec![0.1; 4]).is_err());
        assert!(p.push(vec![0.5; 3]).is_err());
    }

    #[test]
    fn kernel_branches() {
        let u = SolutionData {
            sample: 1,
            grad_u_ell: 2.0,
            grad_u_9ell: 0.5,
            f_norm: 0.25,
        };
        let g = GreenData {
            sample: 1,
            green_grad: 0.1,
        };
        let (b, k) = kernel_k(Site::new(&[3, 0]), Site::ORIGIN, 1.0, &u, Some(&g)).unwrap();
        assert_eq!((b, k), (Branch::Near, 0.75));
        let (b, k) = kernel_k(Site::new(&[7, 0]), Site::ORIGIN, 1.0, &u, Some(&g)).unwrap();
        assert_eq!(b, Branch::Far);
        assert_eq!(k, 0.1 * 2.0);
        assert_eq!(branch_of(6.0, 1.0), Branch::Near);
        let other = GreenData { sample: 2, ..g };
        assert!(kernel_k(Site::new(&[7, 0]), Site::ORIGIN, 1.0, &u, Some(&other)).is_err());
    }

    #[test]
    fn bernoulli_edge_ratio_is_below_site_ratio_for_contrast() {
        let e = Functional::EdgeConductance {
            edge: EdgeRef {
                site: Site::ORIGIN,
                axis: 0,
            },
        };
        let r = checkerboard_ratio(&e, 0.25, 1.0, 0.5).unwrap();
        assert!(r > 0.0 && r <= 0.25);
        assert_eq!(checkerboard_ratio(&e, 1.0, 1.0, 0.5), Some(0.0));
    }
}
