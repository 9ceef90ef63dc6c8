//! Lipschitz-in-the-large quotient and local boundedness.
//!
//! The quotient at `x` and scale `R` is
//!
//! ```text
//! mean_{x' in B_l} |u(x + x') - u(x')| / |x|
//! ------------------------------------------------------------------
//! R^-1 (mean_{B_2R} u²)^{1/2} + R^-1 (mean_{B_2R} |R² f|^p)^{1/p}
//! ```
//!
//! which is the smallest random constant making the large-scale Lipschitz
//! estimate hold for this `(u, f)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{sample, CoefficientField, EnsembleSpec};
use crate::error::{Error, Result};
use crate::lattice::{Boundary, Lattice, Site, SiteField};
use crate::profile::bump;
use crate::seed::{self, child_seed};
use crate::solver::{solve_into, LinearOperator, ProblemSpec};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzRecord {
    pub r: usize,
    pub x: Site,
    pub numerator: f64,
    pub denominator: f64,
    pub quotient: f64,
}

fn ball_mean(u: &[f64], lattice: &Lattice, center: Site, radius: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
    let idx = lattice.ball(center, radius)?;
    Ok(idx.iter().map(|&i| g(u[i])).sum::<f64>() / idx.len() as f64)
}

fn check_probe(lattice: &Lattice, r: usize, x: Site, p: f64, ell: usize) -> Result<()> {
    let d = lattice.dim();
    if !(p > d as f64) {
        return Err(Error::param(format!("p = {p} must exceed the dimension {d}")));
    }
    if r < 2 * ell {
        return Err(Error::param(format!("R = {r} is below 2l = {}", 2 * ell)));
    }
    let nx = x.norm();
    if nx <= 2.0 * ell as f64 || nx > r as f64 {
        return Err(Error::ProbeOutOfRange(format!(
            "|x| = {nx} must lie in (2l, R] = ({}, {r}]",
            2 * ell
        )));
    }
    if lattice.radius() < 2 * r {
        return Err(Error::ProbeOutOfRange(format!(
            "box radius {} cannot hold B_2R with R = {r}",
            lattice.radius()
        )));
    }
    Ok(())
}

/// Quotient for a given solution `u` of the equation with right-hand side `f`.
pub fn lipschitz_quotient_from(
    u: &SiteField,
    f: &SiteField,
    r: usize,
    x: Site,
    p: f64,
    ell: usize,
) -> Result<LipschitzRecord> {
    let lat = *u.lattice();
    if f.lattice() != &lat {
        return Err(Error::LatticeMismatch);
    }
    check_probe(&lat, r, x, p, ell)?;
    let nx = x.norm();
    let mut num = 0.0;
    let offsets = lat.ball_offsets(ell as f64);
    for &o in &offsets {
        let a = lat.index(x.offset(o)).ok_or_else(|| Error::ProbeOutOfRange(format!("{:?}", x.offset(o))))?;
        let b = lat.index(o).ok_or_else(|| Error::ProbeOutOfRange(format!("{o:?}")))?;
        num += (u.values()[a] - u.values()[b]).abs();
    }
    let numerator = num / (offsets.len() as f64 * nx);
    let rf = r as f64;
    let two_r = 2.0 * rf;
    let l2 = ball_mean(u.values(), &lat, Site::ORIGIN, two_r, |v| v * v)?.sqrt();
    let fp = ball_mean(f.values(), &lat, Site::ORIGIN, two_r, |v| (rf * rf * v).abs().powf(p))?.powf(1.0 / p);
    let denominator = (l2 + fp) / rf;
    let quotient = if numerator == 0.0 { 0.0 } else { numerator / denominator };
    Ok(LipschitzRecord {
        r,
        x,
        numerator,
        denominator,
        quotient,
    })
}

/// Solves `mu u - div(A grad u) = f` on the field's box and evaluates the
/// quotient at `x`.
#[allow(clippy::too_many_arguments)]
pub fn lipschitz_quotient(
    a: &CoefficientField,
    mu: f64,
    f: &SiteField,
    r: usize,
    x: Site,
    p: f64,
    ell: usize,
    spec: &ProblemSpec,
) -> Result<LipschitzRecord> {
    check_probe(a.lattice(), r, x, p, ell)?;
    let op = LinearOperator::new(a, mu)?;
    let u = crate::solver::solve(&op, f, spec)?;
    lipschitz_quotient_from(&u, f, r, x, p, ell)
}

/// Right-hand sides over which each sample's quotient is maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Bump of radius `R/2` at the origin.
    BumpOrigin,
    /// Bump of radius `R/4` centered at the probe.
    BumpNearProbe,
    /// `sin(2 pi x_1 / R)` under a bump of radius `2R`.
    Oscillatory,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::BumpOrigin, SourceKind::BumpNearProbe, SourceKind::Oscillatory];

    fn field(self, lattice: Lattice, r: usize, probe: Site) -> SiteField {
        let rf = r as f64;
        match self {
            SourceKind::BumpOrigin => bump(lattice, Site::ORIGIN, rf / 2.0, 1.0),
            SourceKind::BumpNearProbe => bump(lattice, probe, (rf / 4.0).max(2.0), 1.0),
            SourceKind::Oscillatory => {
                let env = bump(lattice, Site::ORIGIN, 2.0 * rf, 1.0);
                SiteField::from_fn(lattice, |s| {
                    let x1 = lattice.displacement(Site::ORIGIN, s).0[0] as f64;
                    (2.0 * std::f64::consts::PI * x1 / rf).sin() * env.at(s)
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub dim: usize,
    pub r_list: Vec<usize>,
    /// Probe distances as fractions of `R`, clamped to at least `2l + 1`.
    #[serde(default = "default_fractions")]
    pub probe_fractions: Vec<f64>,
    #[serde(default = "default_family")]
    pub family: Vec<SourceKind>,
    pub q_list: Vec<f64>,
    pub n_samples: usize,
    /// Integrability of `f` in the denominator; must exceed `dim`.
    pub p: f64,
    /// `mu = mu_factor / R²`.
    #[serde(default = "default_mu_factor")]
    pub mu_factor: f64,
    /// Periodic box radius `ceil(box_factor * R)`.
    #[serde(default = "default_box_factor")]
    pub box_factor: f64,
    #[serde(default = "default_ell")]
    pub ell: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

fn default_family() -> Vec<SourceKind> {
    SourceKind::ALL.to_vec()
}

fn default_mu_factor() -> f64 {
    0.25
}

fn default_box_factor() -> f64 {
    2.5
}

fn default_ell() -> usize {
    1
}

fn default_tolerance() -> f64 {
    1e-10
}

impl ScanConfig {
    pub fn new(dim: usize, r_list: Vec<usize>, q_list: Vec<f64>, n_samples: usize) -> Self {
        ScanConfig {
            dim,
            r_list,
            probe_fractions: default_fractions(),
            family: default_family(),
            q_list,
            n_samples,
            p: dim as f64 + 1.0,
            mu_factor: default_mu_factor(),
            box_factor: default_box_factor(),
            ell: default_ell(),
            tolerance: default_tolerance(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::param("dim must be 2 or 3"));
        }
        if self.r_list.is_empty() || self.r_list.iter().any(|&r| r <= 2 * self.ell) {
            return Err(Error::param("every R must exceed 2l"));
        }
        if self.family.is_empty() || self.probe_fractions.is_empty() || self.q_list.is_empty() {
            return Err(Error::param("family, probes and q list must be non-empty"));
        }
        if self.probe_fractions.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::param("probe fractions must lie in (0, 1]"));
        }
        if self.q_list.iter().any(|&q| !(q >= 1.0)) {
            return Err(Error::param("moment orders must be at least 1"));
        }
        if !(self.box_factor >= 2.0) {
            return Err(Error::param("box_factor must be at least 2"));
        }
        if !(self.p > self.dim as f64) {
            return Err(Error::param(format!("p = {} must exceed the dimension", self.p)));
        }
        if self.n_samples == 0 {
            return Err(Error::param("need at least one sample"));
        }
        Ok(())
    }

    /// Probe distance for fraction `t` at scale `r`.
    pub fn probe_distance(&self, r: usize, t: f64) -> i64 {
        ((t * r as f64).round() as i64).max(2 * self.ell as i64 + 1).min(r as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub r: usize,
    pub fraction: f64,
    pub x: Site,
    pub mu: f64,
    /// `(q, <Y^q>^{1/q})`.
    pub moments: Vec<(f64, f64)>,
    /// Per-sample maximal quotient, in sample order.
    pub quotients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flatness {
    pub fraction: f64,
    pub q: f64,
    /// Largest over smallest moment across `R`.
    pub max_over_min: f64,
    /// Moment at the largest `R` over the moment at the smallest.
    pub last_over_first: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub cells: Vec<ScanCell>,
    pub flatness: Vec<Flatness>,
    /// Maximizing records, one per (R, probe, sample).
    pub records: Vec<LipschitzRecord>,
}

impl ScanReport {
    pub fn flatness_for(&self, fraction: f64, q: f64) -> Option<&Flatness> {
        self.flatness.iter().find(|f| f.fraction == fraction && f.q == q)
    }

    /// Worst `last_over_first` over all probe classes at order `q`.
    pub fn worst_growth(&self, q: f64) -> Option<f64> {
        self.flatness
            .iter()
            .filter(|f| f.q == q)
            .map(|f| f.last_over_first)
            .max_by(|a, b| a.total_cmp(b))
    }
}

/// Moments of the maximal quotient over the source family, per scale and
/// probe class.
pub fn moment_boundedness_scan(spec: &EnsembleSpec, cfg: &ScanConfig, master_seed: u64) -> Result<ScanReport> {
    let spec = spec.validated()?;
    cfg.validate()?;
    let mut cells = Vec::new();
    let mut records = Vec::new();
    for &r in &cfg.r_list {
        let lattice = Lattice::new(cfg.dim, (cfg.box_factor * r as f64).ceil() as usize, Boundary::Periodic)?;
        let mu = cfg.mu_factor / (r * r) as f64;
        let problem = ProblemSpec::new(mu)?.with_tolerance(cfg.tolerance)?;
        let probes: Vec<Site> = cfg
            .probe_fractions
            .iter()
            .map(|&t| Site::on_axis(0, cfg.probe_distance(r, t)))
            .collect();
        // Sources that do not depend on the probe are solved once per sample.
        let shared: Vec<(SourceKind, SiteField)> = cfg
            .family
            .iter()
            .filter(|k| **k != SourceKind::BumpNearProbe)
            .map(|&k| (k, k.field(lattice, r, Site::ORIGIN)))
            .collect();
        let near: Vec<SiteField> = if cfg.family.contains(&SourceKind::BumpNearProbe) {
            probes.iter().map(|&x| SourceKind::BumpNearProbe.field(lattice, r, x)).collect()
        } else {
            Vec::new()
        };
        let per_sample: Vec<Vec<LipschitzRecord>> = (0..cfg.n_samples)
            .into_par_iter()
            .map(|i| {
                let s = child_seed(child_seed(master_seed, r as u64), i as u64);
                let a = sample(&spec, &lattice, child_seed(s, seed::stream::FIELD))?;
                let op = LinearOperator::new(&a, mu)?;
                let solve = |f: &SiteField| -> Result<SiteField> {
                    let mut u = vec![0.0; lattice.num_sites()];
                    solve_into(&op, f.values(), &mut u, &problem)?;
                    SiteField::from_values(lattice, u)
                };
                let shared_u = shared.iter().map(|(_, f)| solve(f)).collect::<Result<Vec<_>>>()?;
                let mut best = Vec::with_capacity(probes.len());
                for (pi, &x) in probes.iter().enumerate() {
                    let mut top: Option<LipschitzRecord> = None;
                    let mut consider = |rec: LipschitzRecord| {
                        if top.as_ref().is_none_or(|t| rec.quotient > t.quotient) {
                            top = Some(rec);
                        }
                    };
                    for ((_, f), u) in shared.iter().zip(&shared_u) {
                        consider(lipschitz_quotient_from(u, f, r, x, cfg.p, cfg.ell)?);
                    }
                    if let Some(f) = near.get(pi) {
                        let u = solve(f)?;
                        consider(lipschitz_quotient_from(&u, f, r, x, cfg.p, cfg.ell)?);
                    }
                    best.push(top.expect("non-empty family"));
                }
                Ok(best)
            })
            .enumerate()
            .map(|(i, res): (usize, Result<_>)| res.map_err(|e| e.in_sample(i)))
            .collect::<Result<_>>()?;
        for (pi, (&t, &x)) in cfg.probe_fractions.iter().zip(&probes).enumerate() {
            let quotients: Vec<f64> = per_sample.iter().map(|v| v[pi].quotient).collect();
            let moments = cfg.q_list.iter().map(|&q| (q, stats::moment(&quotients, q))).collect();
            cells.push(ScanCell {
                r,
                fraction: t,
                x,
                mu,
                moments,
                quotients,
            });
        }
        records.extend(per_sample.into_iter().flatten());
    }
    let mut flatness = Vec::new();
    for &t in &cfg.probe_fractions {
        for (qi, &q) in cfg.q_list.iter().enumerate() {
            let ms: Vec<f64> = cells.iter().filter(|c| c.fraction == t).map(|c| c.moments[qi].1).collect();
            let max = ms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = ms.iter().cloned().fold(f64::INFINITY, f64::min);
            flatness.push(Flatness {
                fraction: t,
                q,
                max_over_min: max / min,
                last_over_first: ms[ms.len() - 1] / ms[0],
            });
        }
    }
    Ok(ScanReport {
        cells,
        flatness,
        records,
    })
}

/// `p = None` stands for the supremum norm.
fn check_exponents(dim: usize, q: f64, p: Option<f64>) -> Result<()> {
    let inv_p = p.map_or(0.0, |p| 1.0 / p);
    if !(q >= 1.0) || p.is_some_and(|p| !(p >= 1.0)) {
        return Err(Error::param("exponents must be at least 1"));
    }
    if !(1.0 / q < inv_p + 2.0 / dim as f64) {
        return Err(Error::param(format!(
            "exponents violate 1/q < 1/p + 2/d (q = {q}, p = {}, d = {dim})",
            p.map_or("inf".to_string(), |p| p.to_string())
        )));
    }
    Ok(())
}

/// Smallest `C` with `|u|_{p, B_s} <= C (|u|_{2, B_2s} + |f|_{q, B_2s})`,
/// all norms volume-averaged.
pub fn local_boundedness_constant(
    u: &SiteField,
    f: &SiteField,
    center: Site,
    scale: f64,
    q: f64,
    p: Option<f64>,
) -> Result<f64> {
    let lat = *u.lattice();
    check_exponents(lat.dim(), q, p)?;
    let inner = lat.ball(center, scale)?;
    let lhs = match p {
        None => inner.iter().map(|&i| u.values()[i].abs()).fold(0.0, f64::max),
        Some(p) => ball_mean(u.values(), &lat, center, scale, |v| v.abs().powf(p))?.powf(1.0 / p),
    };
    let l2 = ball_mean(u.values(), &lat, center, 2.0 * scale, |v| v * v)?.sqrt();
    let fq = ball_mean(f.values(), &lat, center, 2.0 * scale, |v| v.abs().powf(q))?.powf(1.0 / q);
    let rhs = l2 + fq;
    if rhs == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs / rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalBoundednessConfig {
    pub dim: usize,
    pub scale: usize,
    pub mu: f64,
    pub q: f64,
    /// `None` is the supremum.
    #[serde(default)]
    pub p: Option<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBoundednessReport {
    pub constants: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl LocalBoundednessReport {
    pub fn spread(&self) -> f64 {
        self.max / self.min
    }
}

/// Fitted constants across samples for solutions that are `mu`-harmonic in
/// `B_2s`: the source is a bump centered at `3s e_1`, outside the ball.
pub fn local_boundedness_check(
    spec: &EnsembleSpec,
    cfg: &LocalBoundednessConfig,
    master_seed: u64,
) -> Result<LocalBoundednessReport> {
    let spec = spec.validated()?;
    check_exponents(cfg.dim, cfg.q, cfg.p)?;
    if cfg.scale < 1 || cfg.n_samples == 0 {
        return Err(Error::param("scale and sample count must be positive"));
    }
    let s = cfg.scale;
    let lattice = Lattice::new(cfg.dim, 5 * s, Boundary::Dirichlet)?;
    let problem = ProblemSpec::new(cfg.mu)?;
    let f = bump(lattice, Site::on_axis(0, 3 * s as i64), s as f64 / 2.0, 1.0);
    let constants = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let a = sample(&spec, &lattice, child_seed(child_seed(master_seed, i as u64), seed::stream::FIELD))?;
            let op = LinearOperator::new(&a, cfg.mu)?;
            let u = crate::solver::solve(&op, &f, &problem)?;
            local_boundedness_constant(&u, &f, Site::ORIGIN, s as f64, cfg.q, cfg.p)
        })
        .enumerate()
        .map(|(i, r): (usize, Result<f64>)| r.map_err(|e| e.in_sample(i)))
        .collect::<Result<Vec<_>>>()?;
    let min = constants.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = constants.iter().cloned().fold(0.0, f64::max);
    Ok(LocalBoundednessReport { constants, min, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant_setup(r: usize) -> (CoefficientField, f64, SiteField) {
        let l = Lattice::new(2, 2 * r + 2, Boundary::Dirichlet).unwrap();
        let a = CoefficientField::constant(l, 1.0, 1.0).unwrap();
        let f = bump(l, Site::ORIGIN, 3.0, 1.0);
        (a, 0.25 / (r * r) as f64, f)
    }

    #[test]
    fn constant_solution_has_zero_quotient() {
        let l = Lattice::new(2, 12, Boundary::Periodic).unwrap();
        let a = CoefficientField::constant(l, 1.0, 1.0).unwrap();
        let mu = 0.1;
        let f = SiteField::from_fn(l, |_| mu * 2.5);
        let rec = lipschitz_quotient(&a, mu, &f, 6, Site::new(&[4, 0]), 3.0, 1, &ProblemSpec::new(mu).unwrap()).unwrap();
        assert!(rec.quotient.abs() < 1e-8);
        assert!(rec.denominator > 0.0);
    }

    #[test]
    fn probe_preconditions() {
        let (a, mu, f) = constant_setup(8);
        let spec = ProblemSpec::new(mu).unwrap();
        let q = |x: Site, p: f64| lipschitz_quotient(&a, mu, &f, 8, x, p, 1, &spec);
        assert!(matches!(q(Site::new(&[1, 0]), 3.0), Err(Error::ProbeOutOfRange(_))));
        assert!(matches!(q(Site::new(&[9, 0]), 3.0), Err(Error::ProbeOutOfRange(_))));
        assert!(matches!(q(Site::new(&[4, 0]), 2.0), Err(Error::InvalidParameter(_))));
        assert!(q(Site::new(&[4, 0]), 3.0).is_ok());
    }

    #[test]
    fn symmetric_probes_agree_for_constant_field() {
        let (a, mu, f) = constant_setup(16);
        let spec = ProblemSpec::new(mu).unwrap();
        let op = LinearOperator::new(&a, mu).unwrap();
        let u = crate::solver::solve(&op, &f, &spec).unwrap();
        let vals: Vec<f64> = [[8, 0], [0, 8], [-8, 0], [0, -8]]
            .iter()
            .map(|c| lipschitz_quotient_from(&u, &f, 16, Site::new(c), 3.0, 1).unwrap().quotient)
            .collect();
        let max = vals.iter().cloned().fold(0.0, f64::max);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 1.05, "{vals:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn quotient_is_homogeneous_and_sign_symmetric(
            vals in proptest::collection::vec(-1.0f64..1.0, 289),
            fv in proptest::collection::vec(-1.0f64..1.0, 289),
            s in 0.01f64..100.0,
        ) {
            let l = Lattice::new(2, 8, Boundary::Periodic).unwrap();
            let u = SiteField::from_values(l, vals.clone()).unwrap();
            let f = SiteField::from_values(l, fv.clone()).unwrap();
            let x = Site::new(&[3, 1]);
            let base = lipschitz_quotient_from(&u, &f, 4, x, 3.0, 1).unwrap().quotient;
            let us = SiteField::from_values(l, vals.iter().map(|v| v * s).collect()).unwrap();
            let fs = SiteField::from_values(l, fv.iter().map(|v| v * s).collect()).unwrap();
            let scaled = lipschitz_quotient_from(&us, &fs, 4, x, 3.0, 1).unwrap().quotient;
            prop_assert!((scaled - base).abs() <= 1e-12 * base.abs().max(1.0));
            let fneg = SiteField::from_values(l, fv.iter().map(|v| -v).collect()).unwrap();
            let flipped = lipschitz_quotient_from(&u, &fneg, 4, x, 3.0, 1).unwrap().quotient;
            prop_assert_eq!(flipped, base);
        }
    }

    #[test]
    fn constant_ensemble_scan_is_deterministic() {
        let mut cfg = ScanConfig::new(2, vec![4, 8], vec![1.0, 2.0], 3);
        cfg.probe_fractions = vec![1.0];
        let rep = moment_boundedness_scan(&EnsembleSpec::constant(), &cfg, 5).unwrap();
        for c in &rep.cells {
            assert!(c.quotients.iter().all(|&v| v == c.quotients[0]));
        }
        assert_eq!(rep.cells.len(), 2);
        assert!(rep.flatness.iter().all(|f| f.max_over_min.is_finite()));
    }

    #[test]
    fn scan_probe_clamping() {
        let cfg = ScanConfig::new(2, vec![8], vec![2.0], 1);
        assert_eq!(cfg.probe_distance(8, 0.25), 3);
        assert_eq!(cfg.probe_distance(64, 0.25), 16);
        assert_eq!(cfg.probe_distance(8, 1.0), 8);
    }

    #[test]
    fn local_boundedness_constant_of_constant_solution() {
        let l = Lattice::new(2, 10, Boundary::Periodic).unwrap();
        let mu = 0.5;
        let u = SiteField::from_fn(l, |_| 3.0);
        let f = SiteField::from_fn(l, |_| mu * 3.0);
        let c = local_boundedness_constant(&u, &f, Site::ORIGIN, 2.0, 2.0, None).unwrap();
        assert!((c - 3.0 / 4.5).abs() < 1e-14);
    }

    #[test]
    fn local_boundedness_exponents() {
        assert!(check_exponents(3, 1.5, None).is_err());
        assert!(check_exponents(3, 1.6, None).is_ok());
        assert!(check_exponents(2, 1.01, None).is_ok());
        let cfg = LocalBoundednessConfig {
            dim: 3,
            scale: 2,
            mu: 0.1,
            q: 1.2,
            p: None,
            n_samples: 2,
        };
        assert!(local_boundedness_check(&EnsembleSpec::constant(), &cfg, 1).is_err());
    }

    #[test]
    fn harmonic_local_boundedness_is_stable() {
        let spec = EnsembleSpec::checkerboard(0.25, 0.25, 1.0, 0.5).unwrap();
        let cfg = LocalBoundednessConfig {
            dim: 2,
            scale: 6,
            mu: 0.25 / 36.0,
            q: 2.0,
            p: None,
            n_samples: 20,
        };
        let rep = local_boundedness_check(&spec, &cfg, 3).unwrap();
        assert!(rep.spread() < 2.0, "{rep:?}");
    }
}
