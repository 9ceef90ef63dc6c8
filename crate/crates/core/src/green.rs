//! Green-function probes: local square averages of the first gradient
//! `(∇G)_L(x, y)` and of the mixed second gradient `(∇∇G)_L(x, y)`, plus
//! fitted pointwise and annulus-averaged decay bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::CoefficientField;
use crate::error::{Error, Result};
use crate::lattice::{Lattice, Site, SiteField};
use crate::solver::{green_column, LinearOperator, ProblemSpec};
use crate::stats;

/// Averaging radius used throughout (the correlation length).
pub const DEFAULT_L: usize = 1;

fn check_separation(x: Site, y: Site, l: usize, lattice: &Lattice) -> Result<()> {
    let r = lattice.distance(x, y);
    if r < 3.0 * l as f64 {
        return Err(Error::ProbeOutOfRange(format!(
            "{:?} is within 3L = {} of {:?}",
            x.0,
            3 * l,
            y.0
        )));
    }
    Ok(())
}

/// `(∇G)_L(x, source)`: root mean over `B_L(x)` of `|∇G|²`, where `g` is the
/// column `G(., source)`.
pub fn local_avg_gradient_from(g: &SiteField, source: Site, x: Site, l: usize) -> Result<f64> {
    let lat = g.lattice();
    check_separation(x, source, l, lat)?;
    ball_rms_gradient(g, x, l as f64)
}

/// `(∇G)_L(x, 0)` for the column `G(., 0)`.
pub fn local_avg_gradient(g: &SiteField, x: Site, l: usize) -> Result<f64> {
    local_avg_gradient_from(g, Site::ORIGIN, x, l)
}

/// Root mean of `|∇u|²` over the sites of `B_radius(center)`; no
/// separation requirement.
pub fn ball_rms_gradient(u: &SiteField, center: Site, radius: f64) -> Result<f64> {
    let ball = u.lattice().ball(center, radius)?;
    let sum: f64 = ball.iter().map(|&i| u.gradient_sq_at(i)).sum();
    Ok((sum / ball.len() as f64).sqrt())
}

/// Edges `(a, b)` (site indices, `b = a + e_k`) with both endpoints in the
/// ball `B_radius(center)`. At radius 1 these are the `2 dim` edges at the
/// center.
pub fn ball_edges(lattice: &Lattice, center: Site, radius: f64) -> Result<Vec<(usize, usize)>> {
    let offsets = lattice.ball_offsets(radius);
    let mut out = Vec::new();
    for &o in &offsets {
        for k in 0..lattice.dim() {
            let head = o.shifted(k, 1);
            if offsets.contains(&head) {
                let idx = |s: Site| {
                    lattice.index(center.offset(s)).ok_or_else(|| {
                        Error::ProbeOutOfRange(format!(
                            "ball of radius {radius} around {:?} leaves the box",
                            center.0
                        ))
                    })
                };
                out.push((idx(o)?, idx(head)?));
            }
        }
    }
    Ok(out)
}

/// Green columns `G(., y')` for every `y'` in `B_L(center)`.
#[derive(Debug, Clone)]
pub struct GreenColumns {
    center: Site,
    l: usize,
    sources: Vec<Site>,
    columns: Vec<SiteField>,
}

impl GreenColumns {
    /// Solves one column per ball site, in parallel.
    pub fn compute(op: &LinearOperator, center: Site, l: usize, spec: &ProblemSpec) -> Result<Self> {
        let lat = *op.lattice();
        lat.ball(center, l as f64)?;
        let sources: Vec<Site> = lat
            .ball_offsets(l as f64)
            .into_iter()
            .map(|o| center.offset(o))
            .collect();
        let columns = sources
            .par_iter()
            .map(|&y| green_column(op, y, spec))
            .collect::<Result<Vec<_>>>()?;
        Ok(GreenColumns {
            center,
            l,
            sources,
            columns,
        })
    }

    /// Number of linear solves spent.
    pub fn solves(&self) -> usize {
        self.columns.len()
    }

    pub fn center(&self) -> Site {
        self.center
    }

    pub fn column(&self, source: Site) -> Option<&SiteField> {
        self.sources
            .iter()
            .position(|&s| s == source)
            .map(|i| &self.columns[i])
    }

    /// The column sourced at the center of the ball.
    pub fn center_column(&self) -> &SiteField {
        self.column(self.center).expect("center is a ball site")
    }

    /// `(∇∇G)_L(x, center)`: root mean square of the double differences
    /// over edge pairs inside `B_L(x)` and `B_L(center)`, normalized per
    /// site pair.
    pub fn mixed_avg(&self, x: Site) -> Result<f64> {
        let lat = *self.columns[0].lattice();
        check_separation(x, self.center, self.l, &lat)?;
        let d = lat.dim() as f64;
        let r = self.l as f64;
        let x_edges = ball_edges(&lat, x, r)?;
        let y_edges = ball_edges(&lat, self.center, r)?;
        let col = |i: usize| {
            let s = lat.site(i);
            self.column(s).expect("ball edge endpoints are sources")
        };
        let mut acc = 0.0;
        for &(c, e) in &y_edges {
            let (gc, ge) = (col(c).values(), col(e).values());
            for &(a, b) in &x_edges {
                let dd = ge[b] - ge[a] - gc[b] + gc[a];
                acc += dd * dd;
            }
        }
        let norm = (x_edges.len() as f64 / d) * (y_edges.len() as f64 / d);
        Ok((acc / norm).sqrt())
    }
}

/// Result of [`mixed_second_gradient`], with solve-count accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedGradient {
    pub value: f64,
    pub solves: usize,
}

/// `(∇∇G_mu)_L(x, 0)` for the field `a`, computing the `|B_L(0)|` columns
/// it needs.
pub fn mixed_second_gradient(
    a: &CoefficientField,
    mu: f64,
    x: Site,
    l: usize,
    spec: &ProblemSpec,
) -> Result<MixedGradient> {
    check_separation(x, Site::ORIGIN, l, a.lattice())?;
    let op = LinearOperator::new(a, mu)?;
    let cols = GreenColumns::compute(&op, Site::ORIGIN, l, spec)?;
    Ok(MixedGradient {
        value: cols.mixed_avg(x)?,
        solves: cols.solves(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub x: Site,
    pub radius: f64,
    pub g_value: f64,
    pub grad_avg: f64,
    pub mixed_avg: f64,
}

/// Root-mean-square gradient over the annulus `R <= |x| < 2R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusEntry {
    pub radius: f64,
    pub grad_rms: f64,
}

/// Probes of one Green function `G_mu(., 0; A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenProbe {
    pub seed: u64,
    pub mu: f64,
    pub dim: usize,
    pub l: usize,
    pub entries: Vec<ProbeEntry>,
    pub annuli: Vec<AnnulusEntry>,
    /// Smallest value of the column; negative values beyond the solver
    /// tolerance indicate a broken solve.
    pub min_value: f64,
    pub solves: usize,
}

impl GreenProbe {
    /// Solves the `|B_L(0)|` columns of `a` and evaluates every probe.
    /// `annulus_radii` may be empty.
    pub fn compute(
        a: &CoefficientField,
        seed: u64,
        mu: f64,
        probes: &[Site],
        annulus_radii: &[f64],
        l: usize,
        spec: &ProblemSpec,
    ) -> Result<Self> {
        let lat = *a.lattice();
        for &x in probes {
            check_separation(x, Site::ORIGIN, l, &lat)?;
            lat.ball(x, l as f64)?;
        }
        let op = LinearOperator::new(a, mu)?;
        let cols = GreenColumns::compute(&op, Site::ORIGIN, l, spec)?;
        let g = cols.center_column();
        let entries = probes
            .iter()
            .map(|&x| {
                Ok(ProbeEntry {
                    x,
                    radius: x.norm(),
                    g_value: g.at(x),
                    grad_avg: local_avg_gradient(g, x, l)?,
                    mixed_avg: cols.mixed_avg(x)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let annuli = annulus_radii
            .iter()
            .map(|&r| {
                let sites = lat.annulus(Site::ORIGIN, r, 2.0 * r);
                if sites.is_empty() {
                    return Err(Error::ProbeOutOfRange(format!("annulus at {r} is empty")));
                }
                let s: f64 = sites.iter().map(|&i| g.gradient_sq_at(i)).sum();
                Ok(AnnulusEntry {
                    radius: r,
                    grad_rms: (s / sites.len() as f64).sqrt(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let min_value = g.values().iter().copied().fold(f64::INFINITY, f64::min);
        Ok(GreenProbe {
            seed,
            mu,
            dim: lat.dim(),
            l,
            entries,
            annuli,
            min_value,
            solves: cols.solves(),
        })
    }
}

/// Fitted constants of an envelope `C e^{-c sqrt(mu) r} phi(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// Smallest `C` making the envelope hold at every probe, given `c`.
    pub c_const: f64,
    /// Least-squares rate.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicBoundsReport {
    pub seed: u64,
    pub pointwise: EnvelopeFit,
    pub annulus: Option<EnvelopeFit>,
    /// Set when the column dips below `-tolerance`.
    pub negative: bool,
}

/// Polynomial/logarithmic factor of the pointwise Green bound.
fn pointwise_profile(dim: usize, mu: f64, r: f64) -> f64 {
    if dim == 2 {
        (2.0 + 1.0 / (mu.sqrt() * r)).ln()
    } else {
        r.powi(2 - dim as i32)
    }
}

fn fit_envelope(mu: f64, pts: &[(f64, f64, f64)]) -> Result<EnvelopeFit> {
    // pts: (r, value, profile). log(value/profile) = log C - c sqrt(mu) r.
    let z: Vec<f64> = pts.iter().map(|p| mu.sqrt() * p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| (p.1 / p.2).ln()).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("nonpositive values in envelope fit".into()));
    }
    let line = stats::linear_fit(&z, &y, None)?;
    let rate = -line.slope;
    let c_const = pts
        .iter()
        .zip(&z)
        .map(|(p, z)| p.1 / (p.2 * (-rate * z).exp()))
        .fold(0.0, f64::max);
    Ok(EnvelopeFit { c_const, rate })
}

/// Fits the pointwise envelope `G(x, 0) <= C e^{-c sqrt(mu)|x|} phi(|x|)`
/// and, when the probe carries annuli, the averaged gradient envelope
/// `C e^{-c sqrt(mu) R} R^{1-d}`.
pub fn check_deterministic_bounds(probe: &GreenProbe, tolerance: f64) -> Result<DeterministicBoundsReport> {
    if probe.entries.len() < 2 {
        return Err(Error::DegenerateFit("need at least two probes".into()));
    }
    let pts: Vec<_> = probe
        .entries
        .iter()
        .map(|e| (e.radius, e.g_value, pointwise_profile(probe.dim, probe.mu, e.radius)))
        .collect();
    let pointwise = fit_envelope(probe.mu, &pts)?;
    let annulus = if probe.annuli.len() >= 2 {
        let pts: Vec<_> = probe
            .annuli
            .iter()
            .map(|a| (a.radius, a.grad_rms, a.radius.powi(1 - probe.dim as i32)))
            .collect();
        Some(fit_envelope(probe.mu, &pts)?)
    } else {
        None
    };
    Ok(DeterministicBoundsReport {
        seed: probe.seed,
        pointwise,
        annulus,
        negative: probe.min_value < -tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;

    fn unit(dim: usize, radius: usize) -> CoefficientField {
        let l = Lattice::new(dim, radius, Boundary::Dirichlet).unwrap();
        CoefficientField::constant(l, 1.0, 1.0).unwrap()
    }

    #[test]
    fn gradient_average_of_constant_is_zero() {
        let l = Lattice::new(2, 10, Boundary::Periodic).unwrap();
        let g = SiteField::from_fn(l, |_| 3.5);
        assert_eq!(local_avg_gradient(&g, Site::new(&[5, 0]), 1).unwrap(), 0.0);
    }

    #[test]
    fn ball_sizes_and_edges() {
        let l = Lattice::new(2, 10, Boundary::Dirichlet).unwrap();
        assert_eq!(l.ball(Site::new(&[6, 0]), 1.0).unwrap().len(), 5);
        assert_eq!(ball_edges(&l, Site::new(&[6, 0]), 1.0).unwrap().len(), 4);
        let l3 = Lattice::new(3, 5, Boundary::Dirichlet).unwrap();
        assert_eq!(ball_edges(&l3, Site::ORIGIN, 1.0).unwrap().len(), 6);
    }

    #[test]
    fn gradient_average_matches_edge_loop() {
        let a = unit(2, 14);
        let spec = ProblemSpec::new(1.0).unwrap();
        let op = LinearOperator::new(&a, 1.0).unwrap();
        let g = green_column(&op, Site::ORIGIN, &spec).unwrap();
        let x = Site::new(&[6, 0]);
        let mut acc = 0.0;
        for b in [[6, 0], [7, 0], [5, 0], [6, 1], [6, -1]] {
            let s = Site::new(&b);
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let n = Site::new(&[b[0] + dx, b[1] + dy]);
                acc += 0.5 * (g.at(n) - g.at(s)).powi(2);
            }
        }
        let want = (acc / 5.0).sqrt();
        let got = local_avg_gradient(&g, x, 1).unwrap();
        assert!((got - want).abs() <= 1e-15 * want.max(1e-300));
    }

    #[test]
    fn probes_too_close_are_rejected() {
        let a = unit(2, 10);
        let spec = ProblemSpec::new(1.0).unwrap();
        let g = SiteField::zeros(*a.lattice());
        assert!(local_avg_gradient(&g, Site::new(&[2, 0]), 1).is_err());
        assert!(mixed_second_gradient(&a, 1.0, Site::new(&[1, 1]), 1, &spec).is_err());
        // Ball leaving the box.
        assert!(local_avg_gradient(&g, Site::new(&[10, 0]), 1).is_err());
    }

    #[test]
    fn mixed_gradient_uses_two_d_plus_one_columns() {
        for dim in [2, 3] {
            let a = unit(dim, 8);
            let spec = ProblemSpec::new(1.0).unwrap();
            let m = mixed_second_gradient(&a, 1.0, Site::new(&[4]), 1, &spec).unwrap();
            assert_eq!(m.solves, 2 * dim + 1);
            assert!(m.value > 0.0);
        }
    }

    #[test]
    fn mixed_gradient_is_symmetric_under_transposition() {
        let l = Lattice::new(2, 12, Boundary::Dirichlet).unwrap();
        let spec_e = crate::ensemble::EnsembleSpec::checkerboard(0.25, 0.25, 1.0, 0.5).unwrap();
        let a = crate::ensemble::sample(&spec_e, &l, 9).unwrap();
        let spec = ProblemSpec::new(0.5).unwrap();
        let op = LinearOperator::new(&a, 0.5).unwrap();
        let x = Site::new(&[5, 2]);
        let from0 = GreenColumns::compute(&op, Site::ORIGIN, 1, &spec).unwrap().mixed_avg(x).unwrap();
        let fromx = GreenColumns::compute(&op, x, 1, &spec).unwrap().mixed_avg(Site::ORIGIN).unwrap();
        assert!((from0 - fromx).abs() <= 1e-6 * from0);
    }

    #[test]
    fn octahedral_invariance_for_unit_coefficients() {
        let a = unit(2, 16);
        let spec = ProblemSpec::new(0.3).unwrap();
        let op = LinearOperator::new(&a, 0.3).unwrap();
        let g = green_column(&op, Site::ORIGIN, &spec).unwrap();
        let base = local_avg_gradient(&g, Site::new(&[5, 2]), 1).unwrap();
        for p in [[2, 5], [-5, 2], [5, -2], [-2, -5], [2, -5], [-5, -2], [-2, 5]] {
            let v = local_avg_gradient(&g, Site::new(&p), 1).unwrap();
            assert!((v - base).abs() <= 1e-8 * base, "{p:?}");
        }
    }

    #[test]
    fn mixed_gradient_scales_like_inverse_square() {
        // mu small enough that the exponential factor is nearly one at 16.
        let mu = 1e-4;
        let a = unit(2, 64);
        let spec = ProblemSpec::new(mu).unwrap();
        let op = LinearOperator::new(&a, mu).unwrap();
        let cols = GreenColumns::compute(&op, Site::ORIGIN, 1, &spec).unwrap();
        let m8 = cols.mixed_avg(Site::new(&[8, 0])).unwrap();
        let m16 = cols.mixed_avg(Site::new(&[16, 0])).unwrap();
        let ratio = m8 / m16;
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn deterministic_bounds_for_unit_coefficients() {
        let a = unit(2, 24);
        let spec = ProblemSpec::new(1.0).unwrap();
        let probes: Vec<Site> = [3, 4, 6, 8].iter().map(|&r| Site::new(&[r, 0])).collect();
        let p = GreenProbe::compute(&a, 0, 1.0, &probes, &[3.0, 6.0], 1, &spec).unwrap();
        let rep = check_deterministic_bounds(&p, 1e-10).unwrap();
        assert!(rep.pointwise.rate > 0.0);
        assert!(rep.pointwise.c_const.is_finite());
        assert!(rep.annulus.unwrap().rate > 0.0);
        assert!(!rep.negative);

        let mut bad = p.clone();
        bad.min_value = -1e-6;
        assert!(check_deterministic_bounds(&bad, 1e-10).unwrap().negative);
    }
}
