//! Stationary random conductance fields with values in `[lambda, 1]`.
//!
//! Fields are generated by random access: the randomness attached to a site
//! (checkerboard value, Poisson points of its unit cell) is a hash of the
//! seed and the site coordinates. A larger Dirichlet box therefore contains
//! the same field in its center, and periodic boxes wrap the coordinates
//! before hashing.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, Lattice, Site};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredLsi {
    pub rho: f64,
    pub ell: f64,
}

impl Default for DeclaredLsi {
    fn default() -> Self {
        DeclaredLsi { rho: 1.0, ell: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnsembleKind {
    /// I.i.d. site values in `{lo, hi}`; edges take the harmonic mean of
    /// their endpoints.
    Checkerboard { lo: f64, hi: f64, p_hi: f64 },
    /// Poisson points of the given intensity; edges whose midpoint lies
    /// within `inclusion_radius` of a point take `inclusion_value`.
    PoissonInclusions {
        intensity: f64,
        inclusion_radius: u32,
        background: f64,
        inclusion_value: f64,
    },
    /// Every conductance equals one.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleRepr", into = "EnsembleRepr")]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub lambda: f64,
    pub declared_lsi: DeclaredLsi,
}

impl EnsembleSpec {
    pub fn checkerboard(lambda: f64, lo: f64, hi: f64, p_hi: f64) -> Result<Self> {
        EnsembleSpec {
            kind: EnsembleKind::Checkerboard { lo, hi, p_hi },
            lambda,
            declared_lsi: DeclaredLsi::default(),
        }
        .validated()
    }

    pub fn poisson_inclusions(
        lambda: f64,
        intensity: f64,
        inclusion_radius: u32,
        background: f64,
        inclusion_value: f64,
    ) -> Result<Self> {
        EnsembleSpec {
            kind: EnsembleKind::PoissonInclusions {
                intensity,
                inclusion_radius,
                background,
                inclusion_value,
            },
            lambda,
            declared_lsi: DeclaredLsi::default(),
        }
        .validated()
    }

    pub fn constant() -> Self {
        EnsembleSpec {
            kind: EnsembleKind::Constant,
            lambda: 1.0,
            declared_lsi: DeclaredLsi::default(),
        }
    }

    pub fn validated(self) -> Result<Self> {
        let lambda = self.lambda;
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::param(format!("lambda must lie in (0, 1], got {lambda}")));
        }
        let admissible = |name: &str, v: f64| {
            if (lambda..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(format!(
                    "{name} = {v} lies outside [lambda, 1] = [{lambda}, 1]"
                )))
            }
        };
        match self.kind {
            EnsembleKind::Checkerboard { lo, hi, p_hi } => {
                admissible("lo", lo)?;
                admissible("hi", hi)?;
                if !(0.0..=1.0).contains(&p_hi) {
                    return Err(Error::param(format!("p_hi must lie in [0, 1], got {p_hi}")));
                }
            }
            EnsembleKind::PoissonInclusions {
                intensity,
                inclusion_radius,
                background,
                inclusion_value,
            } => {
                admissible("background", background)?;
                admissible("inclusion_value", inclusion_value)?;
                if !(intensity >= 0.0 && intensity.is_finite()) {
                    return Err(Error::param("intensity must be finite and nonnegative"));
                }
                if inclusion_radius < 1 {
                    return Err(Error::param("inclusion_radius must be at least 1"));
                }
            }
            EnsembleKind::Constant => {}
        }
        if !(self.declared_lsi.rho > 0.0) {
            return Err(Error::param("declared_lsi.rho must be positive"));
        }
        Ok(self)
    }

    pub fn is_deterministic(&self) -> bool {
        match self.kind {
            EnsembleKind::Constant => true,
            EnsembleKind::Checkerboard { lo, hi, p_hi } => lo == hi || p_hi == 0.0 || p_hi == 1.0,
            EnsembleKind::PoissonInclusions {
                intensity,
                background,
                inclusion_value,
                ..
            } => intensity == 0.0 || background == inclusion_value,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            EnsembleKind::Checkerboard { .. } => "checkerboard",
            EnsembleKind::PoissonInclusions { .. } => "poisson_inclusions",
            EnsembleKind::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum EnsembleRepr {
    Checkerboard {
        lambda: f64,
        lo: f64,
        hi: f64,
        p_hi: f64,
        #[serde(default)]
        declared_lsi: DeclaredLsi,
    },
    PoissonInclusions {
        lambda: f64,
        intensity: f64,
        inclusion_radius: u32,
        background: f64,
        inclusion_value: f64,
        #[serde(default)]
        declared_lsi: DeclaredLsi,
    },
    Constant {
        #[serde(default = "one")]
        lambda: f64,
        #[serde(default)]
        declared_lsi: DeclaredLsi,
    },
}

fn one() -> f64 {
    1.0
}

impl TryFrom<EnsembleRepr> for EnsembleSpec {
    type Error = Error;

    fn try_from(r: EnsembleRepr) -> Result<Self> {
        let (kind, lambda, declared_lsi) = match r {
            EnsembleRepr::Checkerboard {
                lambda,
                lo,
                hi,
                p_hi,
                declared_lsi,
            } => (EnsembleKind::Checkerboard { lo, hi, p_hi }, lambda, declared_lsi),
            EnsembleRepr::PoissonInclusions {
                lambda,
                intensity,
                inclusion_radius,
                background,
                inclusion_value,
                declared_lsi,
            } => (
                EnsembleKind::PoissonInclusions {
                    intensity,
                    inclusion_radius,
                    background,
                    inclusion_value,
                },
                lambda,
                declared_lsi,
            ),
            EnsembleRepr::Constant {
                lambda,
                declared_lsi,
            } => (EnsembleKind::Constant, lambda, declared_lsi),
        };
        EnsembleSpec {
            kind,
            lambda,
            declared_lsi,
        }
        .validated()
    }
}

impl From<EnsembleSpec> for EnsembleRepr {
    fn from(s: EnsembleSpec) -> Self {
        let EnsembleSpec {
            kind,
            lambda,
            declared_lsi,
        } = s;
        match kind {
            EnsembleKind::Checkerboard { lo, hi, p_hi } => EnsembleRepr::Checkerboard {
                lambda,
                lo,
                hi,
                p_hi,
                declared_lsi,
            },
            EnsembleKind::PoissonInclusions {
                intensity,
                inclusion_radius,
                background,
                inclusion_value,
            } => EnsembleRepr::PoissonInclusions {
                lambda,
                intensity,
                inclusion_radius,
                background,
                inclusion_value,
                declared_lsi,
            },
            EnsembleKind::Constant => EnsembleRepr::Constant {
                lambda,
                declared_lsi,
            },
        }
    }
}

/// Reference to the undirected edge joining `site` and `site + e_axis`.
/// Under Dirichlet conditions `site` may be the exterior neighbor of a
/// low face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeRef {
    pub site: Site,
    pub axis: usize,
}

impl EdgeRef {
    pub fn midpoint(&self) -> [f64; 3] {
        let mut m = self.site.0.map(|c| c as f64);
        m[self.axis] += 0.5;
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Forward(usize),
    Inflow(usize),
}

/// One realization of the conductances on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    lattice: Lattice,
    lambda: f64,
    forward: Vec<f64>,
    // Conductance of the edge entering site x through its low face along
    // axis k, stored at x * dim + k; only used for Dirichlet boxes.
    inflow: Vec<f64>,
}

impl CoefficientField {
    pub fn constant(lattice: Lattice, value: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) || !(lambda..=1.0).contains(&value) {
            return Err(Error::param(format!(
                "constant conductance {value} is not admissible for lambda {lambda}"
            )));
        }
        Ok(CoefficientField {
            lattice,
            lambda,
            forward: vec![value; lattice.num_edges()],
            inflow: inflow_storage(&lattice, value),
        })
    }

    /// Conductances from a rule on undirected edges.
    pub fn from_edge_rule(
        lattice: Lattice,
        lambda: f64,
        mut rule: impl FnMut(EdgeRef) -> f64,
    ) -> Result<Self> {
        let d = lattice.dim();
        let mut forward = vec![0.0; lattice.num_edges()];
        for i in 0..lattice.num_sites() {
            let s = lattice.site(i);
            for k in 0..d {
                forward[i * d + k] = rule(EdgeRef { site: s, axis: k });
            }
        }
        let mut inflow = inflow_storage(&lattice, 0.0);
        if lattice.boundary() == Boundary::Dirichlet {
            for i in 0..lattice.num_sites() {
                for k in 0..d {
                    if lattice.neighbor(i, k, false).is_none() {
                        let s = lattice.site(i).shifted(k, -1);
                        inflow[i * d + k] = rule(EdgeRef { site: s, axis: k });
                    }
                }
            }
        }
        let field = CoefficientField {
            lattice,
            lambda,
            forward,
            inflow,
        };
        field.check_ellipticity()?;
        Ok(field)
    }

    /// Checkerboard rule: harmonic mean of per-site values.
    pub fn from_site_values(
        lattice: Lattice,
        lambda: f64,
        mut site_value: impl FnMut(Site) -> f64,
    ) -> Result<Self> {
        Self::from_edge_rule(lattice, lambda, |e| {
            let a = site_value(e.site);
            let b = site_value(e.site.shifted(e.axis, 1));
            2.0 * a * b / (a + b)
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Conductance of the forward edge `(site, axis)`.
    pub fn forward(&self, site: usize, axis: usize) -> f64 {
        self.forward[site * self.lattice.dim() + axis]
    }

    /// Conductance of the edge joining `site - e_axis` and `site`.
    pub fn backward(&self, site: usize, axis: usize) -> f64 {
        match self.lattice.neighbor(site, axis, false) {
            Some(j) => self.forward(j, axis),
            None => self.inflow[site * self.lattice.dim() + axis],
        }
    }

    pub fn forward_values(&self) -> &[f64] {
        &self.forward
    }

    /// All conductances that enter the operator (forward edges plus, for
    /// Dirichlet boxes, the low-face inflow edges).
    pub fn all_values(&self) -> impl Iterator<Item = f64> + '_ {
        let d = self.lattice.dim();
        let inflow = (0..self.lattice.num_sites()).flat_map(move |i| {
            (0..d)
                .filter(move |&k| {
                    self.lattice.boundary() == Boundary::Dirichlet && self.lattice.neighbor(i, k, false).is_none()
                })
                .map(move |k| self.inflow[i * d + k])
        });
        self.forward.iter().copied().chain(inflow)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.all_values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    fn slot(&self, edge: EdgeRef) -> Option<Slot> {
        let l = &self.lattice;
        let d = l.dim();
        if let Some(i) = l.index(edge.site) {
            return Some(Slot::Forward(i * d + edge.axis));
        }
        let head = l.index(edge.site.shifted(edge.axis, 1))?;
        (l.neighbor(head, edge.axis, false).is_none()).then_some(Slot::Inflow(head * d + edge.axis))
    }

    pub fn edge_value(&self, edge: EdgeRef) -> Option<f64> {
        self.slot(edge).map(|s| match s {
            Slot::Forward(i) => self.forward[i],
            Slot::Inflow(i) => self.inflow[i],
        })
    }

    pub fn set_edge_value(&mut self, edge: EdgeRef, value: f64) -> Result<()> {
        if !(self.lambda..=1.0).contains(&value) {
            return Err(Error::param(format!(
                "conductance {value} outside [{}, 1]",
                self.lambda
            )));
        }
        match self.slot(edge) {
            Some(Slot::Forward(i)) => self.forward[i] = value,
            Some(Slot::Inflow(i)) => self.inflow[i] = value,
            None => {
                return Err(Error::ProbeOutOfRange(format!(
                    "edge {:?}/{} does not touch the box",
                    edge.site.0, edge.axis
                )))
            }
        }
        Ok(())
    }

    /// Verifies `lambda <= a(e) <= 1` on every edge.
    pub fn check_ellipticity(&self) -> Result<()> {
        let tol = 1e-12;
        match self
            .all_values()
            .find(|v| !(v.is_finite() && *v >= self.lambda - tol && *v <= 1.0 + tol))
        {
            Some(v) => Err(Error::param(format!(
                "conductance {v} violates ellipticity bounds [{}, 1]",
                self.lambda
            ))),
            None => Ok(()),
        }
    }

    /// Undirected edges whose midpoint lies in the closed ball `B_radius(center)`.
    pub fn edges_near(&self, center: Site, radius: f64) -> Vec<EdgeRef> {
        let l = &self.lattice;
        let mut out = Vec::new();
        for o in l.ball_offsets(radius + 0.5) {
            let s = center.offset(o);
            for k in 0..l.dim() {
                let e = EdgeRef { site: s, axis: k };
                let m = e.midpoint();
                let d2: f64 = (0..3).map(|j| (m[j] - center.0[j] as f64).powi(2)).sum();
                if d2 <= radius * radius + 1e-9 && self.slot(e).is_some() {
                    let canon = match l.canonical(s) {
                        Some(c) => EdgeRef { site: c, axis: k },
                        None => e,
                    };
                    if !out.contains(&canon) {
                        out.push(canon);
                    }
                }
            }
        }
        out.sort();
        out
    }
}

fn inflow_storage(lattice: &Lattice, value: f64) -> Vec<f64> {
    match lattice.boundary() {
        Boundary::Dirichlet => vec![value; lattice.num_edges()],
        Boundary::Periodic => Vec::new(),
    }
}

/// Site value of the checkerboard ensemble at `site` (wrapped for periodic
/// boxes, raw coordinates otherwise).
pub fn checkerboard_site_value(
    lattice: &Lattice,
    seed: u64,
    lo: f64,
    hi: f64,
    p_hi: f64,
    site: Site,
) -> f64 {
    let key = lattice.canonical(site).unwrap_or(site);
    let u = seed::unit_f64(seed::site_seed(seed, key.0));
    if u < p_hi {
        hi
    } else {
        lo
    }
}

/// Draws one coefficient field. Identical inputs give identical fields.
pub fn sample(spec: &EnsembleSpec, lattice: &Lattice, seed: u64) -> Result<CoefficientField> {
    let spec = spec.validated()?;
    match spec.kind {
        EnsembleKind::Constant => CoefficientField::constant(*lattice, 1.0, spec.lambda),
        EnsembleKind::Checkerboard { lo, hi, p_hi } => {
            CoefficientField::from_site_values(*lattice, spec.lambda, |s| {
                checkerboard_site_value(lattice, seed, lo, hi, p_hi, s)
            })
        }
        EnsembleKind::PoissonInclusions {
            background,
            inclusion_value,
            ..
        } => {
            let mask = inclusion_mask(&spec, lattice, seed)?;
            let mut field = CoefficientField::constant(*lattice, background, spec.lambda)?;
            for e in mask {
                field.set_edge_value(e, inclusion_value)?;
            }
            Ok(field)
        }
    }
}

/// Edges covered by at least one inclusion.
pub fn inclusion_mask(spec: &EnsembleSpec, lattice: &Lattice, seed: u64) -> Result<Vec<EdgeRef>> {
    let EnsembleKind::PoissonInclusions {
        intensity,
        inclusion_radius,
        ..
    } = spec.kind
    else {
        return Err(Error::param("inclusion mask requires a Poisson inclusion ensemble"));
    };
    let r = inclusion_radius as f64;
    let d = lattice.dim();
    if lattice.boundary() == Boundary::Periodic && lattice.side() <= 2 * (inclusion_radius as usize + 1) {
        return Err(Error::param("periodic box too small for the inclusion radius"));
    }
    if intensity == 0.0 {
        return Ok(Vec::new());
    }
    let poisson = Poisson::new(intensity).map_err(|e| Error::param(e.to_string()))?;

    // Cells whose points can reach an edge touching the box.
    let reach = match lattice.boundary() {
        Boundary::Periodic => lattice.radius() as i64,
        Boundary::Dirichlet => lattice.radius() as i64 + inclusion_radius as i64 + 2,
    };
    let mut points = Vec::new();
    let range = |k: usize| if k < d { -reach..=reach } else { 0..=0 };
    for a in range(0) {
        for b in range(1) {
            for c in range(2) {
                let cell = Site([a, b, c]);
                let mut rng = seed::rng(seed::site_seed(seed ^ 0x17c1_u64, cell.0));
                let count = poisson.sample(&mut rng) as usize;
                for _ in 0..count {
                    let mut p = [0.0; 3];
                    for (v, &c) in p.iter_mut().zip(&cell.0).take(d) {
                        *v = c as f64 - 0.5 + rng.random::<f64>();
                    }
                    points.push(p);
                }
            }
        }
    }

    let mut covered = std::collections::BTreeSet::new();
    let span = inclusion_radius as i64 + 1;
    for p in &points {
        let base = Site(p.map(|c| c.round() as i64));
        let range = |k: usize| if k < d { -span..=span } else { 0..=0 };
        for a in range(0) {
            for b in range(1) {
                for c in range(2) {
                    let s = base.offset(Site([a, b, c]));
                    for k in 0..d {
                        let e = EdgeRef { site: s, axis: k };
                        let m = e.midpoint();
                        let d2: f64 = (0..d).map(|j| (m[j] - p[j]).powi(2)).sum();
                        if d2 > r * r {
                            continue;
                        }
                        let canon = match lattice.canonical(s) {
                            Some(c) => EdgeRef { site: c, axis: k },
                            None => e,
                        };
                        covered.insert(canon);
                    }
                }
            }
        }
    }
    let probe = CoefficientField::constant(*lattice, 1.0, 1.0)?;
    Ok(covered
        .into_iter()
        .filter(|e| probe.slot(*e).is_some())
        .collect())
}

/// Monte Carlo fraction of forward edges covered by inclusions.
pub fn covered_fraction(spec: &EnsembleSpec, lattice: &Lattice, seeds: &[u64]) -> Result<f64> {
    if !matches!(spec.kind, EnsembleKind::PoissonInclusions { .. }) {
        return Err(Error::param("covered_fraction requires a Poisson inclusion ensemble"));
    }
    if seeds.is_empty() {
        return Err(Error::param("covered_fraction needs at least one seed"));
    }
    let fractions = seeds
        .iter()
        .map(|&s| covered_fraction_one(spec, lattice, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(fractions.iter().sum::<f64>() / fractions.len() as f64)
}

pub(crate) fn covered_fraction_one(spec: &EnsembleSpec, lattice: &Lattice, seed: u64) -> Result<f64> {
    let mask = inclusion_mask(spec, lattice, seed)?;
    let forward = mask.iter().filter(|e| lattice.contains(e.site)).count();
    Ok(forward as f64 / lattice.num_edges() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic(dim: usize, r: usize) -> Lattice {
        Lattice::new(dim, r, Boundary::Periodic).unwrap()
    }

    #[test]
    fn degenerate_checkerboard_is_constant() {
        let spec = EnsembleSpec::checkerboard(0.5, 1.0, 1.0, 0.3).unwrap();
        let f = sample(&spec, &periodic(2, 4), 9).unwrap();
        assert!(f.forward_values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_poisson_process_gives_background() {
        let spec = EnsembleSpec::poisson_inclusions(0.2, 0.0, 2, 0.7, 0.2).unwrap();
        let l = Lattice::new(2, 5, Boundary::Dirichlet).unwrap();
        let f = sample(&spec, &l, 1).unwrap();
        assert!(f.all_values().all(|v| v == 0.7));
        assert_eq!(covered_fraction(&spec, &l, &[1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_inadmissible_values() {
        assert!(EnsembleSpec::checkerboard(0.5, 0.1, 1.0, 0.5).is_err());
        assert!(EnsembleSpec::checkerboard(0.1, 0.1, 1.2, 0.5).is_err());
        assert!(EnsembleSpec::poisson_inclusions(0.5, 1.0, 1, 0.4, 1.0).is_err());
        assert!(EnsembleSpec::checkerboard(0.0, 0.1, 1.0, 0.5).is_err());
    }

    #[test]
    fn checkerboard_site_mean_within_three_sigma() {
        let (lo, hi, p) = (0.1, 1.0, 0.5);
        let l = periodic(2, 49); // 99^2 = 9801 sites
        let n = l.num_sites() as f64;
        let mean = l
            .sites()
            .map(|s| checkerboard_site_value(&l, 77, lo, hi, p, s))
            .sum::<f64>()
            / n;
        let expected = lo + p * (hi - lo);
        let sigma = (p * (1.0 - p)).sqrt() * (hi - lo) / n.sqrt();
        assert!((mean - expected).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn ellipticity_and_determinism() {
        let specs = [
            EnsembleSpec::checkerboard(0.25, 0.25, 1.0, 0.5).unwrap(),
            EnsembleSpec::poisson_inclusions(0.1, 0.2, 1, 1.0, 0.1).unwrap(),
        ];
        for spec in specs {
            for l in [periodic(2, 6), Lattice::new(3, 3, Boundary::Dirichlet).unwrap()] {
                for seed in 0..10 {
                    let a = sample(&spec, &l, seed).unwrap();
                    let (lo, hi) = a.min_max();
                    assert!(lo >= spec.lambda && hi <= 1.0);
                    assert_eq!(a, sample(&spec, &l, seed).unwrap());
                }
            }
        }
    }

    #[test]
    fn undirected_consistency() {
        let spec = EnsembleSpec::checkerboard(0.25, 0.25, 1.0, 0.5).unwrap();
        let l = Lattice::new(2, 4, Boundary::Dirichlet).unwrap();
        let f = sample(&spec, &l, 5).unwrap();
        for i in 0..l.num_sites() {
            for k in 0..2 {
                if let Some(j) = l.neighbor(i, k, true) {
                    assert_eq!(f.forward(i, k), f.backward(j, k));
                }
            }
        }
    }

    #[test]
    fn larger_dirichlet_box_contains_same_field() {
        let spec = EnsembleSpec::poisson_inclusions(0.2, 0.3, 1, 1.0, 0.2).unwrap();
        let small = Lattice::new(2, 4, Boundary::Dirichlet).unwrap();
        let big = Lattice::new(2, 9, Boundary::Dirichlet).unwrap();
        let a = sample(&spec, &small, 11).unwrap();
        let b = sample(&spec, &big, 11).unwrap();
        for s in small.sites() {
            for k in 0..2 {
                let e = EdgeRef { site: s, axis: k };
                assert_eq!(a.edge_value(e), b.edge_value(e));
            }
        }
    }

    #[test]
    fn saturated_inclusions_cover_everything() {
        let spec = EnsembleSpec::poisson_inclusions(0.1, 10.0, 2, 1.0, 0.1).unwrap();
        let frac = covered_fraction(&spec, &periodic(2, 8), &[1, 2, 3]).unwrap();
        assert!(frac > 0.99);
    }

    #[test]
    fn coverage_matches_void_probability() {
        let (nu, r) = (0.05, 2u32);
        let spec = EnsembleSpec::poisson_inclusions(0.1, nu, r, 1.0, 0.1).unwrap();
        let l = periodic(2, 20);
        let fr: Vec<f64> = (0..40)
            .map(|s| covered_fraction_one(&spec, &l, s).unwrap())
            .collect();
        let m = fr.iter().sum::<f64>() / fr.len() as f64;
        let var = fr.iter().map(|f| (f - m).powi(2)).sum::<f64>() / (fr.len() - 1) as f64;
        let se = (var / fr.len() as f64).sqrt();
        let expected = 1.0 - (-nu * std::f64::consts::PI * (r * r) as f64).exp();
        assert!((m - expected).abs() < 3.0 * se, "{m} vs {expected} (se {se})");
    }

    #[test]
    fn covered_fraction_rejects_wrong_kind() {
        let spec = EnsembleSpec::checkerboard(0.25, 0.25, 1.0, 0.5).unwrap();
        assert!(covered_fraction(&spec, &periodic(2, 4), &[1]).is_err());
    }

    #[test]
    fn stationarity_chi_square() {
        // Marginal of one edge at 10 disjoint translates, 100 samples each;
        // homogeneity of the 10 x 3 table. Critical value chi2(0.99, df = 18).
        const CRITICAL: f64 = 34.805_305_734_705_07;
        let (lo, hi) = (0.25, 1.0);
        let spec = EnsembleSpec::checkerboard(0.25, lo, hi, 0.5).unwrap();
        let l = periodic(2, 12);
        let mid = 2.0 * lo * hi / (lo + hi);
        let mut table = [[0.0f64; 3]; 10];
        for seed in 0..100u64 {
            let f = sample(&spec, &l, seed).unwrap();
            for (t, row) in table.iter_mut().enumerate() {
                let site = l.index(Site::new(&[-12 + 2 * t as i64, 3])).unwrap();
                let v = f.forward(site, 0);
                let cat = if v == lo { 0 } else if v == mid { 1 } else { 2 };
                row[cat] += 1.0;
            }
        }
        let total: f64 = table.iter().flatten().sum();
        let col: Vec<f64> = (0..3).map(|c| table.iter().map(|r| r[c]).sum()).collect();
        let mut chi2 = 0.0;
        for row in &table {
            let rs: f64 = row.iter().sum();
            for c in 0..3 {
                let e = rs * col[c] / total;
                chi2 += (row[c] - e).powi(2) / e;
            }
        }
        assert!(chi2 < CRITICAL, "chi2 = {chi2}");
    }

    #[test]
    fn spec_serde_rejects_unknown_keys() {
        let ok: EnsembleSpec = serde_json::from_str(
            r#"{"kind":"checkerboard","lambda":0.25,"lo":0.25,"hi":1.0,"p_hi":0.5}"#,
        )
        .unwrap();
        assert_eq!(ok.kind_name(), "checkerboard");
        let bad = serde_json::from_str::<EnsembleSpec>(
            r#"{"kind":"checkerboard","lambda":0.25,"lo":0.25,"hi":1.0,"p_high":0.5}"#,
        );
        assert!(bad.is_err());
        let json = serde_json::to_string(&ok).unwrap();
        assert_eq!(serde_json::from_str::<EnsembleSpec>(&json).unwrap(), ok);
    }

    #[test]
    fn edges_near_site_are_incident_edges() {
        let f = CoefficientField::constant(periodic(2, 5), 1.0, 0.5).unwrap();
        let e = f.edges_near(Site::new(&[1, 1]), 1.0);
        assert_eq!(e.len(), 4);
        let f3 = CoefficientField::constant(periodic(3, 5), 1.0, 0.5).unwrap();
        assert_eq!(f3.edges_near(Site::ORIGIN, 1.0).len(), 6);
    }
}
