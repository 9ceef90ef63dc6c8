//! The massive divergence-form operator `mu u - div(A grad u)` on a lattice
//! box and its conjugate-gradient solver.

mod precond;

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

pub use precond::SpectralPreconditioner;

use crate::ensemble::{CoefficientField, EdgeRef};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, Site, SiteField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Jacobi,
    /// Inverse of the constant-coefficient operator with conductance
    /// `sqrt(min a * max a)`, applied by FFT/DST.
    #[default]
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub mu: f64,
    /// Relative residual target `|f - A u| / |f|`.
    pub tolerance: f64,
    /// Iteration cap; `None` means ten times the number of sites.
    pub max_iterations: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl ProblemSpec {
    pub fn new(mu: f64) -> Result<Self> {
        ProblemSpec {
            mu,
            tolerance: 1e-10,
            max_iterations: None,
            preconditioner: Preconditioner::default(),
        }
        .validated()
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        self.tolerance = tolerance;
        self.validated()
    }

    pub fn with_preconditioner(mut self, p: Preconditioner) -> Self {
        self.preconditioner = p;
        self
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::param(format!(
                "mu must be positive (mu = 0 is only reached as a limit), got {}",
                self.mu
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-4) {
            return Err(Error::param(format!(
                "tolerance must lie in (0, 1e-4], got {}",
                self.tolerance
            )));
        }
        Ok(self)
    }

    fn cap(&self, lattice: &Lattice) -> usize {
        self.max_iterations.unwrap_or(10 * lattice.num_sites())
    }
}

/// Discrete `mu - div(A grad)`, stored as a diagonal plus one conductance
/// per forward edge.
#[derive(Debug)]
pub struct LinearOperator {
    lattice: Lattice,
    mu: f64,
    diag: Vec<f64>,
    // (tail, head, conductance) for every edge with both ends in the box.
    edges: Vec<(u32, u32, f64)>,
    // Position in `edges` of forward edge `site * dim + axis`, or u32::MAX.
    edge_slot: Vec<u32>,
    a_min: f64,
    a_max: f64,
    spectral: Arc<OnceLock<SpectralPreconditioner>>,
}

impl LinearOperator {
    pub fn new(field: &CoefficientField, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::param("mu must be positive"));
        }
        let l = *field.lattice();
        let d = l.dim();
        let n = l.num_sites();
        let mut diag = vec![mu; n];
        let mut edges = Vec::with_capacity(n * d);
        let mut edge_slot = vec![u32::MAX; n * d];
        for i in 0..n {
            for k in 0..d {
                let a = field.forward(i, k);
                diag[i] += a;
                if let Some(j) = l.neighbor(i, k, true) {
                    diag[j] += a;
                    edge_slot[i * d + k] = edges.len() as u32;
                    edges.push((i as u32, j as u32, a));
                }
                if l.neighbor(i, k, false).is_none() {
                    diag[i] += field.backward(i, k);
                }
            }
        }
        let (a_min, a_max) = field.min_max();
        Ok(LinearOperator {
            lattice: l,
            mu,
            diag,
            edges,
            edge_slot,
            a_min,
            a_max,
            spectral: Arc::new(OnceLock::new()),
        })
    }

    /// The operator of `field` after replacing the conductances of
    /// `changes`, given as `(edge, old value, new value)`. Only the local
    /// entries are rebuilt and the spectral preconditioner is shared, so
    /// this is much cheaper than [`LinearOperator::new`] for small patches.
    pub fn patched(&self, changes: &[(EdgeRef, f64, f64)]) -> Result<LinearOperator> {
        let l = self.lattice;
        let d = l.dim();
        let mut diag = self.diag.clone();
        let mut edges = self.edges.clone();
        let (mut a_min, mut a_max) = (self.a_min, self.a_max);
        for &(e, old, new) in changes {
            let tail = l.index(e.site);
            let head = l.index(e.site.shifted(e.axis, 1));
            if tail.is_none() && head.is_none() {
                return Err(Error::ProbeOutOfRange(format!(
                    "edge {:?}/{} does not touch the box",
                    e.site.0, e.axis
                )));
            }
            let delta = new - old;
            for i in [tail, head].into_iter().flatten() {
                diag[i] += delta;
            }
            if let (Some(i), Some(_)) = (tail, head) {
                let slot = self.edge_slot[i * d + e.axis];
                if slot != u32::MAX {
                    edges[slot as usize].2 = new;
                }
            }
            a_min = a_min.min(new);
            a_max = a_max.max(new);
        }
        self.spectral();
        Ok(LinearOperator {
            lattice: l,
            mu: self.mu,
            diag,
            edges,
            edge_slot: self.edge_slot.clone(),
            a_min,
            a_max,
            spectral: Arc::clone(&self.spectral),
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for ((o, d), v) in out.iter_mut().zip(&self.diag).zip(u) {
            *o = d * v;
        }
        for &(i, j, a) in &self.edges {
            let (i, j) = (i as usize, j as usize);
            out[i] -= a * u[j];
            out[j] -= a * u[i];
        }
    }

    pub fn apply(&self, u: &SiteField) -> Result<SiteField> {
        if u.lattice() != &self.lattice {
            return Err(Error::LatticeMismatch);
        }
        let mut out = vec![0.0; self.lattice.num_sites()];
        self.apply_into(u.values(), &mut out);
        SiteField::from_values(self.lattice, out)
    }

    fn spectral(&self) -> &SpectralPreconditioner {
        self.spectral.get_or_init(|| {
            SpectralPreconditioner::new(self.lattice, self.mu, (self.a_min * self.a_max).sqrt())
        })
    }

    fn precondition(&self, kind: Preconditioner, r: &[f64], z: &mut [f64]) {
        match kind {
            Preconditioner::None => z.copy_from_slice(r),
            Preconditioner::Jacobi => {
                for ((z, r), d) in z.iter_mut().zip(r).zip(&self.diag) {
                    *z = r / d;
                }
            }
            Preconditioner::Spectral => self.spectral().apply(r, z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `op u = f` by preconditioned conjugate gradients.
pub fn solve(op: &LinearOperator, f: &SiteField, spec: &ProblemSpec) -> Result<SiteField> {
    let mut u = vec![0.0; op.lattice.num_sites()];
    solve_into(op, f.values(), &mut u, spec)?;
    SiteField::from_values(op.lattice, u)
}

/// As [`solve`], starting from the initial guess stored in `u`.
pub fn solve_into(
    op: &LinearOperator,
    f: &[f64],
    u: &mut [f64],
    spec: &ProblemSpec,
) -> Result<SolveStats> {
    let spec = spec.validated()?;
    let n = op.lattice.num_sites();
    if f.len() != n || u.len() != n {
        return Err(Error::LatticeMismatch);
    }
    if (op.mu - spec.mu).abs() > f64::EPSILON * spec.mu.max(1.0) {
        return Err(Error::Mismatch(format!(
            "operator mu {} differs from problem mu {}",
            op.mu, spec.mu
        )));
    }
    let f_norm = dot(f, f).sqrt();
    if f_norm == 0.0 {
        u.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let cap = spec.cap(&op.lattice);
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;

    // Restart whenever the recursively updated residual drifts from the
    // true one; typically one pass suffices.
    loop {
        op.apply_into(u, &mut q);
        for i in 0..n {
            r[i] = f[i] - q[i];
        }
        let true_res = dot(&r, &r).sqrt() / f_norm;
        if true_res <= spec.tolerance {
            return Ok(SolveStats {
                iterations,
                residual: true_res,
            });
        }
        if iterations >= cap {
            return Err(Error::NonConvergence {
                iterations,
                residual: true_res,
            });
        }
        op.precondition(spec.preconditioner, &r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < cap {
            op.apply_into(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 {
                break;
            }
            let alpha = rz / pq;
            for i in 0..n {
                u[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            iterations += 1;
            if dot(&r, &r).sqrt() / f_norm <= 0.5 * spec.tolerance {
                break;
            }
            op.precondition(spec.preconditioner, &r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// Green function column `G_mu(., y; A)`: the solution with a unit mass at `y`.
pub fn green_column(op: &LinearOperator, y: Site, spec: &ProblemSpec) -> Result<SiteField> {
    let f = SiteField::delta(op.lattice, y)?;
    solve(op, &f, spec)
}

/// Box radius for Green-function probes up to distance `probe_max`:
/// `ceil(max(8 / sqrt(mu), 3 probe_max))`.
pub fn choose_box_radius(mu: f64, probe_max: f64) -> usize {
    (8.0 / mu.sqrt()).max(3.0 * probe_max).ceil() as usize
}
