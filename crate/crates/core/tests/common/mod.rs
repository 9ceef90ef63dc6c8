#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stochhom::ensemble::{sample, CoefficientField, EnsembleSpec};
use stochhom::lattice::{divergence, gradient, Boundary, EdgeField, Lattice, Site, SiteField};
use stochhom::solver::{green_column, solve, LinearOperator, ProblemSpec};

pub fn checkerboard() -> EnsembleSpec {
    EnsembleSpec::checkerboard(0.25, 0.25, 1.0, 0.5).unwrap()
}

pub fn poisson() -> EnsembleSpec {
    EnsembleSpec::poisson_inclusions(0.25, 0.15, 1, 1.0, 0.25).unwrap()
}

pub fn ensembles() -> [(&'static str, EnsembleSpec); 2] {
    [("checkerboard", checkerboard()), ("poisson", poisson())]
}

/// Dense matrix of `mu - div(A grad)` assembled edge by edge from the
/// conductances alone, independent of the solver's operator.
pub fn dense_matrix(a: &CoefficientField, mu: f64) -> DMatrix<f64> {
    let l = *a.lattice();
    let n = l.num_sites();
    let mut m = DMatrix::from_diagonal_element(n, n, mu);
    for i in 0..n {
        for k in 0..l.dim() {
            let c = a.forward(i, k);
            match l.neighbor(i, k, true) {
                Some(j) => {
                    m[(i, i)] += c;
                    m[(j, j)] += c;
                    m[(i, j)] -= c;
                    m[(j, i)] -= c;
                }
                None => m[(i, i)] += c,
            }
            if l.neighbor(i, k, false).is_none() && l.boundary() == Boundary::Dirichlet {
                m[(i, i)] += a.backward(i, k);
            }
        }
    }
    m
}

pub struct OracleCase {
    pub dim: usize,
    pub radius: usize,
    pub boundary: Boundary,
    pub ensemble: &'static str,
    pub mu: f64,
    pub error: f64,
}

/// Compares `solve` against dense LU on `count` random instances and
/// returns the per-instance max-norm errors.
pub fn oracle_cases(spec: &EnsembleSpec, name: &'static str, count: usize, seed: u64) -> Vec<OracleCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|c| {
            let dim = if c % 2 == 0 { 2 } else { 3 };
            let boundary = if rng.random_bool(0.5) { Boundary::Dirichlet } else { Boundary::Periodic };
            // Periodic boxes must exceed the inclusion diameter.
            let min = if boundary == Boundary::Periodic { 2 } else { 1 };
            let radius = if dim == 2 { rng.random_range(min..=6) } else { rng.random_range(min..=3) };
            let mu = 10f64.powf(rng.random_range(-2.0..0.5));
            let l = Lattice::new(dim, radius, boundary).unwrap();
            let a = sample(spec, &l, rng.random()).unwrap();
            let f: Vec<f64> = (0..l.num_sites()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let exact = dense_matrix(&a, mu).lu().solve(&DVector::from_vec(f.clone())).unwrap();
            let op = LinearOperator::new(&a, mu).unwrap();
            let u = solve(&op, &SiteField::from_values(l, f).unwrap(), &ProblemSpec::new(mu).unwrap()).unwrap();
            let error = u.values().iter().zip(exact.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            OracleCase {
                dim,
                radius,
                boundary,
                ensemble: name,
                mu,
                error,
            }
        })
        .collect()
}

/// Worst deviations of the operator invariants over random instances.
#[derive(Debug, Default)]
pub struct OperatorReport {
    /// `|<grad u, F> + <u, div F>|` relative to `|grad u| |F|`.
    pub adjointness: f64,
    /// Smallest `<u, Au> / (mu |u|^2)`; must be at least one.
    pub rayleigh_over_mu: f64,
    /// Largest `|G(x,y) - G(y,x)| / max |G|`.
    pub green_asymmetry: f64,
    /// Most negative Green value relative to its maximum.
    pub green_min: f64,
}

pub fn operator_report(spec: &EnsembleSpec, instances: usize, seed: u64) -> OperatorReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = OperatorReport {
        rayleigh_over_mu: f64::INFINITY,
        ..Default::default()
    };
    for c in 0..instances {
        let dim = 2 + c % 2;
        let radius = if dim == 2 { 8 } else { 4 };
        let boundary = if c % 4 < 2 { Boundary::Dirichlet } else { Boundary::Periodic };
        let mu = 10f64.powf(rng.random_range(-2.0..0.0));
        let l = Lattice::new(dim, radius, boundary).unwrap();
        let a = sample(spec, &l, rng.random()).unwrap();

        let u = SiteField::from_fn(l, |_| rng.random_range(-1.0..1.0));
        let flux = EdgeField::from_values(l, (0..l.num_edges()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let gu = gradient(&u);
        let lhs = gu.dot(&flux);
        let rhs = -u.dot(&divergence(&flux));
        let scale = gu.dot(&gu).sqrt() * flux.dot(&flux).sqrt();
        rep.adjointness = rep.adjointness.max((lhs - rhs).abs() / scale);

        let op = LinearOperator::new(&a, mu).unwrap();
        let au = op.apply(&u).unwrap();
        rep.rayleigh_over_mu = rep.rayleigh_over_mu.min(u.dot(&au) / (mu * u.dot(&u)));

        let problem = ProblemSpec::new(mu).unwrap();
        let pick = |rng: &mut ChaCha8Rng| {
            let r = radius as i64;
            let mut c = [0i64; 3];
            for v in c.iter_mut().take(dim) {
                *v = rng.random_range(-r..=r);
            }
            Site(c)
        };
        let (x, y) = (pick(&mut rng), pick(&mut rng));
        let gx = green_column(&op, x, &problem).unwrap();
        let gy = green_column(&op, y, &problem).unwrap();
        let peak = gx.values().iter().chain(gy.values()).fold(0.0f64, |m, v| m.max(v.abs()));
        rep.green_asymmetry = rep.green_asymmetry.max((gx.at(y) - gy.at(x)).abs() / peak);
        let lowest = gx.values().iter().chain(gy.values()).fold(f64::INFINITY, |m, &v| m.min(v));
        rep.green_min = rep.green_min.min(lowest / peak);
    }
    rep
}
