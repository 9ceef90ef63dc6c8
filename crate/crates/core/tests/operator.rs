//! Structural properties of the operator and its Green function.

mod common;

use common::{checkerboard, ensembles, operator_report};
use proptest::prelude::*;
use stochhom::ensemble::sample;
use stochhom::lattice::{Boundary, Lattice, Site, SiteField};
use stochhom::solver::{choose_box_radius, green_column, solve, LinearOperator, ProblemSpec};

#[test]
fn invariants_hold_for_both_ensembles() {
    for (k, (name, spec)) in ensembles().into_iter().enumerate() {
        let rep = operator_report(&spec, 8, 7 + k as u64);
        assert!(rep.adjointness <= 1e-12, "{name}: {rep:?}");
        assert!(rep.rayleigh_over_mu >= 1.0 - 1e-12, "{name}: {rep:?}");
        assert!(rep.green_asymmetry <= 1e-8, "{name}: {rep:?}");
        assert!(rep.green_min >= -1e-10, "{name}: {rep:?}");
    }
}

#[test]
fn green_decreases_in_mu() {
    let l = Lattice::new(2, 10, Boundary::Dirichlet).unwrap();
    let a = sample(&checkerboard(), &l, 3).unwrap();
    let column = |mu: f64| {
        let op = LinearOperator::new(&a, mu).unwrap();
        green_column(&op, Site::ORIGIN, &ProblemSpec::new(mu).unwrap()).unwrap()
    };
    let (g1, g2) = (column(0.05), column(0.5));
    for (x, y) in g1.values().iter().zip(g2.values()) {
        assert!(x + 1e-10 >= *y);
    }
}

#[test]
fn chosen_box_truncation_is_negligible() {
    // Doubling the box past the chosen radius barely moves the probe value.
    let mu = 0.25;
    let r = choose_box_radius(mu, 3.0);
    let probe = Site::on_axis(0, 3);
    let value = |radius: usize| {
        let l = Lattice::new(2, radius, Boundary::Dirichlet).unwrap();
        let a = stochhom::ensemble::CoefficientField::constant(l, 1.0, 1.0).unwrap();
        let op = LinearOperator::new(&a, mu).unwrap();
        green_column(&op, Site::ORIGIN, &ProblemSpec::new(mu).unwrap()).unwrap().at(probe)
    };
    let (near, far) = (value(r), value(2 * r));
    assert!((near - far).abs() <= 1e-6 * far, "{near} vs {far}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solution_is_linear_and_sign_preserving(seed in any::<u64>(), s in -3.0f64..3.0, mu in 0.05f64..2.0) {
        let l = Lattice::new(2, 5, Boundary::Periodic).unwrap();
        let a = sample(&checkerboard(), &l, seed).unwrap();
        let op = LinearOperator::new(&a, mu).unwrap();
        let spec = ProblemSpec::new(mu).unwrap();
        let f = SiteField::from_fn(l, |x| if x.norm_sq() <= 4 { 1.0 } else { 0.0 });
        let u = solve(&op, &f, &spec).unwrap();
        let scaled = SiteField::from_values(l, f.values().iter().map(|v| s * v).collect()).unwrap();
        let us = solve(&op, &scaled, &spec).unwrap();
        let peak = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in u.values().iter().zip(us.values()) {
            prop_assert!(*x >= -1e-10 * peak);
            prop_assert!((s * x - y).abs() <= 1e-8 * peak * s.abs().max(1.0));
        }
        // Constant sources on a periodic box give the constant solution f / mu.
        let c = SiteField::from_fn(l, |_| 1.0);
        let uc = solve(&op, &c, &spec).unwrap();
        for v in uc.values() {
            prop_assert!((v - 1.0 / mu).abs() <= 1e-8 / mu);
        }
    }
}
