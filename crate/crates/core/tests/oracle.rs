//! `solve` against dense LU on small random boxes.

mod common;

use common::{ensembles, oracle_cases};

#[test]
fn solve_matches_dense_lu() {
    for (k, (name, spec)) in ensembles().into_iter().enumerate() {
        let cases = oracle_cases(&spec, name, 50, 100 + k as u64);
        assert!(cases.iter().any(|c| c.dim == 3) && cases.iter().any(|c| c.radius == 1));
        for c in &cases {
            assert!(
                c.error <= 1e-9,
                "{} d={} r={} {:?} mu={}: error {}",
                c.ensemble,
                c.dim,
                c.radius,
                c.boundary,
                c.mu,
                c.error
            );
        }
    }
}
