use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stochhom::ensemble::{sample, EnsembleSpec};
use stochhom::green::GreenColumns;
use stochhom::lattice::{Boundary, Lattice, Site, SiteField};
use stochhom::solver::{solve, LinearOperator, Preconditioner, ProblemSpec};

fn operator(dim: usize, radius: usize, boundary: Boundary, mu: f64) -> LinearOperator {
    let l = Lattice::new(dim, radius, boundary).unwrap();
    let spec = EnsembleSpec::checkerboard(0.25, 0.25, 1.0, 0.5).unwrap();
    LinearOperator::new(&sample(&spec, &l, 1).unwrap(), mu).unwrap()
}

fn apply(c: &mut Criterion) {
    let mut g = c.benchmark_group("apply");
    for (dim, radius) in [(2, 64), (2, 256), (3, 24)] {
        let op = operator(dim, radius, Boundary::Periodic, 0.1);
        let u = vec![1.0; op.lattice().num_sites()];
        let mut out = vec![0.0; u.len()];
        g.bench_function(BenchmarkId::from_parameter(format!("d{dim}_r{radius}")), |b| {
            b.iter(|| op.apply_into(std::hint::black_box(&u), &mut out))
        });
    }
    g.finish();
}

fn solve_bump(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    for mu in [1.0, 0.01] {
        for pc in [Preconditioner::None, Preconditioner::Spectral] {
            let op = operator(2, 64, Boundary::Dirichlet, mu);
            let f = SiteField::from_fn(*op.lattice(), |x| if x.norm_sq() <= 9 { 1.0 } else { 0.0 });
            let spec = ProblemSpec::new(mu).unwrap().with_preconditioner(pc);
            g.bench_function(BenchmarkId::new(format!("{pc:?}"), mu), |b| b.iter(|| solve(&op, &f, &spec).unwrap()));
        }
    }
    g.finish();
}

fn green_columns(c: &mut Criterion) {
    let mut g = c.benchmark_group("green_columns");
    g.sample_size(10);
    let mu = 0.01;
    let op = operator(2, 80, Boundary::Dirichlet, mu);
    let spec = ProblemSpec::new(mu).unwrap();
    g.bench_function("d2_r80_l1", |b| b.iter(|| GreenColumns::compute(&op, Site::ORIGIN, 1, &spec).unwrap()));
    g.finish();
}

criterion_group!(benches, apply, solve_bump, green_columns);
criterion_main!(benches);
