//! Monte Carlo annealed moments of `(∇G)_L(x, 0)` and `(∇∇G)_L(x, 0)` and
//! regression of their decay exponents.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{sample, EnsembleSpec};
use crate::error::{Error, Result};
use crate::green::{GreenProbe, DEFAULT_L};
use crate::lattice::{Boundary, Lattice, Site};
use crate::seed::{self, child_seed};
use crate::solver::{choose_box_radius, ProblemSpec};
use crate::stats::{self, RateModel, ScalingFit, Weighting};

pub const MIN_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `(∇G)_L`
    Grad,
    /// `(∇∇G)_L`
    Mixed,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Grad => "grad",
            Quantity::Mixed => "mixed",
        }
    }

    /// Decay exponent predicted in dimension `dim`.
    pub fn expected_exponent(self, dim: usize) -> f64 {
        match self {
            Quantity::Grad => -(dim as f64 - 1.0),
            Quantity::Mixed => -(dim as f64),
        }
    }

    fn of(self, e: &crate::green::ProbeEntry) -> f64 {
        match self {
            Quantity::Grad => e.grad_avg,
            Quantity::Mixed => e.mixed_avg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCell {
    pub q: f64,
    pub moment: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl MomentCell {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }

    /// Variance of `log moment` implied by the 95% interval.
    pub fn log_variance(&self) -> f64 {
        (self.half_width() / (1.959_963_984_540_054 * self.moment)).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub radius: f64,
    pub n: usize,
    pub grad: Vec<MomentCell>,
    pub mixed: Vec<MomentCell>,
}

impl MomentRow {
    pub fn cells(&self, which: Quantity) -> &[MomentCell] {
        match which {
            Quantity::Grad => &self.grad,
            Quantity::Mixed => &self.mixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub ensemble: String,
    pub dim: usize,
    pub mu: f64,
    pub q_list: Vec<f64>,
    pub n: usize,
    pub rows: Vec<MomentRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealedOptions {
    pub l: usize,
    /// Overrides the box radius policy of [`choose_box_radius`].
    pub box_radius: Option<usize>,
    pub tolerance: f64,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
}

impl Default for AnnealedOptions {
    fn default() -> Self {
        AnnealedOptions {
            l: DEFAULT_L,
            box_radius: None,
            tolerance: 1e-10,
            bootstrap_resamples: 1000,
            ci_level: 0.95,
        }
    }
}

/// Per-sample probes together with the table built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealedRun {
    pub table: MomentTable,
    pub probes: Vec<GreenProbe>,
    pub seeds: Vec<u64>,
    pub box_radius: usize,
}

fn validate_radii(radii: &[usize], l: usize) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::param("radius list is empty"));
    }
    if let Some(r) = radii.iter().find(|&&r| r < 3 * l) {
        return Err(Error::param(format!("probe radius {r} is below 3L = {}", 3 * l)));
    }
    Ok(())
}

fn validate_q(q_list: &[f64]) -> Result<()> {
    if q_list.is_empty() || q_list.iter().any(|q| !(*q >= 1.0 && q.is_finite())) {
        return Err(Error::param("moments need q >= 1"));
    }
    Ok(())
}

/// Samples `n` fields with child seeds `0..n` of `master_seed`, probes each
/// along `e_1` at `radii` and tabulates the `q`-th moments.
#[allow(clippy::too_many_arguments)]
pub fn estimate_moments(
    spec: &EnsembleSpec,
    dim: usize,
    mu: f64,
    radii: &[usize],
    q_list: &[f64],
    n: usize,
    master_seed: u64,
    opts: &AnnealedOptions,
) -> Result<AnnealedRun> {
    let spec = spec.validated()?;
    validate_radii(radii, opts.l)?;
    validate_q(q_list)?;
    if n < MIN_SAMPLES {
        return Err(Error::param(format!(
            "annealed moments need N >= {MIN_SAMPLES}, got {n}"
        )));
    }
    let problem = ProblemSpec::new(mu)?.with_tolerance(opts.tolerance)?;
    let r_max = *radii.iter().max().expect("nonempty") as f64;
    let box_radius = opts
        .box_radius
        .unwrap_or_else(|| choose_box_radius(mu, r_max));
    let lattice = Lattice::new(dim, box_radius, Boundary::Dirichlet)?;
    let probes_at: Vec<Site> = radii.iter().map(|&r| Site::on_axis(0, r as i64)).collect();
    let seeds: Vec<u64> = (0..n as u64).map(|i| child_seed(master_seed, i)).collect();

    let probes = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            sample(&spec, &lattice, child_seed(s, seed::stream::FIELD))
                .and_then(|a| GreenProbe::compute(&a, s, mu, &probes_at, &[], opts.l, &problem))
                .map_err(|e| e.in_sample(i))
        })
        .collect::<Result<Vec<_>>>()?;

    let table = MomentTable::from_probes(spec.kind_name(), mu, q_list, &probes, opts, master_seed)?;
    Ok(AnnealedRun {
        table,
        probes,
        seeds,
        box_radius,
    })
}

impl MomentTable {
    /// Builds the table from per-sample probes, reducing in sample order.
    pub fn from_probes(
        ensemble: &str,
        mu: f64,
        q_list: &[f64],
        probes: &[GreenProbe],
        opts: &AnnealedOptions,
        master_seed: u64,
    ) -> Result<Self> {
        validate_q(q_list)?;
        let first = probes
            .first()
            .ok_or_else(|| Error::param("no samples to tabulate"))?;
        let n = probes.len();
        let boot_seed = child_seed(master_seed, u64::MAX - seed::stream::BOOTSTRAP);
        let rows = first
            .entries
            .iter()
            .enumerate()
            .map(|(j, entry)| {
                let cells = |which: Quantity| -> Vec<MomentCell> {
                    let xs: Vec<f64> = probes.iter().map(|p| which.of(&p.entries[j])).collect();
                    q_list
                        .iter()
                        .enumerate()
                        .map(|(k, &q)| {
                            let key = ((j as u64) << 16) | ((k as u64) << 1) | which as u64;
                            let (ci_lo, ci_hi) = stats::bootstrap_ci(
                                &xs,
                                |v| stats::moment(v, q),
                                opts.bootstrap_resamples,
                                opts.ci_level,
                                child_seed(boot_seed, key),
                            );
                            MomentCell {
                                q,
                                moment: stats::moment(&xs, q),
                                ci_lo,
                                ci_hi,
                            }
                        })
                        .collect()
                };
                MomentRow {
                    radius: entry.radius,
                    n,
                    grad: cells(Quantity::Grad),
                    mixed: cells(Quantity::Mixed),
                }
            })
            .collect();
        let table = MomentTable {
            ensemble: ensemble.to_string(),
            dim: first.dim,
            mu,
            q_list: q_list.to_vec(),
            n,
            rows,
        };
        table.check_invariants()?;
        Ok(table)
    }

    /// Jensen monotonicity in `q`, nonnegative intervals, equal `N`.
    pub fn check_invariants(&self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.q_list.len()).collect();
        order.sort_by(|&a, &b| self.q_list[a].total_cmp(&self.q_list[b]));
        for row in &self.rows {
            if row.n != self.n {
                return Err(Error::Mismatch("rows carry different sample counts".into()));
            }
            for which in [Quantity::Grad, Quantity::Mixed] {
                let cells = row.cells(which);
                for w in order.windows(2) {
                    let (a, b) = (cells[w[0]].moment, cells[w[1]].moment);
                    if a > b * (1.0 + 1e-12) {
                        return Err(Error::Mismatch(format!(
                            "{} moments decrease in q at radius {}",
                            which.name(),
                            row.radius
                        )));
                    }
                }
                if cells.iter().any(|c| !(c.ci_hi >= c.ci_lo)) {
                    return Err(Error::Mismatch("negative interval width".into()));
                }
            }
        }
        Ok(())
    }

    fn q_index(&self, q: f64) -> Result<usize> {
        self.q_list
            .iter()
            .position(|&v| (v - q).abs() < 1e-12)
            .ok_or_else(|| Error::MissingMoment(format!("q = {q}")))
    }

    pub fn radii(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.radius).collect()
    }

    /// Moment column for `(q, which)`.
    pub fn column(&self, q: f64, which: Quantity) -> Result<Vec<MomentCell>> {
        let k = self.q_index(q)?;
        Ok(self.rows.iter().map(|r| r.cells(which)[k]).collect())
    }
}

/// Regression of the `q`-th moment curve of `which` against `log |x|`.
pub fn fit_decay_exponent(
    table: &MomentTable,
    q: f64,
    which: Quantity,
    rate_model: RateModel,
    weighting: Weighting,
) -> Result<ScalingFit> {
    let cells = table.column(q, which)?;
    let values: Vec<f64> = cells.iter().map(|c| c.moment).collect();
    let log_var: Vec<f64> = cells.iter().map(|c| c.log_variance()).collect();
    stats::fit_scaling(&table.radii(), &values, table.mu, rate_model, weighting, Some(&log_var))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdTolerances {
    pub grad: f64,
    pub mixed: f64,
}

impl Default for DdTolerances {
    fn default() -> Self {
        DdTolerances {
            grad: 0.25,
            mixed: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentCheck {
    pub which: Quantity,
    pub q: f64,
    pub fit: ScalingFit,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdReport {
    /// Second moment of `(∇G)_L`, exponent `d - 1`.
    pub grad: ExponentCheck,
    /// First moment of `(∇∇G)_L`, exponent `d`.
    pub mixed: ExponentCheck,
}

pub fn exponent_check(
    table: &MomentTable,
    q: f64,
    which: Quantity,
    rate_model: RateModel,
    tolerance: f64,
) -> Result<ExponentCheck> {
    let fit = fit_decay_exponent(table, q, which, rate_model, Weighting::Uniform)?;
    let expected = which.expected_exponent(table.dim);
    Ok(ExponentCheck {
        which,
        q,
        pass: (fit.exponent - expected).abs() <= tolerance,
        fit,
        expected,
        tolerance,
    })
}

/// Checks the second moment of `(∇G)_L` and the first moment of `(∇∇G)_L`.
pub fn dd_moment_check(
    table: &MomentTable,
    rate_model: RateModel,
    tol: DdTolerances,
) -> Result<DdReport> {
    table.q_index(2.0)?;
    table.q_index(1.0)?;
    Ok(DdReport {
        grad: exponent_check(table, 2.0, Quantity::Grad, rate_model, tol.grad)?,
        mixed: exponent_check(table, 1.0, Quantity::Mixed, rate_model, tol.mixed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub which: Quantity,
    pub q_low: f64,
    pub q_high: f64,
    /// `(radius, moment_high / moment_low)`.
    pub ratios: Vec<(f64, f64)>,
    pub max_ratio: f64,
    /// Ratio at the largest radius over the ratio at the smallest.
    pub growth: f64,
}

/// Ratio of the `q_high`-th to the `q_low`-th moment per radius.
pub fn high_moment_flatness(
    table: &MomentTable,
    q_pair: (f64, f64),
    which: Quantity,
) -> Result<FlatnessReport> {
    if table.rows.len() < 2 {
        return Err(Error::DegenerateFit(
            "flatness needs at least two radii".into(),
        ));
    }
    let lo = table.column(q_pair.0, which)?;
    let hi = table.column(q_pair.1, which)?;
    let ratios: Vec<(f64, f64)> = table
        .rows
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(r, (l, h))| (r.radius, h.moment / l.moment))
        .collect();
    let max_ratio = ratios.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let first = ratios.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("rows");
    let last = ratios.iter().max_by(|a, b| a.0.total_cmp(&b.0)).expect("rows");
    Ok(FlatnessReport {
        which,
        q_low: q_pair.0,
        q_high: q_pair.1,
        max_ratio,
        growth: last.1 / first.1,
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupMoments {
    pub grid: Vec<f64>,
    /// `(q, <sup^q>^{1/q})`
    pub grad: Vec<(f64, f64)>,
    pub mixed: Vec<(f64, f64)>,
    /// Radius at which each sample attains its mixed supremum.
    pub mixed_argmax: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSupReport {
    pub beta: f64,
    pub full: SupMoments,
    /// Same statistic on the grid without its largest radius.
    pub reduced: SupMoments,
    /// `|full - reduced| / reduced` per `q` for the mixed supremum.
    pub mixed_change: Vec<(f64, f64)>,
    pub grad_change: Vec<(f64, f64)>,
}

fn sup_moments(probes: &[GreenProbe], beta: f64, grid: &[f64], q_list: &[f64]) -> Result<SupMoments> {
    if grid.is_empty() {
        return Err(Error::param("empty probe grid"));
    }
    let mut grad_sup = Vec::with_capacity(probes.len());
    let mut mixed_sup = Vec::with_capacity(probes.len());
    let mut mixed_argmax = Vec::with_capacity(probes.len());
    for p in probes {
        let d = p.dim as f64;
        let mut g = f64::NEG_INFINITY;
        let mut m = (f64::NEG_INFINITY, 0.0);
        for e in &p.entries {
            if !grid.iter().any(|r| (r - e.radius).abs() < 1e-9) {
                continue;
            }
            g = g.max(e.radius.powf(d - 1.0 - beta) * e.grad_avg);
            let w = e.radius.powf(d - beta) * e.mixed_avg;
            if w > m.0 {
                m = (w, e.radius);
            }
        }
        if !g.is_finite() {
            return Err(Error::param("probe grid does not match any probe radius"));
        }
        grad_sup.push(g);
        mixed_sup.push(m.0);
        mixed_argmax.push(m.1);
    }
    Ok(SupMoments {
        grid: grid.to_vec(),
        grad: q_list.iter().map(|&q| (q, stats::moment(&grad_sup, q))).collect(),
        mixed: q_list.iter().map(|&q| (q, stats::moment(&mixed_sup, q))).collect(),
        mixed_argmax,
    })
}

/// Moments of `sup_x |x|^{d-β}(∇∇G)_L(x,0)` and `sup_x |x|^{d-1-β}(∇G)_L(x,0)`
/// over `grid`, and their change when the largest grid radius is dropped.
pub fn weighted_sup_moment(
    probes: &[GreenProbe],
    beta: f64,
    grid: &[f64],
    q_list: &[f64],
) -> Result<WeightedSupReport> {
    if !(beta > 0.0) {
        return Err(Error::param(format!("beta must be positive, got {beta}")));
    }
    if grid.len() < 2 {
        return Err(Error::param("probe grid needs at least two radii"));
    }
    validate_q(q_list)?;
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let full = sup_moments(probes, beta, &sorted, q_list)?;
    let reduced = sup_moments(probes, beta, &sorted[..sorted.len() - 1], q_list)?;
    let change = |a: &[(f64, f64)], b: &[(f64, f64)]| -> Vec<(f64, f64)> {
        a.iter()
            .zip(b)
            .map(|(f, r)| (f.0, (f.1 - r.1).abs() / r.1))
            .collect()
    };
    Ok(WeightedSupReport {
        beta,
        mixed_change: change(&full.mixed, &reduced.mixed),
        grad_change: change(&full.grad, &reduced.grad),
        full,
        reduced,
    })
}
