//! Runs one configuration and turns the results into tables, statistics
//! and band verdicts. Nothing here touches the filesystem.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{
    AnnealedConfig, BoundsExpConfig, ExperimentConfig, ExperimentKind, FluctExpConfig, LipschitzExpConfig,
    SensitivityExpConfig, SpectralGapExpConfig,
};
use super::output::{plot_table, Cell, Stat, Table};
use crate::annealed::{estimate_moments, exponent_check, fit_decay_exponent, high_moment_flatness, Quantity};
use crate::ensemble::sample;
use crate::error::Result;
use crate::fluctuations::{fluctuation_experiment, strong_vs_weak_gap, FluctuationResult, Mode};
use crate::green::{check_deterministic_bounds, GreenProbe};
use crate::lattice::{Boundary, Lattice, Site};
use crate::regularity::moment_boundedness_scan;
use crate::seed::{self, child_seed};
use crate::sensitivity::{sensitivity_bound_experiment, spectral_gap_check, Branch};
use crate::solver::{choose_box_radius, ProblemSpec};
use crate::stats::{self, Weighting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandStatus {
    Pass,
    Fail,
    /// Not applicable, e.g. a degenerate run.
    Skipped,
}

/// One declared acceptance band and its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub value: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub status: BandStatus,
}

impl Band {
    pub fn range(name: impl Into<String>, value: Option<f64>, lo: f64, hi: f64) -> Self {
        let status = match value {
            Some(v) if v >= lo && v <= hi => BandStatus::Pass,
            Some(_) => BandStatus::Fail,
            None => BandStatus::Fail,
        };
        Band {
            name: name.into(),
            value,
            lo: Some(lo),
            hi: Some(hi),
            status,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, hi: f64) -> Self {
        Band {
            status: if value <= hi { BandStatus::Pass } else { BandStatus::Fail },
            name: name.into(),
            value: Some(value),
            lo: None,
            hi: Some(hi),
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, lo: f64) -> Self {
        Band {
            status: if value >= lo { BandStatus::Pass } else { BandStatus::Fail },
            name: name.into(),
            value: Some(value),
            lo: Some(lo),
            hi: None,
        }
    }

    pub fn skipped(name: impl Into<String>) -> Self {
        Band {
            name: name.into(),
            value: None,
            lo: None,
            hi: None,
            status: BandStatus::Skipped,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != BandStatus::Fail
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub plots: Vec<Table>,
    pub stats: Vec<Stat>,
    pub fits: serde_json::Value,
    pub bands: Vec<Band>,
}

/// How per-sample seeds derive from the master seed, and the seeds
/// themselves, known before any work starts.
pub fn sample_seeds(cfg: &ExperimentConfig) -> (String, Vec<u64>) {
    let c = cfg.common();
    let m = c.master_seed;
    let flat = |range: std::ops::Range<u64>| range.map(|i| child_seed(m, i)).collect::<Vec<_>>();
    match cfg {
        ExperimentConfig::SpectralGap(g) => (
            "sample i: child_seed(master_seed, i), i from first_sample over all batches".into(),
            flat(g.first_sample..g.first_sample + (g.batches * g.n_samples) as u64),
        ),
        ExperimentConfig::Fluct(f) => (
            "size k, sample i: child_seed(child_seed(master_seed, k), i), listed size-major".into(),
            (0..f.sizes.len() as u64)
                .flat_map(|k| (0..f.n_samples as u64).map(move |i| child_seed(child_seed(m, k), i)))
                .collect(),
        ),
        ExperimentConfig::LipschitzScan(l) => (
            "scale R, sample i: child_seed(child_seed(master_seed, R), i), listed R-major".into(),
            l.r_list
                .iter()
                .flat_map(|&r| (0..l.n_samples as u64).map(move |i| child_seed(child_seed(m, r as u64), i)))
                .collect(),
        ),
        _ => ("sample i: child_seed(master_seed, i)".into(), flat(0..c.n_samples as u64)),
    }
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Artifacts> {
    match cfg {
        ExperimentConfig::AnnealedMoments(c) => annealed(c),
        ExperimentConfig::Sensitivity(c) => sensitivity(c),
        ExperimentConfig::SpectralGap(c) => spectral_gap(c),
        ExperimentConfig::Fluct(c) => fluct(c),
        ExperimentConfig::LipschitzScan(c) => lipschitz(c),
        ExperimentConfig::DeterministicBounds(c) => bounds(c),
    }
}

fn site_cells(s: Site, dim: usize) -> Vec<Cell> {
    (0..3).map(|k| if k < dim { Cell::I(s.0[k]) } else { Cell::Empty }).collect()
}

fn annealed(c: &AnnealedConfig) -> Result<Artifacts> {
    let run = estimate_moments(&c.ensemble, c.dim, c.mu, &c.radii, &c.q_list, c.n_samples, c.master_seed, &c.options())?;
    let t = &run.table;
    let mut moments = Table::new("moments", vec!["radius", "quantity", "q", "moment", "ci_lo", "ci_hi", "n"]);
    let mut stats_out = Vec::new();
    let mut plots = Vec::new();
    for which in [Quantity::Grad, Quantity::Mixed] {
        let mut plot = plot_table(which.name());
        for (qi, &q) in t.q_list.iter().enumerate() {
            for row in &t.rows {
                let cell = row.cells(which)[qi];
                moments.push(vec![
                    row.radius.into(),
                    which.name().into(),
                    q.into(),
                    cell.moment.into(),
                    cell.ci_lo.into(),
                    cell.ci_hi.into(),
                    row.n.into(),
                ]);
                plot.push(vec![format!("q={q}").into(), row.radius.into(), cell.moment.into(), cell.ci_lo.into(), cell.ci_hi.into()]);
                stats_out.push(Stat::with_ci(
                    format!("moment.{}.q{q}.r{}", which.name(), row.radius),
                    cell.moment,
                    cell.ci_lo,
                    cell.ci_hi,
                ));
            }
        }
        plots.push(plot);
    }
    let mut samples = Table::new("samples", vec!["sample", "seed", "radius", "g_value", "grad_avg", "mixed_avg"]);
    for (i, p) in run.probes.iter().enumerate() {
        for e in &p.entries {
            samples.push(vec![i.into(), p.seed.into(), e.radius.into(), e.g_value.into(), e.grad_avg.into(), e.mixed_avg.into()]);
        }
    }

    let mut fits = Vec::new();
    let mut exps = std::collections::BTreeMap::new();
    for which in [Quantity::Grad, Quantity::Mixed] {
        for &q in &t.q_list {
            let fit = fit_decay_exponent(t, q, which, c.rate_model, Weighting::Uniform)?;
            stats_out.push(Stat::new(format!("exponent.{}.q{q}", which.name()), fit.exponent));
            exps.insert((which.name(), q.to_bits()), fit.exponent);
            fits.push(json!({"quantity": which.name(), "q": q, "fit": fit}));
        }
    }

    let mut bands = Vec::new();
    let b = c.bands;
    let grad = exponent_check(t, 2.0, Quantity::Grad, c.rate_model, b.grad)?;
    bands.push(Band::range("exponent.grad.q2", Some(grad.fit.exponent), grad.expected - b.grad, grad.expected + b.grad));
    if t.q_list.contains(&1.0) {
        let mixed = exponent_check(t, 1.0, Quantity::Mixed, c.rate_model, b.mixed)?;
        bands.push(Band::range(
            "exponent.mixed.q1",
            Some(mixed.fit.exponent),
            mixed.expected - b.mixed,
            mixed.expected + b.mixed,
        ));
    } else {
        bands.push(Band::skipped("exponent.mixed.q1"));
    }
    let mut flat = Vec::new();
    let q_max = t.q_list.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for which in [Quantity::Grad, Quantity::Mixed] {
        let base = exps[&(which.name(), 2.0f64.to_bits())];
        for &q in t.q_list.iter().filter(|&&q| q > 2.0) {
            let e = exps[&(which.name(), q.to_bits())];
            bands.push(Band::at_most(format!("exponent_shift.{}.q{q}", which.name()), (e - base).abs(), b.high_q));
        }
        if q_max > 2.0 {
            let f = high_moment_flatness(t, (2.0, q_max), which)?;
            bands.push(Band::at_most(format!("flatness_growth.{}", which.name()), f.growth, b.flatness_growth));
            stats_out.push(Stat::new(format!("flatness_growth.{}", which.name()), f.growth));
            flat.push(f);
        }
    }
    Ok(Artifacts {
        tables: vec![moments, samples],
        plots,
        stats: stats_out,
        fits: json!({"box_radius": run.box_radius, "exponent_fits": fits, "flatness": flat}),
        bands,
    })
}

fn sensitivity(c: &SensitivityExpConfig) -> Result<Artifacts> {
    let cfg = c.module_config();
    let rep = sensitivity_bound_experiment(&c.ensemble, &cfg, c.master_seed)?;
    let mut records = Table::new(
        "records",
        vec!["sample", "x_0", "x_1", "x_2", "z_0", "z_1", "z_2", "distance", "branch", "osc_lower", "kernel", "ratio"],
    );
    for r in &rep.records {
        let mut row: Vec<Cell> = vec![r.sample.into()];
        row.extend(site_cells(r.x, c.dim));
        row.extend(site_cells(r.z, c.dim));
        row.extend([
            r.distance.into(),
            branch_name(r.branch).into(),
            r.osc_lower.into(),
            r.kernel_value.into(),
            r.ratio.into(),
        ]);
        records.push(row);
    }
    // Median ratio per distance with the 5-95 percentile range.
    let mut plot = plot_table("ratio");
    let mut dists: Vec<f64> = rep.records.iter().map(|r| r.distance).collect();
    dists.sort_by(|a, b| a.total_cmp(b));
    dists.dedup();
    for d in dists {
        let rs: Vec<f64> = rep.records.iter().filter(|r| r.distance == d).map(|r| r.ratio).collect();
        let br = branch_name(rep.records.iter().find(|r| r.distance == d).expect("present").branch);
        plot.push(vec![
            br.into(),
            d.into(),
            stats::median(&rs).into(),
            stats::percentile(&rs, 0.05).into(),
            stats::percentile(&rs, 0.95).into(),
        ]);
    }
    let stats_out = vec![
        Stat::new("median_ratio", rep.median_ratio),
        Stat::new("p99_ratio", rep.p99_ratio),
        Stat::new("max_ratio", rep.max_ratio),
        Stat::new("spread", rep.spread()),
        Stat::new("records", rep.records.len() as f64),
        Stat::new("near", rep.near as f64),
        Stat::new("far", rep.far as f64),
    ];
    let bands = vec![
        Band::at_least("records", rep.records.len() as f64, c.bands.min_records as f64),
        Band::at_least("branches_present", (rep.near.min(rep.far)) as f64, 1.0),
        Band::at_most("p99_over_median", rep.spread(), c.bands.max_spread),
    ];
    Ok(Artifacts {
        tables: vec![records],
        plots: vec![plot],
        stats: stats_out,
        fits: json!({
            "median_ratio": rep.median_ratio,
            "p99_ratio": rep.p99_ratio,
            "max_ratio": rep.max_ratio,
            "near": rep.near,
            "far": rep.far,
            "near_threshold": rep.near_threshold,
            "pairs": cfg.pairs,
        }),
        bands,
    })
}

fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Near => "near",
        Branch::Far => "far",
    }
}

fn spectral_gap(c: &SpectralGapExpConfig) -> Result<Artifacts> {
    let reports = (0..c.batches)
        .map(|b| spectral_gap_check(c.functional, &c.ensemble, &c.module_config(b), c.master_seed))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(
        "batches",
        vec![
            "batch", "first_sample", "n", "mean", "variance", "variance_se", "osc_sum", "osc_sum_se", "ratio", "ratio_se",
            "analytic", "max_shell", "truncated_by_box",
        ],
    );
    let mut plot = plot_table("ratio");
    let mut stats_out = Vec::new();
    let mut bands = Vec::new();
    for (b, r) in reports.iter().enumerate() {
        let first = c.module_config(b).first_sample;
        table.push(vec![
            b.into(),
            first.into(),
            r.n.into(),
            r.mean.into(),
            r.variance.into(),
            r.variance_se.into(),
            r.osc_sum.into(),
            r.osc_sum_se.into(),
            r.ratio.into(),
            r.ratio_se.into(),
            r.analytic.into(),
            r.max_shell.into(),
            r.truncated_by_box.into(),
        ]);
        let half = 1.96 * r.ratio_se;
        plot.push(vec!["ratio".into(), b.into(), r.ratio.into(), (r.ratio - half).into(), (r.ratio + half).into()]);
        stats_out.push(Stat::with_ci(format!("ratio.b{b}"), r.ratio, r.ratio - half, r.ratio + half));
        stats_out.push(Stat::new(format!("variance.b{b}"), r.variance));
        stats_out.push(Stat::new(format!("osc_sum.b{b}"), r.osc_sum));
        if let Some(a) = r.analytic {
            let tol = c.bands.sigma * r.ratio_se;
            bands.push(Band::range(format!("analytic.b{b}"), Some(r.ratio), a - tol, a + tol));
        }
    }
    let r0 = reports[0].ratio;
    for (b, r) in reports.iter().enumerate().skip(1) {
        let rel = if r0 == 0.0 { if r.ratio == 0.0 { 0.0 } else { f64::INFINITY } } else { (r.ratio / r0 - 1.0).abs() };
        bands.push(Band::at_most(format!("batch_agreement.b{b}"), rel, c.bands.batch_tolerance));
    }
    Ok(Artifacts {
        tables: vec![table],
        plots: vec![plot],
        stats: stats_out,
        fits: json!({ "batches": reports }),
        bands,
    })
}

fn fluct(c: &FluctExpConfig) -> Result<Artifacts> {
    let run = fluctuation_experiment(&c.ensemble, &c.module_config(), c.master_seed)?;
    let mut sizes = Table::new(
        "sizes",
        vec![
            "n", "mu_n", "strong", "strong_deflated", "strong_ci_lo", "strong_ci_hi", "weak", "weak_ci_lo", "weak_ci_hi",
            "samples",
        ],
    );
    let mut stats_out = Vec::new();
    for (s, w) in run.strong.sizes.iter().zip(&run.weak.sizes) {
        sizes.push(vec![
            s.n.into(),
            s.mu_n.into(),
            s.value.into(),
            s.deflated.into(),
            s.ci_lo.into(),
            s.ci_hi.into(),
            w.value.into(),
            w.ci_lo.into(),
            w.ci_hi.into(),
            s.samples.into(),
        ]);
        stats_out.push(Stat::with_ci(format!("strong.n{}", s.n), s.value, s.ci_lo, s.ci_hi));
        stats_out.push(Stat::with_ci(format!("weak.n{}", w.n), w.value, w.ci_lo, w.ci_hi));
    }
    let plot = |r: &FluctuationResult| {
        let mut t = plot_table(if r.mode == Mode::Strong { "strong" } else { "weak" });
        for s in &r.sizes {
            t.push(vec!["raw".into(), s.n.into(), s.value.into(), s.ci_lo.into(), s.ci_hi.into()]);
        }
        if r.mode == Mode::Strong {
            for s in &r.sizes {
                let f = s.value / s.deflated;
                t.push(vec!["deflated".into(), s.n.into(), s.deflated.into(), (s.ci_lo / f).into(), (s.ci_hi / f).into()]);
            }
        }
        t
    };
    let gap = strong_vs_weak_gap(&run.strong, &run.weak)?;
    if let Some(s) = run.strong.primary_slope() {
        stats_out.push(Stat::new("slope.strong", s));
    }
    if let Some(w) = run.weak.primary_slope() {
        stats_out.push(Stat::new("slope.weak", w));
    }
    if let Some(g) = gap.gap {
        stats_out.push(Stat::new("gap", g));
    }

    let primary = if c.experiment == ExperimentKind::StrongFluct { &run.strong } else { &run.weak };
    let label = if c.experiment == ExperimentKind::StrongFluct { "slope.strong" } else { "slope.weak" };
    let mut bands = Vec::new();
    if let Some([lo, hi]) = c.slope_band() {
        bands.push(if primary.degenerate {
            Band::skipped(label)
        } else {
            Band::range(label, primary.primary_slope(), lo, hi)
        });
    }
    if let Some([lo, hi]) = c.gap_band() {
        bands.push(if gap.degenerate { Band::skipped("gap") } else { Band::range("gap", gap.gap, lo, hi) });
    }
    Ok(Artifacts {
        tables: vec![sizes],
        plots: vec![plot(&run.strong), plot(&run.weak)],
        stats: stats_out,
        fits: json!({
            "strong": {"fit_raw": run.strong.fit_raw, "fit_deflated": run.strong.fit_deflated,
                       "degenerate": run.strong.degenerate, "bias_corrected": run.strong.bias_corrected},
            "weak": {"fit_raw": run.weak.fit_raw, "degenerate": run.weak.degenerate},
            "gap": gap,
        }),
        bands,
    })
}

fn lipschitz(c: &LipschitzExpConfig) -> Result<Artifacts> {
    let cfg = c.module_config();
    let rep = moment_boundedness_scan(&c.ensemble, &cfg, c.master_seed)?;
    let mut cells = Table::new("moments", vec!["r", "fraction", "x_0", "mu", "q", "moment"]);
    let mut plot = plot_table("moments");
    let mut stats_out = Vec::new();
    for cell in &rep.cells {
        for &(q, m) in &cell.moments {
            cells.push(vec![cell.r.into(), cell.fraction.into(), cell.x.0[0].into(), cell.mu.into(), q.into(), m.into()]);
            plot.push(vec![format!("fraction={},q={q}", cell.fraction).into(), cell.r.into(), m.into(), Cell::Empty, Cell::Empty]);
            stats_out.push(Stat::new(format!("moment.r{}.f{}.q{q}", cell.r, cell.fraction), m));
        }
    }
    let mut records = Table::new("records", vec!["r", "x_0", "sample", "quotient", "numerator", "denominator"]);
    let per_r = cfg.probe_fractions.len() * cfg.n_samples;
    for (k, rec) in rep.records.iter().enumerate() {
        let sample = (k % per_r) / cfg.probe_fractions.len();
        records.push(vec![
            rec.r.into(),
            rec.x.0[0].into(),
            sample.into(),
            rec.quotient.into(),
            rec.numerator.into(),
            rec.denominator.into(),
        ]);
    }
    for f in &rep.flatness {
        stats_out.push(Stat::new(format!("growth.f{}.q{}", f.fraction, f.q), f.last_over_first));
    }
    let band = match rep.worst_growth(c.bands.q) {
        Some(g) => Band::at_most(format!("growth.q{}", c.bands.q), g, c.bands.max_growth),
        None => Band::skipped(format!("growth.q{}", c.bands.q)),
    };
    Ok(Artifacts {
        tables: vec![cells, records],
        plots: vec![plot],
        stats: stats_out,
        fits: json!({ "flatness": rep.flatness }),
        bands: vec![band],
    })
}

fn bounds(c: &BoundsExpConfig) -> Result<Artifacts> {
    let ens = c.ensemble.validated()?;
    let r_max = *c.radii.iter().max().expect("validated") as f64;
    let box_radius = c.box_radius.unwrap_or_else(|| choose_box_radius(c.mu, r_max));
    let lattice = Lattice::new(c.dim, box_radius, Boundary::Dirichlet)?;
    let problem = ProblemSpec::new(c.mu)?;
    let probes: Vec<Site> = c.radii.iter().map(|&r| Site::on_axis(0, r as i64)).collect();
    let results = (0..c.n_samples)
        .into_par_iter()
        .map(|i| {
            let s = child_seed(c.master_seed, i as u64);
            let a = sample(&ens, &lattice, child_seed(s, seed::stream::FIELD))?;
            let probe = GreenProbe::compute(&a, s, c.mu, &probes, &c.annulus_radii, c.l, &problem)?;
            let rep = check_deterministic_bounds(&probe, c.tolerance)?;
            Ok((probe, rep))
        })
        .enumerate()
        .map(|(i, r): (usize, Result<_>)| r.map_err(|e| e.in_sample(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(
        "bounds",
        vec!["sample", "seed", "c_pointwise", "rate_pointwise", "c_annulus", "rate_annulus", "min_value", "negative"],
    );
    let mut values = Table::new("probes", vec!["sample", "radius", "g_value", "grad_avg", "mixed_avg"]);
    let mut negatives = 0usize;
    for (i, (probe, rep)) in results.iter().enumerate() {
        table.push(vec![
            i.into(),
            rep.seed.into(),
            rep.pointwise.c_const.into(),
            rep.pointwise.rate.into(),
            rep.annulus.map(|a| a.c_const).into(),
            rep.annulus.map(|a| a.rate).into(),
            probe.min_value.into(),
            rep.negative.into(),
        ]);
        for e in &probe.entries {
            values.push(vec![i.into(), e.radius.into(), e.g_value.into(), e.grad_avg.into(), e.mixed_avg.into()]);
        }
        negatives += rep.negative as usize;
    }
    let mut plot = plot_table("green");
    for (k, &r) in c.radii.iter().enumerate() {
        let g: Vec<f64> = results.iter().map(|(p, _)| p.entries[k].g_value).collect();
        plot.push(vec![
            "g_value".into(),
            r.into(),
            stats::median(&g).into(),
            stats::percentile(&g, 0.05).into(),
            stats::percentile(&g, 0.95).into(),
        ]);
    }
    let cs: Vec<f64> = results.iter().map(|(_, r)| r.pointwise.c_const).collect();
    let rates: Vec<f64> = results.iter().map(|(_, r)| r.pointwise.rate).collect();
    Ok(Artifacts {
        tables: vec![table, values],
        plots: vec![plot],
        stats: vec![
            Stat::new("c_pointwise.max", cs.iter().cloned().fold(0.0, f64::max)),
            Stat::new("rate_pointwise.median", stats::median(&rates)),
            Stat::new("negative_samples", negatives as f64),
        ],
        fits: json!({ "box_radius": box_radius, "reports": results.iter().map(|(_, r)| r).collect::<Vec<_>>() }),
        bands: vec![Band::at_most("negative_samples", negatives as f64, 0.0)],
    })
}
