//! End-to-end runs through the experiment layer on small configurations.

use std::collections::BTreeMap;
use std::path::Path;

use stochhom::experiment::{self, compare_runs, parse_config_str, BandStatus, ExperimentError, RunOptions, RunStatus, MANIFEST_NAME};

const CHECKER: &str = r#"{"kind": "checkerboard", "lambda": 0.25, "lo": 0.25, "hi": 1.0, "p_hi": 0.5}"#;

fn annealed(n: usize) -> String {
    format!(
        r#"{{"experiment": "annealed_moments", "ensemble": {CHECKER}, "dim": 2, "n_samples": {n},
            "master_seed": 5, "mu": 0.25, "radii": [3, 4, 6, 8], "q_list": [1, 2, 4]}}"#
    )
}

fn small_configs() -> Vec<(&'static str, String)> {
    vec![
        ("annealed", annealed(50)),
        (
            "sensitivity",
            format!(
                r#"{{"experiment": "sensitivity", "ensemble": {CHECKER}, "dim": 2, "n_samples": 4, "master_seed": 2,
                    "mu": 0.5, "box_radius": 20, "source_radius": 2.5,
                    "design": {{"z_distance": 3, "x_distances": [6, 7]}}, "check_bands": false}}"#
            ),
        ),
        (
            "gap",
            format!(
                r#"{{"experiment": "spectral_gap", "ensemble": {CHECKER}, "dim": 2, "n_samples": 6, "master_seed": 3,
                    "functional": {{"kind": "point_value", "x": [0, 0, 0]}}, "model": "edge_patch",
                    "mu": 1.0, "box_radius": 6, "source_radius": 1.5, "batches": 2, "check_bands": false}}"#
            ),
        ),
        (
            "fluct",
            format!(
                r#"{{"experiment": "strong_fluct", "ensemble": {CHECKER}, "dim": 2, "n_samples": 6, "master_seed": 4,
                    "sizes": [8, 12, 16], "mu": 1.0, "rhs": {{"kind": "bump", "width": 0.5}},
                    "test": {{"kind": "bump", "width": 0.5}}, "check_bands": false}}"#
            ),
        ),
        (
            "lipschitz",
            format!(
                r#"{{"experiment": "lipschitz_scan", "ensemble": {CHECKER}, "dim": 2, "n_samples": 2, "master_seed": 6,
                    "r_list": [4, 8], "q_list": [1, 2], "p": 3.0, "check_bands": false}}"#
            ),
        ),
        (
            "bounds",
            format!(
                r#"{{"experiment": "deterministic_bounds", "ensemble": {CHECKER}, "dim": 2, "n_samples": 2,
                    "master_seed": 7, "mu": 0.1, "radii": [3, 6], "annulus_radii": [3, 6]}}"#
            ),
        ),
    ]
}

fn run_in(dir: &Path, config: &str, jobs: usize) -> experiment::RunOutcome {
    let cfg = parse_config_str(config).unwrap();
    experiment::run(
        cfg,
        &RunOptions {
            out_dir: Some(dir.to_path_buf()),
            jobs: Some(jobs),
            ..Default::default()
        },
    )
    .unwrap()
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn outputs_do_not_depend_on_jobs() {
    for (name, config) in small_configs() {
        let root = tempfile::tempdir().unwrap();
        let mut reference = None;
        for jobs in [1, 4, 8] {
            let dir = root.path().join(format!("j{jobs}"));
            let out = run_in(&dir, &config, jobs);
            assert_eq!(out.manifest.status, RunStatus::Completed, "{name}: {:?}", out.manifest.failures);
            let files = csv_files(&dir);
            assert!(files.contains_key("stats.csv"), "{name}");
            match &reference {
                None => reference = Some(files),
                Some(r) => assert_eq!(r, &files, "{name} differs at jobs {jobs}"),
            }
        }
    }
}

#[test]
fn every_output_names_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &annealed(50), 2);
    let manifest = experiment::RunManifest::load(&dir.path().join(MANIFEST_NAME)).unwrap();
    assert_eq!(manifest, out.manifest);
    assert_eq!(manifest.sample_seeds.len(), 50);
    assert!(manifest.wall_time_s.is_some());
    for file in &manifest.outputs {
        let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
        if file.ends_with(".csv") {
            let mut lines = text.lines();
            assert!(lines.next().unwrap().starts_with("# schema: "), "{file}");
            assert_eq!(lines.next().unwrap(), "# manifest: manifest.json", "{file}");
        } else {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["manifest"], "manifest.json", "{file}");
        }
    }
}

#[test]
fn annealed_plot_has_one_row_per_radius_and_moment() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &annealed(50), 1);
    for quantity in ["grad", "mixed"] {
        let text = std::fs::read_to_string(dir.path().join(format!("plot_{quantity}.csv"))).unwrap();
        let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(rows, 4 * 3, "{quantity}");
    }
}

#[test]
fn constant_ensemble_gives_degenerate_fluctuations() {
    let config = r#"{"experiment": "strong_fluct", "ensemble": {"kind": "constant"}, "dim": 2, "n_samples": 3,
        "master_seed": 1, "sizes": [8, 12, 16], "mu": 1.0, "rhs": {"kind": "bump", "width": 0.5},
        "test": {"kind": "bump", "width": 0.5}}"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), config, 2);
    assert_eq!(out.exit_code, 0, "{:?}", out.manifest.bands);
    assert!(out.manifest.bands.iter().all(|b| b.status == BandStatus::Skipped));
    let fits: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fits.json")).unwrap()).unwrap();
    assert_eq!(fits["results"]["strong"]["degenerate"], true, "{fits}");
}

#[test]
fn compare_reports_zero_against_itself_and_rejects_other_kinds() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    run_in(&a, &annealed(50), 1);
    run_in(&b, &small_configs()[3].1, 1);
    let rep = compare_runs(&a.join(MANIFEST_NAME), &a.join(MANIFEST_NAME)).unwrap();
    assert!(!rep.entries.is_empty());
    assert_eq!(rep.max_rel_diff(), 0.0);
    assert!(rep.all_overlap());
    assert!(matches!(
        compare_runs(&a.join(MANIFEST_NAME), &b.join(MANIFEST_NAME)),
        Err(ExperimentError::Mismatch(_))
    ));
}

#[test]
fn compare_rejects_schema_mismatch() {
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    run_in(&a, &annealed(50), 1);
    run_in(&b, &annealed(50), 1);
    let stats = b.join("stats.csv");
    let text = std::fs::read_to_string(&stats).unwrap().replace("# schema: stats/1", "# schema: stats/2");
    std::fs::write(&stats, text).unwrap();
    assert!(matches!(
        compare_runs(&a.join(MANIFEST_NAME), &b.join(MANIFEST_NAME)),
        Err(ExperimentError::Parse(_))
    ));
}

#[test]
fn larger_runs_have_overlapping_intervals() {
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("n200"), root.path().join("n800"));
    run_in(&a, &annealed(200), 4);
    run_in(&b, &annealed(800), 4);
    let rep = compare_runs(&a.join(MANIFEST_NAME), &b.join(MANIFEST_NAME)).unwrap();
    let moments: Vec<_> = rep.entries.iter().filter(|e| e.ci_overlap.is_some()).collect();
    assert_eq!(moments.len(), 2 * 4 * 3);
    for e in moments {
        assert_eq!(e.ci_overlap, Some(true), "{e:?}");
    }
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(&annealed(50)).unwrap();
    let out = experiment::run(
        cfg,
        &RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            jobs: Some(1),
            seed: Some(99),
            samples: None,
        },
    )
    .unwrap();
    assert_eq!(out.manifest.master_seed, 99);
    assert_eq!(out.manifest.config["master_seed"], 99);
}
