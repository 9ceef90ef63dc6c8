//! Command-line front end for stochhom experiments.
//!
//! Exit codes: 0 on success, 2 when a declared acceptance band fails (the
//! results are still written), 1 on any error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use stochhom::experiment::{self, BandStatus, RunOptions, OUT_ENV};

#[derive(Parser)]
#[command(name = "stochhom", version, about = "Lattice experiments in quantitative stochastic homogenization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its results.
    Run {
        config: PathBuf,
        /// Output directory. Falls back to the config's `output_dir`, then
        /// to the environment variable, then to `./stochhom-out`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Worker threads; results do not depend on it.
        #[arg(long, value_name = "K")]
        jobs: Option<usize>,
        /// Overrides the configured master seed.
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
    },
    /// Parse and validate a configuration without running it.
    Check { config: PathBuf },
    /// Compare the summary statistics of two finished runs.
    Compare { manifest_a: PathBuf, manifest_b: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run { config, out, jobs, seed } => {
            if jobs == Some(0) {
                anyhow::bail!("--jobs must be positive");
            }
            let cfg = experiment::parse_config(&config)?;
            let outcome = experiment::run(cfg, &RunOptions { out_dir: out, jobs, seed, samples: None })
                .with_context(|| format!("running {}", config.display()))?;
            let m = &outcome.manifest;
            for f in &m.failures {
                match f.sample {
                    Some(i) => eprintln!("sample {i} failed: {}", f.error),
                    None => eprintln!("run failed: {}", f.error),
                }
            }
            for b in &m.bands {
                let verdict = match b.status {
                    BandStatus::Pass => "PASS",
                    BandStatus::Fail => "FAIL",
                    BandStatus::Skipped => "SKIP",
                };
                let value = b.value.map_or("-".to_string(), |v| format!("{v:.6}"));
                let lo = b.lo.map_or("-inf".to_string(), |v| format!("{v}"));
                let hi = b.hi.map_or("inf".to_string(), |v| format!("{v}"));
                println!("{verdict} {} = {value} in [{lo}, {hi}]", b.name);
            }
            println!("results in {}", outcome.dir.display());
            Ok(outcome.exit_code as u8)
        }
        Command::Check { config } => {
            let cfg = experiment::parse_config(&config)?;
            let c = cfg.common();
            println!(
                "ok: {} (dim {}, {} samples, seed {})",
                c.experiment.name(),
                c.dim,
                c.n_samples,
                c.master_seed
            );
            if c.output_dir.is_none() {
                if let Some(dir) = std::env::var_os(OUT_ENV) {
                    println!("default output directory from {OUT_ENV}: {}", PathBuf::from(dir).display());
                }
            }
            Ok(0)
        }
        Command::Compare { manifest_a, manifest_b } => {
            let rep = experiment::compare_runs(&manifest_a, &manifest_b)?;
            println!("experiment: {}", rep.experiment.name());
            println!("{:<40} {:>24} {:>24} {:>10} overlap", "statistic", "a", "b", "rel_diff");
            for e in &rep.entries {
                let overlap = match e.ci_overlap {
                    Some(true) => "yes",
                    Some(false) => "no",
                    None => "-",
                };
                println!("{:<40} {:>24.16e} {:>24.16e} {:>10.3e} {overlap}", e.key, e.a, e.b, e.rel_diff);
            }
            for k in &rep.only_in_a {
                println!("only in a: {k}");
            }
            for k in &rep.only_in_b {
                println!("only in b: {k}");
            }
            Ok(0)
        }
    }
}
