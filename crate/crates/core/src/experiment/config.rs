//! JSON experiment configurations. Unknown keys are rejected and every
//! error carries the line it refers to.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annealed::{AnnealedOptions, MIN_SAMPLES};
use crate::ensemble::EnsembleSpec;
use crate::fluctuations::{Exponents, FluctuationConfig};
use crate::lattice::Site;
use crate::profile::MacroProfile;
use crate::regularity::{ScanConfig, SourceKind};
use crate::sensitivity::{Functional, OscillationModel, SensitivityConfig, SpectralGapConfig};
use crate::stats::RateModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("line {line}, column {column}: missing field `{field}`")]
    MissingField { field: String, line: usize, column: usize },

    #[error("line {line}, column {column}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize, column: usize },

    #[error("{}: `{key}` {message}", location(*line))]
    RangeViolation { key: String, line: Option<usize>, message: String },
}

fn location(line: Option<usize>) -> String {
    line.map_or_else(|| "default value".to_string(), |l| format!("line {l}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    AnnealedMoments,
    Sensitivity,
    SpectralGap,
    StrongFluct,
    WeakFluct,
    LipschitzScan,
    DeterministicBounds,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::AnnealedMoments => "annealed_moments",
            ExperimentKind::Sensitivity => "sensitivity",
            ExperimentKind::SpectralGap => "spectral_gap",
            ExperimentKind::StrongFluct => "strong_fluct",
            ExperimentKind::WeakFluct => "weak_fluct",
            ExperimentKind::LipschitzScan => "lipschitz_scan",
            ExperimentKind::DeterministicBounds => "deterministic_bounds",
        }
    }
}

/// Fields shared by every experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    pub experiment: ExperimentKind,
    pub ensemble: EnsembleSpec,
    pub dim: usize,
    pub n_samples: usize,
    pub master_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub check_bands: bool,
}

fn yes() -> bool {
    true
}

macro_rules! experiment_config {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $field:ident : $ty:ty,)* }) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            pub experiment: ExperimentKind,
            pub ensemble: EnsembleSpec,
            pub dim: usize,
            pub n_samples: usize,
            pub master_seed: u64,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub output_dir: Option<PathBuf>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub parallelism: Option<usize>,
            /// Whether band failures turn into a nonzero exit code.
            #[serde(default = "yes")]
            pub check_bands: bool,
            $($(#[$fm])* pub $field: $ty,)*
        }

        impl $name {
            pub fn common(&self) -> Common {
                Common {
                    experiment: self.experiment,
                    ensemble: self.ensemble,
                    dim: self.dim,
                    n_samples: self.n_samples,
                    master_seed: self.master_seed,
                    output_dir: self.output_dir.clone(),
                    parallelism: self.parallelism,
                    check_bands: self.check_bands,
                }
            }

            fn common_mut(&mut self) -> (&mut usize, &mut u64) {
                (&mut self.n_samples, &mut self.master_seed)
            }
        }
    };
}

fn default_q_list() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}

fn default_l() -> usize {
    1
}

fn default_resamples() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealedBands {
    /// Allowed deviation of the second-moment gradient exponent.
    pub grad: f64,
    /// Allowed deviation of the first-moment mixed exponent.
    pub mixed: f64,
    /// Allowed deviation of higher-moment exponents from the base ones.
    pub high_q: f64,
    /// Bound on the growth of the high/low moment ratio across radii.
    pub flatness_growth: f64,
}

impl Default for AnnealedBands {
    fn default() -> Self {
        AnnealedBands {
            grad: 0.25,
            mixed: 0.35,
            high_q: 0.3,
            flatness_growth: 2.0,
        }
    }
}

experiment_config! {
    AnnealedConfig {
        mu: f64,
        radii: Vec<usize>,
        #[serde(default = "default_q_list")]
        q_list: Vec<f64>,
        #[serde(default)]
        box_radius: Option<usize>,
        #[serde(default = "default_l")]
        l: usize,
        #[serde(default)]
        rate_model: RateModel,
        #[serde(default = "default_resamples")]
        bootstrap_resamples: usize,
        #[serde(default)]
        bands: AnnealedBands,
    }
}

impl AnnealedConfig {
    pub fn options(&self) -> AnnealedOptions {
        AnnealedOptions {
            l: self.l,
            box_radius: self.box_radius,
            bootstrap_resamples: self.bootstrap_resamples,
            ..AnnealedOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairDesign {
    pub z_distance: i64,
    pub x_distances: Vec<i64>,
}

impl Default for PairDesign {
    fn default() -> Self {
        PairDesign {
            z_distance: 3,
            x_distances: vec![6, 7, 8, 9, 10],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityBands {
    pub max_spread: f64,
    pub min_records: usize,
}

impl Default for SensitivityBands {
    fn default() -> Self {
        SensitivityBands {
            max_spread: 3.0,
            min_records: 500,
        }
    }
}

fn default_patches() -> usize {
    crate::sensitivity::DEFAULT_RANDOM_PATCHES
}

fn default_ell_f() -> f64 {
    1.0
}

experiment_config! {
    SensitivityExpConfig {
        mu: f64,
        box_radius: usize,
        source_radius: f64,
        /// Explicit `(x, z)` pairs; the axis design is used when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pairs: Option<Vec<(Site, Site)>>,
        #[serde(default)]
        design: PairDesign,
        #[serde(default = "default_patches")]
        random_patches: usize,
        #[serde(default = "default_ell_f")]
        ell: f64,
        #[serde(default)]
        bands: SensitivityBands,
    }
}

impl SensitivityExpConfig {
    pub fn module_config(&self) -> SensitivityConfig {
        let pairs = self.pairs.clone().unwrap_or_else(|| {
            crate::sensitivity::axis_pair_design(self.dim, self.design.z_distance, &self.design.x_distances)
        });
        SensitivityConfig {
            dim: self.dim,
            box_radius: self.box_radius,
            mu: self.mu,
            source_radius: self.source_radius,
            pairs,
            n: self.n_samples,
            random_patches: self.random_patches,
            ell: self.ell,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapBands {
    /// Standard errors allowed between the ratio and an exact value.
    pub sigma: f64,
    /// Relative deviation allowed between batch ratios.
    pub batch_tolerance: f64,
}

impl Default for GapBands {
    fn default() -> Self {
        GapBands {
            sigma: 3.0,
            batch_tolerance: 0.5,
        }
    }
}

fn one_batch() -> usize {
    1
}

fn default_truncation() -> f64 {
    1e-12
}

experiment_config! {
    SpectralGapExpConfig {
        functional: Functional,
        #[serde(default)]
        model: OscillationModel,
        mu: f64,
        box_radius: usize,
        source_radius: f64,
        #[serde(default)]
        first_sample: u64,
        /// Disjoint batches of `n_samples` each.
        #[serde(default = "one_batch")]
        batches: usize,
        #[serde(default = "default_patches")]
        random_patches: usize,
        #[serde(default = "default_ell_f")]
        ell: f64,
        #[serde(default = "default_truncation")]
        truncation: f64,
        #[serde(default)]
        bands: GapBands,
    }
}

impl SpectralGapExpConfig {
    pub fn module_config(&self, batch: usize) -> SpectralGapConfig {
        SpectralGapConfig {
            dim: self.dim,
            box_radius: self.box_radius,
            mu: self.mu,
            source_radius: self.source_radius,
            n: self.n_samples,
            first_sample: self.first_sample + (batch * self.n_samples) as u64,
            model: self.model,
            random_patches: self.random_patches,
            ell: self.ell,
            truncation: self.truncation,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluctBands {
    /// Allowed range of the fitted slope; a dimension default applies when
    /// absent.
    pub slope: Option<[f64; 2]>,
    /// Allowed range of the weak minus strong slope.
    pub gap: Option<[f64; 2]>,
}

fn default_window() -> f64 {
    1.0
}

fn default_exponents_missing() -> Option<Exponents> {
    None
}

fn default_bump() -> MacroProfile {
    MacroProfile::Bump { width: 0.5 }
}

experiment_config! {
    FluctExpConfig {
        sizes: Vec<usize>,
        mu: f64,
        #[serde(default = "default_bump")]
        rhs: MacroProfile,
        #[serde(default = "default_bump")]
        test: MacroProfile,
        #[serde(default = "default_exponents_missing")]
        exponents: Option<Exponents>,
        #[serde(default = "default_window")]
        window: f64,
        #[serde(default = "default_resamples")]
        bootstrap_resamples: usize,
        #[serde(default)]
        bands: FluctBands,
    }
}

impl FluctExpConfig {
    pub fn exponents(&self) -> Exponents {
        self.exponents.unwrap_or_else(|| Exponents::standard(self.dim))
    }

    pub fn module_config(&self) -> FluctuationConfig {
        FluctuationConfig {
            dim: self.dim,
            sizes: self.sizes.clone(),
            mu: self.mu,
            rhs: self.rhs,
            test: self.test,
            n_samples: self.n_samples,
            exponents: self.exponents(),
            window: self.window,
            bootstrap_resamples: self.bootstrap_resamples,
        }
    }

    /// Slope band in force: the configured one or the dimension default.
    pub fn slope_band(&self) -> Option<[f64; 2]> {
        self.bands.slope.or(match (self.experiment, self.dim) {
            (ExperimentKind::StrongFluct, 2) => Some([0.75, 1.2]),
            (ExperimentKind::WeakFluct, 2) => Some([0.8, 1.25]),
            _ => None,
        })
    }

    pub fn gap_band(&self) -> Option<[f64; 2]> {
        self.bands.gap.or(match (self.experiment, self.dim) {
            (ExperimentKind::WeakFluct, 3) => Some([0.2, 0.8]),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanBands {
    /// Bound on the moment at the largest `R` over the smallest.
    pub max_growth: f64,
    /// Moment order the band applies to.
    pub q: f64,
}

impl Default for ScanBands {
    fn default() -> Self {
        ScanBands { max_growth: 3.0, q: 2.0 }
    }
}

fn default_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

fn default_family() -> Vec<SourceKind> {
    SourceKind::ALL.to_vec()
}

fn default_mu_factor() -> f64 {
    0.25
}

fn default_box_factor() -> f64 {
    2.5
}

fn default_tolerance() -> f64 {
    1e-10
}

experiment_config! {
    LipschitzExpConfig {
        r_list: Vec<usize>,
        q_list: Vec<f64>,
        #[serde(default = "default_fractions")]
        probe_fractions: Vec<f64>,
        #[serde(default = "default_family")]
        family: Vec<SourceKind>,
        /// Defaults to `dim + 1`.
        #[serde(default)]
        p: Option<f64>,
        #[serde(default = "default_mu_factor")]
        mu_factor: f64,
        #[serde(default = "default_box_factor")]
        box_factor: f64,
        #[serde(default = "default_l")]
        ell: usize,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default)]
        bands: ScanBands,
    }
}

impl LipschitzExpConfig {
    pub fn module_config(&self) -> ScanConfig {
        ScanConfig {
            dim: self.dim,
            r_list: self.r_list.clone(),
            probe_fractions: self.probe_fractions.clone(),
            family: self.family.clone(),
            q_list: self.q_list.clone(),
            n_samples: self.n_samples,
            p: self.p.unwrap_or(self.dim as f64 + 1.0),
            mu_factor: self.mu_factor,
            box_factor: self.box_factor,
            ell: self.ell,
            tolerance: self.tolerance,
        }
    }
}

fn default_negative_tolerance() -> f64 {
    1e-8
}

experiment_config! {
    BoundsExpConfig {
        mu: f64,
        radii: Vec<usize>,
        #[serde(default)]
        annulus_radii: Vec<f64>,
        #[serde(default = "default_l")]
        l: usize,
        #[serde(default)]
        box_radius: Option<usize>,
        /// Column values below `-tolerance` count as negative.
        #[serde(default = "default_negative_tolerance")]
        tolerance: f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ExperimentConfig {
    AnnealedMoments(AnnealedConfig),
    Sensitivity(SensitivityExpConfig),
    SpectralGap(SpectralGapExpConfig),
    /// Strong and weak runs share one configuration shape.
    Fluct(FluctExpConfig),
    LipschitzScan(LipschitzExpConfig),
    DeterministicBounds(BoundsExpConfig),
}

impl ExperimentConfig {
    pub fn common(&self) -> Common {
        match self {
            ExperimentConfig::AnnealedMoments(c) => c.common(),
            ExperimentConfig::Sensitivity(c) => c.common(),
            ExperimentConfig::SpectralGap(c) => c.common(),
            ExperimentConfig::Fluct(c) => c.common(),
            ExperimentConfig::LipschitzScan(c) => c.common(),
            ExperimentConfig::DeterministicBounds(c) => c.common(),
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        self.common().experiment
    }

    fn common_mut(&mut self) -> (&mut usize, &mut u64) {
        match self {
            ExperimentConfig::AnnealedMoments(c) => c.common_mut(),
            ExperimentConfig::Sensitivity(c) => c.common_mut(),
            ExperimentConfig::SpectralGap(c) => c.common_mut(),
            ExperimentConfig::Fluct(c) => c.common_mut(),
            ExperimentConfig::LipschitzScan(c) => c.common_mut(),
            ExperimentConfig::DeterministicBounds(c) => c.common_mut(),
        }
    }

    pub fn set_master_seed(&mut self, seed: u64) {
        *self.common_mut().1 = seed;
    }

    /// Replaces the sample count, bypassing the parse-time minimum. Meant
    /// for smoke runs of reference configurations.
    pub fn set_samples(&mut self, n: usize) {
        *self.common_mut().0 = n;
    }
}

/// Line of the first `"key":` in `text`, 1-based.
fn key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    let mut from = 0;
    while let Some(pos) = text[from..].find(&needle) {
        let at = from + pos;
        let rest = text[at + needle.len()..].trim_start();
        if rest.starts_with(':') {
            return Some(text[..at].matches('\n').count() + 1);
        }
        from = at + needle.len();
    }
    None
}

fn strip_position(msg: &str) -> &str {
    match msg.rfind(" at line ") {
        Some(i) => &msg[..i],
        None => msg,
    }
}

fn backticked(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("").to_string()
}

fn classify(e: serde_json::Error) -> ConfigError {
    let full = e.to_string();
    let msg = strip_position(&full);
    let (line, column) = (e.line(), e.column());
    if let Some(rest) = msg.strip_prefix("invalid parameter: ") {
        // Raised while converting the ensemble block.
        return ConfigError::RangeViolation {
            key: "ensemble".into(),
            line: Some(line),
            message: rest.to_string(),
        };
    }
    if msg.starts_with("unknown field") {
        ConfigError::UnknownKey {
            key: backticked(msg),
            line,
            column,
        }
    } else if msg.starts_with("missing field") {
        ConfigError::MissingField {
            field: backticked(msg),
            line,
            column,
        }
    } else {
        ConfigError::Syntax {
            line,
            column,
            message: msg.to_string(),
        }
    }
}

struct Checker<'a> {
    text: &'a str,
}

impl Checker<'_> {
    fn require(&self, ok: bool, key: &str, message: impl FnOnce() -> String) -> Result<(), ConfigError> {
        if ok {
            Ok(())
        } else {
            Err(ConfigError::RangeViolation {
                key: key.to_string(),
                line: key_line(self.text, key),
                message: message(),
            })
        }
    }

    /// Maps a module-level validation error onto `key`.
    fn module(&self, r: crate::Result<()>, key: &str) -> Result<(), ConfigError> {
        r.map_err(|e| ConfigError::RangeViolation {
            key: key.to_string(),
            line: key_line(self.text, key),
            message: e.to_string(),
        })
    }

    fn common(&self, c: &Common, min_samples: usize) -> Result<(), ConfigError> {
        self.require((2..=3).contains(&c.dim), "dim", || format!("= {} must be 2 or 3", c.dim))?;
        self.require(c.n_samples >= min_samples, "n_samples", || {
            format!("= {} is below the minimum {min_samples}", c.n_samples)
        })?;
        self.require(c.parallelism != Some(0), "parallelism", || "must be positive".into())
    }

    fn positive(&self, v: f64, key: &str) -> Result<(), ConfigError> {
        self.require(v > 0.0 && v.is_finite(), key, || format!("= {v} must be positive"))
    }
}

impl ExperimentConfig {
    fn validate(&self, text: &str) -> Result<(), ConfigError> {
        let ck = Checker { text };
        match self {
            ExperimentConfig::AnnealedMoments(c) => {
                ck.common(&c.common(), MIN_SAMPLES)?;
                ck.positive(c.mu, "mu")?;
                ck.require(c.radii.len() >= 3, "radii", || "needs at least 3 radii for a fit".into())?;
                ck.require(c.radii.iter().all(|&r| r >= 3 * c.l), "radii", || {
                    format!("must be at least 3L = {}", 3 * c.l)
                })?;
                ck.require(c.l >= 1, "l", || "must be at least 1".into())?;
                ck.require(c.q_list.iter().all(|&q| q >= 1.0 && q.is_finite()), "q_list", || {
                    "entries must satisfy q >= 1".into()
                })?;
                ck.require(c.q_list.contains(&2.0), "q_list", || "must contain q = 2".into())?;
                ck.require(c.bootstrap_resamples >= 10, "bootstrap_resamples", || "must be at least 10".into())?;
                if let Some(b) = c.box_radius {
                    let rmax = *c.radii.iter().max().unwrap_or(&0);
                    ck.require(b > rmax + c.l, "box_radius", || format!("= {b} must exceed the largest probe radius"))?;
                }
            }
            ExperimentConfig::Sensitivity(c) => {
                ck.common(&c.common(), 1)?;
                ck.positive(c.mu, "mu")?;
                ck.positive(c.source_radius, "source_radius")?;
                ck.positive(c.ell, "ell")?;
                let m = c.module_config();
                ck.require(!m.pairs.is_empty(), "pairs", || "the pair design is empty".into())?;
                let fits = m.pairs.iter().all(|(x, z)| {
                    let r = c.box_radius as i64;
                    x.0.iter().chain(z.0.iter()).all(|v| v.abs() + 10 <= r)
                });
                ck.require(fits, "box_radius", || {
                    format!("= {} leaves less than 10 sites around some pair", c.box_radius)
                })?;
            }
            ExperimentConfig::SpectralGap(c) => {
                ck.common(&c.common(), 2)?;
                ck.positive(c.mu, "mu")?;
                ck.positive(c.source_radius, "source_radius")?;
                ck.require(c.batches >= 1, "batches", || "must be at least 1".into())?;
                ck.require(c.truncation >= 0.0, "truncation", || "must be nonnegative".into())?;
                if matches!(c.functional, Functional::SiteValue { .. }) {
                    ck.require(c.model == OscillationModel::SiteResample, "model", || {
                        "must be site_resample for a site_value functional".into()
                    })?;
                }
            }
            ExperimentConfig::Fluct(c) => {
                ck.common(&c.common(), 2)?;
                ck.positive(c.mu, "mu")?;
                ck.positive(c.window, "window")?;
                ck.require(c.sizes.len() >= 3, "sizes", || "needs at least 3 sizes for a fit".into())?;
                ck.require(c.sizes.iter().all(|&n| n >= 2), "sizes", || "entries must be at least 2".into())?;
                let e = c.exponents();
                let d = c.dim as f64;
                if c.experiment == ExperimentKind::StrongFluct {
                    ck.require(e.lambda > d / 2.0, "lambda", || {
                        format!("= {} violates λ > d/2 = {}", e.lambda, d / 2.0)
                    })?;
                    ck.module(e.validate_strong(c.dim), "exponents")?;
                } else {
                    ck.module(e.validate_weak(c.dim), "exponents")?;
                }
                if let Some([lo, hi]) = c.bands.slope.or(c.bands.gap) {
                    ck.require(lo <= hi, "bands", || "ranges need lo <= hi".into())?;
                }
            }
            ExperimentConfig::LipschitzScan(c) => {
                ck.common(&c.common(), 1)?;
                let m = c.module_config();
                ck.require(m.p > d_of(c.dim), "p", || format!("= {} must exceed d = {}", m.p, c.dim))?;
                ck.require(c.r_list.iter().all(|&r| r > 2 * c.ell), "r_list", || {
                    format!("entries must exceed 2l = {}", 2 * c.ell)
                })?;
                ck.module(m.validate(), "r_list")?;
            }
            ExperimentConfig::DeterministicBounds(c) => {
                ck.common(&c.common(), 1)?;
                ck.positive(c.mu, "mu")?;
                ck.require(c.radii.len() >= 2, "radii", || "needs at least 2 radii".into())?;
                ck.require(c.radii.iter().all(|&r| r >= 3 * c.l), "radii", || {
                    format!("must be at least 3L = {}", 3 * c.l)
                })?;
                ck.require(c.tolerance >= 0.0, "tolerance", || "must be nonnegative".into())?;
            }
        }
        Ok(())
    }
}

fn d_of(dim: usize) -> f64 {
    dim as f64
}

#[derive(Deserialize)]
struct Head {
    experiment: ExperimentKind,
}

/// Parses and validates a configuration held in memory.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let head: Head = serde_json::from_str(text).map_err(classify)?;
    let cfg = match head.experiment {
        ExperimentKind::AnnealedMoments => ExperimentConfig::AnnealedMoments(serde_json::from_str(text).map_err(classify)?),
        ExperimentKind::Sensitivity => ExperimentConfig::Sensitivity(serde_json::from_str(text).map_err(classify)?),
        ExperimentKind::SpectralGap => ExperimentConfig::SpectralGap(serde_json::from_str(text).map_err(classify)?),
        ExperimentKind::StrongFluct | ExperimentKind::WeakFluct => {
            ExperimentConfig::Fluct(serde_json::from_str(text).map_err(classify)?)
        }
        ExperimentKind::LipschitzScan => ExperimentConfig::LipschitzScan(serde_json::from_str(text).map_err(classify)?),
        ExperimentKind::DeterministicBounds => {
            ExperimentConfig::DeterministicBounds(serde_json::from_str(text).map_err(classify)?)
        }
    };
    cfg.validate(text)?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text)
}
