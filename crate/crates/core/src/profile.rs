//! Smooth source and test profiles.

use serde::{Deserialize, Serialize};

use crate::lattice::{Lattice, Site, SiteField};

/// `(1 - |y|²)²` for `|y| < 1`, zero outside; continuously differentiable.
pub fn bump_1(y: &[f64]) -> f64 {
    let r2: f64 = y.iter().map(|v| v * v).sum();
    if r2 < 1.0 {
        (1.0 - r2).powi(2)
    } else {
        0.0
    }
}

/// Bump of the given `radius` centered at `center`, with peak `amplitude`.
pub fn bump(lattice: Lattice, center: Site, radius: f64, amplitude: f64) -> SiteField {
    SiteField::from_fn(lattice, |s| {
        let d = lattice.displacement(center, s);
        let y: Vec<f64> = d.0[..lattice.dim()].iter().map(|&c| c as f64 / radius).collect();
        amplitude * bump_1(&y)
    })
}

/// Macroscopic profile `phi(y)` on the rescaled variable `y = x / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MacroProfile {
    /// `bump_1(y / width)`.
    Bump { width: f64 },
    /// `cos(2 pi k . y / side)` with integer wave numbers on the torus of
    /// macroscopic side `side`.
    PlaneWave { wavenumber: [i64; 3] },
    /// Identically zero.
    Zero,
}

impl MacroProfile {
    /// Value at `y`, where `side` is the macroscopic torus side.
    pub fn eval(&self, y: &[f64], side: f64) -> f64 {
        match *self {
            MacroProfile::Bump { width } => {
                let z: Vec<f64> = y.iter().map(|v| v / width).collect();
                bump_1(&z)
            }
            MacroProfile::PlaneWave { wavenumber } => {
                let phase: f64 = y
                    .iter()
                    .zip(wavenumber)
                    .map(|(v, k)| v * k as f64)
                    .sum();
                (2.0 * std::f64::consts::PI * phase / side).cos()
            }
            MacroProfile::Zero => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, MacroProfile::Zero)
    }
}

/// `x -> phi(x / n)` on `lattice`, using minimum-image coordinates.
pub fn sample_macro(lattice: Lattice, phi: &MacroProfile, n: usize, scale: f64) -> SiteField {
    let side = lattice.side() as f64 / n as f64;
    SiteField::from_fn(lattice, |s| {
        let d = lattice.displacement(Site::ORIGIN, s);
        let y: Vec<f64> = d.0[..lattice.dim()].iter().map(|&c| c as f64 / n as f64).collect();
        scale * phi.eval(&y, side)
    })
}
