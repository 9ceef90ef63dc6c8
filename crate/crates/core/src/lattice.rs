//! Finite boxes `[-radius, radius]^dim` in `Z^dim` with unit spacing.
//!
//! Sites are numbered row-major (first axis slowest). Edges are stored as
//! forward edges `(x, k)` joining `x` and `x + e_k`, so an [`EdgeField`] has
//! `sites * dim` entries. Under Dirichlet boundary conditions the exterior
//! carries the value zero; under periodic conditions coordinates wrap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

/// A lattice point. Coordinates beyond `dim` are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Site(pub [i64; 3]);

impl Site {
    pub const ORIGIN: Site = Site([0; 3]);

    pub fn new(coords: &[i64]) -> Self {
        let mut c = [0; 3];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    /// `distance * e_axis`.
    pub fn on_axis(axis: usize, distance: i64) -> Self {
        let mut c = [0; 3];
        c[axis] = distance;
        Site(c)
    }

    pub fn shifted(self, axis: usize, step: i64) -> Self {
        let mut c = self.0;
        c[axis] += step;
        Site(c)
    }

    pub fn offset(self, by: Site) -> Self {
        Site([self.0[0] + by.0[0], self.0[1] + by.0[1], self.0[2] + by.0[2]])
    }

    pub fn minus(self, other: Site) -> Self {
        Site([
            self.0[0] - other.0[0],
            self.0[1] - other.0[1],
            self.0[2] - other.0[2],
        ])
    }

    pub fn norm_sq(self) -> i64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    dim: usize,
    radius: usize,
    boundary: Boundary,
}

impl Lattice {
    pub fn new(dim: usize, radius: usize, boundary: Boundary) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidLattice(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if radius < 1 {
            return Err(Error::InvalidLattice("radius must be at least 1".into()));
        }
        Ok(Lattice {
            dim,
            radius,
            boundary,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Number of sites along one axis.
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn num_sites(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn num_edges(&self) -> usize {
        self.num_sites() * self.dim
    }

    /// Index stride of `axis` in the row-major numbering.
    pub fn stride(&self, axis: usize) -> usize {
        self.side().pow((self.dim - 1 - axis) as u32)
    }

    pub fn contains(&self, site: Site) -> bool {
        let r = self.radius as i64;
        site.0[..self.dim].iter().all(|c| (-r..=r).contains(c))
            && site.0[self.dim..].iter().all(|&c| c == 0)
    }

    /// Maps a site into the box; wraps under periodic conditions and returns
    /// `None` for exterior sites under Dirichlet conditions.
    pub fn canonical(&self, site: Site) -> Option<Site> {
        match self.boundary {
            Boundary::Dirichlet => self.contains(site).then_some(site),
            Boundary::Periodic => {
                let side = self.side() as i64;
                let r = self.radius as i64;
                let mut c = [0; 3];
                for (v, &s) in c.iter_mut().zip(&site.0).take(self.dim) {
                    *v = (s + r).rem_euclid(side) - r;
                }
                Some(Site(c))
            }
        }
    }

    pub fn index(&self, site: Site) -> Option<usize> {
        let site = self.canonical(site)?;
        let r = self.radius as i64;
        let side = self.side();
        let mut idx = 0usize;
        for k in 0..self.dim {
            idx = idx * side + (site.0[k] + r) as usize;
        }
        Some(idx)
    }

    pub fn site(&self, index: usize) -> Site {
        debug_assert!(index < self.num_sites());
        let side = self.side();
        let r = self.radius as i64;
        let mut c = [0; 3];
        let mut rest = index;
        for k in (0..self.dim).rev() {
            c[k] = (rest % side) as i64 - r;
            rest /= side;
        }
        Site(c)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.num_sites()).map(move |i| self.site(i))
    }

    /// Coordinate of site `index` along `axis`, in `[-radius, radius]`.
    pub fn coordinate(&self, index: usize, axis: usize) -> i64 {
        ((index / self.stride(axis)) % self.side()) as i64 - self.radius as i64
    }

    /// Neighbor of `index` one step along `axis` (`forward` selects the sign).
    pub fn neighbor(&self, index: usize, axis: usize, forward: bool) -> Option<usize> {
        let c = self.coordinate(index, axis);
        let r = self.radius as i64;
        let stride = self.stride(axis);
        let span = stride * (self.side() - 1);
        match (forward, c == r, c == -r) {
            (true, false, _) => Some(index + stride),
            (false, _, false) => Some(index - stride),
            (true, true, _) => match self.boundary {
                Boundary::Periodic => Some(index - span),
                Boundary::Dirichlet => None,
            },
            (false, _, true) => match self.boundary {
                Boundary::Periodic => Some(index + span),
                Boundary::Dirichlet => None,
            },
        }
    }

    /// Displacement `to - from`, using the minimum image under periodic
    /// conditions.
    pub fn displacement(&self, from: Site, to: Site) -> Site {
        let mut d = to.minus(from);
        if self.boundary == Boundary::Periodic {
            let side = self.side() as i64;
            for k in 0..self.dim {
                let mut c = d.0[k].rem_euclid(side);
                if c > side / 2 {
                    c -= side;
                }
                d.0[k] = c;
            }
        }
        d
    }

    pub fn distance(&self, a: Site, b: Site) -> f64 {
        self.displacement(a, b).norm()
    }

    /// Offsets `o` with `|o| <= radius` (Euclidean), in lexicographic order.
    pub fn ball_offsets(&self, radius: f64) -> Vec<Site> {
        let reach = radius.floor() as i64;
        let r2 = radius * radius;
        let mut out = Vec::new();
        let range = |k: usize| if k < self.dim { -reach..=reach } else { 0..=0 };
        for a in range(0) {
            for b in range(1) {
                for c in range(2) {
                    let s = Site([a, b, c]);
                    if (s.norm_sq() as f64) <= r2 + 1e-9 {
                        out.push(s);
                    }
                }
            }
        }
        out
    }

    /// Site indices of the closed Euclidean ball `B_radius(center)`. Under
    /// Dirichlet conditions every ball site must lie in the box.
    pub fn ball(&self, center: Site, radius: f64) -> Result<Vec<usize>> {
        self.ball_offsets(radius)
            .into_iter()
            .map(|o| {
                self.index(center.offset(o)).ok_or_else(|| {
                    Error::ProbeOutOfRange(format!(
                        "ball of radius {radius} around {:?} leaves the box",
                        center.0
                    ))
                })
            })
            .collect()
    }

    /// Sites with `inner <= |x - center| < outer`.
    pub fn annulus(&self, center: Site, inner: f64, outer: f64) -> Vec<usize> {
        (0..self.num_sites())
            .filter(|&i| {
                let d = self.distance(center, self.site(i));
                d >= inner && d < outer
            })
            .collect()
    }

    /// Euclidean distance from `site` to the nearest exterior site; infinite
    /// for periodic boxes.
    pub fn distance_to_boundary(&self, site: Site) -> f64 {
        match self.boundary {
            Boundary::Periodic => f64::INFINITY,
            Boundary::Dirichlet => site.0[..self.dim]
                .iter()
                .map(|c| (self.radius as i64 + 1 - c.abs()) as f64)
                .fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteField {
    lattice: Lattice,
    values: Vec<f64>,
}

impl SiteField {
    pub fn zeros(lattice: Lattice) -> Self {
        SiteField {
            lattice,
            values: vec![0.0; lattice.num_sites()],
        }
    }

    pub fn from_values(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.num_sites() {
            return Err(Error::param(format!(
                "site field needs {} values, got {}",
                lattice.num_sites(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("site field values must be finite"));
        }
        Ok(SiteField { lattice, values })
    }

    pub fn from_fn(lattice: Lattice, mut f: impl FnMut(Site) -> f64) -> Self {
        let values = lattice.sites().map(&mut f).collect();
        SiteField { lattice, values }
    }

    /// Unit mass at `site`.
    pub fn delta(lattice: Lattice, site: Site) -> Result<Self> {
        let idx = lattice
            .index(site)
            .ok_or_else(|| Error::ProbeOutOfRange(format!("{:?} is outside the box", site.0)))?;
        let mut f = SiteField::zeros(lattice);
        f.values[idx] = 1.0;
        Ok(f)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at `site`, with zero outside a Dirichlet box.
    pub fn at(&self, site: Site) -> f64 {
        self.lattice.index(site).map_or(0.0, |i| self.values[i])
    }

    pub fn dot(&self, other: &SiteField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Squared gradient at `index`, averaged over the `2 dim` incident
    /// edges so that `x -> xi . x` yields `|xi|^2`.
    pub fn gradient_sq_at(&self, index: usize) -> f64 {
        let l = &self.lattice;
        let u0 = self.values[index];
        let mut acc = 0.0;
        for k in 0..l.dim() {
            for fwd in [true, false] {
                let un = l.neighbor(index, k, fwd).map_or(0.0, |j| self.values[j]);
                acc += (un - u0) * (un - u0);
            }
        }
        0.5 * acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    lattice: Lattice,
    values: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(lattice: Lattice) -> Self {
        EdgeField {
            lattice,
            values: vec![0.0; lattice.num_edges()],
        }
    }

    pub fn from_values(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.num_edges() {
            return Err(Error::param(format!(
                "edge field needs {} values, got {}",
                lattice.num_edges(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("edge field values must be finite"));
        }
        Ok(EdgeField { lattice, values })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value on the forward edge `(site, axis)`.
    pub fn get(&self, site: usize, axis: usize) -> f64 {
        self.values[site * self.lattice.dim() + axis]
    }

    pub fn dot(&self, other: &EdgeField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Forward differences `u(x + e_k) - u(x)` on every stored edge.
pub fn gradient(u: &SiteField) -> EdgeField {
    let l = *u.lattice();
    let d = l.dim();
    let mut values = vec![0.0; l.num_edges()];
    for i in 0..l.num_sites() {
        for k in 0..d {
            let next = l.neighbor(i, k, true).map_or(0.0, |j| u.values[j]);
            values[i * d + k] = next - u.values[i];
        }
    }
    EdgeField { lattice: l, values }
}

/// Backward differences of the edge field, the negative adjoint of
/// [`gradient`].
pub fn divergence(field: &EdgeField) -> SiteField {
    let l = *field.lattice();
    let d = l.dim();
    let mut values = vec![0.0; l.num_sites()];
    for (i, v) in values.iter_mut().enumerate() {
        for k in 0..d {
            *v += field.values[i * d + k];
            if let Some(j) = l.neighbor(i, k, false) {
                *v -= field.values[j * d + k];
            }
        }
    }
    SiteField { lattice: l, values }
}
