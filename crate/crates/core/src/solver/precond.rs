//! Exact inverse of the constant-coefficient operator `mu + a_ref * L0`,
//! diagonalized by separable transforms: the DFT on periodic boxes and the
//! type-I sine transform on Dirichlet boxes (zero exterior).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::{Boundary, Lattice};

pub struct SpectralPreconditioner {
    lattice: Lattice,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    // 1 / (mu + a_ref * eigenvalue), row-major over transformed indices.
    inv_symbol: Vec<f64>,
}

impl std::fmt::Debug for SpectralPreconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPreconditioner")
            .field("lattice", &self.lattice)
            .finish()
    }
}

impl SpectralPreconditioner {
    pub fn new(lattice: Lattice, mu: f64, a_ref: f64) -> Self {
        let n = lattice.side();
        let mut planner = FftPlanner::new();
        let len = match lattice.boundary() {
            Boundary::Periodic => n,
            Boundary::Dirichlet => 2 * (n + 1),
        };
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);

        // One-dimensional eigenvalues of the second difference.
        let eig: Vec<f64> = match lattice.boundary() {
            Boundary::Periodic => (0..n)
                .map(|m| 2.0 * (1.0 - (2.0 * PI * m as f64 / n as f64).cos()))
                .collect(),
            Boundary::Dirichlet => (1..=n)
                .map(|m| 2.0 * (1.0 - (PI * m as f64 / (n + 1) as f64).cos()))
                .collect(),
        };
        let inv_symbol = (0..lattice.num_sites())
            .map(|i| {
                let s: f64 = (0..lattice.dim())
                    .map(|k| eig[(i / lattice.stride(k)) % n])
                    .sum();
                1.0 / (mu + a_ref * s)
            })
            .collect();
        SpectralPreconditioner {
            lattice,
            forward,
            inverse,
            inv_symbol,
        }
    }

    /// `out = (mu + a_ref L0)^{-1} r`.
    pub fn apply(&self, r: &[f64], out: &mut [f64]) {
        match self.lattice.boundary() {
            Boundary::Periodic => self.apply_periodic(r, out),
            Boundary::Dirichlet => self.apply_dirichlet(r, out),
        }
    }

    fn for_each_line(&self, axis: usize, mut f: impl FnMut(&mut dyn FnMut(usize) -> usize)) {
        let l = &self.lattice;
        let n = l.side();
        let stride = l.stride(axis);
        let total = l.num_sites();
        // Line starts: indices whose coordinate along `axis` is minimal.
        for start in 0..total {
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            let mut idx = move |j: usize| start + j * stride;
            f(&mut idx);
        }
    }

    fn apply_periodic(&self, r: &[f64], out: &mut [f64]) {
        let n = self.lattice.side();
        let mut data: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut line = vec![Complex64::default(); n];
        let mut scratch = vec![Complex64::default(); self.forward.get_inplace_scratch_len()];
        for axis in 0..self.lattice.dim() {
            self.for_each_line(axis, |idx| {
                for (j, c) in line.iter_mut().enumerate() {
                    *c = data[idx(j)];
                }
                self.forward.process_with_scratch(&mut line, &mut scratch);
                for (j, c) in line.iter().enumerate() {
                    data[idx(j)] = *c;
                }
            });
        }
        for (c, s) in data.iter_mut().zip(&self.inv_symbol) {
            *c *= *s;
        }
        let mut scratch = vec![Complex64::default(); self.inverse.get_inplace_scratch_len()];
        for axis in 0..self.lattice.dim() {
            self.for_each_line(axis, |idx| {
                for (j, c) in line.iter_mut().enumerate() {
                    *c = data[idx(j)];
                }
                self.inverse.process_with_scratch(&mut line, &mut scratch);
                for (j, c) in line.iter().enumerate() {
                    data[idx(j)] = *c;
                }
            });
        }
        let scale = 1.0 / self.lattice.num_sites() as f64;
        for (o, c) in out.iter_mut().zip(&data) {
            *o = c.re * scale;
        }
    }

    // DST-I along every axis: S[m] = sum_j v_j sin(pi j m / (n + 1)),
    // computed from the DFT of the odd extension of length 2(n + 1).
    fn dst_all_axes(&self, data: &mut [f64]) {
        let n = self.lattice.side();
        let len = 2 * (n + 1);
        let mut buf = vec![Complex64::default(); len];
        let mut scratch = vec![Complex64::default(); self.forward.get_inplace_scratch_len()];
        for axis in 0..self.lattice.dim() {
            self.for_each_line(axis, |idx| {
                buf[0] = Complex64::default();
                buf[n + 1] = Complex64::default();
                for j in 0..n {
                    let v = data[idx(j)];
                    buf[j + 1] = Complex64::new(v, 0.0);
                    buf[len - 1 - j] = Complex64::new(-v, 0.0);
                }
                self.forward.process_with_scratch(&mut buf, &mut scratch);
                for m in 0..n {
                    data[idx(m)] = -0.5 * buf[m + 1].im;
                }
            });
        }
    }

    fn apply_dirichlet(&self, r: &[f64], out: &mut [f64]) {
        let n = self.lattice.side();
        out.copy_from_slice(r);
        self.dst_all_axes(out);
        for (o, s) in out.iter_mut().zip(&self.inv_symbol) {
            *o *= *s;
        }
        self.dst_all_axes(out);
        let scale = (2.0 / (n + 1) as f64).powi(self.lattice.dim() as i32);
        for o in out.iter_mut() {
            *o *= scale;
        }
    }
}
