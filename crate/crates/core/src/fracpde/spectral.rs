//! FFT workspace on the periodic computational grid.
//!
//! In mirror mode every field is first extended to the doubled grid by
//! half-sample even reflection, so cell `i` of the copy is cell `2n−1−i` of the
//! original. Normal vector components are extended oddly. All spectral
//! multipliers then act on an ordinary periodic array.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::{BoundaryMode, Field2D, Grid2D, VectorField2D};

pub type C64 = Complex64;

pub struct Spectral {
    pub grid: Grid2D,
    /// Extended (computational) shape.
    pub nx: usize,
    pub ny: usize,
    /// Angular wavenumbers; index `n/2` is the Nyquist mode.
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    column: Vec<C64>,
    scratch: Vec<C64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).field("nx", &self.nx).field("ny", &self.ny).finish()
    }
}

fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|m| {
            let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            2.0 * PI * signed / length
        })
        .collect()
}

impl Spectral {
    pub fn new(grid: Grid2D) -> Self {
        let (nx, ny) = grid.extended_shape();
        let (lx, ly) = grid.extended_lengths();
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(nx);
        let row_inv = planner.plan_fft_inverse(nx);
        let col_fwd = planner.plan_fft_forward(ny);
        let col_inv = planner.plan_fft_inverse(ny);
        let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Spectral {
            grid,
            nx,
            ny,
            kx: wavenumbers(nx, lx),
            ky: wavenumbers(ny, ly),
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            column: vec![C64::default(); ny],
            scratch: vec![C64::default(); scratch_len],
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn is_nyquist_x(&self, i: usize) -> bool {
        i == self.nx / 2
    }

    #[inline]
    pub fn is_nyquist_y(&self, j: usize) -> bool {
        j == self.ny / 2
    }

    /// `|ξ|²` at flat index `k`.
    #[inline]
    pub fn xi_sq(&self, k: usize) -> f64 {
        let (i, j) = (k % self.nx, k / self.nx);
        self.kx[i] * self.kx[i] + self.ky[j] * self.ky[j]
    }

    /// `|ξ|^p` with the zero mode mapped to 0.
    pub fn abs_xi_pow(&self, p: f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let q = self.xi_sq(k);
                if q == 0.0 {
                    0.0
                } else {
                    q.powf(0.5 * p)
                }
            })
            .collect()
    }

    /// Index of the mode `−ξ`.
    #[inline]
    pub fn conjugate_index(&self, k: usize) -> usize {
        let (i, j) = (k % self.nx, k / self.nx);
        self.index((self.nx - i) % self.nx, (self.ny - j) % self.ny)
    }

    fn transform(&mut self, data: &mut [C64], inverse: bool) {
        debug_assert_eq!(data.len(), self.len());
        let (row, col) = if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        for r in data.chunks_exact_mut(self.nx) {
            row.process_with_scratch(r, &mut self.scratch);
        }
        for i in 0..self.nx {
            for j in 0..self.ny {
                self.column[j] = data[i + self.nx * j];
            }
            col.process_with_scratch(&mut self.column, &mut self.scratch);
            for j in 0..self.ny {
                data[i + self.nx * j] = self.column[j];
            }
        }
        if inverse {
            let s = 1.0 / self.len() as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn forward(&mut self, data: &mut [C64]) {
        self.transform(data, false);
    }

    /// Normalized inverse transform.
    pub fn inverse(&mut self, data: &mut [C64]) {
        self.transform(data, true);
    }

    /// Extend a physical array to the computational grid. `odd_x`/`odd_y`
    /// select odd reflection across the corresponding walls.
    pub fn extend(&self, values: &[f64], odd_x: bool, odd_y: bool) -> Vec<f64> {
        let g = self.grid;
        match g.boundary {
            BoundaryMode::Periodic => values.to_vec(),
            BoundaryMode::NeumannMirror => {
                let mut out = vec![0.0; self.len()];
                for j in 0..self.ny {
                    let (jj, sy) = if j < g.ny { (j, 1.0) } else { (2 * g.ny - 1 - j, if odd_y { -1.0 } else { 1.0 }) };
                    for i in 0..self.nx {
                        let (ii, sx) = if i < g.nx { (i, 1.0) } else { (2 * g.nx - 1 - i, if odd_x { -1.0 } else { 1.0 }) };
                        out[self.index(i, j)] = sx * sy * values[g.index(ii, jj)];
                    }
                }
                out
            }
        }
    }

    /// Physical block of a computational-grid array.
    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let mut out = Vec::with_capacity(g.len());
        for j in 0..g.ny {
            out.extend_from_slice(&values[self.nx * j..self.nx * j + g.nx]);
        }
        out
    }

    pub fn to_hat(&mut self, real: &[f64]) -> Vec<C64> {
        let mut data: Vec<C64> = real.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    /// Spectrum of a scalar field on the computational grid.
    pub fn field_hat(&mut self, u: &Field2D) -> Vec<C64> {
        let ext = self.extend(&u.values, false, false);
        self.to_hat(&ext)
    }

    /// Spectra of both components of a vector field.
    pub fn vector_hat(&mut self, v: &VectorField2D) -> (Vec<C64>, Vec<C64>) {
        let ex = self.extend(&v.x, true, false);
        let ey = self.extend(&v.y, false, true);
        self.pair_hat(&ex, &ey)
    }

    /// Forward transforms of two real arrays using one complex FFT.
    pub fn pair_hat(&mut self, a: &[f64], b: &[f64]) -> (Vec<C64>, Vec<C64>) {
        let mut z: Vec<C64> = a.iter().zip(b).map(|(&x, &y)| C64::new(x, y)).collect();
        self.forward(&mut z);
        let mut ah = vec![C64::default(); z.len()];
        let mut bh = vec![C64::default(); z.len()];
        for k in 0..z.len() {
            let zc = z[self.conjugate_index(k)].conj();
            ah[k] = 0.5 * (z[k] + zc);
            bh[k] = C64::new(0.0, -0.5) * (z[k] - zc);
        }
        (ah, bh)
    }

    /// Inverse transforms of two conjugate-symmetric spectra using one complex FFT.
    pub fn pair_real(&mut self, ah: &[C64], bh: &[C64]) -> (Vec<f64>, Vec<f64>) {
        let i = C64::new(0.0, 1.0);
        let mut z: Vec<C64> = ah.iter().zip(bh).map(|(&a, &b)| a + i * b).collect();
        self.inverse(&mut z);
        (z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect())
    }

    pub fn real(&mut self, hat: &[C64]) -> Vec<f64> {
        let mut data = hat.to_vec();
        self.inverse(&mut data);
        data.iter().map(|c| c.re).collect()
    }

    /// Scalar field from a spectrum.
    pub fn field_from_hat(&mut self, hat: &[C64]) -> Field2D {
        let full = self.real(hat);
        Field2D {
            grid: self.grid,
            values: self.restrict(&full),
        }
    }

    /// Fractional gradient multiplier `iξ|ξ|^{α−2}` applied to a spectrum.
    /// Odd symbols vanish on the Nyquist line of their own direction so real
    /// input stays real.
    pub fn frac_gradient_hat(&self, hat: &[C64], alpha: f64) -> (Vec<C64>, Vec<C64>) {
        let mut gx = vec![C64::default(); hat.len()];
        let mut gy = vec![C64::default(); hat.len()];
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = self.index(i, j);
                let q = self.xi_sq(k);
                if q == 0.0 {
                    continue;
                }
                let s = q.powf(0.5 * alpha - 1.0);
                let ih = C64::new(-hat[k].im, hat[k].re) * s;
                if !self.is_nyquist_x(i) {
                    gx[k] = ih * self.kx[i];
                }
                if !self.is_nyquist_y(j) {
                    gy[k] = ih * self.ky[j];
                }
            }
        }
        (gx, gy)
    }

    /// Classical spectral divergence `iξ·F̂`, with the same Nyquist convention.
    pub fn divergence_hat(&self, fx: &[C64], fy: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::default(); fx.len()];
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = self.index(i, j);
                let mut s = C64::default();
                if !self.is_nyquist_x(i) {
                    s += fx[k] * self.kx[i];
                }
                if !self.is_nyquist_y(j) {
                    s += fy[k] * self.ky[j];
                }
                out[k] = C64::new(-s.im, s.re);
            }
        }
        out
    }
}
