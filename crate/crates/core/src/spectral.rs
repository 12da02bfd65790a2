//! Fourier differentiation on periodic grids.
//!
//! Wirtinger derivatives act on a mode `exp(i (k_x x + k_y y))` as
//! `d/dz -> (i k_x + k_y) / 2` and `d/dzbar -> (i k_x - k_y) / 2`. First
//! derivatives drop the Nyquist mode of each axis; the diagonal second
//! derivative `d^2/dz dzbar = (d_xx + d_yy) / 4` keeps it.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{GridSpec, HermitianField, ScalarField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Cached FFT plans and derivative symbols for one grid.
pub struct SpectralOps {
    grid: GridSpec,
    shape: Vec<usize>,
    plans: Vec<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
    dz: Vec<Vec<Complex64>>,
    dzbar: Vec<Vec<Complex64>>,
    diag: Vec<Vec<f64>>,
    laplace: Vec<f64>,
}

impl std::fmt::Debug for SpectralOps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOps").field("grid", &self.grid).finish()
    }
}

fn wavenumbers(n: usize, period: f64) -> (Vec<f64>, usize) {
    let k = (0..n)
        .map(|i| {
            let s = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * PI * s / period
        })
        .collect();
    (k, n / 2)
}

impl SpectralOps {
    pub fn new(grid: &GridSpec) -> Self {
        let shape = grid.shape();
        let mut planner = FftPlanner::new();
        let plans = shape
            .iter()
            .map(|&n| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
            .collect();

        let m = grid.complex_dim();
        let len = grid.len();
        let axes: Vec<(Vec<f64>, usize)> = (0..2 * m)
            .map(|a| wavenumbers(shape[a], grid.periods()[a]))
            .collect();

        let mut dz = vec![Vec::with_capacity(len); m];
        let mut dzbar = vec![Vec::with_capacity(len); m];
        let mut diag = vec![Vec::with_capacity(len); m];
        let mut laplace = Vec::with_capacity(len);
        let mut idx = vec![0usize; 2 * m];
        for _ in 0..len {
            let mut lap = 0.0;
            for j in 0..m {
                let (kx_all, nyq_x) = &axes[2 * j];
                let (ky_all, nyq_y) = &axes[2 * j + 1];
                let (ix, iy) = (idx[2 * j], idx[2 * j + 1]);
                let (kx, ky) = (kx_all[ix], ky_all[iy]);
                let kx1 = if ix == *nyq_x { 0.0 } else { kx };
                let ky1 = if iy == *nyq_y { 0.0 } else { ky };
                dz[j].push(Complex64::new(ky1, kx1) * 0.5);
                dzbar[j].push(Complex64::new(-ky1, kx1) * 0.5);
                let d = -0.25 * (kx * kx + ky * ky);
                diag[j].push(d);
                lap += d;
            }
            laplace.push(lap);
            for a in (0..2 * m).rev() {
                idx[a] += 1;
                if idx[a] < shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }

        Self {
            grid: grid.clone(),
            shape,
            plans,
            dz,
            dzbar,
            diag,
            laplace,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let total = data.len();
        let mut stride = 1;
        for axis in (0..self.shape.len()).rev() {
            let n = self.shape[axis];
            let fft = if inverse {
                &self.plans[axis].1
            } else {
                &self.plans[axis].0
            };
            if stride == 1 {
                fft.process(data);
            } else {
                let mut line = vec![ZERO; n];
                let block = n * stride;
                for outer in (0..total).step_by(block) {
                    for inner in 0..stride {
                        let base = outer + inner;
                        for (j, v) in line.iter_mut().enumerate() {
                            *v = data[base + j * stride];
                        }
                        fft.process(&mut line);
                        for (j, v) in line.iter().enumerate() {
                            data[base + j * stride] = *v;
                        }
                    }
                }
            }
            stride *= n;
        }
        if inverse {
            let scale = 1.0 / total as f64;
            data.iter_mut().for_each(|v| *v *= scale);
        }
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Inverse transform including the `1/len` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    pub fn spectrum_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    pub fn spectrum(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut data = values.to_vec();
        self.forward(&mut data);
        data
    }

    fn apply(&self, spectrum: &[Complex64], symbol: impl Fn(usize) -> Complex64) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = spectrum
            .iter()
            .enumerate()
            .map(|(i, s)| s * symbol(i))
            .collect();
        self.inverse(&mut out);
        out
    }

    fn ddbar_symbol(&self, j: usize, k: usize, i: usize) -> Complex64 {
        if j == k {
            Complex64::new(self.diag[j][i], 0.0)
        } else {
            self.dz[j][i] * self.dzbar[k][i]
        }
    }

    /// `d/dz_j` of complex samples.
    pub fn dz(&self, values: &[Complex64], j: usize) -> Vec<Complex64> {
        self.apply(&self.spectrum(values), |i| self.dz[j][i])
    }

    /// `d/dzbar_j` of complex samples.
    pub fn dzbar(&self, values: &[Complex64], j: usize) -> Vec<Complex64> {
        self.apply(&self.spectrum(values), |i| self.dzbar[j][i])
    }

    /// `d^2/dz_j dzbar_k` of complex samples.
    pub fn dz_dzbar(&self, values: &[Complex64], j: usize, k: usize) -> Vec<Complex64> {
        self.apply(&self.spectrum(values), |i| self.ddbar_symbol(j, k, i))
    }

    /// Real diagonal component `d^2 f/dz_j dzbar_j` of a real field.
    pub fn ddbar_diagonal(&self, values: &[f64], j: usize) -> Vec<f64> {
        self.apply(&self.spectrum_real(values), |i| Complex64::new(self.diag[j][i], 0.0))
            .into_iter()
            .map(|c| c.re)
            .collect()
    }

    /// Flat complex Laplacian `sum_j d^2/dz_j dzbar_j` of a real field.
    pub fn flat_laplacian(&self, values: &[f64]) -> Vec<f64> {
        self.apply(&self.spectrum_real(values), |i| Complex64::new(self.laplace[i], 0.0))
            .into_iter()
            .map(|c| c.re)
            .collect()
    }

    /// Solves `(c * flat_laplacian - 1) w = f` exactly in Fourier space (`c >= 0`).
    pub fn solve_shifted_laplacian(&self, f: &[f64], c: f64) -> Vec<f64> {
        self.apply(&self.spectrum_real(f), |i| {
            Complex64::new(1.0 / (c * self.laplace[i] - 1.0), 0.0)
        })
        .into_iter()
        .map(|c| c.re)
        .collect()
    }

    /// Multiplies every mode by `exp(s * flat symbol)`: the exact heat
    /// propagator of `d_t w = a(t) * flat_laplacian(w)` with `s = int a dt`.
    pub fn heat_propagate(&self, values: &mut [f64], s: f64) {
        let out = self.apply(&self.spectrum_real(values), |i| {
            Complex64::new((s * self.laplace[i]).exp(), 0.0)
        });
        for (v, c) in values.iter_mut().zip(out) {
            *v = c.re;
        }
    }

    /// Full complex Hessian `d^2 phi / dz_j dzbar_k`, Hermitian by construction.
    pub fn ddbar(&self, phi: &ScalarField) -> HermitianField {
        debug_assert_eq!(phi.grid(), &self.grid);
        let m = self.grid.complex_dim();
        let spec = self.spectrum_real(phi.values());
        let mut out = vec![ZERO; self.grid.len() * m * m];
        for j in 0..m {
            for k in j..m {
                let comp = self.apply(&spec, |i| self.ddbar_symbol(j, k, i));
                for (p, v) in comp.iter().enumerate() {
                    if j == k {
                        out[p * m * m + j * m + j] = Complex64::new(v.re, 0.0);
                    } else {
                        out[p * m * m + j * m + k] = *v;
                        out[p * m * m + k * m + j] = v.conj();
                    }
                }
            }
        }
        HermitianField::from_raw(self.grid.clone(), m, out)
    }
}
