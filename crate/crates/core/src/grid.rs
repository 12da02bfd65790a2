//! Periodic sampling lattices and the fields that live on them.
//!
//! A grid of complex dimension `m` samples the real coordinates
//! `(x_1, y_1, ..., x_m, y_m)` with `z_j = x_j + i y_j`. Complex coordinate `j`
//! is sampled on an `N_j x N_j` lattice, so the real shape is
//! `[N_1, N_1, N_2, N_2, ...]` in row-major order (last axis fastest).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Largest complex dimension supported by the pointwise matrix kernels.
pub const MAX_COMPLEX_DIM: usize = 3;

/// Relative tolerance used when validating Hermitian symmetry.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    complex_dim: usize,
    resolution: Vec<usize>,
    periods: Vec<f64>,
}

impl GridSpec {
    /// `resolution[j]` points along both real axes of `z_j`; `periods` holds one
    /// period per real axis, ordered `x_1, y_1, x_2, y_2, ...`.
    pub fn new(resolution: Vec<usize>, periods: Vec<f64>) -> Result<Self> {
        let m = resolution.len();
        if m == 0 || m > MAX_COMPLEX_DIM {
            return Err(Error::InvalidGrid(format!(
                "complex dimension must lie in 1..={MAX_COMPLEX_DIM}, got {m}"
            )));
        }
        if let Some(n) = resolution.iter().find(|&&n| n < 8 || n % 2 != 0) {
            return Err(Error::InvalidGrid(format!(
                "resolution must be even and at least 8, got {n}"
            )));
        }
        if periods.len() != 2 * m {
            return Err(Error::InvalidGrid(format!(
                "expected {} real periods, got {}",
                2 * m,
                periods.len()
            )));
        }
        if let Some(p) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidGrid(format!("periods must be positive, got {p}")));
        }
        Ok(Self {
            complex_dim: m,
            resolution,
            periods,
        })
    }

    /// Unit square lattice in every complex coordinate.
    pub fn unit(complex_dim: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; complex_dim], vec![1.0; 2 * complex_dim])
    }

    pub fn complex_dim(&self) -> usize {
        self.complex_dim
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    /// Real shape, two axes per complex coordinate.
    pub fn shape(&self) -> Vec<usize> {
        self.resolution.iter().flat_map(|&n| [n, n]).collect()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().map(|n| n * n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.resolution[axis / 2] as f64
    }

    /// Multi-index along the real axes.
    pub fn unravel(&self, mut index: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for axis in (0..shape.len()).rev() {
            idx[axis] = index % shape[axis];
            index /= shape[axis];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let shape = self.shape();
        idx.iter()
            .zip(&shape)
            .fold(0, |acc, (&i, &n)| acc * n + (i % n))
    }

    /// Real coordinates of a grid point.
    pub fn coords(&self, index: usize) -> Vec<f64> {
        self.unravel(index)
            .iter()
            .enumerate()
            .map(|(axis, &i)| i as f64 * self.spacing(axis))
            .collect()
    }

    /// Volume of one cell in the Euclidean measure.
    pub fn cell_volume(&self) -> f64 {
        (0..2 * self.complex_dim).map(|a| self.spacing(a)).product()
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Real samples on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at the real coordinates of every grid point.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self::new(grid.clone(), values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Plain grid mean, summed in index order.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
            .0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_raw(self.grid.clone(), self.values.iter().map(|v| c * v).collect())
    }

    pub fn add_constant(&self, c: f64) -> Self {
        Self::from_raw(self.grid.clone(), self.values.iter().map(|v| c + v).collect())
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.grid.clone(), values)
    }
}

/// Per-point `m x m` component matrices `g_{j kbar}` of a real (1,1)-form,
/// stored row-major at each point.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    grid: GridSpec,
    dim: usize,
    values: Vec<Complex64>,
}

impl HermitianField {
    /// Validates Hermitian symmetry to [`HERMITIAN_TOL`] relative at every point.
    pub fn new(grid: GridSpec, dim: usize, values: Vec<Complex64>) -> Result<Self> {
        if dim == 0 || dim > MAX_COMPLEX_DIM {
            return Err(Error::InvalidGrid(format!("unsupported form dimension {dim}")));
        }
        if values.len() != grid.len() * dim * dim {
            return Err(Error::GridMismatch(format!(
                "{} entries for {} points of {dim}x{dim} matrices",
                values.len(),
                grid.len()
            )));
        }
        let field = Self { grid, dim, values };
        for index in 0..field.grid.len() {
            let g = field.at(index);
            if g.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
                return Err(Error::NonFinite { index });
            }
            let deviation = linalg::hermitian_deviation(dim, g);
            if deviation > HERMITIAN_TOL {
                return Err(Error::NotHermitian { index, deviation });
            }
        }
        Ok(field)
    }

    pub(crate) fn from_raw(grid: GridSpec, dim: usize, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len() * dim * dim);
        Self { grid, dim, values }
    }

    /// Builds a field whose matrix dimension equals the grid's complex dimension.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(usize, &[f64], &mut [Complex64])) -> Result<Self> {
        Self::from_fn_with_dim(grid, grid.complex_dim(), f)
    }

    /// Like [`HermitianField::from_fn`] with an explicit matrix dimension, for
    /// forms on a product whose factors are not all discretized.
    pub fn from_fn_with_dim(
        grid: &GridSpec,
        dim: usize,
        f: impl Fn(usize, &[f64], &mut [Complex64]),
    ) -> Result<Self> {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len() * dim * dim];
        for (i, chunk) in values.chunks_mut(dim * dim).enumerate() {
            f(i, &grid.coords(i), chunk);
        }
        Self::new(grid.clone(), dim, values)
    }

    /// `c` times the flat metric `sum_j i dz_j ^ dzbar_j`.
    pub fn flat(grid: &GridSpec, c: f64) -> Self {
        let m = grid.complex_dim();
        Self::constant_diagonal(grid, &vec![c; m])
    }

    pub fn constant_diagonal(grid: &GridSpec, diag: &[f64]) -> Self {
        let m = diag.len();
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len() * m * m];
        for chunk in values.chunks_mut(m * m) {
            for (j, &d) in diag.iter().enumerate() {
                chunk[j * m + j] = Complex64::new(d, 0.0);
            }
        }
        Self::from_raw(grid.clone(), m, values)
    }

    /// One-dimensional form with component `g` at every point.
    pub fn from_scalar(g: &ScalarField) -> Self {
        let values = g.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::from_raw(g.grid().clone(), 1, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Component matrix at one grid point, row-major.
    pub fn at(&self, index: usize) -> &[Complex64] {
        let mm = self.dim * self.dim;
        &self.values[index * mm..(index + 1) * mm]
    }

    /// The `(j, k)` component sampled over the grid.
    pub fn component(&self, j: usize, k: usize) -> Vec<Complex64> {
        let m = self.dim;
        self.values
            .chunks(m * m)
            .map(|g| g[j * m + k])
            .collect()
    }

    /// Real part of a diagonal component as a scalar field.
    pub fn diagonal_component(&self, j: usize) -> ScalarField {
        let values = self.component(j, j).iter().map(|c| c.re).collect();
        ScalarField::from_raw(self.grid.clone(), values)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_raw(
            self.grid.clone(),
            self.dim,
            self.values.iter().map(|v| v * c).collect(),
        )
    }

    pub fn add(&self, other: &HermitianField) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self::from_raw(
            self.grid.clone(),
            self.dim,
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &HermitianField) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self::from_raw(
            self.grid.clone(),
            self.dim,
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Largest entry modulus over all points and components.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Positivity predicate via pointwise Cholesky pivots.
    pub fn is_positive(&self) -> bool {
        self.check_positive().is_ok()
    }

    /// Returns the first point whose Cholesky factorization breaks down.
    pub fn check_positive(&self) -> Result<()> {
        for index in 0..self.len() {
            if let Err(pivot) = linalg::cholesky(self.dim, self.at(index)) {
                return Err(Error::NotPositive { index, pivot });
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue over the grid.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.len())
            .map(|i| linalg::eigenvalues(self.dim, self.at(i))[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check_compatible(&self, other: &HermitianField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.dim != other.dim {
            return Err(Error::GridMismatch(format!(
                "form dimensions {} and {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }
}
