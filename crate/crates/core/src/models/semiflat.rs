//! Local elliptic fibration `(B x C) / (Z + tau(z) Z)` over a base patch, with
//! the semi-flat potential `psi = (Im xi)^2 / Im tau(z)`.
//!
//! Fields are sampled on a two-dimensional lattice whose first complex
//! coordinate is the base patch and whose second holds lattice coordinates
//! `(s, u)` of the fiber point `xi = s + u tau(z)`. Nothing here is periodic;
//! every derivative is analytic.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::mixed_density;
use crate::grid::{GridSpec, HermitianField, ScalarField};
use crate::spectral::SpectralOps;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn default_tau0() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_slope() -> [f64; 2] {
    [0.2, 0.0]
}

fn default_origin() -> [f64; 2] {
    [-0.5, -0.5]
}

fn default_extent() -> [f64; 2] {
    [1.0, 1.0]
}

fn default_resolution() -> usize {
    16
}

/// Modulus `tau(z) = tau0 + slope * z` on the patch `origin + [0, extent)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiFlatSpec {
    #[serde(default = "default_tau0")]
    pub tau0: [f64; 2],
    #[serde(default = "default_slope")]
    pub tau_slope: [f64; 2],
    #[serde(default = "default_origin")]
    pub base_origin: [f64; 2],
    #[serde(default = "default_extent")]
    pub base_extent: [f64; 2],
    #[serde(default = "default_resolution")]
    pub base_resolution: usize,
    #[serde(default = "default_resolution")]
    pub fiber_resolution: usize,
}

impl Default for SemiFlatSpec {
    fn default() -> Self {
        Self {
            tau0: default_tau0(),
            tau_slope: default_slope(),
            base_origin: default_origin(),
            base_extent: default_extent(),
            base_resolution: default_resolution(),
            fiber_resolution: default_resolution(),
        }
    }
}

impl SemiFlatSpec {
    pub fn validate(&self) -> Result<()> {
        self.total_grid()?;
        // Im tau is affine in z, so its minimum over the patch sits at a corner.
        let [x0, y0] = self.base_origin;
        let [lx, ly] = self.base_extent;
        for z in [
            Complex64::new(x0, y0),
            Complex64::new(x0 + lx, y0),
            Complex64::new(x0, y0 + ly),
            Complex64::new(x0 + lx, y0 + ly),
        ] {
            self.im_tau(z)?;
        }
        Ok(())
    }

    pub fn tau(&self, z: Complex64) -> Complex64 {
        Complex64::new(self.tau0[0], self.tau0[1])
            + Complex64::new(self.tau_slope[0], self.tau_slope[1]) * z
    }

    pub fn dtau(&self, _z: Complex64) -> Complex64 {
        Complex64::new(self.tau_slope[0], self.tau_slope[1])
    }

    pub fn im_tau(&self, z: Complex64) -> Result<f64> {
        let im = self.tau(z).im;
        if im > 0.0 {
            Ok(im)
        } else {
            Err(Error::ModulusOutOfRange { im_tau: im })
        }
    }

    pub fn base_grid(&self) -> Result<GridSpec> {
        GridSpec::new(vec![self.base_resolution], self.base_extent.to_vec())
    }

    /// Base patch times fiber lattice coordinates.
    pub fn total_grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            vec![self.base_resolution, self.fiber_resolution],
            vec![self.base_extent[0], self.base_extent[1], 1.0, 1.0],
        )
    }

    pub fn base_point(&self, coords: &[f64]) -> Complex64 {
        Complex64::new(self.base_origin[0] + coords[0], self.base_origin[1] + coords[1])
    }

    /// Fiber point with lattice coordinates `(s, u)` over `z`.
    pub fn fiber_point(&self, z: Complex64, s: f64, u: f64) -> Complex64 {
        s + u * self.tau(z)
    }

    fn total_point(&self, coords: &[f64]) -> (Complex64, Complex64) {
        let z = self.base_point(coords);
        (z, self.fiber_point(z, coords[2], coords[3]))
    }
}

/// A potential on the universal cover `B x C` whose complex Hessian is known
/// in closed form. Forms are `[g_zz, g_zxi, g_xiz, g_xixi]` (row-major, barred
/// index second).
pub trait FiberPotential {
    fn potential(&self, z: Complex64, xi: Complex64) -> Result<f64>;
    fn form(&self, z: Complex64, xi: Complex64) -> Result<[Complex64; 4]>;
}

/// `psi(z, xi) = (Im xi)^2 / Im tau(z)`.
#[derive(Debug, Clone, Copy)]
pub struct SemiFlat<'a>(pub &'a SemiFlatSpec);

/// Negative control `(Im xi)^4 / Im tau(z)`: closed, but homogeneous of degree
/// four along the fibers.
#[derive(Debug, Clone, Copy)]
pub struct QuarticControl<'a>(pub &'a SemiFlatSpec);

pub fn semiflat_potential(z: Complex64, xi: Complex64, spec: &SemiFlatSpec) -> Result<f64> {
    SemiFlat(spec).potential(z, xi)
}

// With rho = Im tau harmonic, d_z rho = tau'/(2i) and v = Im xi has
// d_xi v = 1/(2i), d_xibar v = -1/(2i).
impl FiberPotential for SemiFlat<'_> {
    fn potential(&self, z: Complex64, xi: Complex64) -> Result<f64> {
        Ok(xi.im * xi.im / self.0.im_tau(z)?)
    }

    fn form(&self, z: Complex64, xi: Complex64) -> Result<[Complex64; 4]> {
        let rho = self.0.im_tau(z)?;
        let rho_z = self.0.dtau(z) / Complex64::new(0.0, 2.0);
        let v = xi.im;
        let zz = 2.0 * v * v * rho_z.norm_sqr() / (rho * rho * rho);
        let zx = Complex64::new(0.0, -v) * rho_z / (rho * rho);
        let xx = 0.5 / rho;
        Ok([Complex64::new(zz, 0.0), zx, zx.conj(), Complex64::new(xx, 0.0)])
    }
}

impl FiberPotential for QuarticControl<'_> {
    fn potential(&self, z: Complex64, xi: Complex64) -> Result<f64> {
        Ok(xi.im.powi(4) / self.0.im_tau(z)?)
    }

    fn form(&self, z: Complex64, xi: Complex64) -> Result<[Complex64; 4]> {
        let rho = self.0.im_tau(z)?;
        let rho_z = self.0.dtau(z) / Complex64::new(0.0, 2.0);
        let v = xi.im;
        let zz = 2.0 * v.powi(4) * rho_z.norm_sqr() / (rho * rho * rho);
        let zx = Complex64::new(0.0, -2.0 * v.powi(3)) * rho_z / (rho * rho);
        let xx = 3.0 * v * v / rho;
        Ok([Complex64::new(zz, 0.0), zx, zx.conj(), Complex64::new(xx, 0.0)])
    }
}

fn form_field(spec: &SemiFlatSpec, pot: &dyn FiberPotential) -> Result<HermitianField> {
    let grid = spec.total_grid()?;
    let mut values = Vec::with_capacity(grid.len() * 4);
    for i in 0..grid.len() {
        let (z, xi) = spec.total_point(&grid.coords(i));
        values.extend_from_slice(&pot.form(z, xi)?);
    }
    HermitianField::new(grid, 2, values)
}

/// Components of `i ddbar psi` in the `(z, xi)` frame over the sampled patch.
pub fn semiflat_form(spec: &SemiFlatSpec) -> Result<HermitianField> {
    form_field(spec, &SemiFlat(spec))
}

/// Relative sup-norm of `e^{-t} lambda_t^* omega - omega` with
/// `lambda_t(z, xi) = (z, e^{t/2} xi)`, for an arbitrary fiber potential.
pub fn rescaling_residual(t: f64, spec: &SemiFlatSpec, pot: &dyn FiberPotential) -> Result<f64> {
    let grid = spec.total_grid()?;
    let lambda = (0.5 * t).exp();
    let decay = (-t).exp();
    let weights = [1.0, lambda, lambda, lambda * lambda];
    let mut diff = 0.0_f64;
    let mut scale = 0.0_f64;
    for i in 0..grid.len() {
        let (z, xi) = spec.total_point(&grid.coords(i));
        let base = pot.form(z, xi)?;
        let pulled = pot.form(z, xi * lambda)?;
        for c in 0..4 {
            diff = diff.max((pulled[c] * (decay * weights[c]) - base[c]).norm());
            scale = scale.max(base[c].norm());
        }
    }
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Rescaling identity residual for the semi-flat form.
pub fn rescaling_check(t: f64, spec: &SemiFlatSpec) -> Result<f64> {
    rescaling_residual(t, spec, &SemiFlat(spec))
}

/// `omega_WP = i ddbar(-log Im tau) = |tau'|^2 / (4 (Im tau)^2)` on the base patch.
pub fn weil_petersson(spec: &SemiFlatSpec) -> Result<HermitianField> {
    let grid = spec.base_grid()?;
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let z = spec.base_point(&grid.coords(i));
        let rho = spec.im_tau(z)?;
        values.push(Complex64::new(spec.dtau(z).norm_sqr() / (4.0 * rho * rho), 0.0));
    }
    HermitianField::new(grid, 1, values)
}

/// Base potential `h(z) = quadratic |z|^2 + ripple cos(2 pi Re z)`, used both
/// for `omega_infinity = i ddbar h` and for `Omega = e^h` (flat fiber factor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePotential {
    pub quadratic: f64,
    pub ripple: f64,
}

impl Default for BasePotential {
    fn default() -> Self {
        Self {
            quadratic: 1.0,
            ripple: 0.05,
        }
    }
}

impl BasePotential {
    pub fn value(&self, z: Complex64) -> f64 {
        self.quadratic * z.norm_sqr() + self.ripple * (2.0 * PI * z.re).cos()
    }

    /// `d^2 h / dz dzbar`.
    pub fn ddbar(&self, z: Complex64) -> f64 {
        self.quadratic - PI * PI * self.ripple * (2.0 * PI * z.re).cos()
    }
}

/// Volume density `Omega = e^{h(z)}` on the sampled total space.
pub fn volume_form(spec: &SemiFlatSpec, base: &BasePotential) -> Result<ScalarField> {
    let grid = spec.total_grid()?;
    ScalarField::from_fn(&grid, |x| base.value(spec.base_point(x)).exp())
}

/// `omega_infinity` pulled back to the total space: base block only.
pub fn base_form_pullback(spec: &SemiFlatSpec, base: &BasePotential) -> Result<HermitianField> {
    let grid = spec.total_grid()?;
    HermitianField::from_fn(&grid, |_, x, m| {
        m[0] = Complex64::new(base.ddbar(spec.base_point(x)), 0.0);
        m[1] = ZERO;
        m[2] = ZERO;
        m[3] = ZERO;
    })
}

/// `F = Omega / (C(n, r) omega_infinity^(n-r) ^ omega_SF^r)` with `n = 2, r = 1`.
pub fn density_f(spec: &SemiFlatSpec, omega: &ScalarField, base: &BasePotential) -> Result<ScalarField> {
    let alpha = base_form_pullback(spec, base)?;
    let beta = semiflat_form(spec)?;
    let denom = mixed_density(&alpha, &beta, 1)?;
    omega.grid().check_same(denom.grid())?;
    let mut values = Vec::with_capacity(denom.len());
    for (index, (&o, &d)) in omega.values().iter().zip(denom.values()).enumerate() {
        if !(d > 0.0) {
            return Err(Error::NonPositiveDensity { index, value: d });
        }
        values.push(o / d);
    }
    ScalarField::new(omega.grid().clone(), values)
}

/// Largest per-fiber `std / |mean|` of a field on the total grid.
pub fn fiber_variation(field: &ScalarField) -> f64 {
    let res = field.grid().resolution();
    let fiber_len = res[1] * res[1];
    field
        .values()
        .chunks(fiber_len)
        .map(|fiber| {
            let n = fiber.len() as f64;
            let mean = fiber.iter().sum::<f64>() / n;
            let var = fiber.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            var.sqrt() / mean.abs()
        })
        .fold(0.0, f64::max)
}

/// Fiberwise flat potential: for a fiber form `scale * flat + ddbar(eta)`,
/// returns `Psi = -eta + c` with `c` chosen so that `Psi` integrates to zero
/// against the fiber form.
pub fn fiberwise_cy_potential(eta: &ScalarField, scale: f64) -> ScalarField {
    let ops = SpectralOps::new(eta.grid());
    let weight: Vec<f64> = ops
        .ddbar_diagonal(eta.values(), 0)
        .iter()
        .map(|d| scale + d)
        .collect();
    let total: f64 = weight.iter().sum();
    let c = eta.values().iter().zip(&weight).map(|(e, w)| e * w).sum::<f64>() / total;
    ScalarField::from_raw(
        eta.grid().clone(),
        eta.values().iter().map(|e| c - e).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SemiFlatSpec {
        SemiFlatSpec {
            base_resolution: 8,
            fiber_resolution: 8,
            ..Default::default()
        }
    }

    // Wirtinger derivative of a real function of (x, y) by fourth-order
    // Richardson-extrapolated central differences.
    fn wirtinger(f: &dyn Fn(f64, f64) -> Complex64, x: f64, y: f64, bar: bool) -> Complex64 {
        let d = |h: f64| {
            let fx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
            let fy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
            let i = Complex64::new(0.0, 1.0);
            if bar {
                (fx + i * fy) * 0.5
            } else {
                (fx - i * fy) * 0.5
            }
        };
        let h = 1e-3;
        (d(h / 2.0) * 4.0 - d(h)) / 3.0
    }

    #[test]
    fn potential_examples() {
        let s = spec();
        let z = Complex64::new(0.1, -0.2);
        assert_eq!(semiflat_potential(z, Complex64::new(0.7, 0.0), &s).unwrap(), 0.0);
        let s0 = SemiFlatSpec {
            tau_slope: [0.0, 0.0],
            ..spec()
        };
        let v = semiflat_potential(z, Complex64::new(0.0, 0.5), &s0).unwrap();
        assert!((v - 0.25).abs() < 1e-16);
    }

    #[test]
    fn potential_scaling_is_quadratic() {
        let s = spec();
        let z = Complex64::new(0.3, 0.2);
        let xi = Complex64::new(0.4, 0.9);
        for lambda in [-2.0, 0.5, (2.5_f64).exp()] {
            let lhs = semiflat_potential(z, xi * lambda, &s).unwrap();
            let rhs = lambda * lambda * semiflat_potential(z, xi, &s).unwrap();
            assert!((lhs - rhs).abs() <= 1e-15 * rhs.abs());
        }
    }

    #[test]
    fn analytic_form_matches_finite_differences() {
        let s = spec();
        let z = Complex64::new(0.2, -0.1);
        let xi = Complex64::new(0.3, 0.6);
        let form = SemiFlat(&s).form(z, xi).unwrap();
        let psi = |zz: Complex64, xx: Complex64| semiflat_potential(zz, xx, &s).unwrap();
        // d_xi d_xibar psi
        let dxib = |x: f64, y: f64| {
            wirtinger(&|a, b| Complex64::new(psi(z, Complex64::new(a, b)), 0.0), x, y, true)
        };
        let xx = wirtinger(&dxib, xi.re, xi.im, false);
        assert!((xx - form[3]).norm() < 1e-7);
        // d_z d_xibar psi
        let zxb = |x: f64, y: f64| {
            wirtinger(
                &|a, b| Complex64::new(psi(Complex64::new(x, y), Complex64::new(a, b)), 0.0),
                xi.re,
                xi.im,
                true,
            )
        };
        let zx = wirtinger(&zxb, z.re, z.im, false);
        assert!((zx - form[1]).norm() < 1e-7);
    }

    #[test]
    fn form_is_closed() {
        // d_xi g_{z xibar} = d_z g_{xi xibar} and d_z g_{xi zbar}... checked on
        // the analytic components by Richardson differences.
        let s = spec();
        let xi = Complex64::new(0.3, 0.6);
        let z = Complex64::new(0.2, -0.1);
        let f = SemiFlat(&s);
        let lhs = wirtinger(&|a, b| f.form(z, Complex64::new(a, b)).unwrap()[1], xi.re, xi.im, false);
        let rhs = wirtinger(&|a, b| f.form(Complex64::new(a, b), xi).unwrap()[3], z.re, z.im, false);
        assert!((lhs - rhs).norm() < 1e-10, "{lhs} vs {rhs}");
        let lhs = wirtinger(&|a, b| f.form(z, Complex64::new(a, b)).unwrap()[0], xi.re, xi.im, false);
        let rhs = wirtinger(&|a, b| f.form(Complex64::new(a, b), xi).unwrap()[2], z.re, z.im, false);
        assert!((lhs - rhs).norm() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn constant_modulus_is_block_diagonal() {
        let s = SemiFlatSpec {
            tau_slope: [0.0, 0.0],
            tau0: [0.3, 2.0],
            ..spec()
        };
        let form = semiflat_form(&s).unwrap();
        for i in 0..form.len() {
            let g = form.at(i);
            assert_eq!(g[0], ZERO);
            assert_eq!(g[1], ZERO);
            assert!((g[3].re - 0.25).abs() < 1e-16);
        }
    }

    #[test]
    fn fiber_component_independent_of_fiber_point() {
        let s = spec();
        let form = semiflat_form(&s).unwrap();
        let fiber_len = 64;
        for fiber in form.component(1, 1).chunks(fiber_len) {
            let first = fiber[0].re;
            assert!(fiber.iter().all(|c| (c.re - first).abs() <= 1e-12 * first));
        }
    }

    #[test]
    fn rescaling_identity_and_control() {
        let s = spec();
        assert_eq!(rescaling_check(0.0, &s).unwrap(), 0.0);
        for t in [1.0, 5.0] {
            assert!(rescaling_check(t, &s).unwrap() <= 1e-12);
            assert!(rescaling_residual(t, &s, &QuarticControl(&s)).unwrap() > 0.5);
        }
    }

    #[test]
    fn weil_petersson_examples() {
        let s0 = SemiFlatSpec {
            tau_slope: [0.0, 0.0],
            ..spec()
        };
        assert_eq!(weil_petersson(&s0).unwrap().sup_norm(), 0.0);
        let s = spec();
        let wp = weil_petersson(&s).unwrap();
        let grid = s.base_grid().unwrap();
        for i in 0..grid.len() {
            let z = s.base_point(&grid.coords(i));
            let f = |x: f64, y: f64| Complex64::new(-s.tau(Complex64::new(x, y)).im.ln(), 0.0);
            let fd = wirtinger(&|x, y| wirtinger(&f, x, y, true), z.re, z.im, false);
            assert!((wp.at(i)[0] - fd).norm() < 1e-8);
            assert!(wp.at(i)[0].re > 0.0);
        }
    }

    #[test]
    fn density_constant_along_fibers() {
        let s = spec();
        let base = BasePotential::default();
        let omega = volume_form(&s, &base).unwrap();
        let f = density_f(&s, &omega, &base).unwrap();
        assert!(fiber_variation(&f) <= 1e-10);
        let grid = s.total_grid().unwrap();
        let perturbed = ScalarField::from_fn(&grid, |x| {
            base.value(s.base_point(x)).exp() * (1.0 + 0.5 * (2.0 * PI * x[2]).sin())
        })
        .unwrap();
        let f = density_f(&s, &perturbed, &base).unwrap();
        assert!(fiber_variation(&f) > 0.1);
    }

    #[test]
    fn product_data_gives_constant_density() {
        let s = SemiFlatSpec {
            tau_slope: [0.0, 0.0],
            ..spec()
        };
        let base = BasePotential {
            quadratic: 1.0,
            ripple: 0.0,
        };
        let grid = s.total_grid().unwrap();
        let flat = ScalarField::constant(&grid, 1.0);
        let f = density_f(&s, &flat, &base).unwrap();
        assert!(f.values().iter().all(|&v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn fiberwise_potential_normalization() {
        let g = GridSpec::unit(1, 32).unwrap();
        assert_eq!(fiberwise_cy_potential(&ScalarField::zeros(&g), 1.0).sup_norm(), 0.0);
        let eta = ScalarField::from_fn(&g, |x| 0.05 * (2.0 * PI * x[0]).sin()).unwrap();
        let psi = fiberwise_cy_potential(&eta, 1.0);
        let ops = SpectralOps::new(&g);
        let w: Vec<f64> = ops.ddbar_diagonal(eta.values(), 0).iter().map(|d| 1.0 + d).collect();
        let integral: f64 = psi.values().iter().zip(&w).map(|(p, w)| p * w).sum::<f64>() / g.len() as f64;
        assert!(integral.abs() < 1e-12);
        let restored: Vec<f64> = ops
            .ddbar_diagonal(psi.values(), 0)
            .iter()
            .zip(&w)
            .map(|(d, w)| d + w)
            .collect();
        assert!(restored.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }
}
