//! Periodic base testbeds for the generalized Kähler-Einstein equation
//! `(omega_Sigma + i ddbar u)^m = F e^u omega_Sigma^m`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ma_density;
use crate::grid::{GridSpec, HermitianField, ScalarField};
use crate::spectral::SpectralOps;

use super::product::positive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    Cos,
    Sin,
}

impl Wave {
    fn eval(self, arg: f64) -> f64 {
        match self {
            Wave::Cos => arg.cos(),
            Wave::Sin => arg.sin(),
        }
    }
}

/// `amplitude * fx(2 pi kx x) * fy(2 pi ky y)` on the unit base torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub fx: Wave,
    pub kx: i32,
    pub fy: Wave,
    pub ky: i32,
}

impl TrigTerm {
    pub fn new(amplitude: f64, fx: Wave, kx: i32, fy: Wave, ky: i32) -> Self {
        Self {
            amplitude,
            fx,
            kx,
            fy,
            ky,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.amplitude
            * self.fx.eval(2.0 * PI * self.kx as f64 * x)
            * self.fy.eval(2.0 * PI * self.ky as f64 * y)
    }
}

/// Samples a sum of trigonometric terms on a one-dimensional base grid.
pub fn sample_terms(grid: &GridSpec, terms: &[TrigTerm]) -> Result<ScalarField> {
    ScalarField::from_fn(grid, |x| terms.iter().map(|t| t.eval(x[0], x[1])).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    /// `F` identically equal to `value`.
    Constant { value: f64 },
    /// `F` computed backwards from a chosen exact solution `u*`.
    Manufactured { solution: Vec<TrigTerm> },
    /// Fibration-induced density. With `Omega = e^{s|z|^2 + eta}` and
    /// `Im tau = e^{-s|z|^2 + sigma}` (`sigma` = `log_profile`), the
    /// quasi-periodic factors cancel and `F = 2 e^{eta + sigma} / det omega_Sigma`,
    /// `omega_WP = s flat - i ddbar sigma`.
    Modulus { log_profile: Vec<TrigTerm> },
}

fn default_resolution() -> usize {
    64
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GkeTestbedSpec {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// `omega_Sigma = base_scale * flat + i ddbar eta`.
    #[serde(default = "default_scale")]
    pub base_scale: f64,
    #[serde(default)]
    pub base_potential: Vec<TrigTerm>,
    pub density: DensitySpec,
}

impl GkeTestbedSpec {
    pub fn constant(resolution: usize, value: f64) -> Self {
        Self {
            resolution,
            base_scale: 1.0,
            base_potential: Vec::new(),
            density: DensitySpec::Constant { value },
        }
    }

    /// `u* = 0.1 sin(2 pi x) cos(2 pi y)` over `omega_Sigma = 4 flat`.
    pub fn manufactured_default(resolution: usize) -> Self {
        Self {
            resolution,
            base_scale: 4.0,
            base_potential: Vec::new(),
            density: DensitySpec::Manufactured {
                solution: vec![TrigTerm::new(0.1, Wave::Sin, 1, Wave::Cos, 1)],
            },
        }
    }

    /// A curved base with a varying modulus profile.
    pub fn modulus_default(resolution: usize) -> Self {
        Self {
            resolution,
            base_scale: 1.0,
            base_potential: vec![TrigTerm::new(0.02, Wave::Cos, 1, Wave::Cos, 0)],
            density: DensitySpec::Modulus {
                log_profile: vec![
                    TrigTerm::new(0.03, Wave::Sin, 0, Wave::Cos, 1),
                    TrigTerm::new(0.01, Wave::Cos, 1, Wave::Sin, 1),
                ],
            },
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::unit(1, self.resolution)
    }

    pub fn validate(&self) -> Result<()> {
        positive("base_scale", self.base_scale)?;
        let omega = self.omega_sigma()?;
        if omega.check_positive().is_err() {
            return Err(Error::InvalidParameter {
                name: "base_potential",
                reason: "omega_Sigma is not positive definite".into(),
            });
        }
        if let DensitySpec::Constant { value } = self.density {
            positive("density.value", value)?;
        }
        if let Some(u) = self.manufactured_solution()? {
            let ops = SpectralOps::new(u.grid());
            if !omega.add(&ops.ddbar(&u))?.is_positive() {
                return Err(Error::InvalidParameter {
                    name: "density.solution",
                    reason: "omega_Sigma + i ddbar u* is not positive definite".into(),
                });
            }
        }
        let f = self.density()?;
        if f.min() <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "density",
                reason: "F must be strictly positive".into(),
            });
        }
        Ok(())
    }

    pub fn omega_sigma(&self) -> Result<HermitianField> {
        let grid = self.grid()?;
        let eta = sample_terms(&grid, &self.base_potential)?;
        HermitianField::flat(&grid, self.base_scale).add(&SpectralOps::new(&grid).ddbar(&eta))
    }

    pub fn manufactured_solution(&self) -> Result<Option<ScalarField>> {
        match &self.density {
            DensitySpec::Manufactured { solution } => Ok(Some(sample_terms(&self.grid()?, solution)?)),
            _ => Ok(None),
        }
    }

    pub fn density(&self) -> Result<ScalarField> {
        let grid = self.grid()?;
        let omega = self.omega_sigma()?;
        match &self.density {
            DensitySpec::Constant { value } => Ok(ScalarField::constant(&grid, *value)),
            DensitySpec::Manufactured { solution } => {
                let u = sample_terms(&grid, solution)?;
                let shifted = omega.add(&SpectralOps::new(&grid).ddbar(&u))?;
                let num = ma_density(&shifted);
                let den = ma_density(&omega);
                let values = num
                    .values()
                    .iter()
                    .zip(den.values())
                    .zip(u.values())
                    .map(|((n, d), u)| n / d * (-u).exp())
                    .collect();
                ScalarField::new(grid, values)
            }
            DensitySpec::Modulus { log_profile } => {
                let eta = sample_terms(&grid, &self.base_potential)?;
                let sigma = sample_terms(&grid, log_profile)?;
                let den = ma_density(&omega);
                let values = eta
                    .values()
                    .iter()
                    .zip(sigma.values())
                    .zip(den.values())
                    .map(|((e, s), d)| 2.0 * (e + s).exp() / d)
                    .collect();
                ScalarField::new(grid, values)
            }
        }
    }

    /// Weil-Petersson form of the modulus testbed.
    pub fn weil_petersson(&self) -> Result<Option<HermitianField>> {
        match &self.density {
            DensitySpec::Modulus { log_profile } => {
                let grid = self.grid()?;
                let sigma = sample_terms(&grid, log_profile)?;
                let wp = HermitianField::flat(&grid, self.base_scale)
                    .sub(&SpectralOps::new(&grid).ddbar(&sigma))?;
                Ok(Some(wp))
            }
            _ => Ok(None),
        }
    }
}
