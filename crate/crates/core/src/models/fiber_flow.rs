//! Hyperbolic curve times a flat elliptic fiber with a fiber-dependent
//! initial potential `phi_0(xi)`.
//!
//! With `Omega = b0 omega_B ^ omega_F` (so `i ddbar log Omega = omega_B`) the
//! potential stays a function of the fiber coordinate alone and the flow
//! reduces to a scalar equation on the fiber torus.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::spectral::SpectralOps;

use super::product::{positive, reference_base};
use super::{ReferenceCoefficients, ReferenceFamily};

/// One cosine mode of the initial fiber potential. `amplitude` is measured in
/// metric units: the mode contributes `-amplitude * b0 * cos(...)` to the
/// fiber component of `i ddbar phi_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberMode {
    pub kx: i32,
    pub ky: i32,
    pub amplitude: f64,
}

fn default_resolution() -> usize {
    16
}

fn default_modes() -> Vec<FiberMode> {
    vec![FiberMode {
        kx: 1,
        ky: 0,
        amplitude: 0.1,
    }]
}

fn default_horizon() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberFlowSpec {
    pub a0: f64,
    pub b0: f64,
    /// Fiber grid resolution `N` (unit square torus, `N x N` points).
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<FiberMode>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

impl FiberFlowSpec {
    pub fn new(a0: f64, b0: f64, resolution: usize, modes: Vec<FiberMode>) -> Result<Self> {
        let spec = Self {
            a0,
            b0,
            resolution,
            modes,
            horizon: default_horizon(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        positive("a0", self.a0)?;
        positive("b0", self.b0)?;
        positive("horizon", self.horizon)?;
        self.grid()?;
        if let Some(m) = self.modes.iter().find(|m| m.kx == 0 && m.ky == 0) {
            return Err(Error::InvalidParameter {
                name: "modes",
                reason: format!("mode ({}, {}) is not mean-free", m.kx, m.ky),
            });
        }
        let margin = self.initial_margin()?;
        if !(margin > 0.0) {
            return Err(Error::InvalidParameter {
                name: "modes",
                reason: format!("initial fiber metric not positive (min b0 + ddbar phi0 = {margin:e})"),
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::unit(1, self.resolution)
    }

    /// `phi_0 = sum amplitude * b0 / (pi^2 |k|^2) * cos(2 pi k.x)`, mean-free.
    pub fn initial_potential(&self) -> Result<ScalarField> {
        let grid = self.grid()?;
        ScalarField::from_fn(&grid, |x| {
            self.modes
                .iter()
                .map(|m| {
                    let k2 = (m.kx * m.kx + m.ky * m.ky) as f64;
                    let phase = 2.0 * PI * (m.kx as f64 * x[0] + m.ky as f64 * x[1]);
                    m.amplitude * self.b0 / (PI * PI * k2) * phase.cos()
                })
                .sum()
        })
    }

    /// `min (b0 + ddbar phi_0)` over the fiber grid.
    pub fn initial_margin(&self) -> Result<f64> {
        let phi0 = self.initial_potential()?;
        let ops = SpectralOps::new(phi0.grid());
        let d = ops.ddbar_diagonal(phi0.values(), 0);
        Ok(d.iter().fold(f64::INFINITY, |m, v| m.min(self.b0 + v)))
    }
}

impl ReferenceFamily for FiberFlowSpec {
    fn reference_metric(&self, t: f64) -> ReferenceCoefficients {
        ReferenceCoefficients {
            base: reference_base(self.a0, t),
            fiber: self.b0 * (-t).exp(),
        }
    }
}
