//! Exactly computable model fibrations and their reference data.

use serde::{Deserialize, Serialize};

pub mod fiber_flow;
pub mod product;
pub mod semiflat;
pub mod testbed;

pub use fiber_flow::{FiberFlowSpec, FiberMode};
pub use product::{product_closed_form, ProductModelSpec};
pub use semiflat::SemiFlatSpec;
pub use testbed::GkeTestbedSpec;

/// Coefficients of `omega_hat_t = base * omega_B + fiber * omega_F` for models
/// whose reference family is homogeneous in both factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCoefficients {
    pub base: f64,
    pub fiber: f64,
}

/// `omega_hat_t = omega_infinity + e^{-t} (omega_0 - omega_infinity)`.
pub trait ReferenceFamily {
    fn reference_metric(&self, t: f64) -> ReferenceCoefficients;
}

/// The four model families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSpec {
    Product(ProductModelSpec),
    FiberFlow(FiberFlowSpec),
    GkeTestbed(GkeTestbedSpec),
    SemiFlat(SemiFlatSpec),
}

impl ModelSpec {
    pub fn validate(&self) -> crate::Result<()> {
        match self {
            ModelSpec::Product(s) => s.validate(),
            ModelSpec::FiberFlow(s) => s.validate(),
            ModelSpec::GkeTestbed(s) => s.validate(),
            ModelSpec::SemiFlat(s) => s.validate(),
        }
    }
}
