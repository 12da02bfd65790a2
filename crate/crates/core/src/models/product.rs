//! Product of a hyperbolic base (`Ric(omega_B) = -omega_B`) and a flat torus.
//!
//! The flow preserves the product structure, so the metric is
//! `a(t) omega_B + b(t) omega_F` with `a' = 1 - a` and `b' = -b`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{curvature_norm, MetricJet};

use super::{ReferenceCoefficients, ReferenceFamily};

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductModelSpec {
    /// Initial scale of the base factor.
    pub a0: f64,
    /// Initial scale of the flat fiber.
    pub b0: f64,
    /// Number of hyperbolic curve factors in the base.
    #[serde(default = "one")]
    pub base_dim: usize,
    #[serde(default = "one")]
    pub fiber_dim: usize,
}

impl ProductModelSpec {
    pub fn new(a0: f64, b0: f64) -> Result<Self> {
        let spec = Self {
            a0,
            b0,
            base_dim: 1,
            fiber_dim: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        positive("a0", self.a0)?;
        positive("b0", self.b0)?;
        if self.base_dim == 0 || self.base_dim > crate::grid::MAX_COMPLEX_DIM {
            return Err(Error::InvalidParameter {
                name: "base_dim",
                reason: format!("must lie in 1..={}", crate::grid::MAX_COMPLEX_DIM),
            });
        }
        if self.fiber_dim == 0 {
            return Err(Error::InvalidParameter {
                name: "fiber_dim",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// `n = p + r`.
    pub fn total_dim(&self) -> usize {
        self.base_dim + self.fiber_dim
    }
}

pub(crate) fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be strictly positive, got {v}"),
        })
    }
}

/// Base coefficient `1 + (a0 - 1) e^{-t}` of the reference family.
pub fn reference_base(a0: f64, t: f64) -> f64 {
    1.0 + (a0 - 1.0) * (-t).exp()
}

impl ReferenceFamily for ProductModelSpec {
    fn reference_metric(&self, t: f64) -> ReferenceCoefficients {
        ReferenceCoefficients {
            base: reference_base(self.a0, t),
            fiber: self.b0 * (-t).exp(),
        }
    }
}

/// Exact flow `(a(t), b(t))`; it coincides with the reference family.
pub fn product_closed_form(t: f64, spec: &ProductModelSpec) -> (f64, f64) {
    (reference_base(spec.a0, t), spec.b0 * (-t).exp())
}

/// Right side of the metric ODEs `(a', b') = (1 - a, -b)`.
pub fn product_flow_rhs(a: f64, b: f64) -> (f64, f64) {
    (1.0 - a, -b)
}

/// Jets of `a * |dz|^2 / (2 y^2)` at height `y`: the hyperbolic metric with
/// `Ric = -omega_B`, scaled by `a`. Returns `(g, d_z g, d_zbar g, d_z d_zbar g)`.
pub fn hyperbolic_jet(a: f64, y: f64) -> [Complex64; 4] {
    let gy = -a / (y * y * y);
    let gyy = 3.0 * a / (y * y * y * y);
    [
        Complex64::new(a / (2.0 * y * y), 0.0),
        Complex64::new(0.0, -0.5 * gy),
        Complex64::new(0.0, 0.5 * gy),
        Complex64::new(0.25 * gyy, 0.0),
    ]
}

/// Curvature norm of `a * omega_B` on a product of `p` hyperbolic curves,
/// evaluated from the metric jets at a sample point.
pub fn base_curvature_norm(base_dim: usize, a: f64) -> Result<f64> {
    let m = base_dim;
    let jet1 = hyperbolic_jet(a, 1.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut g = vec![zero; m * m];
    let mut dg = vec![zero; m * m * m];
    let mut dbar = vec![zero; m * m * m];
    let mut dd = vec![zero; m * m * m * m];
    for j in 0..m {
        g[j * m + j] = jet1[0];
        dg[(j * m + j) * m + j] = jet1[1];
        dbar[(j * m + j) * m + j] = jet1[2];
        dd[((j * m + j) * m + j) * m + j] = jet1[3];
    }
    let jet = MetricJet {
        dim: m,
        g: &g,
        dg: &dg,
        dbar_g: &dbar,
        ddbar_g: &dd,
    };
    curvature_norm(&jet).map_err(|pivot| Error::NotPositive { index: 0, pivot })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_endpoints() {
        let spec = ProductModelSpec::new(3.0, 0.5).unwrap();
        let r0 = spec.reference_metric(0.0);
        assert_eq!((r0.base, r0.fiber), (3.0, 0.5));
        let r = spec.reference_metric(60.0);
        assert!((r.base - 1.0).abs() < 1e-20 + 1e-15 && r.fiber < 1e-25);
        let r = spec.reference_metric(2.0_f64.ln());
        assert!((r.base - 2.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_examples() {
        let fixed = ProductModelSpec::new(1.0, 1.0).unwrap();
        for t in [0.0, 0.5, 3.0] {
            assert_eq!(product_closed_form(t, &fixed).0, 1.0);
        }
        assert!((product_closed_form(1.0, &fixed).1 - (-1.0_f64).exp()).abs() < 1e-16);
        let spec = ProductModelSpec::new(3.0, 1.0).unwrap();
        assert!((product_closed_form(2.0_f64.ln(), &spec).0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_solves_metric_odes() {
        // Substitution residual using the analytic derivatives of the closed form.
        for &(a0, b0) in &[(1.0, 1.0), (3.0, 0.5), (0.5, 2.0)] {
            let spec = ProductModelSpec::new(a0, b0).unwrap();
            for i in 0..=100 {
                let t = 0.1 * i as f64;
                let (a, b) = product_closed_form(t, &spec);
                let da = -(a0 - 1.0) * (-t).exp();
                let db = -b0 * (-t).exp();
                let (ra, rb) = product_flow_rhs(a, b);
                assert!((da - ra).abs() < 1e-14);
                assert!((db - rb).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn base_curvature_is_inverse_scale() {
        for p in 1..=3 {
            for a in [0.5, 1.0, 3.0] {
                let want = (p as f64).sqrt() / a;
                assert!((base_curvature_norm(p, a).unwrap() - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rejects_non_positive_scales() {
        assert!(ProductModelSpec::new(1.0, -1.0).is_err());
        assert!(ProductModelSpec::new(0.0, 1.0).is_err());
    }
}
