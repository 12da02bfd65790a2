use std::f64::consts::PI;

use approx::assert_relative_eq;
use collapse_core::geometry::{ddbar, fiber_diameter, ma_density, ricci_form, trace_wrt};
use collapse_core::krf::{self, RunConfig};
use collapse_core::models::{FiberFlowSpec, FiberMode, ProductModelSpec};
use collapse_core::rates::{rate_fit, Abscissa};
use collapse_core::{GridSpec, HermitianField, ScalarField};
use proptest::prelude::*;

/// Band-limited real field: a few low Fourier modes with the given coefficients.
fn trig_field(grid: &GridSpec, coeffs: &[f64]) -> ScalarField {
    let dim = grid.complex_dim();
    ScalarField::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let axis = i % (2 * dim);
                let k = (i / (2 * dim) + 1) as f64;
                let other = (axis + 1) % (2 * dim);
                c * (2.0 * PI * (k * x[axis] + x[other])).cos()
            })
            .sum()
    })
    .unwrap()
}

/// `scale * flat + i ddbar(small potential)`, positive for the ranges used.
fn metric(grid: &GridSpec, scale: f64, coeffs: &[f64]) -> HermitianField {
    HermitianField::flat(grid, scale).add(&ddbar(&trig_field(grid, coeffs))).unwrap()
}

fn coeffs(n: usize, amp: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-amp..amp, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ddbar_is_hermitian_and_mean_free(c in coeffs(8, 1.0)) {
        let grid = GridSpec::unit(2, 8).unwrap();
        let h = ddbar(&trig_field(&grid, &c));
        let m = h.dim();
        let mut sums = vec![num_complex::Complex64::new(0.0, 0.0); m * m];
        for i in 0..h.len() {
            let a = h.at(i);
            for j in 0..m {
                for k in 0..m {
                    prop_assert!((a[j * m + k] - a[k * m + j].conj()).norm() < 1e-10);
                    sums[j * m + k] += a[j * m + k];
                }
            }
        }
        for s in sums {
            prop_assert!(s.norm() / (h.len() as f64) < 1e-10);
        }
    }

    #[test]
    fn ddbar_kills_constants(c in -1e3..1e3f64) {
        let grid = GridSpec::unit(2, 8).unwrap();
        prop_assert!(ddbar(&ScalarField::constant(&grid, c)).sup_norm() <= 1e-12 * c.abs().max(1.0));
    }

    #[test]
    fn monge_ampere_density_is_homogeneous(c in coeffs(6, 0.002), s in 0.2..5.0f64) {
        let grid = GridSpec::unit(2, 8).unwrap();
        let omega = metric(&grid, 1.0, &c);
        let base = ma_density(&omega);
        let scaled = ma_density(&omega.scale(s));
        for (a, b) in base.values().iter().zip(scaled.values()) {
            assert_relative_eq!(*b, s * s * a, max_relative = 1e-12);
        }
    }

    #[test]
    fn trace_of_a_metric_against_itself_is_the_dimension(c in coeffs(6, 0.002)) {
        let grid = GridSpec::unit(2, 8).unwrap();
        let omega = metric(&grid, 1.0, &c);
        for v in trace_wrt(&omega, &omega).unwrap().values() {
            prop_assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_is_linear(c in coeffs(6, 0.002), d in coeffs(6, 1.0), e in coeffs(6, 1.0), s in -3.0..3.0f64) {
        let grid = GridSpec::unit(2, 8).unwrap();
        let omega = metric(&grid, 1.0, &c);
        let a = ddbar(&trig_field(&grid, &d));
        let b = ddbar(&trig_field(&grid, &e));
        let lhs = trace_wrt(&omega, &a.add(&b.scale(s)).unwrap()).unwrap();
        let ta = trace_wrt(&omega, &a).unwrap();
        let tb = trace_wrt(&omega, &b).unwrap();
        for i in 0..lhs.len() {
            let rhs = ta.values()[i] + s * tb.values()[i];
            prop_assert!((lhs.values()[i] - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn ricci_form_is_scale_invariant(c in coeffs(6, 0.002), s in 0.2..5.0f64) {
        let grid = GridSpec::unit(2, 8).unwrap();
        let omega = metric(&grid, 1.0, &c);
        let r1 = ricci_form(&omega).unwrap();
        let r2 = ricci_form(&omega.scale(s)).unwrap();
        prop_assert!(r1.sub(&r2).unwrap().sup_norm() < 1e-9);
    }

    #[test]
    fn fiber_diameter_scales_with_the_square_root(c in coeffs(4, 0.002), s in 0.1..10.0f64) {
        let grid = GridSpec::unit(1, 16).unwrap();
        let omega = metric(&grid, 1.0, &c);
        let d1 = fiber_diameter(&omega).unwrap();
        let d2 = fiber_diameter(&omega.scale(s)).unwrap();
        assert_relative_eq!(d2, s.sqrt() * d1, max_relative = 1e-12);
    }

    #[test]
    fn fitted_rate_recovers_exact_exponentials(rate in -3.0..-0.1f64, amp in 1e-3..1e3f64) {
        let samples: Vec<(f64, f64)> = (0..=40).map(|i| {
            let t = 0.25 * i as f64;
            (t, amp * (rate * t).exp())
        }).collect();
        let fit = rate_fit("y", &samples, Abscissa::T, None).unwrap();
        prop_assert!((fit.slope - rate).abs() < 1e-10);
    }
}

#[test]
fn product_diameter_decays_at_half_rate() {
    let spec = ProductModelSpec::new(3.0, 0.5).unwrap();
    let run = krf::run_product(&spec, 10.0, &RunConfig::default()).unwrap();
    let fit = rate_fit("diameter", &run.diameters, Abscissa::T, Some((0.0, 10.0))).unwrap();
    assert!((fit.slope + 0.5).abs() < 1e-8, "{}", fit.slope);
}

#[test]
fn fiber_flow_diameter_and_mode_decay() {
    let spec = FiberFlowSpec::new(2.0, 1.0, 16, vec![FiberMode { kx: 1, ky: 0, amplitude: 0.05 }]).unwrap();
    let run = krf::run_fiber_flow(&spec, &RunConfig::default()).unwrap();
    let fit = rate_fit("diameter", &run.diameters, Abscissa::T, None).unwrap();
    assert!((fit.slope + 0.5).abs() < 0.01, "{}", fit.slope);
    let mode = rate_fit("mode", &run.mode_amplitudes, Abscissa::ExpT, Some((0.0, 1.0))).unwrap();
    let expected = -PI * PI;
    assert!(((mode.slope - expected) / expected).abs() < 0.02, "{}", mode.slope);
}
