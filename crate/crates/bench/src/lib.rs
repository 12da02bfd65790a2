//! Fixtures shared by the kernel benchmarks in `benches/`.

use collapse_core::gke::NewtonConfig;
use collapse_core::krf::FlowState;
use collapse_core::models::{FiberFlowSpec, FiberMode, GkeTestbedSpec};
use collapse_core::{GridSpec, HermitianField, ScalarField};

/// A smooth two-mode potential on the `n x n` unit torus.
pub fn smooth_potential(n: usize) -> ScalarField {
    let grid = GridSpec::unit(1, n).expect("valid resolution");
    ScalarField::from_fn(&grid, |x| {
        let tau = std::f64::consts::TAU;
        0.1 * (tau * x[0]).sin() * (tau * x[1]).cos() + 0.05 * (2.0 * tau * x[1]).cos()
    })
    .expect("finite samples")
}

/// `(omega_Sigma, F)` of the manufactured testbed at resolution `n`.
pub fn manufactured_problem(n: usize) -> (HermitianField, ScalarField) {
    let spec = GkeTestbedSpec::manufactured_default(n);
    (
        spec.omega_sigma().expect("positive base form"),
        spec.density().expect("positive density"),
    )
}

pub fn newton_config() -> NewtonConfig {
    NewtonConfig::default()
}

/// Default fiber-flow model and its initial state.
pub fn fiber_model(n: usize) -> (FiberFlowSpec, FlowState) {
    let spec = FiberFlowSpec::new(2.0, 1.0, n, vec![FiberMode { kx: 1, ky: 0, amplitude: 0.1 }])
        .expect("valid fiber model");
    let state = FlowState::initial_fiber(&spec).expect("valid initial state");
    (spec, state)
}
