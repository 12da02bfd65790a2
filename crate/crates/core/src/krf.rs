//! The normalized Kähler-Ricci flow in potential form,
//! `d phi/dt = log((omega_hat_t + i ddbar phi)^n / (e^{-rt} Omega)) - phi`,
//! on the product and fiber-flow models, with its monitors.
//!
//! The fiber-flow potential is stored as its fiber mean plus a mean-free
//! oscillation. The stiff linear part `(e^t/b0) ddbar - 1` of the oscillation
//! is propagated exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fiber_diameter, riemann_norm};
use crate::grid::{GridSpec, HermitianField, ScalarField};
use crate::integrate::{self, IntegrationStats, StepConfig, System};
use crate::models::product::{base_curvature_norm, reference_base};
use crate::models::{FiberFlowSpec, ProductModelSpec, ReferenceFamily};
use crate::spectral::SpectralOps;

/// Potential of a flow state: a constant for homogeneous models, a fiber
/// field otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Scalar(f64),
    Fiber(ScalarField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub phi: Potential,
}

impl FlowState {
    pub fn initial_product() -> Self {
        Self {
            t: 0.0,
            phi: Potential::Scalar(0.0),
        }
    }

    pub fn initial_fiber(spec: &FiberFlowSpec) -> Result<Self> {
        Ok(Self {
            t: 0.0,
            phi: Potential::Fiber(spec.initial_potential()?),
        })
    }
}

/// A model the flow can be run on.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowModel {
    Product(ProductModelSpec),
    Fiber(FiberFlowSpec),
}

/// `p log a + r log(b e^t / b0) - phi` for the product model with metric
/// coefficients `(a, b)`.
pub fn product_rhs(spec: &ProductModelSpec, t: f64, phi: f64, a: f64, b: f64) -> f64 {
    spec.base_dim as f64 * a.ln() + spec.fiber_dim as f64 * (b * t.exp() / spec.b0).ln() - phi
}

/// Reduced right side `log a_hat + log(1 + e^t phi_xixibar / b0) - phi`.
pub fn fiber_rhs(spec: &FiberFlowSpec, t: f64, phi: &ScalarField) -> Result<ScalarField> {
    let ops = SpectralOps::new(phi.grid());
    let x = stretch(&ops, spec.b0, t, phi.values());
    check_kahler(spec.b0, t, &x)?;
    let log_a = reference_base(spec.a0, t).ln();
    let values = x
        .iter()
        .zip(phi.values())
        .map(|(x, p)| log_a + x.ln_1p() - p)
        .collect();
    ScalarField::new(phi.grid().clone(), values)
}

/// `x = e^t phi_xixibar / b0`, the relative fiber deformation.
fn stretch(ops: &SpectralOps, b0: f64, t: f64, phi: &[f64]) -> Vec<f64> {
    let scale = t.exp() / b0;
    ops.ddbar_diagonal(phi, 0).into_iter().map(|d| scale * d).collect()
}

fn check_kahler(b0: f64, t: f64, x: &[f64]) -> Result<()> {
    let worst = x.iter().copied().fold(f64::INFINITY, f64::min);
    if 1.0 + worst > 0.0 {
        Ok(())
    } else {
        Err(Error::KahlerViolation {
            t,
            margin: b0 * (-t).exp() * (1.0 + worst),
        })
    }
}

/// Right side of the potential equation at `state`.
pub fn map_rhs(model: &FlowModel, state: &FlowState) -> Result<Potential> {
    match (model, &state.phi) {
        (FlowModel::Product(spec), Potential::Scalar(phi)) => {
            let r = spec.reference_metric(state.t);
            Ok(Potential::Scalar(product_rhs(spec, state.t, *phi, r.base, r.fiber)))
        }
        (FlowModel::Fiber(spec), Potential::Fiber(phi)) => {
            Ok(Potential::Fiber(fiber_rhs(spec, state.t, phi)?))
        }
        _ => Err(Error::InvalidParameter {
            name: "state",
            reason: "potential kind does not match the model".into(),
        }),
    }
}

/// Fiber average `Phi` (uniform mean over the flat unit-area fiber), with
/// Neumaier-compensated summation.
pub fn fiber_average(phi: &ScalarField) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in phi.values() {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    (sum + comp) / phi.len() as f64
}

/// `v = e^t (phi - Phi)` of a fiber state.
pub fn normalized_potential(state: &FlowState) -> Result<ScalarField> {
    match &state.phi {
        Potential::Fiber(phi) => {
            let mean = fiber_average(phi);
            let scale = state.t.exp();
            Ok(ScalarField::from_raw(
                phi.grid().clone(),
                phi.values().iter().map(|p| scale * (p - mean)).collect(),
            ))
        }
        Potential::Scalar(_) => Err(Error::InvalidParameter {
            name: "state",
            reason: "homogeneous states have no fiber oscillation".into(),
        }),
    }
}

/// `sup |e^t phi_xixibar| / b0`: distance of the rescaled fiber metric from
/// the flat form of area `b0`, relative to `b0`.
pub fn fiber_limit_check(state: &FlowState, spec: &FiberFlowSpec) -> f64 {
    match &state.phi {
        Potential::Scalar(_) => 0.0,
        Potential::Fiber(phi) => {
            let ops = SpectralOps::new(phi.grid());
            stretch(&ops, spec.b0, state.t, phi.values())
                .iter()
                .fold(0.0, |m, x| m.max(x.abs()))
        }
    }
}

/// Fiber component `e^{-t} b0 + phi_xixibar` of `omega_t`.
pub fn fiber_metric(spec: &FiberFlowSpec, state: &FlowState) -> Result<HermitianField> {
    match &state.phi {
        Potential::Fiber(phi) => {
            let ops = SpectralOps::new(phi.grid());
            let base = spec.b0 * (-state.t).exp();
            let g = ops.ddbar_diagonal(phi.values(), 0).into_iter().map(|d| base + d).collect();
            Ok(HermitianField::from_scalar(&ScalarField::new(phi.grid().clone(), g)?))
        }
        Potential::Scalar(_) => Err(Error::InvalidParameter {
            name: "state",
            reason: "product states carry no fiber field".into(),
        }),
    }
}

/// Cosine amplitude of Fourier mode `(kx, ky)` of a fiber field.
pub fn mode_amplitude(field: &ScalarField, kx: i32, ky: i32) -> f64 {
    let ops = SpectralOps::new(field.grid());
    let spec = ops.spectrum_real(field.values());
    let n = field.grid().resolution()[0] as i32;
    let ix = kx.rem_euclid(n) as usize;
    let iy = ky.rem_euclid(n) as usize;
    2.0 * spec[ix * n as usize + iy].norm() / field.len() as f64
}

/// Per-time snapshot of the flow monitors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub sup_phi: f64,
    pub sup_dphi: f64,
    /// Range of `omega_t^n / (e^{-rt} Omega)`.
    pub volume_min: f64,
    pub volume_max: f64,
    /// `sup Tr_{omega_t} omega_infinity`.
    pub trace_sup: f64,
    /// Range of eigenvalues of `omega_t` relative to `omega_hat_t`.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `sup |e^t (phi - Phi)|`.
    pub sup_v: f64,
    /// `max (log(e^{-t} Tr_{omega_t} omega_0) - A e^t (phi - Phi))`.
    pub q_max: f64,
    /// `sup |e^t phi_xixibar| / b0`.
    pub fiber_limit: f64,
    /// `sup ||Rm||_{omega_t}`.
    pub curvature: f64,
}

pub const DEFAULT_Q_CONSTANT: f64 = 1.0;

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Product-model monitors for metric coefficients `(a, b)`.
/// The oscillation `v` vanishes identically, so `Q` does not depend on `A`.
pub fn product_monitors(spec: &ProductModelSpec, t: f64, phi: f64, a: f64, b: f64) -> Result<Diagnostics> {
    let (p, r) = (spec.base_dim as f64, spec.fiber_dim as f64);
    let reference = spec.reference_metric(t);
    let (ratio_min, ratio_max) = range([a / reference.base, b / reference.fiber].into_iter());
    Ok(Diagnostics {
        t,
        sup_phi: phi.abs(),
        sup_dphi: product_rhs(spec, t, phi, a, b).abs(),
        volume_min: a.powf(p) * (b * t.exp() / spec.b0).powf(r),
        volume_max: a.powf(p) * (b * t.exp() / spec.b0).powf(r),
        trace_sup: p / a,
        ratio_min,
        ratio_max,
        sup_v: 0.0,
        q_max: ((-t).exp() * (p * spec.a0 / a + r * spec.b0 / b)).ln(),
        fiber_limit: 0.0,
        curvature: base_curvature_norm(spec.base_dim, a)?,
    })
}

/// Fiber-flow monitors; curvature combines the analytic base value with the
/// spectral curvature of the fiber metric.
pub fn fiber_monitors(spec: &FiberFlowSpec, state: &FlowState, q_constant: f64) -> Result<Diagnostics> {
    let Potential::Fiber(phi) = &state.phi else {
        return Err(Error::InvalidParameter {
            name: "state",
            reason: "fiber monitors need a fiber potential".into(),
        });
    };
    let t = state.t;
    let ops = SpectralOps::new(phi.grid());
    let x = stretch(&ops, spec.b0, t, phi.values());
    check_kahler(spec.b0, t, &x)?;
    let a_hat = reference_base(spec.a0, t);
    let rhs = fiber_rhs(spec, t, phi)?;
    let v = normalized_potential(state)?;
    let (volume_min, volume_max) = range(x.iter().map(|x| a_hat * (1.0 + x)));
    let (fiber_lo, fiber_hi) = range(x.iter().map(|x| 1.0 + x));
    let q_max = x
        .iter()
        .zip(v.values())
        .map(|(x, v)| ((-t).exp() * spec.a0 / a_hat + 1.0 / (1.0 + x)).ln() - q_constant * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let fiber_rm = riemann_norm(&fiber_metric(spec, state)?)?.max();
    let base_rm = base_curvature_norm(1, a_hat)?;
    Ok(Diagnostics {
        t,
        sup_phi: phi.sup_norm(),
        sup_dphi: rhs.sup_norm(),
        volume_min,
        volume_max,
        trace_sup: 1.0 / a_hat,
        ratio_min: fiber_lo.min(1.0),
        ratio_max: fiber_hi.max(1.0),
        sup_v: v.sup_norm(),
        q_max,
        fiber_limit: x.iter().fold(0.0, |m, x| m.max(x.abs())),
        curvature: (base_rm * base_rm + fiber_rm * fiber_rm).sqrt(),
    })
}

/// Dispatching monitor entry point.
pub fn monitors(model: &FlowModel, state: &FlowState) -> Result<Diagnostics> {
    match (model, &state.phi) {
        (FlowModel::Product(spec), Potential::Scalar(phi)) => {
            let r = spec.reference_metric(state.t);
            product_monitors(spec, state.t, *phi, r.base, r.fiber)
        }
        (FlowModel::Fiber(spec), _) => fiber_monitors(spec, state, DEFAULT_Q_CONSTANT),
        _ => Err(Error::InvalidParameter {
            name: "state",
            reason: "potential kind does not match the model".into(),
        }),
    }
}

/// Product state `(phi, a, b)` evolved by `phi' = p log a + r log(b e^t/b0) - phi`,
/// `a' = 1 - a`, `b' = -b`.
struct ProductSystem<'a>(&'a ProductModelSpec);

impl System for ProductSystem<'_> {
    fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let (phi, a, b) = (y[0], y[1], y[2]);
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::KahlerViolation { t, margin: a.min(b) });
        }
        Ok(vec![product_rhs(self.0, t, phi, a, b), 1.0 - a, -b])
    }

    fn margin(&self, t: f64, y: &[f64]) -> Option<f64> {
        // Relative to the exponentially shrinking fiber scale.
        Some(y[1].min(y[2] * t.exp()))
    }
}

/// Fiber-flow state `[Phi, osc...]`.
struct FiberSystem<'a> {
    spec: &'a FiberFlowSpec,
    grid: GridSpec,
    ops: SpectralOps,
}

impl FiberSystem<'_> {
    fn pack(phi: &ScalarField) -> Vec<f64> {
        let mean = phi.mean();
        std::iter::once(mean).chain(phi.values().iter().map(|p| p - mean)).collect()
    }

    fn unpack(&self, y: &[f64]) -> Result<ScalarField> {
        ScalarField::new(self.grid.clone(), y[1..].iter().map(|o| y[0] + o).collect())
    }
}

impl System for FiberSystem<'_> {
    fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let x = stretch(&self.ops, self.spec.b0, t, &y[1..]);
        check_kahler(self.spec.b0, t, &x)?;
        let nl: Vec<f64> = x.iter().map(|x| x.ln_1p() - x).collect();
        let nl_mean = nl.iter().sum::<f64>() / nl.len() as f64;
        let log_a = reference_base(self.spec.a0, t).ln();
        Ok(std::iter::once(log_a + nl_mean - y[0])
            .chain(nl.iter().map(|v| v - nl_mean))
            .collect())
    }

    fn propagate(&self, t0: f64, t1: f64, y: &mut [f64]) {
        let s = (t1.exp() - t0.exp()) / self.spec.b0;
        self.ops.heat_propagate(&mut y[1..], s);
        let damp = (t0 - t1).exp();
        y[1..].iter_mut().for_each(|v| *v *= damp);
    }

    fn margin(&self, t: f64, y: &[f64]) -> Option<f64> {
        let x = stretch(&self.ops, self.spec.b0, t, &y[1..]);
        let worst = x.iter().copied().fold(f64::INFINITY, f64::min);
        Some(self.spec.b0 * (1.0 + worst))
    }
}

/// Advances `state` by one accepted adaptive step no larger than `dt`.
pub fn step(model: &FlowModel, state: &FlowState, dt: f64, config: &StepConfig) -> Result<FlowState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    let target = [state.t + dt];
    match (model, &state.phi) {
        (FlowModel::Product(spec), Potential::Scalar(phi)) => {
            let r = spec.reference_metric(state.t);
            let mut y = vec![*phi, r.base, r.fiber];
            integrate::integrate(&ProductSystem(spec), state.t, &mut y, &target, config, |_, _| Ok(()))?;
            Ok(FlowState {
                t: target[0],
                phi: Potential::Scalar(y[0]),
            })
        }
        (FlowModel::Fiber(spec), Potential::Fiber(phi)) => {
            let sys = FiberSystem {
                spec,
                grid: phi.grid().clone(),
                ops: SpectralOps::new(phi.grid()),
            };
            let mut y = FiberSystem::pack(phi);
            integrate::integrate(&sys, state.t, &mut y, &target, config, |_, _| Ok(()))?;
            Ok(FlowState {
                t: target[0],
                phi: Potential::Fiber(sys.unpack(&y)?),
            })
        }
        _ => Err(Error::InvalidParameter {
            name: "state",
            reason: "potential kind does not match the model".into(),
        }),
    }
}

fn default_sample_dt() -> f64 {
    0.02
}
fn default_diameter_dt() -> f64 {
    0.5
}
fn default_q_constant() -> f64 {
    DEFAULT_Q_CONSTANT
}
fn default_diameter_resolution() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Spacing of recorded diagnostics.
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
    /// Spacing of fiber-diameter samples.
    #[serde(default = "default_diameter_dt")]
    pub diameter_dt: f64,
    /// The constant `A` in `Q`.
    #[serde(default = "default_q_constant")]
    pub q_constant: f64,
    /// Fiber grid used for diameters of flat product fibers.
    #[serde(default = "default_diameter_resolution")]
    pub diameter_resolution: usize,
    #[serde(default)]
    pub step: StepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sample_dt: default_sample_dt(),
            diameter_dt: default_diameter_dt(),
            q_constant: default_q_constant(),
            diameter_resolution: default_diameter_resolution(),
            step: StepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductSample {
    pub t: f64,
    pub phi: f64,
    pub a: f64,
    pub b: f64,
    pub a_exact: f64,
    pub b_exact: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductRun {
    pub samples: Vec<ProductSample>,
    pub diagnostics: Vec<Diagnostics>,
    pub diameters: Vec<(f64, f64)>,
    pub stats: IntegrationStats,
}

fn on_grid(t: f64, dt: f64) -> bool {
    let k = (t / dt).round();
    (t - k * dt).abs() < 1e-9
}

/// Integrates the product model to `horizon`.
pub fn run_product(spec: &ProductModelSpec, horizon: f64, config: &RunConfig) -> Result<ProductRun> {
    spec.validate()?;
    let fiber_grid = GridSpec::unit(1, config.diameter_resolution)?;
    let unit_diameter = fiber_diameter(&HermitianField::flat(&fiber_grid, 1.0))? * (spec.fiber_dim as f64).sqrt();
    let mut samples = Vec::new();
    let mut diagnostics = Vec::new();
    let mut diameters = Vec::new();
    let mut record = |t: f64, y: &[f64]| -> Result<()> {
        let (a_exact, b_exact) = crate::models::product_closed_form(t, spec);
        samples.push(ProductSample {
            t,
            phi: y[0],
            a: y[1],
            b: y[2],
            a_exact,
            b_exact,
        });
        diagnostics.push(product_monitors(spec, t, y[0], y[1], y[2])?);
        if on_grid(t, config.diameter_dt) {
            diameters.push((t, unit_diameter * y[2].sqrt()));
        }
        Ok(())
    };
    let mut y = vec![0.0, spec.a0, spec.b0];
    record(0.0, &y)?;
    let checkpoints = integrate::uniform_checkpoints(0.0, horizon, config.sample_dt);
    let stats = integrate::integrate(&ProductSystem(spec), 0.0, &mut y, &checkpoints, &config.step, |acc, y| {
        if acc.checkpoint {
            record(acc.t, y)?;
        }
        Ok(())
    })?;
    Ok(ProductRun {
        samples,
        diagnostics,
        diameters,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberRun {
    pub diagnostics: Vec<Diagnostics>,
    pub diameters: Vec<(f64, f64)>,
    /// Amplitude of the tracked Fourier mode of `v` over time.
    pub mode_amplitudes: Vec<(f64, f64)>,
    pub tracked_mode: (i32, i32),
    pub final_state: FlowState,
    pub stats: IntegrationStats,
}

/// Integrates the fiber-flow model to `spec.horizon`, tracking the lowest
/// initial mode of the normalized potential.
pub fn run_fiber_flow(spec: &FiberFlowSpec, config: &RunConfig) -> Result<FiberRun> {
    spec.validate()?;
    let tracked_mode = spec
        .modes
        .iter()
        .min_by_key(|m| m.kx * m.kx + m.ky * m.ky)
        .map_or((1, 0), |m| (m.kx, m.ky));
    let grid = spec.grid()?;
    let sys = FiberSystem {
        spec,
        grid: grid.clone(),
        ops: SpectralOps::new(&grid),
    };
    let mut diagnostics = Vec::new();
    let mut diameters = Vec::new();
    let mut mode_amplitudes = Vec::new();
    let mut record = |t: f64, y: &[f64]| -> Result<()> {
        let state = FlowState {
            t,
            phi: Potential::Fiber(sys.unpack(y)?),
        };
        diagnostics.push(fiber_monitors(spec, &state, config.q_constant)?);
        let v = normalized_potential(&state)?;
        mode_amplitudes.push((t, mode_amplitude(&v, tracked_mode.0, tracked_mode.1)));
        if on_grid(t, config.diameter_dt) {
            diameters.push((t, fiber_diameter(&fiber_metric(spec, &state)?)?));
        }
        Ok(())
    };
    let mut y = FiberSystem::pack(&spec.initial_potential()?);
    record(0.0, &y)?;
    let checkpoints = integrate::uniform_checkpoints(0.0, spec.horizon, config.sample_dt);
    let stats = integrate::integrate(&sys, 0.0, &mut y, &checkpoints, &config.step, |acc, y| {
        if acc.checkpoint {
            record(acc.t, y)?;
        }
        Ok(())
    })?;
    Ok(FiberRun {
        diagnostics,
        diameters,
        mode_amplitudes,
        tracked_mode,
        final_state: FlowState {
            t: spec.horizon,
            phi: Potential::Fiber(sys.unpack(&y)?),
        },
        stats,
    })
}

/// `|v_k(0)| exp(-(pi^2 |k|^2 / b0)(e^t - 1))`: the linearized mode decay.
pub fn linear_mode_decay(b0: f64, kx: i32, ky: i32, amplitude0: f64, t: f64) -> f64 {
    let k2 = (kx * kx + ky * ky) as f64;
    amplitude0 * (-(std::f64::consts::PI.powi(2) * k2 / b0) * (t.exp() - 1.0)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ma_density;
    use crate::linalg;
    use crate::models::product::hyperbolic_jet;
    use crate::models::FiberMode;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};

    fn fiber_spec(a0: f64, b0: f64, amp: f64) -> FiberFlowSpec {
        FiberFlowSpec::new(a0, b0, 16, vec![FiberMode { kx: 1, ky: 0, amplitude: amp }]).unwrap()
    }

    #[test]
    fn product_rhs_examples() {
        let spec = ProductModelSpec::new(3.0, 1.0).unwrap();
        let state = FlowState::initial_product();
        let Potential::Scalar(r) = map_rhs(&FlowModel::Product(spec), &state).unwrap() else { panic!() };
        assert!((r - 3f64.ln()).abs() < 1e-15);
        let still = FlowModel::Product(ProductModelSpec::new(1.0, 2.0).unwrap());
        let Potential::Scalar(r) = map_rhs(&still, &state).unwrap() else { panic!() };
        assert_eq!(r, 0.0);
    }

    #[test]
    fn fiber_stationary_state() {
        let mut spec = fiber_spec(1.0, 1.0, 0.1);
        spec.modes.clear();
        let state = FlowState::initial_fiber(&spec).unwrap();
        let Potential::Fiber(r) = map_rhs(&FlowModel::Fiber(spec.clone()), &state).unwrap() else { panic!() };
        assert_eq!(r.sup_norm(), 0.0);
        let next = step(&FlowModel::Fiber(spec), &state, 0.5, &StepConfig::default()).unwrap();
        let Potential::Fiber(phi) = next.phi else { panic!() };
        assert!(phi.sup_norm() < 1e-14);
    }

    #[test]
    fn reduction_matches_unreduced_monge_ampere() {
        // Potential on a (base, fiber) grid that is constant along the base;
        // omega_hat_t adds the hyperbolic base metric at a random height.
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let n = 16;
        let spec = FiberFlowSpec::new(
            2.5,
            0.7,
            n,
            vec![
                FiberMode { kx: 1, ky: 0, amplitude: 0.1 },
                FiberMode { kx: 1, ky: 2, amplitude: 0.05 },
            ],
        )
        .unwrap();
        let phi_fiber = spec.initial_potential().unwrap();
        let total = GridSpec::unit(2, n).unwrap();
        let phi_total = ScalarField::from_fn(&total, |x| {
            let i = ((x[2] * n as f64).round() as usize) % n;
            let j = ((x[3] * n as f64).round() as usize) % n;
            phi_fiber.values()[i * n + j]
        })
        .unwrap();
        let hess = SpectralOps::new(&total).ddbar(&phi_total);
        for _ in 0..10 {
            let t: f64 = rng.gen_range(0.0..1.5);
            let y_base: f64 = rng.gen_range(0.5..2.0);
            let p = rng.gen_range(0..total.len());
            let g_b = hyperbolic_jet(1.0, y_base)[0].re;
            let a_hat = reference_base(spec.a0, t);
            let mut g = hess.at(p).to_vec();
            g[0] += Complex64::new(a_hat * g_b, 0.0);
            g[3] += Complex64::new(spec.b0 * (-t).exp(), 0.0);
            let omega_n = linalg::det(2, &g);
            let big_omega = spec.b0 * g_b;
            let local_phi = phi_total.values()[p];
            let unreduced = (omega_n / ((-t).exp() * big_omega)).ln() - local_phi;

            let fiber_index = p % (n * n);
            let reduced = fiber_rhs(&spec, t, &phi_fiber).unwrap().values()[fiber_index];
            assert!((unreduced - reduced).abs() < 1e-12, "{unreduced} {reduced}");
        }
        let flat = HermitianField::flat(&total, 1.0);
        assert_eq!(ma_density(&flat).values()[0], 1.0);
    }

    #[test]
    fn product_matches_quadrature_oracle() {
        let spec = ProductModelSpec::new(3.0, 0.5).unwrap();
        let cfg = RunConfig {
            step: StepConfig {
                tol: 1e-12,
                ..StepConfig::default()
            },
            ..RunConfig::default()
        };
        let run = run_product(&spec, 5.0, &cfg).unwrap();
        let last = run.samples.last().unwrap();
        // phi(5) = e^{-5} int_0^5 e^s log a_hat(s) ds by composite Simpson.
        let n = 20000;
        let h = 5.0 / n as f64;
        let f = |s: f64| s.exp() * reference_base(3.0, s).ln();
        let mut acc = f(0.0) + f(5.0);
        for i in 1..n {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let oracle = (-5.0f64).exp() * acc * h / 3.0;
        assert!((last.t - 5.0).abs() < 1e-12);
        assert!((last.phi - oracle).abs() < 1e-8, "{} {}", last.phi, oracle);
        for s in &run.samples {
            assert!((s.a - s.a_exact).abs() < 1e-8 && (s.b - s.b_exact).abs() < 1e-8);
        }
        for d in &run.diagnostics {
            assert!((d.ratio_min - 1.0).abs() < 1e-10 && (d.ratio_max - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_product_monitors() {
        let spec = ProductModelSpec::new(1.0, 1.0).unwrap();
        let d = product_monitors(&spec, 0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!((d.ratio_min, d.ratio_max, d.sup_v, d.volume_min), (1.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn forward_backward_euler_pair_is_second_order() {
        let spec = fiber_spec(2.0, 1.0, 0.1);
        let model = FlowModel::Fiber(spec.clone());
        let phi0 = spec.initial_potential().unwrap();
        let state = FlowState::initial_fiber(&spec).unwrap();
        let mut errs = Vec::new();
        for dt in [1e-3, 5e-4] {
            let Potential::Fiber(k0) = map_rhs(&model, &state).unwrap() else { panic!() };
            let fwd = phi0.zip_with(&k0, |p, k| p + dt * k).unwrap();
            let mid = FlowState { t: dt, phi: Potential::Fiber(fwd.clone()) };
            let Potential::Fiber(k1) = map_rhs(&model, &mid).unwrap() else { panic!() };
            let back = fwd.zip_with(&k1, |p, k| p - dt * k).unwrap();
            errs.push(back.sub(&phi0).unwrap().sup_norm());
        }
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 2.0).abs() < 0.2, "{errs:?}");
    }

    #[test]
    fn fiber_average_matches_compensated_sum() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let grid = GridSpec::unit(1, 32).unwrap();
        let vals: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0) * 1e3).collect();
        let field = ScalarField::new(grid.clone(), vals.clone()).unwrap();
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for v in &vals {
            let y = v - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        let oracle = sum / vals.len() as f64;
        assert!((fiber_average(&field) - oracle).abs() <= 1e-14 * oracle.abs().max(1.0));
        assert_eq!(fiber_average(&ScalarField::constant(&grid, 2.5)), 2.5);
        let s = ScalarField::from_fn(&grid, |x| (2.0 * std::f64::consts::PI * x[0]).sin()).unwrap();
        assert!(fiber_average(&s).abs() < 1e-16);
    }

    #[test]
    fn normalized_potential_cases() {
        let spec = fiber_spec(1.0, 1.0, 0.1);
        let grid = spec.grid().unwrap();
        let c = FlowState { t: 2.0, phi: Potential::Fiber(ScalarField::constant(&grid, 0.3)) };
        assert!(normalized_potential(&c).unwrap().sup_norm() < 1e-14);
        let phi = spec.initial_potential().unwrap().add_constant(0.25);
        let s = FlowState { t: 0.0, phi: Potential::Fiber(phi.clone()) };
        let v = normalized_potential(&s).unwrap();
        assert!(v.sub(&phi.add_constant(-phi.mean())).unwrap().sup_norm() < 1e-15);
    }

    #[test]
    fn fiber_limit_and_flat_limit() {
        let spec = fiber_spec(1.0, 1.0, 0.1);
        let grid = spec.grid().unwrap();
        let zero = FlowState { t: 3.0, phi: Potential::Fiber(ScalarField::zeros(&grid)) };
        assert_eq!(fiber_limit_check(&zero, &spec), 0.0);
        let flat = fiber_metric(&spec, &zero).unwrap().scale(3f64.exp());
        assert!(riemann_norm(&flat).unwrap().max() < 1e-12);
    }

    #[test]
    fn mode_decay_follows_linearization() {
        let spec = fiber_spec(1.0, 1.0, 0.01);
        let cfg = RunConfig::default();
        let mut short = spec.clone();
        short.horizon = 1.0;
        let run = run_fiber_flow(&short, &cfg).unwrap();
        let a0 = run.mode_amplitudes[0].1;
        for &(t, a) in run.mode_amplitudes.iter().filter(|(t, _)| *t <= 0.8) {
            let oracle = linear_mode_decay(spec.b0, 1, 0, a0, t);
            assert!((a / oracle - 1.0).abs() < 0.02, "t={t} {a} {oracle}");
        }
    }
}
