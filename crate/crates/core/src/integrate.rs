//! Adaptive fourth-order Runge-Kutta with step doubling.
//!
//! Systems may split off a linear part with an exact propagator; the scheme
//! is then the integrating-factor (Lawson) form of classical RK4 and reduces
//! to classical RK4 when the propagator is the identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An evolution `y' = L(t) y + N(t, y)` with `L` handled by `propagate`.
pub trait System {
    /// Nonlinear part `N(t, y)`.
    fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>>;

    /// Applies the exact solution operator of `y' = L(t) y` from `t0` to `t1`.
    fn propagate(&self, _t0: f64, _t1: f64, _y: &mut [f64]) {}

    /// A quantity that must stay positive (the Kähler margin, say).
    fn margin(&self, _t: f64, _y: &[f64]) -> Option<f64> {
        None
    }
}

fn default_tol() -> f64 {
    1e-8
}
fn default_dt_init() -> f64 {
    1e-2
}
fn default_dt_max() -> f64 {
    0.1
}
fn default_dt_min() -> f64 {
    1e-12
}
fn default_margin_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    /// Bound on the step-doubling error estimate (sup norm).
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_dt_init")]
    pub dt_init: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    /// Steps below this size raise a stiffness breakdown.
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    /// A step is rejected when the margin would fall below this fraction of
    /// its current value.
    #[serde(default = "default_margin_fraction")]
    pub margin_fraction: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            dt_init: default_dt_init(),
            dt_max: default_dt_max(),
            dt_min: default_dt_min(),
            margin_fraction: default_margin_fraction(),
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tol", self.tol),
            ("dt_init", self.dt_init),
            ("dt_max", self.dt_max),
            ("dt_min", self.dt_min),
        ] {
            crate::models::product::positive(name, v)?;
        }
        if !(0.0..1.0).contains(&self.margin_fraction) {
            return Err(Error::InvalidParameter {
                name: "margin_fraction",
                reason: "must lie in [0, 1)".into(),
            });
        }
        Ok(())
    }
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(y, x)| y + a * x).collect()
}

/// One Lawson-RK4 step of size `h` from `(t, y)`.
pub fn rk4_step<S: System + ?Sized>(sys: &S, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let tm = t + 0.5 * h;
    let t1 = t + h;
    let n1 = sys.rhs(t, y)?;
    let mut a = y.to_vec();
    sys.propagate(t, tm, &mut a);
    let mut b = n1;
    sys.propagate(t, tm, &mut b);
    let u2 = axpy(0.5 * h, &b, &a);
    let n2 = sys.rhs(tm, &u2)?;
    let u3 = axpy(0.5 * h, &n2, &a);
    let n3 = sys.rhs(tm, &u3)?;
    let mut u4 = axpy(h, &n3, &a);
    sys.propagate(tm, t1, &mut u4);
    let n4 = sys.rhs(t1, &u4)?;
    let mut out: Vec<f64> = (0..y.len())
        .map(|i| a[i] + h / 6.0 * (b[i] + 2.0 * n2[i] + 2.0 * n3[i]))
        .collect();
    sys.propagate(tm, t1, &mut out);
    for (o, n) in out.iter_mut().zip(&n4) {
        *o += h / 6.0 * n;
    }
    Ok(out)
}

/// An accepted step reported to the observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accepted {
    pub t: f64,
    pub dt: f64,
    pub error: f64,
    /// The step landed on one of the requested output times.
    pub checkpoint: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_dt: f64,
    pub max_error: f64,
}

/// Integrates from `t0` to the last checkpoint. Steps never cross a
/// checkpoint; `observe` sees every accepted step.
pub fn integrate<S: System + ?Sized>(
    sys: &S,
    t0: f64,
    y: &mut Vec<f64>,
    checkpoints: &[f64],
    config: &StepConfig,
    mut observe: impl FnMut(Accepted, &[f64]) -> Result<()>,
) -> Result<IntegrationStats> {
    let mut t = t0;
    let mut h = config.dt_init.min(config.dt_max);
    let mut stats = IntegrationStats {
        accepted: 0,
        rejected: 0,
        min_dt: f64::INFINITY,
        max_error: 0.0,
    };
    for &target in checkpoints {
        if target < t {
            continue;
        }
        while t < target {
            let remaining = target - t;
            // Stretch the step slightly rather than leave a sliver before the checkpoint.
            let landing = remaining <= 1.01 * h;
            let step = if landing { remaining } else { h };
            if step < config.dt_min {
                if landing {
                    // Tiny remainder before a checkpoint: snap onto it.
                    t = target;
                    break;
                }
                return Err(Error::StiffnessBreakdown { t, dt: step });
            }
            match attempt(sys, t, y, step, config) {
                Ok((next, err)) => {
                    t = if landing { target } else { t + step };
                    *y = next;
                    stats.accepted += 1;
                    stats.min_dt = stats.min_dt.min(step);
                    stats.max_error = stats.max_error.max(err);
                    observe(
                        Accepted {
                            t,
                            dt: step,
                            error: err,
                            checkpoint: landing,
                        },
                        y,
                    )?;
                    if err < config.tol / 32.0 {
                        h = (2.0 * step.max(h)).min(config.dt_max);
                    } else if !landing {
                        h = step;
                    }
                }
                Err(()) => {
                    stats.rejected += 1;
                    h = 0.5 * step;
                    if h < config.dt_min {
                        return Err(Error::StiffnessBreakdown { t, dt: h });
                    }
                }
            }
        }
    }
    Ok(stats)
}

fn attempt<S: System + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    config: &StepConfig,
) -> std::result::Result<(Vec<f64>, f64), ()> {
    let full = rk4_step(sys, t, y, h).map_err(|_| ())?;
    let half = rk4_step(sys, t, y, 0.5 * h).map_err(|_| ())?;
    let two = rk4_step(sys, t + 0.5 * h, &half, 0.5 * h).map_err(|_| ())?;
    let err = full
        .iter()
        .zip(&two)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / 15.0;
    if !err.is_finite() || err > config.tol {
        return Err(());
    }
    if let Some(m0) = sys.margin(t, y) {
        match sys.margin(t + h, &two) {
            Some(m1) if m1 >= config.margin_fraction * m0 => {}
            _ => return Err(()),
        }
    }
    Ok((two, err))
}

/// Uniform output times `t0, t0 + dt, ..., t1` (inclusive of `t1`).
pub fn uniform_checkpoints(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = ((t1 - t0) / dt).round().max(1.0) as usize;
    (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl System for Decay {
        fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![-y[0] + t.cos(), -2.0 * y[1]])
        }
    }

    struct SplitDecay(f64);
    impl System for SplitDecay {
        fn rhs(&self, _t: f64, y: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![-y[0] * y[0]])
        }
        fn propagate(&self, t0: f64, t1: f64, y: &mut [f64]) {
            y[0] *= (-self.0 * (t1 - t0)).exp();
        }
    }

    #[test]
    fn classical_rk4_matches_exact_solution() {
        let mut y = vec![0.0, 1.0];
        let cps = uniform_checkpoints(0.0, 5.0, 0.5);
        let cfg = StepConfig {
            tol: 1e-11,
            ..StepConfig::default()
        };
        let mut seen = 0;
        integrate(&Decay, 0.0, &mut y, &cps, &cfg, |a, _| {
            seen += a.checkpoint as usize;
            Ok(())
        })
        .unwrap();
        let t: f64 = 5.0;
        let exact0 = 0.5 * (t.cos() + t.sin() - (-t).exp());
        assert!((y[0] - exact0).abs() < 1e-9);
        assert!((y[1] - (-10.0f64).exp()).abs() < 1e-12);
        assert_eq!(seen, cps.len() - 1);
    }

    #[test]
    fn lawson_handles_stiff_linear_part() {
        // y' = -k y - y^2 with k = 1e4: exact y = k / ((k + y0) e^{kt} - y0) * y0.
        let k = 1e4;
        let mut y = vec![1.0];
        let cfg = StepConfig {
            dt_max: 0.05,
            ..StepConfig::default()
        };
        let stats = integrate(&SplitDecay(k), 0.0, &mut y, &[0.001, 1.0], &cfg, |_, _| Ok(())).unwrap();
        assert!(stats.accepted < 200, "{stats:?}");
        assert!(y[0].abs() < 1e-300 || y[0] < 1e-30);
    }

    #[test]
    fn stiffness_breakdown_is_reported() {
        struct Blowup;
        impl System for Blowup {
            fn rhs(&self, _t: f64, y: &[f64]) -> Result<Vec<f64>> {
                Ok(vec![1e20 * y[0]])
            }
        }
        let mut y = vec![1.0];
        let err = integrate(&Blowup, 0.0, &mut y, &[1.0], &StepConfig::default(), |_, _| Ok(()));
        assert!(matches!(err, Err(Error::StiffnessBreakdown { .. })));
    }
}
