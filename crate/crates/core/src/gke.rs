//! The generalized Kähler-Einstein equation
//! `(omega_Sigma + i ddbar u)^m = F e^u omega_Sigma^m` on a periodic base:
//! an inexact Newton-Krylov elliptic solver and the parabolic flow whose
//! long-time limit it is.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{HermitianField, ScalarField};
use crate::integrate::{self, StepConfig, System};
use crate::krylov::bicgstab;
use crate::linalg;
use crate::spectral::SpectralOps;

fn log_det_checked(omega: &HermitianField) -> Result<Vec<f64>> {
    let m = omega.dim();
    (0..omega.len())
        .map(|index| {
            let g = omega.at(index);
            linalg::cholesky(m, g).map_err(|pivot| Error::NotPositive { index, pivot })?;
            Ok(linalg::det(m, g).ln())
        })
        .collect()
}

fn log_field(f: &ScalarField) -> Result<Vec<f64>> {
    f.values()
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 {
                Ok(value.ln())
            } else {
                Err(Error::NonPositiveDensity { index, value })
            }
        })
        .collect()
}

/// `log det(omega_Sigma + i ddbar u) - log det omega_Sigma - log F - u`.
pub fn gke_residual(u: &ScalarField, omega: &HermitianField, f: &ScalarField) -> Result<ScalarField> {
    Problem::new(omega, f)?.residual(u.values()).map(|r| ScalarField::from_raw(u.grid().clone(), r))
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    50
}
fn default_krylov_rtol() -> f64 {
    1e-3
}
fn default_krylov_max_iter() -> usize {
    500
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    /// Sup-norm residual at which Newton stops.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Relative tolerance of the inner linear solve.
    #[serde(default = "default_krylov_rtol")]
    pub krylov_rtol: f64,
    #[serde(default = "default_krylov_max_iter")]
    pub krylov_max_iter: usize,
    /// Tighten the inner tolerance to `min(krylov_rtol, |r_k|)`.
    #[serde(default = "default_true")]
    pub adaptive_forcing: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            krylov_rtol: default_krylov_rtol(),
            krylov_max_iter: default_krylov_max_iter(),
            adaptive_forcing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GkeSolution {
    pub u: ScalarField,
    /// Sup-norm residual before each Newton step and after the last one.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    /// Smallest eigenvalue of `omega_Sigma + i ddbar u`.
    pub positivity_margin: f64,
}

struct Problem<'a> {
    omega: &'a HermitianField,
    ops: SpectralOps,
    log_base: Vec<f64>,
    log_f: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(omega: &'a HermitianField, f: &ScalarField) -> Result<Self> {
        omega.grid().check_same(f.grid())?;
        if omega.dim() != omega.grid().complex_dim() {
            return Err(Error::GridMismatch("omega_Sigma must be a full-rank base form".into()));
        }
        Ok(Self {
            omega,
            ops: SpectralOps::new(omega.grid()),
            log_base: log_det_checked(omega)?,
            log_f: log_field(f)?,
        })
    }

    fn shifted(&self, u: &[f64]) -> Result<HermitianField> {
        let uf = ScalarField::from_raw(self.omega.grid().clone(), u.to_vec());
        self.omega.add(&self.ops.ddbar(&uf))
    }

    fn residual_of(&self, shifted: &HermitianField, u: &[f64]) -> Result<Vec<f64>> {
        let ld = log_det_checked(shifted)?;
        Ok((0..u.len())
            .map(|i| ld[i] - self.log_base[i] - self.log_f[i] - u[i])
            .collect())
    }

    fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.residual_of(&self.shifted(u)?, u)
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Pointwise inverse of a positive field, flattened.
fn inverse_field(g: &HermitianField) -> Result<Vec<linalg::Mat>> {
    let m = g.dim();
    (0..g.len())
        .map(|index| linalg::inverse_positive(m, g.at(index)).map_err(|pivot| Error::NotPositive { index, pivot }))
        .collect()
}

/// Solves the equation from `u = 0`.
pub fn solve_gke(omega: &HermitianField, f: &ScalarField, config: &NewtonConfig) -> Result<GkeSolution> {
    solve_gke_from(omega, f, ScalarField::zeros(omega.grid()), config)
}

/// Damped inexact Newton from a given admissible initial guess.
pub fn solve_gke_from(
    omega: &HermitianField,
    f: &ScalarField,
    u0: ScalarField,
    config: &NewtonConfig,
) -> Result<GkeSolution> {
    let problem = Problem::new(omega, f)?;
    let m = omega.dim();
    let grid = omega.grid().clone();
    let mut u = u0.into_values();
    let mut shifted = problem.shifted(&u)?;
    let mut r = problem.residual_of(&shifted, &u)?;
    let mut history = vec![sup(&r)];
    let mut iterations = 0;
    while history[iterations] > config.tol {
        if iterations == config.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                history,
            });
        }
        let rk = history[iterations];
        let ginv = inverse_field(&shifted)?;
        let mean_trace = ginv
            .iter()
            .map(|h| (0..m).map(|j| h[j * m + j].re).sum::<f64>())
            .sum::<f64>()
            / (ginv.len() as f64 * m as f64);
        let ops = &problem.ops;
        let jacobian = |w: &[f64]| -> Vec<f64> {
            let dd = ops.ddbar(&ScalarField::from_raw(grid.clone(), w.to_vec()));
            (0..w.len())
                .map(|i| linalg::trace_with_inverse(m, &ginv[i][..m * m], dd.at(i)) - w[i])
                .collect()
        };
        let precondition = |v: &[f64]| ops.solve_shifted_laplacian(v, mean_trace);
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let eta = if config.adaptive_forcing {
            config.krylov_rtol.min(rk)
        } else {
            config.krylov_rtol
        };
        let delta = bicgstab(jacobian, precondition, &rhs, eta, config.krylov_max_iter)?.x;

        let mut lambda = 1.0;
        let mut saw_positive = false;
        loop {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(u, d)| u + lambda * d).collect();
            if let Ok(s) = problem.shifted(&trial) {
                if let Ok(res) = problem.residual_of(&s, &trial) {
                    saw_positive = true;
                    let norm = sup(&res);
                    if norm < rk || lambda < 1e-3 {
                        u = trial;
                        shifted = s;
                        r = res;
                        history.push(norm);
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 1e-10 {
                return Err(if saw_positive {
                    Error::NonConvergence {
                        iterations,
                        history,
                    }
                } else {
                    Error::PositivityUnrecoverable { iteration: iterations }
                });
            }
        }
        iterations += 1;
    }
    let positivity_margin = shifted.min_eigenvalue();
    Ok(GkeSolution {
        u: ScalarField::new(grid, u)?,
        residual_history: history,
        iterations,
        positivity_margin,
    })
}

/// Order estimates `log r_{k+1} / log r_k` for consecutive residuals with
/// `r_k <= threshold` and `r_{k+1} > floor`.
pub fn convergence_orders(history: &[f64], threshold: f64, floor: f64) -> Vec<f64> {
    history
        .windows(2)
        .filter(|w| w[0] <= threshold && w[0] < 1.0 && w[1] > floor)
        .map(|w| w[1].ln() / w[0].ln())
        .collect()
}

/// Reference data of the parabolic flow.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    /// Fixed `omega_Sigma`.
    Static,
    /// `omega_Sigma + e^{-t} rho` inside the Monge-Ampère operator.
    Transient(HermitianField),
}

fn default_horizon() -> f64 {
    10.0
}
fn default_sample_dt() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParabolicConfig {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Spacing of recorded samples.
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
    #[serde(default)]
    pub step: StepConfig,
    #[serde(default)]
    pub newton: NewtonConfig,
}

impl Default for ParabolicConfig {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            sample_dt: default_sample_dt(),
            step: StepConfig::default(),
            newton: NewtonConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicSample {
    pub t: f64,
    /// `max (u_t - u_infinity)`.
    pub a_max: f64,
    /// `min (u_t - u_infinity)`.
    pub a_min: f64,
    /// `sup |u_t - u_infinity|`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicTrajectory {
    pub samples: Vec<ParabolicSample>,
    pub u_final: ScalarField,
    pub u_infinity: ScalarField,
    /// Smallest `C` with `log det(G + e^{-t} rho) - log det G <= C e^{-t}`
    /// along the run and `C >= sup tr_G rho`, where `G = omega_Sigma + i ddbar u_infinity`.
    pub forcing_constant: f64,
    /// Largest value over accepted steps of
    /// `(A_{n+1} - A_n)/h - (C e^{-t_n} - min(A_n, A_{n+1}))`.
    pub max_inequality_excess: f64,
    /// Largest spatial part of the right side at the maximum of `u_t - u_infinity`.
    pub max_principle_excess: f64,
    pub accepted_steps: usize,
}

struct ParabolicSystem<'a> {
    problem: &'a Problem<'a>,
    rho: Option<&'a HermitianField>,
}

impl ParabolicSystem<'_> {
    fn form(&self, t: f64) -> Result<HermitianField> {
        match self.rho {
            Some(rho) => self.problem.omega.add(&rho.scale((-t).exp())),
            None => Ok(self.problem.omega.clone()),
        }
    }

    fn log_det_at(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        let uf = ScalarField::from_raw(self.problem.omega.grid().clone(), u.to_vec());
        log_det_checked(&self.form(t)?.add(&self.problem.ops.ddbar(&uf))?)
    }
}

impl System for ParabolicSystem<'_> {
    fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let ld = self.log_det_at(t, y)?;
        let p = self.problem;
        Ok((0..y.len())
            .map(|i| ld[i] - p.log_base[i] - p.log_f[i] - y[i])
            .collect())
    }
}

/// Integrates `du/dt = log det(omega_t + i ddbar u) - log det omega_Sigma - log F - u`.
pub fn parabolic_gke(
    omega: &HermitianField,
    f: &ScalarField,
    u0: &ScalarField,
    forcing: &Forcing,
    config: &ParabolicConfig,
) -> Result<ParabolicTrajectory> {
    let problem = Problem::new(omega, f)?;
    let u_inf = solve_gke(omega, f, &config.newton)?.u;
    let rho = match forcing {
        Forcing::Static => None,
        Forcing::Transient(rho) => {
            omega.check_compatible(rho)?;
            Some(rho)
        }
    };
    let sys = ParabolicSystem { problem: &problem, rho };
    let inf = u_inf.values();
    let n = inf.len();

    let g_inf = problem.shifted(inf)?;
    let ld_inf = log_det_checked(&g_inf)?;
    let mut forcing_constant: f64 = 0.0;
    if let Some(rho) = rho {
        let m = omega.dim();
        let ginv = inverse_field(&g_inf)?;
        for (i, h) in ginv.iter().enumerate() {
            forcing_constant = forcing_constant.max(linalg::trace_with_inverse(m, &h[..m * m], rho.at(i)));
        }
    }
    let mut forcing_at = |t: f64| -> Result<()> {
        if rho.is_some() {
            let ld = sys.log_det_at(t, inf)?;
            let worst = (0..n).map(|i| ld[i] - ld_inf[i]).fold(f64::NEG_INFINITY, f64::max);
            forcing_constant = forcing_constant.max(worst * t.exp());
        }
        Ok(())
    };

    let diff = |u: &[f64]| -> (f64, f64, usize) {
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        let mut arg = 0;
        for i in 0..n {
            let d = u[i] - inf[i];
            if d > hi {
                hi = d;
                arg = i;
            }
            lo = lo.min(d);
        }
        (hi, lo, arg)
    };

    let mut max_principle_excess = f64::NEG_INFINITY;
    let mut spatial_at_max = |t: f64, u: &[f64]| -> Result<()> {
        let (_, _, arg) = diff(u);
        let a = sys.log_det_at(t, u)?;
        let b = sys.log_det_at(t, inf)?;
        max_principle_excess = max_principle_excess.max(a[arg] - b[arg]);
        Ok(())
    };

    let record = |t: f64, u: &[f64]| {
        let (hi, lo, _) = diff(u);
        ParabolicSample {
            t,
            a_max: hi,
            a_min: lo,
            distance: hi.abs().max(lo.abs()),
        }
    };

    let mut y = u0.values().to_vec();
    forcing_at(0.0)?;
    spatial_at_max(0.0, &y)?;
    let mut samples = vec![record(0.0, &y)];
    let mut steps: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut prev = (0.0, diff(&y).0);
    let mut max_inequality_excess = f64::NEG_INFINITY;
    let checkpoints = integrate::uniform_checkpoints(0.0, config.horizon, config.sample_dt);
    let stats = integrate::integrate(&sys, 0.0, &mut y, &checkpoints, &config.step, |acc, u| {
        forcing_at(acc.t)?;
        spatial_at_max(acc.t, u)?;
        if acc.checkpoint {
            samples.push(record(acc.t, u));
        }
        let (t_n, a_n) = prev;
        let a_next = diff(u).0;
        steps.push((t_n, acc.dt, a_n, a_next));
        prev = (acc.t, a_next);
        Ok(())
    })?;

    for &(t_n, h, a_n, a_next) in &steps {
        let lhs = (a_next - a_n) / h;
        let rhs = forcing_constant * (-t_n).exp() - a_n.min(a_next);
        max_inequality_excess = max_inequality_excess.max(lhs - rhs);
    }

    Ok(ParabolicTrajectory {
        samples,
        u_final: ScalarField::new(omega.grid().clone(), y)?,
        u_infinity: u_inf,
        forcing_constant,
        max_inequality_excess,
        max_principle_excess,
        accepted_steps: stats.accepted,
    })
}
