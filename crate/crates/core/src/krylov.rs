//! Right-preconditioned BiCGStab for real linear systems given as closures.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||b - A x|| / ||b||` in the Euclidean norm.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` to relative tolerance `rtol`, starting from `x = 0`.
pub fn bicgstab(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    mut precondition: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(KrylovOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < f64::MIN_POSITIVE {
            return Err(Error::KrylovBreakdown(format!("rho vanished at iteration {it}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precondition(&p);
        v = apply(&p_hat);
        let denom = dot(&r_hat, &v);
        if denom.abs() < f64::MIN_POSITIVE {
            return Err(Error::KrylovBreakdown(format!("r_hat . v vanished at iteration {it}")));
        }
        alpha = rho_new / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
        let snorm = norm(&s);
        if snorm <= rtol * bnorm {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(KrylovOutcome {
                x,
                iterations: it,
                relative_residual: snorm / bnorm,
            });
        }
        let s_hat = precondition(&s);
        let t = apply(&s_hat);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(Error::KrylovBreakdown(format!("A s vanished at iteration {it}")));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rnorm = norm(&r);
        if rnorm <= rtol * bnorm {
            return Ok(KrylovOutcome {
                x,
                iterations: it,
                relative_residual: rnorm / bnorm,
            });
        }
        if omega == 0.0 {
            return Err(Error::KrylovBreakdown(format!("omega vanished at iteration {it}")));
        }
        rho = rho_new;
    }
    Err(Error::KrylovBreakdown(format!(
        "no convergence to {rtol:e} within {max_iter} iterations"
    )))
}
