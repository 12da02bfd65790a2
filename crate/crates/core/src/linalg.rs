//! Dense kernels for the small Hermitian component matrices at a grid point.
//!
//! Matrices are row-major slices of length `m * m` with `m <= MAX_COMPLEX_DIM`;
//! results are returned in fixed-size buffers so the per-point loops do not
//! allocate.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::grid::MAX_COMPLEX_DIM;

pub type Mat = [Complex64; MAX_COMPLEX_DIM * MAX_COMPLEX_DIM];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn zero_mat() -> Mat {
    [ZERO; MAX_COMPLEX_DIM * MAX_COMPLEX_DIM]
}

/// Largest `|g_jk - conj(g_kj)|` relative to the largest entry (or 1).
pub fn hermitian_deviation(m: usize, g: &[Complex64]) -> f64 {
    let scale = g.iter().fold(1.0_f64, |s, c| s.max(c.norm()));
    let mut dev = 0.0_f64;
    for j in 0..m {
        for k in j..m {
            dev = dev.max((g[j * m + k] - g[k * m + j].conj()).norm());
        }
    }
    dev / scale
}

/// Lower Cholesky factor `g = L L^*`. On failure returns the offending pivot.
pub fn cholesky(m: usize, g: &[Complex64]) -> Result<Mat, f64> {
    let mut l = zero_mat();
    for j in 0..m {
        let mut d = g[j * m + j].re;
        for p in 0..j {
            d -= l[j * m + p].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(d);
        }
        let ljj = d.sqrt();
        l[j * m + j] = Complex64::new(ljj, 0.0);
        for i in j + 1..m {
            let mut s = g[i * m + j];
            for p in 0..j {
                s -= l[i * m + p] * l[j * m + p].conj();
            }
            l[i * m + j] = s / ljj;
        }
    }
    Ok(l)
}

/// Determinant by LU with partial pivoting; for Hermitian input the result is real.
pub fn det(m: usize, g: &[Complex64]) -> f64 {
    match m {
        1 => g[0].re,
        2 => (g[0] * g[3] - g[1] * g[2]).re,
        _ => {
            let mut a = zero_mat();
            a[..m * m].copy_from_slice(&g[..m * m]);
            let mut d = Complex64::new(1.0, 0.0);
            for c in 0..m {
                let piv = (c..m)
                    .max_by(|&x, &y| a[x * m + c].norm().total_cmp(&a[y * m + c].norm()))
                    .unwrap_or(c);
                if a[piv * m + c].norm() == 0.0 {
                    return 0.0;
                }
                if piv != c {
                    for k in 0..m {
                        a.swap(c * m + k, piv * m + k);
                    }
                    d = -d;
                }
                let p = a[c * m + c];
                d *= p;
                for r in c + 1..m {
                    let f = a[r * m + c] / p;
                    for k in c..m {
                        let v = a[c * m + k];
                        a[r * m + k] -= f * v;
                    }
                }
            }
            d.re
        }
    }
}

/// Inverse of a positive definite Hermitian matrix via its Cholesky factor.
pub fn inverse_positive(m: usize, g: &[Complex64]) -> Result<Mat, f64> {
    let l = cholesky(m, g)?;
    // L^{-1} by forward substitution, then g^{-1} = L^{-*} L^{-1}.
    let mut linv = zero_mat();
    for c in 0..m {
        for r in c..m {
            let mut s = if r == c {
                Complex64::new(1.0, 0.0)
            } else {
                ZERO
            };
            for p in c..r {
                s -= l[r * m + p] * linv[p * m + c];
            }
            linv[r * m + c] = s / l[r * m + r];
        }
    }
    let mut inv = zero_mat();
    for i in 0..m {
        for j in 0..m {
            let mut s = ZERO;
            for p in i.max(j)..m {
                s += linv[p * m + i].conj() * linv[p * m + j];
            }
            inv[i * m + j] = s;
        }
    }
    Ok(inv)
}

/// `tr(g^{-1} h) = sum g^{j kbar} h_{j kbar}` given the inverse of `g`.
pub fn trace_with_inverse(m: usize, ginv: &[Complex64], h: &[Complex64]) -> f64 {
    let mut s = ZERO;
    for j in 0..m {
        for k in 0..m {
            s += ginv[k * m + j] * h[j * m + k];
        }
    }
    s.re
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn eigenvalues(m: usize, g: &[Complex64]) -> Vec<f64> {
    match m {
        1 => vec![g[0].re],
        2 => {
            let (a, d) = (g[0].re, g[3].re);
            let half = 0.5 * (a - d);
            let r = (half * half + g[1].norm_sqr()).sqrt();
            let mid = 0.5 * (a + d);
            vec![mid - r, mid + r]
        }
        _ => {
            let mat = DMatrix::from_fn(m, m, |r, c| g[r * m + c]);
            let mut ev: Vec<f64> = SymmetricEigen::new(mat).eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            ev
        }
    }
}

/// Eigenvalues of `g` relative to the positive definite `h`, i.e. of
/// `L^{-1} g L^{-*}` with `h = L L^*`, ascending.
pub fn relative_eigenvalues(m: usize, g: &[Complex64], h: &[Complex64]) -> Result<Vec<f64>, f64> {
    let l = cholesky(m, h)?;
    // Solve L X = g, then L Y = X^* so that Y = L^{-1} g L^{-*} (g Hermitian).
    let solve = |b: &Mat| {
        let mut x = zero_mat();
        for c in 0..m {
            for r in 0..m {
                let mut s = b[r * m + c];
                for p in 0..r {
                    s -= l[r * m + p] * x[p * m + c];
                }
                x[r * m + c] = s / l[r * m + r];
            }
        }
        x
    };
    let mut gm = zero_mat();
    gm[..m * m].copy_from_slice(&g[..m * m]);
    let x = solve(&gm);
    let mut xh = zero_mat();
    for r in 0..m {
        for c in 0..m {
            xh[r * m + c] = x[c * m + r].conj();
        }
    }
    let y = solve(&xh);
    Ok(eigenvalues(m, &y[..m * m]))
}
