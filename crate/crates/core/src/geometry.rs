//! Discrete Kähler calculus on periodic grids: complex Hessians, Monge-Ampère
//! densities, traces, Ricci forms, curvature norms and torus diameters.
//!
//! All derivatives are spectral, so trigonometric data is differentiated to
//! machine precision.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, HermitianField, ScalarField};
use crate::linalg::{self, Mat};
use crate::spectral::SpectralOps;

/// Components `d^2 phi / dz_j dzbar_k` of `i ddbar phi`.
pub fn ddbar(phi: &ScalarField) -> HermitianField {
    SpectralOps::new(phi.grid()).ddbar(phi)
}

/// Pointwise determinant of the component matrix, i.e. the density of
/// `omega^m` against the flat form. May be non-positive.
pub fn ma_density(omega: &HermitianField) -> ScalarField {
    let m = omega.dim();
    let values = (0..omega.len()).map(|i| linalg::det(m, omega.at(i))).collect();
    ScalarField::from_raw(omega.grid().clone(), values)
}

/// Density of `C(m, r) alpha^(m-r) ^ beta^r`: the coefficient of `s^r` in
/// `det(alpha + s beta)`.
pub fn mixed_density(alpha: &HermitianField, beta: &HermitianField, r: usize) -> Result<ScalarField> {
    alpha.check_compatible(beta)?;
    let m = alpha.dim();
    if r > m {
        return Err(Error::InvalidParameter {
            name: "r",
            reason: format!("power {r} exceeds form dimension {m}"),
        });
    }
    let masks: Vec<u32> = (0u32..1 << m).filter(|s| s.count_ones() as usize == r).collect();
    let values = (0..alpha.len())
        .map(|i| {
            let (a, b) = (alpha.at(i), beta.at(i));
            masks
                .iter()
                .map(|&mask| {
                    let mut mixed = linalg::zero_mat();
                    for row in 0..m {
                        for col in 0..m {
                            let src = if mask >> col & 1 == 1 { b } else { a };
                            mixed[row * m + col] = src[row * m + col];
                        }
                    }
                    linalg::det(m, &mixed[..m * m])
                })
                .sum()
        })
        .collect();
    Ok(ScalarField::from_raw(alpha.grid().clone(), values))
}

/// `Tr_omega eta = g^{j kbar} eta_{j kbar}` pointwise.
pub fn trace_wrt(omega: &HermitianField, eta: &HermitianField) -> Result<ScalarField> {
    omega.check_compatible(eta)?;
    let m = omega.dim();
    let mut values = Vec::with_capacity(omega.len());
    for index in 0..omega.len() {
        let inv = linalg::inverse_positive(m, omega.at(index))
            .map_err(|pivot| Error::NotPositive { index, pivot })?;
        values.push(linalg::trace_with_inverse(m, &inv[..m * m], eta.at(index)));
    }
    Ok(ScalarField::from_raw(omega.grid().clone(), values))
}

/// Range `[min, max]` of the eigenvalues of `omega` relative to `reference`
/// over the grid.
pub fn eigenvalue_ratio_bounds(omega: &HermitianField, reference: &HermitianField) -> Result<(f64, f64)> {
    omega.check_compatible(reference)?;
    let m = omega.dim();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for index in 0..omega.len() {
        let ev = linalg::relative_eigenvalues(m, omega.at(index), reference.at(index))
            .map_err(|pivot| Error::NotPositive { index, pivot })?;
        lo = lo.min(ev[0]);
        hi = hi.max(ev[m - 1]);
    }
    Ok((lo, hi))
}

fn log_density(omega: &HermitianField) -> Result<ScalarField> {
    let det = ma_density(omega);
    if let Some((index, &value)) = det.values().iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonPositiveDensity { index, value });
    }
    Ok(ScalarField::from_raw(
        det.grid().clone(),
        det.values().iter().map(|v| v.ln()).collect(),
    ))
}

/// `Ric(omega) = -i ddbar log det g`.
pub fn ricci_form(omega: &HermitianField) -> Result<HermitianField> {
    if omega.dim() != omega.grid().complex_dim() {
        return Err(Error::GridMismatch(
            "Ricci form needs a form of the grid's full dimension".into(),
        ));
    }
    omega.check_positive()?;
    Ok(ddbar(&log_density(omega)?.scale(-1.0)))
}

/// First and second derivatives of the metric components at one point.
///
/// Layouts: `g[a*m + b] = g_{a bbar}`, `dg[(k*m + a)*m + b] = d_k g_{a bbar}`,
/// `dbar_g[(l*m + a)*m + b] = d_lbar g_{a bbar}`,
/// `ddbar_g[((k*m + l)*m + a)*m + b] = d_k d_lbar g_{a bbar}`.
#[derive(Debug, Clone, Copy)]
pub struct MetricJet<'a> {
    pub dim: usize,
    pub g: &'a [Complex64],
    pub dg: &'a [Complex64],
    pub dbar_g: &'a [Complex64],
    pub ddbar_g: &'a [Complex64],
}

/// Norm of `R_{i jbar k lbar} = -d_k d_lbar g_{i jbar} + g^{p qbar} d_k g_{i qbar} d_lbar g_{p jbar}`
/// with every slot contracted against the inverse metric.
pub fn curvature_norm(jet: &MetricJet<'_>) -> std::result::Result<f64, f64> {
    let m = jet.dim;
    let inv = linalg::inverse_positive(m, jet.g)?;
    // h[p][q] = g^{p qbar}, so that sum_q h[p][q] g_{r qbar} = delta_pr.
    let mut h: Mat = linalg::zero_mat();
    for p in 0..m {
        for q in 0..m {
            h[p * m + q] = inv[q * m + p];
        }
    }
    let idx4 = |i: usize, j: usize, k: usize, l: usize| ((i * m + j) * m + k) * m + l;
    let mut r = [Complex64::new(0.0, 0.0); 81];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    let mut v = -jet.ddbar_g[((k * m + l) * m + i) * m + j];
                    for p in 0..m {
                        for q in 0..m {
                            v += h[p * m + q]
                                * jet.dg[(k * m + i) * m + q]
                                * jet.dbar_g[(l * m + p) * m + j];
                        }
                    }
                    r[idx4(i, j, k, l)] = v;
                }
            }
        }
    }
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    let rijkl = r[idx4(i, j, k, l)];
                    if rijkl == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for a in 0..m {
                        for b in 0..m {
                            for c in 0..m {
                                for d in 0..m {
                                    total += rijkl
                                        * r[idx4(a, b, c, d)].conj()
                                        * h[i * m + a]
                                        * h[j * m + b].conj()
                                        * h[k * m + c]
                                        * h[l * m + d].conj();
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(total.re.max(0.0).sqrt())
}

/// Pointwise curvature norm with spectral metric derivatives.
pub fn riemann_norm(omega: &HermitianField) -> Result<ScalarField> {
    let m = omega.dim();
    let grid = omega.grid();
    if m != grid.complex_dim() {
        return Err(Error::GridMismatch(
            "curvature needs a form of the grid's full dimension".into(),
        ));
    }
    omega.check_positive()?;
    let ops = SpectralOps::new(grid);
    let comps: Vec<Vec<Complex64>> = (0..m * m).map(|ab| omega.component(ab / m, ab % m)).collect();

    let mut dg = Vec::with_capacity(m * m * m);
    let mut dbar_g = Vec::with_capacity(m * m * m);
    for k in 0..m {
        for c in &comps {
            dg.push(ops.dz(c, k));
            dbar_g.push(ops.dzbar(c, k));
        }
    }
    let mut ddbar_g = Vec::with_capacity(m * m * m * m);
    for k in 0..m {
        for l in 0..m {
            for c in &comps {
                ddbar_g.push(ops.dz_dzbar(c, k, l));
            }
        }
    }

    let n3 = m * m * m;
    let n4 = n3 * m;
    let mut buf_dg = vec![Complex64::new(0.0, 0.0); n3];
    let mut buf_dbar = vec![Complex64::new(0.0, 0.0); n3];
    let mut buf_dd = vec![Complex64::new(0.0, 0.0); n4];
    let mut values = Vec::with_capacity(grid.len());
    for index in 0..grid.len() {
        for t in 0..n3 {
            buf_dg[t] = dg[t][index];
            buf_dbar[t] = dbar_g[t][index];
        }
        for t in 0..n4 {
            buf_dd[t] = ddbar_g[t][index];
        }
        let jet = MetricJet {
            dim: m,
            g: omega.at(index),
            dg: &buf_dg,
            dbar_g: &buf_dbar,
            ddbar_g: &buf_dd,
        };
        let norm = curvature_norm(&jet).map_err(|pivot| Error::NotPositive { index, pivot })?;
        values.push(norm);
    }
    Ok(ScalarField::from_raw(grid.clone(), values))
}

#[derive(Clone, Copy, PartialEq)]
struct Visit {
    dist: f64,
    node: usize,
}

impl Eq for Visit {}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct TorusGraph {
    n: usize,
    root_g: Vec<f64>,
    steps: [(isize, isize, f64); 8],
}

impl TorusGraph {
    fn new(grid: &GridSpec, root_g: Vec<f64>) -> Self {
        let (hx, hy) = (grid.spacing(0), grid.spacing(1));
        let mut steps = [(0, 0, 0.0); 8];
        let mut s = 0;
        for dx in -1isize..=1 {
            for dy in -1isize..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let len = ((dx as f64 * hx).powi(2) + (dy as f64 * hy).powi(2)).sqrt();
                steps[s] = (dx, dy, len);
                s += 1;
            }
        }
        Self {
            n: grid.resolution()[0],
            root_g,
            steps,
        }
    }

    fn distances(&self, source: usize) -> Vec<f64> {
        let n = self.n;
        let mut dist = vec![f64::INFINITY; n * n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Visit { dist: 0.0, node: source });
        while let Some(Visit { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            let (ix, iy) = ((node / n) as isize, (node % n) as isize);
            for &(dx, dy, len) in &self.steps {
                let jx = (ix + dx).rem_euclid(n as isize) as usize;
                let jy = (iy + dy).rem_euclid(n as isize) as usize;
                let next = jx * n + jy;
                let nd = d + len * 0.5 * (self.root_g[node] + self.root_g[next]);
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(Visit { dist: nd, node: next });
                }
            }
        }
        dist
    }
}

/// Number of sources used by farthest-point sampling on fine grids.
pub const DIAMETER_SOURCES: usize = 16;

/// Graph approximation of the Riemannian diameter of a one-dimensional torus
/// fiber with metric `g |dxi|^2`: shortest paths over the 8-neighbour stencil,
/// maximized over all sources (`N <= 64`) or 16 farthest-point samples.
pub fn fiber_diameter(omega_fiber: &HermitianField) -> Result<f64> {
    let grid = omega_fiber.grid();
    if grid.complex_dim() != 1 || omega_fiber.dim() != 1 {
        return Err(Error::GridMismatch("fiber diameter needs a one-dimensional fiber".into()));
    }
    let mut root_g = Vec::with_capacity(grid.len());
    for index in 0..grid.len() {
        let g = omega_fiber.at(index)[0].re;
        if !(g > 0.0) {
            return Err(Error::NotPositive { index, pivot: g });
        }
        root_g.push(g.sqrt());
    }
    let graph = TorusGraph::new(grid, root_g);
    let ecc = |d: &[f64]| d.iter().copied().fold(0.0, f64::max);

    if grid.resolution()[0] <= 64 {
        return Ok((0..grid.len())
            .map(|s| ecc(&graph.distances(s)))
            .fold(0.0, f64::max));
    }
    let mut nearest = vec![f64::INFINITY; grid.len()];
    let mut source = 0;
    let mut diameter = 0.0_f64;
    for _ in 0..DIAMETER_SOURCES {
        let d = graph.distances(source);
        diameter = diameter.max(ecc(&d));
        for (n, di) in nearest.iter_mut().zip(&d) {
            *n = n.min(*di);
        }
        source = nearest
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
    }
    Ok(diameter)
}
