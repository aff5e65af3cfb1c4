//! Dense linear algebra kernels: one-sided Jacobi SVD, PCA, least squares
//! and orthonormal basis helpers.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Thin SVD truncated to rank r: `M ≈ U diag(σ) Vᵗ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// n × r, orthonormal columns.
    pub u: Array2<f64>,
    /// r singular values, nonincreasing.
    pub sigma: Array1<f64>,
    /// r × m, orthonormal rows.
    pub vt: Array2<f64>,
}

impl Svd {
    pub fn reconstruct(&self) -> Array2<f64> {
        let us = &self.u * &self.sigma.view().insert_axis(Axis(0));
        us.dot(&self.vt)
    }
}

const JACOBI_EPS: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

/// Truncated SVD via one-sided (Hestenes) Jacobi rotations.
pub fn svd(m: ArrayView2<'_, f64>, rank: usize) -> Result<Svd> {
    let (n, cols) = m.dim();
    if rank > n.min(cols) {
        return Err(Error::Parameter(format!("svd rank {rank} exceeds min({n}, {cols})")));
    }
    if let Some(((r, c), _)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "svd input".into(),
            index: vec![r, c],
        });
    }
    if n >= cols {
        let (u, sigma, v) = jacobi_tall(m);
        Ok(Svd {
            u: u.slice(s![.., ..rank]).to_owned(),
            sigma: sigma.slice(s![..rank]).to_owned(),
            vt: v.slice(s![.., ..rank]).t().as_standard_layout().into_owned(),
        })
    } else {
        // Mᵗ = U' Σ V'ᵗ  ⇒  M = V' Σ U'ᵗ
        let (u_t, sigma, v_t) = jacobi_tall(m.t());
        Ok(Svd {
            u: v_t.slice(s![.., ..rank]).to_owned(),
            sigma: sigma.slice(s![..rank]).to_owned(),
            vt: u_t.slice(s![.., ..rank]).t().as_standard_layout().into_owned(),
        })
    }
}

/// Full one-sided Jacobi on a tall matrix (n ≥ m). Returns U (n × m) with
/// orthonormal columns, σ (m, sorted descending) and V (m × m).
fn jacobi_tall(a: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (n, m) = a.dim();
    // Work on columns stored as contiguous rows.
    let mut w: Vec<Vec<f64>> = (0..m).map(|j| a.column(j).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let (alpha, beta, gamma) = {
                    let (wp, wq) = (&w[p], &w[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for k in 0..n {
                        alpha += wp[k] * wp[k];
                        beta += wq[k] * wq[k];
                        gamma += wp[k] * wq[k];
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= JACOBI_EPS * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = w
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let sigma_max = norms.iter().copied().fold(0.0, f64::max);
    let tiny = sigma_max * 1e-13;
    let mut u = Array2::<f64>::zeros((n, m));
    let mut sigma = Array1::<f64>::zeros(m);
    let mut vmat = Array2::<f64>::zeros((m, m));
    let mut needs_completion = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = norms[src];
        for k in 0..m {
            vmat[[k, dst]] = v[src][k];
        }
        if norms[src] > tiny && norms[src] > 0.0 {
            for k in 0..n {
                u[[k, dst]] = w[src][k] / norms[src];
            }
        } else {
            needs_completion.push(dst);
        }
    }
    for &j in &needs_completion {
        let col = complete_against(u.view(), j, &needs_completion);
        u.column_mut(j).assign(&col);
    }
    (u, sigma, vmat)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for k in 0..cp.len() {
        let x = cp[k];
        let y = cq[k];
        cp[k] = c * x - s * y;
        cq[k] = s * x + c * y;
    }
}

/// A unit column orthogonal to every valid column of `u` (all columns except
/// the ones still awaiting completion at or after `j`).
fn complete_against(u: ArrayView2<'_, f64>, j: usize, pending: &[usize]) -> Array1<f64> {
    let n = u.nrows();
    let valid: Vec<usize> = (0..u.ncols())
        .filter(|c| !pending.contains(c) || *c < j)
        .filter(|&c| c != j)
        .collect();
    for e in 0..n {
        let mut cand = Array1::<f64>::zeros(n);
        cand[e] = 1.0;
        for _ in 0..2 {
            for &c in &valid {
                let col = u.column(c);
                let d = col.dot(&cand);
                cand.scaled_add(-d, &col);
            }
        }
        let norm = cand.dot(&cand).sqrt();
        if norm > 1e-6 {
            return cand / norm;
        }
    }
    Array1::zeros(n)
}

/// The top-k principal directions (k × D, orthonormal rows) of the
/// mean-centered rows of `x`.
pub fn pca(x: ArrayView2<'_, f64>, k: usize) -> Result<Array2<f64>> {
    let mean = x
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::Parameter("pca on empty matrix".into()))?;
    let centered = &x - &mean;
    Ok(svd(centered.view(), k)?.vt)
}

/// The top-k right singular vectors of `x` without centering (k × D).
pub fn principal_directions_uncentered(x: ArrayView2<'_, f64>, k: usize) -> Result<Array2<f64>> {
    Ok(svd(x, k)?.vt)
}

const GRAM_IDENTITY_TOL: f64 = 1e-12;
const RANK_RATIO: f64 = 1e-10;

/// Least-squares coefficients of every row of `h` (N × D) in the row basis
/// `b` (r × D): minimizes ‖hₙ − cₙᵗ B‖₂. Orthonormal bases take the exact
/// path `c = B h`.
pub fn lstsq_rows(b: ArrayView2<'_, f64>, h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if b.ncols() != h.ncols() {
        return Err(Error::shape("lstsq (basis dim vs data dim)", b.ncols(), h.ncols()));
    }
    let r = b.nrows();
    if r == 0 {
        return Ok(Array2::zeros((h.nrows(), 0)));
    }
    let gram = b.dot(&b.t());
    let orthonormal = gram
        .indexed_iter()
        .all(|((i, j), &g)| (g - if i == j { 1.0 } else { 0.0 }).abs() <= GRAM_IDENTITY_TOL);
    if orthonormal {
        return Ok(h.dot(&b.t()));
    }
    if r > b.ncols() {
        return Err(Error::Degenerate(format!(
            "basis of {r} vectors in dimension {} is rank deficient",
            b.ncols()
        )));
    }
    // Bᵗ = U Σ Vᵗ  ⇒  c = V Σ⁻¹ Uᵗ h
    let dec = svd(b.t(), r)?;
    let smax = dec.sigma[0];
    let smin = dec.sigma[r - 1];
    if smax == 0.0 || smin / smax < RANK_RATIO {
        return Err(Error::Degenerate(format!(
            "basis is rank deficient (σ_min/σ_max = {:.3e})",
            if smax == 0.0 { 0.0 } else { smin / smax }
        )));
    }
    let uh = h.dot(&dec.u); // N × r
    let scaled = &uh / &dec.sigma.view().insert_axis(Axis(0));
    Ok(scaled.dot(&dec.vt))
}

/// Single-vector form of [`lstsq_rows`].
pub fn lstsq(b: ArrayView2<'_, f64>, h: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let out = lstsq_rows(b, h.insert_axis(Axis(0)))?;
    Ok(out.row(0).to_owned())
}

/// Appends `v` to the orthonormal set `basis` after two rounds of
/// Gram–Schmidt. Returns false (and leaves `basis` unchanged) when the
/// residual norm falls below `tol` relative to ‖v‖.
pub fn orthonormal_push(basis: &mut Vec<Array1<f64>>, v: ArrayView1<'_, f64>, tol: f64) -> bool {
    let norm0 = v.dot(&v).sqrt();
    if norm0 == 0.0 || !norm0.is_finite() {
        return false;
    }
    let mut r = v.to_owned();
    for _ in 0..2 {
        for q in basis.iter() {
            let d = q.dot(&r);
            r.scaled_add(-d, q);
        }
    }
    let norm = r.dot(&r).sqrt();
    if norm <= tol * norm0 {
        return false;
    }
    r /= norm;
    basis.push(r);
    true
}

/// Orthonormal rows spanning the orthogonal complement of the row space of
/// `q` (assumed orthonormal) in ℝᴰ.
pub fn orthonormal_complement(q: ArrayView2<'_, f64>) -> Array2<f64> {
    let d = q.ncols();
    let mut all: Vec<Array1<f64>> = q.rows().into_iter().map(|r| r.to_owned()).collect();
    let start = all.len();
    for e in 0..d {
        if all.len() >= d {
            break;
        }
        let mut v = Array1::zeros(d);
        v[e] = 1.0;
        orthonormal_push(&mut all, v.view(), 1e-6);
    }
    rows_to_matrix(&all[start..], d)
}

pub fn rows_to_matrix(rows: &[Array1<f64>], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).assign(r);
    }
    m
}

/// max |Q Qᵗ − I| for a matrix with (supposedly) orthonormal rows.
pub fn orthonormality_residual(q: ArrayView2<'_, f64>) -> f64 {
    let g = q.dot(&q.t());
    g.indexed_iter()
        .map(|((i, j), &v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}
