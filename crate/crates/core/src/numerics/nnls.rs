//! Non-negative least-squares projection onto a fixed dictionary.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::linalg::svd;

pub const MAX_ITERS: usize = 1000;
pub const KKT_TOL: f64 = 1e-8;

/// Precomputed Gram system for projecting many vectors onto the same
/// dictionary `V` (k × D).
#[derive(Debug, Clone)]
pub struct NnlsProjector {
    v: Array2<f64>,
    gram: Array2<f64>,
    step: f64,
}

impl NnlsProjector {
    pub fn new(v: ArrayView2<'_, f64>) -> Self {
        let gram = v.dot(&v.t());
        let lmax = if gram.nrows() == 0 {
            0.0
        } else {
            svd(gram.view(), 1).map(|s| s.sigma[0]).unwrap_or(0.0)
        };
        let step = if lmax > 0.0 { 1.0 / lmax } else { 0.0 };
        Self {
            v: v.to_owned(),
            gram,
            step,
        }
    }

    /// argmin_{p ≥ 0} ‖h − pV‖₂ by accelerated projected gradient with
    /// adaptive restart; stops after [`MAX_ITERS`] iterations or once the
    /// KKT residual ‖p − max(0, p − ∇)‖∞ drops to [`KKT_TOL`].
    pub fn project(&self, h: ArrayView1<'_, f64>) -> Array1<f64> {
        let k = self.v.nrows();
        let b = self.v.dot(&h);
        let mut p = Array1::<f64>::zeros(k);
        if k == 0 || self.step == 0.0 {
            return p;
        }
        let g = &self.gram;
        let grad = |x: &Array1<f64>| g.dot(x) - &b;
        let mut y = p.clone();
        let mut t = 1.0f64;
        for _ in 0..MAX_ITERS {
            let gp = grad(&p);
            let residual = p
                .iter()
                .zip(gp.iter())
                .map(|(&pi, &gi)| (pi - (pi - gi).max(0.0)).abs())
                .fold(0.0, f64::max);
            if residual <= KKT_TOL {
                break;
            }
            let gy = grad(&y);
            let next = (&y - &(&gy * self.step)).mapv(|e| e.max(0.0));
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            // Restart momentum when it points uphill.
            let uphill = gy.dot(&(&next - &p)) > 0.0;
            if uphill {
                y = next.clone();
                t = 1.0;
            } else {
                y = &next + &((&next - &p) * ((t - 1.0) / t_next));
                t = t_next;
            }
            p = next;
        }
        self.polish(p, &b)
    }

    /// Re-solves the normal equations on the support of `p`; the exact
    /// solution replaces `p` when it is feasible and satisfies KKT.
    fn polish(&self, p: Array1<f64>, b: &Array1<f64>) -> Array1<f64> {
        let free: Vec<usize> = (0..p.len()).filter(|&j| p[j] > 0.0).collect();
        if free.is_empty() {
            return p;
        }
        let g = self.gram.select(Axis(0), &free).select(Axis(1), &free);
        let rhs = b.select(Axis(0), &free);
        let Some(sol) = solve_spd(g, rhs) else { return p };
        if sol.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
            return p;
        }
        let mut exact = Array1::zeros(p.len());
        for (&j, &x) in free.iter().zip(sol.iter()) {
            exact[j] = x;
        }
        let grad = self.gram.dot(&exact) - b;
        let scale = b.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let kkt = (0..p.len()).all(|j| exact[j] > 0.0 || grad[j] >= -KKT_TOL * scale);
        if kkt {
            exact
        } else {
            p
        }
    }

    pub fn project_rows(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((h.nrows(), self.v.nrows()));
        for (i, row) in h.axis_iter(Axis(0)).enumerate() {
            out.row_mut(i).assign(&self.project(row));
        }
        out
    }
}

/// Cholesky solve; `None` when `a` is not numerically positive definite.
fn solve_spd(mut a: Array2<f64>, mut x: Array1<f64>) -> Option<Array1<f64>> {
    let n = x.len();
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if d <= 1e-14 * a[[j, j]].abs().max(1e-300) {
            return None;
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = v / d;
        }
    }
    for i in 0..n {
        for k in 0..i {
            x[i] -= a[[i, k]] * x[k];
        }
        x[i] /= a[[i, i]];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= a[[k, i]] * x[k];
        }
        x[i] /= a[[i, i]];
    }
    Some(x)
}

/// Single-shot convenience wrapper around [`NnlsProjector`].
pub fn nnls_project(h: ArrayView1<'_, f64>, v: ArrayView2<'_, f64>) -> Array1<f64> {
    NnlsProjector::new(v).project(h)
}
