//! Non-negative matrix factorization by multiplicative updates.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Nmf {
    /// n × k coefficients.
    pub w: Array2<f64>,
    /// k × D dictionary; rows have unit ℓ₂ norm (zero rows stay zero).
    pub v: Array2<f64>,
    /// ‖X − WV‖²_F after initialization and after every iteration.
    pub objective_history: Vec<f64>,
}

pub const DEFAULT_ITERS: usize = 500;

pub fn objective(x: ArrayView2<'_, f64>, w: &Array2<f64>, v: &Array2<f64>) -> f64 {
    let r = &x - &w.dot(v);
    r.iter().map(|e| e * e).sum()
}

/// Rejects any negative entry, naming its coordinate.
pub fn check_nonnegative(x: ArrayView2<'_, f64>) -> Result<()> {
    if let Some(((row, col), &value)) = x.indexed_iter().find(|(_, v)| **v < 0.0) {
        return Err(Error::Negative { row, col, value });
    }
    Ok(())
}

/// Minimizes ‖X − WV‖²_F over W, V ≥ 0 with Lee–Seung multiplicative
/// updates. On exit each row of V is scaled to unit norm and the scale is
/// folded into the matching column of W.
pub fn nmf(x: ArrayView2<'_, f64>, k: usize, rng: &mut Rng, iters: usize) -> Result<Nmf> {
    if k == 0 {
        return Err(Error::Parameter("nmf needs k >= 1".into()));
    }
    check_nonnegative(x)?;
    if let Some(((r, c), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "nmf input".into(),
            index: vec![r, c],
        });
    }
    let (n, d) = x.dim();
    let mean = x.mean().unwrap_or(0.0);
    let scale = (mean / k as f64).sqrt();
    let mut w = Array2::from_shape_fn((n, k), |_| scale * rng.uniform());
    let mut v = Array2::from_shape_fn((k, d), |_| scale * rng.uniform());

    let mut history = vec![objective(x, &w, &v)];
    for _ in 0..iters {
        // V ← V ⊙ (WᵗX) / (WᵗW V)
        let num = w.t().dot(&x);
        let den = w.t().dot(&w).dot(&v);
        ndarray::Zip::from(&mut v).and(&num).and(&den).for_each(|v, &nu, &de| {
            if de > 0.0 {
                *v *= nu / de;
            }
        });
        // W ← W ⊙ (X Vᵗ) / (W V Vᵗ)
        let num = x.dot(&v.t());
        let den = w.dot(&v.dot(&v.t()));
        ndarray::Zip::from(&mut w).and(&num).and(&den).for_each(|w, &nu, &de| {
            if de > 0.0 {
                *w *= nu / de;
            }
        });
        history.push(objective(x, &w, &v));
    }

    let norms: Array1<f64> = v.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    for (j, &nrm) in norms.iter().enumerate() {
        if nrm > 0.0 {
            v.row_mut(j).mapv_inplace(|e| e / nrm);
            w.column_mut(j).mapv_inplace(|e| e * nrm);
        }
    }
    Ok(Nmf {
        w,
        v,
        objective_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rel_err(x: &Array2<f64>, f: &Nmf) -> f64 {
        let r = x - &f.w.dot(&f.v);
        let xn: f64 = x.iter().map(|e| e * e).sum::<f64>().sqrt();
        r.iter().map(|e| e * e).sum::<f64>().sqrt() / xn
    }

    #[test]
    fn rank_one_exact() {
        let a = array![1.0, 2.0];
        let b = array![3.0, 4.0];
        let x = Array2::from_shape_fn((2, 2), |(i, j)| a[i] * b[j]);
        let f = nmf(x.view(), 1, &mut Rng::new(0, 0), DEFAULT_ITERS).unwrap();
        assert!(rel_err(&x, &f) <= 1e-6);
        assert!((f.v.row(0).dot(&f.v.row(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let x = Array2::<f64>::zeros((3, 4));
        let f = nmf(x.view(), 2, &mut Rng::new(0, 0), 50).unwrap();
        assert!(f.w.iter().all(|&e| e == 0.0));
        assert_eq!(*f.objective_history.last().unwrap(), 0.0);
    }

    #[test]
    fn one_hot_rows_identity_factorization() {
        let x = Array2::<f64>::eye(4);
        let f = nmf(x.view(), 4, &mut Rng::new(2, 0), DEFAULT_ITERS).unwrap();
        assert!(rel_err(&x, &f) <= 1e-6, "{}", rel_err(&x, &f));
    }

    #[test]
    fn rejects_negative_entry() {
        let x = array![[1.0, 0.5], [0.0, -0.25]];
        assert_eq!(
            nmf(x.view(), 1, &mut Rng::new(0, 0), 10).unwrap_err(),
            Error::Negative {
                row: 1,
                col: 1,
                value: -0.25
            }
        );
    }

    #[test]
    fn objective_nonincreasing() {
        let mut rng = Rng::new(5, 0);
        let x = Array2::from_shape_fn((30, 12), |_| rng.uniform());
        let f = nmf(x.view(), 4, &mut Rng::new(1, 0), DEFAULT_ITERS).unwrap();
        for w in f.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{w:?}");
        }
        assert!(f.w.iter().all(|&e| e >= 0.0));
        assert!(f.v.iter().all(|&e| e >= 0.0));
    }
}
