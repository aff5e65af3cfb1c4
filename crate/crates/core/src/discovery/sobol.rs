//! Total-order Sobol indices of concept coefficients.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::explanation::{project, ConceptExplanation};
use crate::numerics::Rng;

pub const BASE_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SobolIndices {
    pub total: Array1<f64>,
    /// The logit does not vary over the sampled coefficients.
    pub degenerate: bool,
}

fn resample(coeffs: &Array2<f64>, n: usize, rng: &mut Rng) -> Array2<f64> {
    let (rows, cols) = coeffs.dim();
    Array2::from_shape_fn((n, cols), |(_, j)| coeffs[[rng.below(rows), j]])
}

/// Jansen estimator of the total index of every coefficient of `class` under
/// the logit Σ αₖ pₖ. Each coefficient is drawn independently from its
/// empirical distribution over `h`. The output variance is estimated from
/// the paired A/B differences, so a logit driven by one coefficient gets an
/// index of exactly 1.
pub fn sobol_importance(
    expl: &ConceptExplanation,
    class: usize,
    h: ArrayView2<'_, f64>,
    rng: &mut Rng,
) -> Result<SobolIndices> {
    if h.nrows() < 2 {
        return Err(Error::Parameter(format!(
            "sobol importance needs at least 2 samples, got {}",
            h.nrows()
        )));
    }
    let coeffs = project(expl, class, h)?;
    let alpha = &expl.classes[class].importances;
    let r = alpha.len();
    let a = resample(&coeffs, BASE_SAMPLES, rng);
    let b = resample(&coeffs, BASE_SAMPLES, rng);
    let ya = a.dot(alpha);
    let yb = b.dot(alpha);
    let n2 = 2.0 * BASE_SAMPLES as f64;
    let var = (&ya - &yb).mapv(|d| d * d).sum() / n2;
    if var.is_nan() || var <= 0.0 {
        return Ok(SobolIndices {
            total: Array1::zeros(r),
            degenerate: true,
        });
    }
    let total = Array1::from_shape_fn(r, |j| {
        // Only column j differs between A and AB_j.
        let d = (&a.column(j) - &b.column(j)) * alpha[j];
        d.mapv(|x| x * x).sum() / n2 / var
    });
    Ok(SobolIndices {
        total,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explanation::{ClassConcepts, ProjectionRule};
    use ndarray::array;

    fn expl(importances: Array1<f64>) -> ConceptExplanation {
        ConceptExplanation {
            method: "kmeans".into(),
            rule: ProjectionRule::LinearDot,
            dim: 3,
            classes: vec![ClassConcepts::singletons(Array2::eye(3), importances)],
            sae: None,
        }
    }

    #[test]
    fn single_factor() {
        let e = expl(array![0.0, 2.0, 0.0]);
        let mut rng = Rng::new(1, 0);
        let h = Array2::from_shape_fn((50, 3), |_| rng.normal());
        let s = sobol_importance(&e, 0, h.view(), &mut Rng::new(2, 0)).unwrap();
        assert!(!s.degenerate);
        assert_eq!(s.total, array![0.0, 1.0, 0.0]);
    }

    #[test]
    fn constant_coefficients_are_degenerate() {
        let e = expl(array![1.0, 1.0, 1.0]);
        let h = Array2::from_elem((10, 3), 0.5);
        assert!(
            sobol_importance(&e, 0, h.view(), &mut Rng::new(0, 0))
                .unwrap()
                .degenerate
        );
    }

    #[test]
    fn needs_two_samples() {
        let e = expl(array![1.0, 1.0, 1.0]);
        let h = Array2::zeros((1, 3));
        assert!(sobol_importance(&e, 0, h.view(), &mut Rng::new(0, 0)).is_err());
    }
}
