//! Synthetic heads and embeddings for desk-scale runs.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use surf_core::metrics::argmax;
use surf_core::model::{EmbeddingSet, Labels, LinearHead, Split, Task};
use surf_core::numerics::Rng;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    /// Training embeddings generated per class.
    pub per_class: usize,
    pub test_per_class: usize,
    /// Class means are `mean_scale · f_c⁺`.
    pub mean_scale: f64,
    pub noise: f64,
    pub bias_scale: f64,
    /// Clamp embeddings at zero, as after a rectifier.
    pub rectify: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 101,
            dim: 64,
            per_class: 20,
            test_per_class: 20,
            mean_scale: 1.0,
            noise: 0.3,
            bias_scale: 0.1,
            rectify: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub head: LinearHead,
    pub train: EmbeddingSet,
    pub test: EmbeddingSet,
}

/// Labels every row with the head's prediction.
pub fn label_by_model(head: &LinearHead, h: Array2<f64>, split: Split) -> Result<EmbeddingSet> {
    let y = head.forward(h.view())?;
    let labels = y.rows().into_iter().map(argmax).collect();
    Ok(EmbeddingSet::new(h, Labels::Classes(labels), split)?)
}

fn sample(head: &LinearHead, cfg: &SynthConfig, per_class: usize, rng: &mut Rng) -> Array2<f64> {
    let (c, d) = head.weights.dim();
    let mut h = Array2::zeros((c * per_class, d));
    for class in 0..c {
        let mean = head.row(class).mapv(|v| cfg.mean_scale * v.max(0.0));
        for r in 0..per_class {
            let mut row = h.row_mut(class * per_class + r);
            for j in 0..d {
                let v = mean[j] + cfg.noise * rng.normal();
                row[j] = if cfg.rectify { v.max(0.0) } else { v };
            }
        }
    }
    h
}

/// Head rows are standard Gaussian; class `c` embeddings scatter around the
/// positive part of `f_c`. Labels are the head's predictions, so some
/// samples can land in a class other than the one they were drawn for.
pub fn gen_synthetic(cfg: &SynthConfig, seed: u64) -> Result<Synthetic> {
    if cfg.per_class < 1 || cfg.test_per_class < 1 {
        return Err(BenchError::Usage("per-class sample counts must be at least 1".into()));
    }
    if cfg.classes < 1 || cfg.dim < 1 {
        return Err(BenchError::Usage("need at least one class and one dimension".into()));
    }
    let base = Rng::new(seed, 0);
    let mut r = base.fork(0);
    let w = Array2::from_shape_fn((cfg.classes, cfg.dim), |_| r.normal());
    let b = Array1::from_shape_fn(cfg.classes, |_| cfg.bias_scale * r.normal());
    let head = LinearHead::new(w, b, Task::Classification)?;
    let train = sample(&head, cfg, cfg.per_class, &mut base.fork(1));
    let test = sample(&head, cfg, cfg.test_per_class, &mut base.fork(2));
    Ok(Synthetic {
        train: label_by_model(&head, train, Split::Train)?,
        test: label_by_model(&head, test, Split::Test)?,
        head,
    })
}
