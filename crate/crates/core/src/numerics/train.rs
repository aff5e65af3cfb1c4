//! Adam-based training loop shared by the reconstruction MLP and the sparse
//! autoencoder.

use super::Rng;
use crate::error::{Error, Result};

/// A set of trainable tensors that can be walked as flat slices.
pub trait Parameters: Clone + Send + Sync {
    fn zeros_like(&self) -> Self;
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

impl<P: Parameters> Parameters for Vec<P> {
    fn zeros_like(&self) -> Self {
        self.iter().map(P::zeros_like).collect()
    }
    fn slices(&self) -> Vec<&[f64]> {
        self.iter().flat_map(P::slices).collect()
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().flat_map(P::slices_mut).collect()
    }
}

/// A differentiable loss over an indexed training set.
pub trait Objective<P: Parameters>: Sync {
    fn num_samples(&self) -> usize;

    /// Mean loss over `batch`. When `grad` is given, the gradient of that
    /// mean is added into it.
    fn loss_grad(&self, params: &P, batch: &[usize], grad: Option<&mut P>) -> f64;

    /// Hook applied after every optimizer step (e.g. renormalization).
    fn post_step(&self, _params: &mut P) {}

    fn full_loss(&self, params: &P) -> f64 {
        let all: Vec<usize> = (0..self.num_samples()).collect();
        self.loss_grad(params, &all, None)
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    m: Option<Vec<Vec<f64>>>,
    v: Option<Vec<Vec<f64>>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            m: None,
            v: None,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn step<P: Parameters>(&mut self, params: &mut P, grad: &P, lr: f64) {
        let shapes: Vec<usize> = grad.slices().iter().map(|s| s.len()).collect();
        let m = self
            .m
            .get_or_insert_with(|| shapes.iter().map(|&n| vec![0.0; n]).collect());
        let v = self
            .v
            .get_or_insert_with(|| shapes.iter().map(|&n| vec![0.0; n]).collect());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grad.slices())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without sufficient improvement before the learning rate is
    /// decayed. `None` disables plateau decay.
    pub plateau_patience: Option<usize>,
    /// Minimum relative loss decrease that counts as improvement.
    pub plateau_rel: f64,
    pub decay: f64,
    pub min_lr: f64,
}

impl TrainConfig {
    /// Recipe for the reconstruction MLP: Adam from lr 0.1, at most 100
    /// epochs, ×0.5 on plateau, stop below 1e-7.
    pub fn mlp() -> Self {
        Self {
            lr: 0.1,
            max_epochs: 100,
            batch_size: 128,
            plateau_patience: Some(5),
            plateau_rel: 1e-4,
            decay: 0.5,
            min_lr: 1e-7,
        }
    }

    pub fn sae() -> Self {
        Self {
            lr: 1e-3,
            max_epochs: 200,
            batch_size: 64,
            plateau_patience: None,
            plateau_rel: 0.0,
            decay: 0.5,
            min_lr: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Full-data loss at initialization and after every accepted epoch.
    pub losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub epochs_run: usize,
    /// Epochs whose loss increased and were rolled back.
    pub rejected_epochs: usize,
}

/// Mini-batch Adam with plateau decay. An epoch that ends with a higher
/// full-data loss than the last accepted one is rolled back and the learning
/// rate halved (with fresh optimizer moments), so the logged loss sequence
/// never increases.
pub fn train<P, O>(objective: &O, mut params: P, cfg: &TrainConfig, rng: &mut Rng) -> Result<(P, TrainLog)>
where
    P: Parameters,
    O: Objective<P>,
{
    let n = objective.num_samples();
    if n == 0 {
        return Err(Error::Parameter("training set is empty".into()));
    }
    let batch_size = cfg.batch_size.max(1);
    let mut adam = Adam::default();
    let mut lr = cfg.lr;
    let mut last = objective.full_loss(&params);
    if !last.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    let mut log = TrainLog {
        losses: vec![last],
        learning_rates: vec![],
        ..Default::default()
    };
    let mut best = last;
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        if lr < cfg.min_lr {
            break;
        }
        log.epochs_run = epoch;
        log.learning_rates.push(lr);
        let snapshot = params.clone();
        let order = rng.permutation(n);
        for batch in order.chunks(batch_size) {
            let mut grad = params.zeros_like();
            let l = objective.loss_grad(&params, batch, Some(&mut grad));
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.step(&mut params, &grad, lr);
            objective.post_step(&mut params);
        }
        let loss = objective.full_loss(&params);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        if loss > last {
            // stale momentum would repeat the overshoot, so restart Adam
            params = snapshot;
            adam = Adam::default();
            lr *= cfg.decay;
            stale = 0;
            log.rejected_epochs += 1;
            continue;
        }
        last = loss;
        log.losses.push(loss);
        if let Some(patience) = cfg.plateau_patience {
            if best - loss > cfg.plateau_rel * best.abs() {
                best = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    lr *= cfg.decay;
                    stale = 0;
                }
            }
        }
    }
    Ok((params, log))
}
