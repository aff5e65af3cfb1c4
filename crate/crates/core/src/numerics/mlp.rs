//! Two-layer rectifier MLP with hand-derived gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::train::{train, Objective, Parameters, TrainConfig, TrainLog};
use super::Rng;
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 500;

/// `out = W₂ relu(W₁ x + b₁) + b₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// H₁ × K_in.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// D_out × H₁.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl MlpParams {
    /// Uniform(±1/√fan_in) initialization for weights and biases.
    pub fn init(inputs: usize, hidden: usize, outputs: usize, rng: &mut Rng) -> Self {
        let a1 = 1.0 / (inputs.max(1) as f64).sqrt();
        let a2 = 1.0 / (hidden.max(1) as f64).sqrt();
        Self {
            w1: Array2::from_shape_fn((hidden, inputs), |_| rng.uniform_range(-a1, a1)),
            b1: Array1::from_shape_fn(hidden, |_| rng.uniform_range(-a1, a1)),
            w2: Array2::from_shape_fn((outputs, hidden), |_| rng.uniform_range(-a2, a2)),
            b2: Array1::from_shape_fn(outputs, |_| rng.uniform_range(-a2, a2)),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, inputs)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((outputs, hidden)),
            b2: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w2.nrows()
    }

    /// Pre-activations of the hidden layer for each row of `x`.
    pub fn hidden_pre(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.w1.t());
        z += &self.b1;
        z
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let a = self.hidden_pre(x).mapv(relu);
        let mut out = a.dot(&self.w2.t());
        out += &self.b2;
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// H₁(K + 1) + D(H₁ + 1).
    pub fn param_count(&self) -> usize {
        self.num_params()
    }
}

pub(crate) fn relu(x: f64) -> f64 {
    x.max(0.0)
}

impl Parameters for MlpParams {
    fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs(), self.hidden(), self.outputs())
    }
    fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
        ]
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MlpLoss {
    /// Cross-entropy between softmax(output) and target probabilities.
    CrossEntropy,
    /// Mean absolute error between output and targets.
    L1,
}

impl MlpLoss {
    pub fn tag(&self) -> &'static str {
        match self {
            MlpLoss::CrossEntropy => "cel",
            MlpLoss::L1 => "l1",
        }
    }
}

/// Per-row loss and its gradient with respect to the outputs, both already
/// divided by `scale`.
pub(crate) fn output_loss_grad(
    loss: MlpLoss,
    out: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    scale: f64,
    want_grad: bool,
) -> (f64, Option<Array2<f64>>) {
    match loss {
        MlpLoss::CrossEntropy => {
            let mut total = 0.0;
            let mut g = want_grad.then(|| Array2::zeros(out.dim()));
            for (i, (o, t)) in out.rows().into_iter().zip(target.rows()).enumerate() {
                let max = o.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + o.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                for (ov, tv) in o.iter().zip(t.iter()) {
                    if *tv != 0.0 {
                        total -= tv * (ov - lse);
                    }
                }
                if let Some(g) = g.as_mut() {
                    let tsum: f64 = t.sum();
                    for (j, ov) in o.iter().enumerate() {
                        g[[i, j]] = ((ov - lse).exp() * tsum - t[j]) / scale;
                    }
                }
            }
            (total / scale, g)
        }
        MlpLoss::L1 => {
            let width = out.ncols() as f64;
            let diff = &out - &target;
            let total = diff.iter().map(|d| d.abs()).sum::<f64>() / (width * scale);
            let g = want_grad.then(|| diff.mapv(|d| d.signum() / (width * scale)));
            (total, g)
        }
    }
}

/// Plain supervised objective: rows of `inputs` map to rows of `targets`.
pub struct MlpObjective<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub targets: ArrayView2<'a, f64>,
    pub loss: MlpLoss,
}

impl Objective<MlpParams> for MlpObjective<'_> {
    fn num_samples(&self) -> usize {
        self.inputs.nrows()
    }

    fn loss_grad(&self, p: &MlpParams, batch: &[usize], grad: Option<&mut MlpParams>) -> f64 {
        let x = self.inputs.select(Axis(0), batch);
        let t = self.targets.select(Axis(0), batch);
        let z = p.hidden_pre(x.view());
        let a = z.mapv(relu);
        let mut out = a.dot(&p.w2.t());
        out += &p.b2;
        let (loss, d_out) = output_loss_grad(self.loss, out.view(), t.view(), batch.len() as f64, grad.is_some());
        if let (Some(g), Some(d_out)) = (grad, d_out) {
            g.w2 += &d_out.t().dot(&a);
            g.b2 += &d_out.sum_axis(Axis(0));
            let mut dz = d_out.dot(&p.w2);
            ndarray::Zip::from(&mut dz).and(&z).for_each(|d, &zv| {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            });
            g.w1 += &dz.t().dot(&x);
            g.b1 += &dz.sum_axis(Axis(0));
        }
        loss
    }
}

/// Trains a K_in → D_out MLP with the Adam recipe in [`TrainConfig::mlp`]
/// (or `cfg` when given).
pub fn train_mlp(
    inputs: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    loss: MlpLoss,
    hidden: usize,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(MlpParams, TrainLog)> {
    if inputs.nrows() == 0 {
        return Err(Error::Parameter("train_mlp needs at least one sample".into()));
    }
    if inputs.nrows() != targets.nrows() {
        return Err(Error::shape(
            "train_mlp rows (inputs vs targets)",
            inputs.nrows(),
            targets.nrows(),
        ));
    }
    let params = MlpParams::init(inputs.ncols(), hidden, targets.ncols(), &mut rng.fork(0));
    let obj = MlpObjective { inputs, targets, loss };
    train(&obj, params, cfg, rng)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::numerics::train::Parameters;

    /// Max relative error between analytic and central-difference gradients.
    pub(crate) fn gradient_check<P: Parameters, O: Objective<P>>(obj: &O, p: &P, eps: f64) -> f64 {
        let all: Vec<usize> = (0..obj.num_samples()).collect();
        let mut g = p.zeros_like();
        obj.loss_grad(p, &all, Some(&mut g));
        let analytic: Vec<f64> = g.slices().iter().flat_map(|s| s.iter().copied()).collect();
        let mut worst: f64 = 0.0;
        let mut idx = 0;
        let n_slices = p.slices().len();
        for s in 0..n_slices {
            let len = p.slices()[s].len();
            for i in 0..len {
                let mut plus = p.clone();
                plus.slices_mut()[s][i] += eps;
                let mut minus = p.clone();
                minus.slices_mut()[s][i] -= eps;
                let fd = (obj.loss_grad(&plus, &all, None) - obj.loss_grad(&minus, &all, None)) / (2.0 * eps);
                let an = analytic[idx];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                worst = worst.max(rel);
                idx += 1;
            }
        }
        worst
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = Rng::new(3, 0);
        let x = Array2::from_shape_fn((5, 4), |_| rng.normal());
        let logits = Array2::from_shape_fn((5, 3), |_| rng.normal());
        let probs = crate::model::softmax_rows(logits.view());
        let p = MlpParams::init(4, 6, 3, &mut rng);
        for (loss, t) in [(MlpLoss::CrossEntropy, &probs), (MlpLoss::L1, &logits)] {
            let obj = MlpObjective {
                inputs: x.view(),
                targets: t.view(),
                loss,
            };
            let err = gradient_check(&obj, &p, 1e-5);
            assert!(err <= 1e-4, "{loss:?}: {err}");
        }
    }

    #[test]
    fn constant_target_fit() {
        let x = Array2::from_shape_fn((40, 3), |(_, j)| 0.3 * j as f64 - 0.2);
        let target_row = [1.5, -0.5];
        let t = Array2::from_shape_fn((40, 2), |(_, j)| target_row[j]);
        let (p, _) = train_mlp(
            x.view(),
            t.view(),
            MlpLoss::L1,
            16,
            &TrainConfig::mlp(),
            &mut Rng::new(2, 0),
        )
        .unwrap();
        let out = p.forward(x.view());
        for row in out.rows() {
            for (o, e) in row.iter().zip(target_row) {
                assert!((o - e).abs() < 1e-3, "{o} vs {e}");
            }
        }
    }

    #[test]
    fn l1_descent_and_monotone_log() {
        let mut rng = Rng::new(5, 0);
        let x = Array2::from_shape_fn((60, 3), |_| rng.normal());
        let m = Array2::from_shape_fn((3, 2), |_| rng.normal());
        let t = x.dot(&m);
        let (_, log) = train_mlp(
            x.view(),
            t.view(),
            MlpLoss::L1,
            32,
            &TrainConfig::mlp(),
            &mut Rng::new(6, 0),
        )
        .unwrap();
        assert!(log.losses.last().unwrap() < &log.losses[0]);
        for w in log.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let mut rng = Rng::new(5, 0);
        let x = Array2::from_shape_fn((20, 3), |_| rng.normal());
        let t = Array2::from_shape_fn((20, 2), |_| rng.normal());
        let cfg = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::mlp()
        };
        let a = train_mlp(x.view(), t.view(), MlpLoss::L1, 8, &cfg, &mut Rng::new(1, 1)).unwrap();
        let b = train_mlp(x.view(), t.view(), MlpLoss::L1, 8, &cfg, &mut Rng::new(1, 1)).unwrap();
        assert_eq!(a.0, b.0);
    }
}
