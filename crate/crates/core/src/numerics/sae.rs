//! Top-k sparse autoencoder.
//!
//! Encoding keeps the k pre-activations of largest magnitude:
//! `z = topk((h − b_pre) W_enc + b_enc)`, and decoding is `ĥ = z W_dec + b_pre`
//! with unit-norm decoder rows (the dictionary directions).

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::kmeans::kmeanspp_seeds;
use super::train::{train, Objective, Parameters, TrainConfig, TrainLog};
use super::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SaeDict {
    /// m × D, unit-norm rows.
    pub decoder: Array2<f64>,
    /// D × m.
    pub encoder: Array2<f64>,
    pub encoder_bias: Array1<f64>,
    pub pre_bias: Array1<f64>,
    pub k: usize,
}

impl SaeDict {
    pub fn dict_size(&self) -> usize {
        self.decoder.nrows()
    }

    pub fn dim(&self) -> usize {
        self.decoder.ncols()
    }

    pub fn pre_activations(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        let centered = &h - &self.pre_bias;
        let mut pre = centered.dot(&self.encoder);
        pre += &self.encoder_bias;
        pre
    }

    /// Sparse codes (N × m) with exactly k retained entries per row.
    pub fn encode(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut pre = self.pre_activations(h);
        for mut row in pre.rows_mut() {
            let keep = top_k_mask(row.as_slice().unwrap(), self.k);
            for (v, k) in row.iter_mut().zip(keep) {
                if !k {
                    *v = 0.0;
                }
            }
        }
        pre
    }

    pub fn decode(&self, codes: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = codes.dot(&self.decoder);
        out += &self.pre_bias;
        out
    }

    pub fn reconstruct(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        self.decode(self.encode(h).view())
    }

    pub fn normalize_decoder(&mut self) {
        for mut row in self.decoder.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row /= n;
            }
        }
    }
}

/// Marks the k entries of largest magnitude (ties → lower index).
pub fn top_k_mask(values: &[f64], k: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    let mut mask = vec![false; values.len()];
    for &i in idx.iter().take(k) {
        mask[i] = true;
    }
    mask
}

impl Parameters for SaeDict {
    fn zeros_like(&self) -> Self {
        Self {
            decoder: Array2::zeros(self.decoder.dim()),
            encoder: Array2::zeros(self.encoder.dim()),
            encoder_bias: Array1::zeros(self.encoder_bias.len()),
            pre_bias: Array1::zeros(self.pre_bias.len()),
            k: self.k,
        }
    }
    fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.decoder.as_slice().unwrap(),
            self.encoder.as_slice().unwrap(),
            self.encoder_bias.as_slice().unwrap(),
            self.pre_bias.as_slice().unwrap(),
        ]
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.decoder.as_slice_mut().unwrap(),
            self.encoder.as_slice_mut().unwrap(),
            self.encoder_bias.as_slice_mut().unwrap(),
            self.pre_bias.as_slice_mut().unwrap(),
        ]
    }
}

/// Mean squared reconstruction error ‖h − decode(encode(h))‖².
pub struct SaeObjective<'a> {
    pub data: ArrayView2<'a, f64>,
}

impl Objective<SaeDict> for SaeObjective<'_> {
    fn num_samples(&self) -> usize {
        self.data.nrows()
    }

    fn loss_grad(&self, p: &SaeDict, batch: &[usize], grad: Option<&mut SaeDict>) -> f64 {
        let x = self.data.select(Axis(0), batch);
        let centered = &x - &p.pre_bias;
        let mut pre = centered.dot(&p.encoder);
        pre += &p.encoder_bias;
        let mut mask = Array2::<f64>::zeros(pre.dim());
        for (i, row) in pre.rows().into_iter().enumerate() {
            let keep = top_k_mask(row.to_slice().unwrap(), p.k);
            for (j, k) in keep.into_iter().enumerate() {
                if k {
                    mask[[i, j]] = 1.0;
                }
            }
        }
        let z = &pre * &mask;
        let mut resid = z.dot(&p.decoder);
        resid += &p.pre_bias;
        resid -= &x;
        let b = batch.len() as f64;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / b;
        if let Some(g) = grad {
            let d_resid = resid.mapv(|r| 2.0 * r / b);
            g.decoder += &z.t().dot(&d_resid);
            let mut delta = d_resid.dot(&p.decoder.t());
            delta *= &mask;
            g.encoder += &centered.t().dot(&delta);
            let delta_sum = delta.sum_axis(Axis(0));
            g.encoder_bias += &delta_sum;
            g.pre_bias += &d_resid.sum_axis(Axis(0));
            g.pre_bias -= &p.encoder.dot(&delta_sum);
        }
        loss
    }

    fn post_step(&self, p: &mut SaeDict) {
        p.normalize_decoder();
    }
}

/// Data-seeded initialization: pre-bias at the data mean, decoder rows at
/// k-means++-chosen centered samples (random directions beyond n), encoder
/// tied to the decoder transpose.
pub fn init_sae(h: ArrayView2<'_, f64>, m: usize, k: usize, rng: &mut Rng) -> SaeDict {
    let (n, d) = h.dim();
    let mean = h.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(d));
    let centered = &h - &mean;
    let seeds = kmeanspp_seeds(centered.view(), m.min(n), rng);
    let mut decoder = Array2::zeros((m, d));
    for (row, &i) in seeds.iter().enumerate() {
        decoder.row_mut(row).assign(&centered.row(i));
    }
    for mut row in decoder.rows_mut() {
        if row.dot(&row) == 0.0 {
            row.mapv_inplace(|_| rng.normal());
        }
    }
    let mut dict = SaeDict {
        encoder: Array2::zeros((d, m)),
        decoder,
        encoder_bias: Array1::zeros(m),
        pre_bias: mean,
        k,
    };
    dict.normalize_decoder();
    dict.encoder = dict.decoder.t().as_standard_layout().into_owned();
    dict
}

/// Trains a top-k SAE with dictionary size `m` and sparsity `k` by Adam
/// (lr 1e-3) for `epochs` epochs.
pub fn train_topk_sae(
    h: ArrayView2<'_, f64>,
    m: usize,
    k: usize,
    rng: &mut Rng,
    epochs: usize,
) -> Result<(SaeDict, TrainLog)> {
    if k > m {
        return Err(Error::Parameter(format!(
            "sae sparsity k = {k} exceeds dictionary size m = {m}"
        )));
    }
    if k == 0 || h.nrows() == 0 {
        return Err(Error::Parameter("sae needs k >= 1 and at least one sample".into()));
    }
    let init = init_sae(h, m, k, &mut rng.fork(0));
    let cfg = TrainConfig {
        max_epochs: epochs,
        ..TrainConfig::sae()
    };
    train(&SaeObjective { data: h }, init, &cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mlp::tests::gradient_check;

    fn planted(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = Rng::new(seed, 0);
        let mut h = Array2::zeros((n, d));
        for i in 0..n {
            let j = rng.below(d);
            h[[i, j]] = rng.uniform_range(1.0, 2.0);
        }
        h
    }

    #[test]
    fn planted_dictionary_recovery() {
        let h = planted(400, 8, 1);
        let (dict, log) = train_topk_sae(h.view(), 8, 1, &mut Rng::new(2, 0), 200).unwrap();
        let rec = dict.reconstruct(h.view());
        let mse = (&rec - &h).iter().map(|e| e * e).sum::<f64>() / h.nrows() as f64;
        let energy = h.iter().map(|e| e * e).sum::<f64>() / h.nrows() as f64;
        assert!(mse <= 1e-3 * energy, "mse {mse} energy {energy}");
        for w in log.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
        for row in dict.decoder.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn encode_keeps_exactly_k() {
        let mut rng = Rng::new(3, 0);
        let h = Array2::from_shape_fn((30, 6), |_| rng.normal());
        let dict = init_sae(h.view(), 10, 3, &mut rng);
        let z = dict.encode(h.view());
        for row in z.rows() {
            assert_eq!(row.iter().filter(|v| **v != 0.0).count(), 3);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(4, 0);
        let h = Array2::from_shape_fn((6, 4), |_| rng.normal());
        let mut dict = init_sae(h.view(), 5, 2, &mut rng);
        // move off the tied init so every parameter matters
        for s in dict.slices_mut() {
            for v in s.iter_mut() {
                *v += 0.05 * rng.normal();
            }
        }
        let obj = SaeObjective { data: h.view() };
        assert!(gradient_check(&obj, &dict, 1e-6) <= 1e-4);
    }

    #[test]
    fn sparsity_larger_than_dict() {
        let h = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            train_topk_sae(h.view(), 2, 3, &mut Rng::new(0, 0), 1),
            Err(Error::Parameter(_))
        ));
    }
}
