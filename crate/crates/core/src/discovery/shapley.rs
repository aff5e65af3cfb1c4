//! Shapley values of concept subsets, and the cshap-lite method built on them.

use ndarray::{s, Array1, Array2, Array3, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::explanation::{ClassConcepts, ConceptExplanation, ProjectionRule};
use crate::metrics::argmax;
use crate::model::{EmbeddingSet, LinearHead, Task};
use crate::numerics::kmeans::{kmeans, DEFAULT_MAX_ITER};
use crate::numerics::Rng;

pub const DEFAULT_PERMUTATIONS: usize = 200;
/// Largest effective player count solved by full enumeration.
pub const EXACT_MAX_PLAYERS: usize = 12;

/// A cooperative game over players `0..num_players()`.
pub trait ShapleyGame: Sync {
    fn num_players(&self) -> usize;

    /// Value of the coalition, given as a list of distinct players.
    fn value(&self, coalition: &[usize]) -> f64;

    /// Players known to contribute nothing to any coalition. They get
    /// value 0 and are left out of the enumeration.
    fn is_null(&self, _player: usize) -> bool {
        false
    }

    /// Marginal contribution of each player when added in `order`,
    /// indexed by position in `order`.
    fn marginals(&self, order: &[usize]) -> Vec<f64> {
        let mut prev = self.value(&[]);
        (1..=order.len())
            .map(|n| {
                let v = self.value(&order[..n]);
                let d = v - prev;
                prev = v;
                d
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyValues {
    pub values: Array1<f64>,
    /// Full enumeration rather than permutation sampling.
    pub exact: bool,
    /// Players that took part (non-null).
    pub effective_players: usize,
}

fn exact_values(game: &dyn ShapleyGame, players: &[usize]) -> Vec<f64> {
    let p = players.len();
    let n_sets = 1usize << p;
    let coalition = |mask: usize| -> Vec<usize> { (0..p).filter(|b| mask >> b & 1 == 1).map(|b| players[b]).collect() };
    let v: Vec<f64> = (0..n_sets).into_par_iter().map(|m| game.value(&coalition(m))).collect();
    // weight(s) = s!(p-s-1)!/p!
    let mut fact = vec![1.0f64; p + 1];
    for i in 1..=p {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..p).map(|s| fact[s] * fact[p - s - 1] / fact[p]).collect();
    (0..p)
        .map(|b| {
            let bit = 1usize << b;
            (0..n_sets)
                .filter(|m| m & bit == 0)
                .map(|m| weight[m.count_ones() as usize] * (v[m | bit] - v[m]))
                .sum()
        })
        .collect()
}

fn sampled_values(game: &dyn ShapleyGame, players: &[usize], permutations: usize, rng: &Rng) -> Vec<f64> {
    let p = players.len();
    let per_perm: Vec<Vec<f64>> = (0..permutations)
        .into_par_iter()
        .map(|t| {
            let mut r = rng.fork(t as u64);
            let order: Vec<usize> = r.permutation(p).into_iter().map(|j| players[j]).collect();
            let marg = game.marginals(&order);
            let mut by_player = vec![0.0; p];
            for (pos, &pl) in order.iter().enumerate() {
                let j = players.iter().position(|&x| x == pl).unwrap();
                by_player[j] = marg[pos];
            }
            by_player
        })
        .collect();
    let mut acc = vec![0.0; p];
    for row in &per_perm {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / permutations as f64).collect()
}

/// Shapley value of every player. Null players get exactly 0. The rest are
/// enumerated exactly when there are at most [`EXACT_MAX_PLAYERS`] of them,
/// and estimated from `permutations` seeded random orders otherwise.
pub fn shapley_values(game: &dyn ShapleyGame, permutations: usize, rng: &Rng) -> Result<ShapleyValues> {
    let players: Vec<usize> = (0..game.num_players()).filter(|&j| !game.is_null(j)).collect();
    let exact = players.len() <= EXACT_MAX_PLAYERS;
    if !exact && permutations == 0 {
        return Err(Error::Parameter(
            "permutation sampling needs at least one permutation".into(),
        ));
    }
    let vals = if players.is_empty() {
        vec![]
    } else if exact {
        exact_values(game, &players)
    } else {
        sampled_values(game, &players, permutations, rng)
    };
    let mut values = Array1::zeros(game.num_players());
    for (&j, v) in players.iter().zip(vals) {
        values[j] = v;
    }
    Ok(ShapleyValues {
        values,
        exact,
        effective_players: players.len(),
    })
}

/// Top-1 agreement between the model and a head-projection surrogate that
/// only keeps the CAVs in the coalition, on one class's members.
pub struct AgreementGame {
    /// contrib[[k, n, c]] = (f_c·v_k)(v_k·h_n).
    contrib: Array3<f64>,
    bias: Array1<f64>,
    model_top: Vec<usize>,
    null: Vec<bool>,
}

impl AgreementGame {
    pub fn new(pool: &Array2<f64>, head: &LinearHead, members: &Array2<f64>) -> Result<Self> {
        let m = pool.nrows();
        let n = members.nrows();
        let c = head.num_outputs();
        let coeffs = members.dot(&pool.t()); // n × m
        let alpha = pool.dot(&head.weights.t()); // m × c
        let mut contrib = Array3::zeros((m, n, c));
        for k in 0..m {
            let col = coeffs.column(k).insert_axis(Axis(1));
            let row = alpha.row(k).insert_axis(Axis(0));
            contrib.slice_mut(s![k, .., ..]).assign(&col.dot(&row));
        }
        let scale = contrib.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let null = (0..m)
            .map(|k| contrib.slice(s![k, .., ..]).iter().all(|&x| x.abs() <= 1e-12 * scale))
            .collect();
        let model_top = head.forward(members.view())?.rows().into_iter().map(argmax).collect();
        Ok(Self {
            contrib,
            bias: head.bias.clone(),
            model_top,
            null,
        })
    }

    fn base(&self) -> Array2<f64> {
        let n = self.model_top.len();
        let mut z = Array2::zeros((n, self.bias.len()));
        z += &self.bias;
        z
    }

    fn agreement(&self, logits: &Array2<f64>) -> f64 {
        let n = self.model_top.len();
        if n == 0 {
            return 0.0;
        }
        let hits = logits
            .rows()
            .into_iter()
            .zip(&self.model_top)
            .filter(|(r, &t)| argmax(*r) == t)
            .count();
        hits as f64 / n as f64
    }
}

impl ShapleyGame for AgreementGame {
    fn num_players(&self) -> usize {
        self.contrib.len_of(Axis(0))
    }

    fn value(&self, coalition: &[usize]) -> f64 {
        let mut z = self.base();
        for &k in coalition {
            z += &self.contrib.slice(s![k, .., ..]);
        }
        self.agreement(&z)
    }

    fn is_null(&self, player: usize) -> bool {
        self.null[player]
    }

    fn marginals(&self, order: &[usize]) -> Vec<f64> {
        let mut z = self.base();
        let mut prev = self.agreement(&z);
        order
            .iter()
            .map(|&k| {
                z += &self.contrib.slice(s![k, .., ..]);
                let v = self.agreement(&z);
                let d = v - prev;
                prev = v;
                d
            })
            .collect()
    }
}

/// Indices of the `k` largest |values|, ties to the lower index.
fn top_by_magnitude(values: &Array1<f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// A global pool of M normalized k-means centroids; each class keeps the K
/// pool CAVs with the largest |Shapley value| under [`AgreementGame`], and
/// those Shapley values are its importances.
pub fn fit_cshap_lite(
    train: &EmbeddingSet,
    head: &LinearHead,
    k: usize,
    pool_size: usize,
    permutations: usize,
    rng: &Rng,
) -> Result<ConceptExplanation> {
    if pool_size < k {
        return Err(Error::Parameter(format!(
            "pool size M = {pool_size} is smaller than K = {k}"
        )));
    }
    if head.task == Task::Regression {
        return Err(Error::Incompatible {
            method: "cshap-lite".into(),
            reason: "top-1 agreement needs more than one output".into(),
        });
    }
    let km = kmeans(train.embeddings.view(), pool_size, &mut rng.fork(0), DEFAULT_MAX_ITER)?;
    let rows: Vec<Array1<f64>> = km
        .centroids
        .rows()
        .into_iter()
        .filter_map(|r| {
            let n = r.dot(&r).sqrt();
            (n >= 1e-12).then(|| &r / n)
        })
        .collect();
    if rows.len() < k {
        return Err(Error::Degenerate(format!(
            "only {} usable pool CAVs for K = {k}",
            rows.len()
        )));
    }
    let pool = crate::numerics::linalg::rows_to_matrix(&rows, head.dim());
    let classes = (0..head.num_outputs())
        .map(|i| {
            let idx = train.members(i);
            if idx.is_empty() {
                return Err(Error::UnderPopulated {
                    class: i,
                    found: 0,
                    required: 1,
                });
            }
            let game = AgreementGame::new(&pool, head, &train.rows(&idx))?;
            let phi = shapley_values(&game, permutations, &rng.fork(1 + i as u64))?;
            let keep = top_by_magnitude(&phi.values, k);
            let cavs = pool.select(Axis(0), &keep);
            let importances = Array1::from_iter(keep.iter().map(|&j| phi.values[j]));
            Ok(ClassConcepts::singletons(cavs, importances))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConceptExplanation {
        method: "cshap-lite".into(),
        rule: ProjectionRule::LinearDot,
        dim: head.dim(),
        classes,
        sae: None,
    })
}
