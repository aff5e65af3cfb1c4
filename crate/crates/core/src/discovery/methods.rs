use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::head_projection;
use crate::error::{Error, Result};
use crate::explanation::{ClassConcepts, ConceptExplanation, ProjectionRule};
use crate::model::{EmbeddingSet, LinearHead};
use crate::numerics::kmeans::{kmeans, DEFAULT_MAX_ITER};
use crate::numerics::linalg::{orthonormal_complement, orthonormal_push, rows_to_matrix, svd};
use crate::numerics::nmf::{check_nonnegative, nmf};
use crate::numerics::sae::train_topk_sae;
use crate::numerics::Rng;

const ZERO_NORM: f64 = 1e-12;
/// Multiplicative updates converge slowly near exact factorizations.
pub const ICE_NMF_ITERS: usize = 2000;

/// Keeps the rows with non-negligible norm, scaled to unit length.
fn unit_rows(m: &Array2<f64>, what: &str) -> Array2<f64> {
    let kept: Vec<Array1<f64>> = m
        .rows()
        .into_iter()
        .enumerate()
        .filter_map(|(j, r)| {
            let n = r.dot(&r).sqrt();
            if n < ZERO_NORM {
                tracing::warn!(index = j, "{what} has zero norm; dropped");
                None
            } else {
                Some(&r / n)
            }
        })
        .collect();
    rows_to_matrix(&kept, m.ncols())
}

fn singletons(cavs: Array2<f64>, f: ArrayView1<'_, f64>) -> Result<ClassConcepts> {
    if cavs.nrows() == 0 {
        return Err(Error::Degenerate("no usable concept directions".into()));
    }
    let alpha = head_projection(&cavs, f);
    Ok(ClassConcepts::singletons(cavs, alpha))
}

/// Flips `v` so that the mean projection of `h` onto it is nonnegative.
fn orient(v: &mut Array1<f64>, mean: &Array1<f64>) {
    if v.dot(mean) < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// CAVs are the normalized k-means centroids of the class data.
pub fn fit_kmeans(h: ArrayView2<'_, f64>, f: ArrayView1<'_, f64>, k: usize, rng: &mut Rng) -> Result<ClassConcepts> {
    let km = kmeans(h, k, rng, DEFAULT_MAX_ITER)?;
    singletons(unit_rows(&km.centroids, "k-means centroid"), f)
}

/// CAVs are the top-K right singular vectors of the (uncentered) class
/// data, signed so the class mean projects nonnegatively.
pub fn fit_cdisco(h: ArrayView2<'_, f64>, f: ArrayView1<'_, f64>, k: usize) -> Result<ClassConcepts> {
    let (n, d) = h.dim();
    if k > n.min(d) {
        return Err(Error::Parameter(format!(
            "cdisco needs K <= min(members, D) = {}, got K = {k}",
            n.min(d)
        )));
    }
    let mean = h.mean_axis(Axis(0)).unwrap();
    let mut vt = svd(h, k)?.vt;
    for mut row in vt.rows_mut() {
        let mut v = row.to_owned();
        orient(&mut v, &mean);
        row.assign(&v);
    }
    singletons(vt, f)
}

/// CAVs are a per-class NMF dictionary; coefficients come from NNLS.
pub fn fit_ice(h: ArrayView2<'_, f64>, f: ArrayView1<'_, f64>, k: usize, rng: &mut Rng) -> Result<ClassConcepts> {
    check_nonnegative(h).map_err(|e| Error::Incompatible {
        method: "ice".into(),
        reason: format!("{e}; non-negative factorization needs non-negative embeddings"),
    })?;
    if h.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("class data is identically zero".into()));
    }
    let fac = nmf(h, k, rng, ICE_NMF_ITERS)?;
    singletons(unit_rows(&fac.v, "NMF component"), f)
}

/// Top principal directions (uncentered) of `x` with singular value above
/// a relative floor.
fn directions(x: &Array2<f64>, want: usize) -> Result<Vec<Array1<f64>>> {
    let r = want.min(x.nrows()).min(x.ncols());
    if r == 0 {
        return Ok(vec![]);
    }
    let dec = svd(x.view(), r)?;
    let top = dec.sigma.first().copied().unwrap_or(0.0);
    Ok(dec
        .vt
        .rows()
        .into_iter()
        .zip(dec.sigma.iter())
        .filter(|(_, &s)| s > 1e-10 * top && s > 0.0)
        .map(|(v, _)| v.to_owned())
        .collect())
}

/// Removes the component of every row of `x` inside span(`basis`).
fn deflate(x: ArrayView2<'_, f64>, basis: &[Array1<f64>]) -> Array2<f64> {
    let mut r = x.to_owned();
    for q in basis {
        let c = r.dot(q);
        r -= &c.insert_axis(Axis(1)).dot(&q.view().insert_axis(Axis(0)));
    }
    r
}

/// Subspace concepts: k-means splits the class into K clusters; each
/// cluster contributes up to d_l orthonormal directions of its data after
/// removing the span found so far. Short groups are topped up from the
/// class residual and then the canonical basis. The orthonormal completion
/// is kept as the complement.
pub fn fit_mcd_lite(
    h: ArrayView2<'_, f64>,
    f: ArrayView1<'_, f64>,
    k: usize,
    d_l: usize,
    rng: &mut Rng,
) -> Result<ClassConcepts> {
    let d = h.ncols();
    let km = kmeans(h, k, rng, DEFAULT_MAX_ITER)?;
    let mean = h.mean_axis(Axis(0)).unwrap();
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let mut group_sizes = Vec::with_capacity(k);
    for cluster in 0..k {
        let want = d_l.min(d - basis.len());
        if want == 0 {
            tracing::warn!(cluster, "concept span already covers the space; group dropped");
            continue;
        }
        let start = basis.len();
        let idx: Vec<usize> = (0..h.nrows()).filter(|&i| km.assignments[i] == cluster).collect();
        let members = h.select(Axis(0), &idx);
        let mut candidates = directions(&deflate(members.view(), &basis), want)?;
        candidates.extend(directions(&deflate(h, &basis), want)?);
        for v in candidates {
            if basis.len() - start == want {
                break;
            }
            orthonormal_push(&mut basis, v.view(), 1e-8);
        }
        let mut e = 0;
        while basis.len() - start < want && e < d {
            let mut unit = Array1::zeros(d);
            unit[e] = 1.0;
            orthonormal_push(&mut basis, unit.view(), 1e-6);
            e += 1;
        }
        for v in &mut basis[start..] {
            orient(v, &mean);
        }
        group_sizes.push(basis.len() - start);
    }
    let cavs = rows_to_matrix(&basis, d);
    let complement = orthonormal_complement(cavs.view());
    let importances = head_projection(&cavs, f);
    Ok(ClassConcepts {
        cavs,
        group_sizes,
        importances,
        complement,
        offset: 0.0,
    })
}

/// One top-k SAE over all training embeddings with m = K·C atoms and
/// sparsity K. Every output uses the whole dictionary with α = fᵢ·d and an
/// additive offset fᵢ·b_pre.
pub(crate) fn fit_sae(
    train: &EmbeddingSet,
    head: &LinearHead,
    k: usize,
    epochs: usize,
    rng: &Rng,
) -> Result<ConceptExplanation> {
    let m = k * head.num_outputs();
    let (dict, log) = train_topk_sae(train.embeddings.view(), m, k, &mut rng.fork(0), epochs)?;
    tracing::debug!(epochs = log.epochs_run, loss = ?log.losses.last(), "sae trained");
    let d = head.dim();
    let classes = (0..head.num_outputs())
        .map(|i| {
            let f = head.row(i);
            ClassConcepts {
                cavs: Array2::zeros((0, d)),
                group_sizes: vec![],
                importances: dict.decoder.dot(&f),
                complement: Array2::zeros((0, d)),
                offset: f.dot(&dict.pre_bias),
            }
        })
        .collect();
    Ok(ConceptExplanation {
        method: "sae".into(),
        rule: ProjectionRule::SaeTopk,
        dim: d,
        classes,
        sae: Some(dict),
    })
}
