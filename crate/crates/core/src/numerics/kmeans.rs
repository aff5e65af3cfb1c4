//! Lloyd's k-means with k-means++ seeding.

use ndarray::{Array2, ArrayView1, ArrayView2};

use super::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KMeans {
    /// k × D.
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after seeding and after every
    /// iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeans {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&0.0)
    }
}

pub const DEFAULT_MAX_ITER: usize = 300;

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: returns the row indices of the initial centroids.
pub fn kmeanspp_seeds(x: ArrayView2<'_, f64>, k: usize, rng: &mut Rng) -> Vec<usize> {
    let n = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    if k == 0 || n == 0 {
        return chosen;
    }
    chosen.push(rng.below(n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just above the final sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = sq_dist(x.row(i), x.row(next));
            if nd < *d {
                *d = nd;
            }
        }
    }
    chosen
}

fn assign(x: ArrayView2<'_, f64>, centroids: &Array2<f64>, out: &mut [usize]) -> (bool, Vec<f64>) {
    let mut changed = false;
    let mut dists = vec![0.0; x.nrows()];
    for (i, row) in x.rows().into_iter().enumerate() {
        // Ties keep the current cluster, otherwise go to the lowest index.
        let (mut best, mut best_d) = if out[i] < centroids.nrows() {
            (out[i], sq_dist(row, centroids.row(out[i])))
        } else {
            (0, f64::INFINITY)
        };
        for (c, cent) in centroids.rows().into_iter().enumerate() {
            let d = sq_dist(row, cent);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if out[i] != best {
            changed = true;
            out[i] = best;
        }
        dists[i] = best_d;
    }
    (changed, dists)
}

fn wcss(x: ArrayView2<'_, f64>, centroids: &Array2<f64>, assignments: &[usize]) -> f64 {
    x.rows()
        .into_iter()
        .zip(assignments)
        .map(|(r, &a)| sq_dist(r, centroids.row(a)))
        .sum()
}

/// Recomputes centroids as cluster means. Empty clusters take the point
/// farthest from its current centroid (that point moves to the empty
/// cluster).
fn update(x: ArrayView2<'_, f64>, centroids: &mut Array2<f64>, assignments: &mut [usize]) {
    let k = centroids.nrows();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &a) in assignments.iter().enumerate() {
            if counts[a] <= 1 {
                continue;
            }
            let d = sq_dist(x.row(i), centroids.row(a));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            counts[assignments[i]] -= 1;
            assignments[i] = c;
            counts[c] = 1;
            centroids.row_mut(c).assign(&x.row(i));
        }
    }
    let mut sums = Array2::<f64>::zeros(centroids.dim());
    for (i, &a) in assignments.iter().enumerate() {
        let mut s = sums.row_mut(a);
        s += &x.row(i);
    }
    for (c, &n) in counts.iter().enumerate().take(k) {
        if n > 0 {
            let mean = &sums.row(c) / n as f64;
            centroids.row_mut(c).assign(&mean);
        }
    }
}

pub fn kmeans(x: ArrayView2<'_, f64>, k: usize, rng: &mut Rng, max_iter: usize) -> Result<KMeans> {
    let n = x.nrows();
    if k == 0 {
        return Err(Error::Parameter("k-means needs k >= 1".into()));
    }
    if k > n {
        return Err(Error::Parameter(format!(
            "k-means with k = {k} clusters on only {n} points"
        )));
    }
    let seeds = kmeanspp_seeds(x, k, rng);
    let mut centroids = Array2::zeros((k, x.ncols()));
    for (c, &i) in seeds.iter().enumerate() {
        centroids.row_mut(c).assign(&x.row(i));
    }
    let mut assignments = vec![usize::MAX; n];
    assign(x, &centroids, &mut assignments);
    let mut history = vec![wcss(x, &centroids, &assignments)];
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        update(x, &mut centroids, &mut assignments);
        let (changed, _) = assign(x, &centroids, &mut assignments);
        history.push(wcss(x, &centroids, &assignments));
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignments,
        objective_history: history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, concatenate, Axis};

    /// Brute force over every assignment of 4 points into 2 non-empty
    /// clusters; returns the optimal centroid set.
    fn exhaustive_two_clusters(x: &Array2<f64>) -> (f64, Vec<Vec<f64>>) {
        let n = x.nrows();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << n) - 1 {
            let mut cents = vec![];
            let mut cost = 0.0;
            for side in [true, false] {
                let idx: Vec<usize> = (0..n).filter(|&i| ((mask >> i) & 1 == 1) == side).collect();
                let m = x.select(Axis(0), &idx).mean_axis(Axis(0)).unwrap();
                cost += idx.iter().map(|&i| sq_dist(x.row(i), m.view())).sum::<f64>();
                cents.push(m.to_vec());
            }
            if cost < best.0 {
                best = (cost, cents);
            }
        }
        best
    }

    #[test]
    fn four_points_two_clusters() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let (opt_cost, mut opt) = exhaustive_two_clusters(&x);
        opt.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(opt, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
        for seed in 0..10 {
            let r = kmeans(x.view(), 2, &mut Rng::new(seed, 0), DEFAULT_MAX_ITER).unwrap();
            let mut got: Vec<Vec<f64>> = r.centroids.rows().into_iter().map(|c| c.to_vec()).collect();
            got.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(got, opt);
            assert!((r.objective() - opt_cost).abs() < 1e-12);
        }
    }

    #[test]
    fn k_equals_n_zero_objective() {
        let x = array![[0.0, 0.0], [1.0, 3.0], [2.0, -1.0]];
        let r = kmeans(x.view(), 3, &mut Rng::new(4, 0), DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.objective(), 0.0);
    }

    #[test]
    fn duplicated_dataset_same_centroids() {
        let x = array![
            [0.0, 0.0],
            [0.0, 1.0],
            [1.0, 0.0],
            [20.0, 20.0],
            [21.0, 20.0],
            [20.0, 22.0]
        ];
        let dup = concatenate![Axis(0), x, x];
        let a = kmeans(x.view(), 2, &mut Rng::new(1, 0), DEFAULT_MAX_ITER).unwrap();
        let b = kmeans(dup.view(), 2, &mut Rng::new(1, 0), DEFAULT_MAX_ITER).unwrap();
        let sorted = |m: &Array2<f64>| {
            let mut v: Vec<Vec<f64>> = m.rows().into_iter().map(|c| c.to_vec()).collect();
            v.sort_by(|a, b| a[0].total_cmp(&b[0]));
            v
        };
        for (ra, rb) in sorted(&a.centroids).iter().zip(sorted(&b.centroids).iter()) {
            for (p, q) in ra.iter().zip(rb) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn objective_nonincreasing_and_deterministic() {
        let mut rng = Rng::new(9, 0);
        let x = Array2::from_shape_fn((200, 5), |_| rng.normal());
        let a = kmeans(x.view(), 7, &mut Rng::new(3, 1), DEFAULT_MAX_ITER).unwrap();
        for w in a.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{:?}", w);
        }
        let b = kmeans(x.view(), 7, &mut Rng::new(3, 1), DEFAULT_MAX_ITER).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn too_many_clusters() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            kmeans(x.view(), 3, &mut Rng::new(0, 0), 10),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn empty_cluster_is_repaired() {
        // Duplicate points force an empty cluster after seeding collisions.
        let x = array![[0.0], [0.0], [0.0], [5.0]];
        let r = kmeans(x.view(), 3, &mut Rng::new(0, 0), DEFAULT_MAX_ITER).unwrap();
        let mut counts = [0; 3];
        for &a in &r.assignments {
            counts[a] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
        assert_eq!(r.objective(), 0.0);
    }
}
