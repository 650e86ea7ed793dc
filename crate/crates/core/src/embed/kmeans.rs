//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;
use rayon::prelude::*;

use crate::csem::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, STREAM_KMEANS};

pub const MAX_ITERATIONS: usize = 300;
pub const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub assignments: Vec<usize>,
    /// k x dim, row-major.
    pub centroids: Vec<f64>,
    pub dim: usize,
    pub inertia: f64,
    /// Inertia after each assignment step, in iteration order.
    pub inertia_history: Vec<f64>,
}

impl Clustering {
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, c) in self.assignments.iter().enumerate() {
            out[*c].push(i);
        }
        out
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn to_points(matrix: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    (0..matrix.rows())
        .map(|i| matrix.row(i).iter().map(|v| *v as f64).collect())
        .collect()
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.par_iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in d2.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total has a positive weight")
        } else {
            // every remaining point coincides with a center
            let free: Vec<usize> = (0..n).filter(|i| !chosen[*i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        let center = points[next].clone();
        d2.par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(d, p)| *d = d.min(sq_dist(p, &center)));
        centers.push(center);
    }
    centers
}

/// Nearest centroid per point (lowest index on ties) and the squared distance.
fn assign(points: &[Vec<f64>], centers: &[Vec<f64>]) -> Vec<(usize, f64)> {
    points
        .par_iter()
        .map(|p| {
            let mut best = (0, sq_dist(p, &centers[0]));
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = sq_dist(p, center);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect()
}

/// Moves points into empty clusters. Each empty cluster takes the point
/// farthest from its current centroid among clusters with two or more members.
fn fill_empty(labels: &mut [(usize, f64)], k: usize) {
    let mut sizes = vec![0usize; k];
    for (c, _) in labels.iter() {
        sizes[*c] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for (i, (c, d)) in labels.iter().enumerate() {
            if sizes[*c] >= 2 && donor.is_none_or(|j| *d > labels[j].1) {
                donor = Some(i);
            }
        }
        let i = donor.expect("k <= n leaves a cluster with two members");
        sizes[labels[i].0] -= 1;
        sizes[empty] += 1;
        labels[i] = (empty, 0.0);
    }
}

fn means(points: &[Vec<f64>], labels: &[(usize, f64)], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, (c, _)) in points.iter().zip(labels) {
        counts[*c] += 1;
        for (s, v) in sums[*c].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, n) in sums.iter_mut().zip(&counts) {
        let n = (*n).max(1) as f64;
        s.iter_mut().for_each(|v| *v /= n);
    }
    sums
}

/// Clusters the rows of `matrix` into `k` groups. Deterministic for a fixed seed
/// and independent of the worker thread count.
pub fn kmeans(matrix: &EmbeddingMatrix, k: usize, seed: u64) -> Result<Clustering> {
    let n = matrix.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    let dim = matrix.dim();
    let points = to_points(matrix);
    let mut rng = seeded_rng(seed, STREAM_KMEANS);
    let mut centers = plus_plus_init(&points, k, &mut rng);
    let mut history = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let mut labels = assign(&points, &centers);
        history.push(labels.iter().map(|(_, d)| d).sum());
        fill_empty(&mut labels, k);
        let updated = means(&points, &labels, k, dim);
        let shift = centers
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = updated;
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }

    let mut labels = assign(&points, &centers);
    fill_empty(&mut labels, k);
    let centers = means(&points, &labels, k, dim);
    let assignments: Vec<usize> = labels.iter().map(|(c, _)| *c).collect();
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, c)| sq_dist(p, &centers[*c]))
        .sum();
    Ok(Clustering {
        k,
        assignments,
        centroids: centers.concat(),
        dim,
        inertia,
        inertia_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn matrix(rows: &[Vec<f32>]) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("p{i:04}")).collect();
        EmbeddingMatrix::from_rows(ids, rows).unwrap()
    }

    fn blobs(seed: u64) -> (EmbeddingMatrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0f32, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (b, center) in [[0.0f32, 0.0], [10.0, 0.0]].iter().enumerate() {
            for _ in 0..40 {
                rows.push(vec![center[0] + 0.5 * noise.sample(&mut rng), center[1] + 0.5 * noise.sample(&mut rng)]);
                truth.push(b);
            }
        }
        (matrix(&rows), truth)
    }

    #[test]
    fn separates_two_blobs() {
        let (m, truth) = blobs(5);
        let c = kmeans(&m, 2, 17).unwrap();
        let flip = c.assignments[0] != truth[0];
        for (a, t) in c.assignments.iter().zip(&truth) {
            assert_eq!(*a, if flip { 1 - t } else { *t });
        }
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let rows: Vec<Vec<f32>> = (0..6).map(|i| vec![i as f32, (i * i) as f32]).collect();
        let c = kmeans(&matrix(&rows), 6, 1).unwrap();
        let mut seen = c.assignments.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
        assert_eq!(c.inertia, 0.0);
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let rows = vec![vec![1.0f32, 1.0]; 5];
        let c = kmeans(&matrix(&rows), 4, 9).unwrap();
        assert!(c.members().iter().all(|m| !m.is_empty()));
    }

    #[test]
    fn same_seed_same_result() {
        let (m, _) = blobs(8);
        assert_eq!(kmeans(&m, 3, 42).unwrap(), kmeans(&m, 3, 42).unwrap());
    }

    #[test]
    fn k_out_of_range() {
        let (m, _) = blobs(1);
        assert!(kmeans(&m, 81, 0).is_err());
        assert!(kmeans(&m, 0, 0).is_err());
    }

    #[test]
    fn inertia_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..10 {
            let rows: Vec<Vec<f32>> = (0..60)
                .map(|_| (0..3).map(|_| rng.random_range(0.0f32..1.0)).collect())
                .collect();
            let c = kmeans(&matrix(&rows), 5, trial).unwrap();
            for w in c.inertia_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", c.inertia_history);
            }
            assert!(c.inertia <= c.inertia_history.last().unwrap() * (1.0 + 1e-12));
        }
    }
}
