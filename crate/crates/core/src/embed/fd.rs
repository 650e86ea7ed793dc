//! Feature-space diversity: cluster the embeddings with k-means, pick K
//! where the mean within-cluster Vendi score stops changing, then order tiles
//! by drawing one at random from each cluster in turn.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::csem::EmbeddingMatrix;
use crate::embed::kmeans::{kmeans, Clustering};
use crate::embed::vendi::vendi_score;
use crate::error::{Error, Result};
use crate::model::Ranking;
use crate::rng::{seeded_rng, STREAM_ROUND_ROBIN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdParams {
    /// Relative change in mean Vendi score treated as a plateau.
    pub delta: f64,
    /// Consecutive sub-threshold changes required to stop.
    pub patience: usize,
    pub k_max: usize,
}

impl Default for FdParams {
    fn default() -> Self {
        FdParams {
            delta: 0.005,
            patience: 3,
            k_max: 256,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KSelection {
    pub k: usize,
    pub clustering: Clustering,
    /// (K, mean within-cluster Vendi score) for every K evaluated.
    pub curve: Vec<(usize, f64)>,
}

/// Mean Vendi score over the clusters of `clustering`.
pub fn mean_cluster_vendi(matrix: &EmbeddingMatrix, clustering: &Clustering) -> Result<f64> {
    let scores: Vec<f64> = clustering
        .members()
        .par_iter()
        .map(|members| {
            let rows: Vec<&[f32]> = members.iter().map(|i| matrix.row(*i)).collect();
            vendi_score(&rows)
        })
        .collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Searches K upward from 2 until the relative change of the mean Vendi
/// score stays below `delta` for `patience` consecutive steps, returning the
/// K where that run began. If the search reaches min(N, k_max) first, an
/// unfinished run still yields its starting K; otherwise the last K is used.
pub fn select_k(matrix: &EmbeddingMatrix, seed: u64, params: FdParams) -> Result<KSelection> {
    if params.patience == 0 || params.delta.is_nan() || params.delta <= 0.0 {
        return Err(Error::InvalidParameter(
            "patience must be positive and delta must be > 0".into(),
        ));
    }
    let k_hi = matrix.rows().min(params.k_max);
    if k_hi < 2 {
        return Err(Error::InvalidParameter(format!(
            "K search needs at least 2 points and k_max >= 2 (N = {}, k_max = {})",
            matrix.rows(),
            params.k_max
        )));
    }

    let mut prev = kmeans(matrix, 2, seed)?;
    let mut prev_v = mean_cluster_vendi(matrix, &prev)?;
    let mut curve = vec![(2, prev_v)];
    let mut window: Option<Clustering> = None;
    let mut streak = 0;

    for k in 3..=k_hi {
        let current = kmeans(matrix, k, seed)?;
        let v = mean_cluster_vendi(matrix, &current)?;
        curve.push((k, v));
        if (v - prev_v).abs() / prev_v < params.delta {
            if streak == 0 {
                window = Some(prev);
            }
            streak += 1;
            if streak >= params.patience {
                let clustering = window.expect("window set when streak starts");
                return Ok(KSelection {
                    k: clustering.k,
                    clustering,
                    curve,
                });
            }
        } else {
            streak = 0;
            window = None;
        }
        prev = current;
        prev_v = v;
    }
    let clustering = window.unwrap_or(prev);
    Ok(KSelection {
        k: clustering.k,
        clustering,
        curve,
    })
}

/// Round-robin draw: clusters visited in `cluster_order`, each yielding a
/// uniformly random not-yet-drawn member, skipping exhausted clusters.
pub(crate) fn round_robin(
    assignments: &[usize],
    k: usize,
    rng: &mut impl rand::Rng,
) -> Vec<usize> {
    let mut members = vec![Vec::new(); k];
    for (i, c) in assignments.iter().enumerate() {
        members[*c].push(i);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    for m in &mut members {
        m.shuffle(rng);
    }
    let mut cursors = vec![0usize; k];
    let mut out = Vec::with_capacity(assignments.len());
    while out.len() < assignments.len() {
        for &c in &order {
            if let Some(i) = members[c].get(cursors[c]) {
                out.push(*i);
                cursors[c] += 1;
            }
        }
    }
    out
}

/// FD ranking plus the clustering that produced it.
#[derive(Debug, Clone)]
pub struct FdResult {
    pub ranking: Ranking,
    pub k: usize,
    pub assignments: Vec<usize>,
    pub curve: Vec<(usize, f64)>,
}

/// Diversity ranking; scores fall linearly from 1 (first) to 0 (last).
/// With fewer than four tiles the K search is skipped and every tile is its
/// own cluster.
pub fn rank_fd_detailed(matrix: &EmbeddingMatrix, seed: u64, params: FdParams) -> Result<FdResult> {
    let n = matrix.rows();
    if n == 0 {
        return Err(Error::InvalidParameter("no embeddings to rank".into()));
    }
    let (k, assignments, curve) = if n < 4 {
        (n, (0..n).collect(), Vec::new())
    } else {
        let sel = select_k(matrix, seed, params)?;
        (sel.k, sel.clustering.assignments, sel.curve)
    };
    let mut rng = seeded_rng(seed, STREAM_ROUND_ROBIN);
    let order = round_robin(&assignments, k, &mut rng);
    let ids = order.iter().map(|i| matrix.ids()[*i].clone()).collect();
    let ranking = Ranking::from_order("fd", ids)
        .with_seed(seed)
        .with_param("delta", params.delta)
        .with_param("patience", params.patience)
        .with_param("k_max", params.k_max)
        .with_param("k", k);
    Ok(FdResult {
        ranking,
        k,
        assignments,
        curve,
    })
}

pub fn rank_fd(matrix: &EmbeddingMatrix, seed: u64, params: FdParams) -> Result<Ranking> {
    rank_fd_detailed(matrix, seed, params).map(|r| r.ranking)
}
