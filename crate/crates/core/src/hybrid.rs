//! Hybrid rankings built from other methods, and the two baselines:
//! uniform random order and greedy k-center.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::csem::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::label::sorted_ranking;
use crate::model::{ensure_same_ids, DatasetManifest, Ranking};
use crate::rng::{seeded_rng, STREAM_KCENTER, STREAM_RANDOM};

pub const DEFAULT_CUTOFF: usize = 770;
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Top `m` tiles of the diversity ranking, then the label-complexity ranking
/// with those tiles removed. Scores are reassigned linearly by position.
pub fn rank_lcfd(lc: &Ranking, fd: &Ranking, m: usize) -> Result<Ranking> {
    ensure_same_ids(lc, fd)?;
    if m > fd.len() {
        return Err(Error::InvalidParameter(format!(
            "cutoff {m} exceeds the {} ranked tiles",
            fd.len()
        )));
    }
    let head: Vec<String> = fd.ids().take(m).map(String::from).collect();
    let taken: HashSet<&str> = head.iter().map(String::as_str).collect();
    let tail: Vec<String> = lc
        .ids()
        .filter(|id| !taken.contains(id))
        .map(String::from)
        .collect();
    let mut r = Ranking::from_order("lcfd", [head, tail].concat()).with_param("m", m);
    r.seed = fd.seed;
    Ok(r)
}

/// Per-tile blend `lambda * s_fa + (1 - lambda) * s_cb`, highest first.
pub fn rank_facb(fa: &Ranking, cb: &Ranking, lambda: f64) -> Result<Ranking> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "lambda {lambda} outside [0, 1]"
        )));
    }
    ensure_same_ids(fa, cb)?;
    let cb_scores = cb.scores();
    let blended: Vec<(f64, &str)> = fa
        .entries
        .iter()
        .map(|e| {
            let s = lambda * e.score + (1.0 - lambda) * cb_scores[e.tile_id.as_str()];
            (s.clamp(0.0, 1.0), e.tile_id.as_str())
        })
        .collect();
    Ok(sorted_ranking("facb", blended).with_param("lambda", lambda))
}

/// Uniformly random order (Fisher-Yates over the id-sorted tiles).
pub fn rank_random(manifest: &DatasetManifest, seed: u64) -> Ranking {
    let mut ids: Vec<String> = manifest.tiles.iter().map(|t| t.tile_id.clone()).collect();
    ids.sort_unstable();
    ids.shuffle(&mut seeded_rng(seed, STREAM_RANDOM));
    Ranking::from_order("random", ids).with_seed(seed)
}

/// Greedy k-center order: a random first tile, then repeatedly the tile
/// whose nearest already-chosen tile is farthest away (Euclidean), ties to
/// the smaller id.
pub fn rank_kcenter(matrix: &EmbeddingMatrix, seed: u64) -> Result<Ranking> {
    let order = kcenter_order(matrix, seed)?;
    let ids = order.iter().map(|i| matrix.ids()[*i].clone()).collect();
    Ok(Ranking::from_order("kcenter", ids).with_seed(seed))
}

/// Row indices in k-center selection order.
pub fn kcenter_order(matrix: &EmbeddingMatrix, seed: u64) -> Result<Vec<usize>> {
    let n = matrix.rows();
    if n == 0 {
        return Err(Error::InvalidParameter("no embeddings to rank".into()));
    }
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| matrix.row(i).iter().map(|v| *v as f64).collect())
        .collect();
    let ids = matrix.ids();
    let first = seeded_rng(seed, STREAM_KCENTER).random_range(0..n);

    let mut chosen = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut order = Vec::with_capacity(n);
    let mut next = first;
    loop {
        chosen[next] = true;
        order.push(next);
        if order.len() == n {
            break;
        }
        let center = &points[next];
        nearest
            .par_iter_mut()
            .zip(points.par_iter())
            .zip(chosen.par_iter())
            .filter(|(_, c)| !**c)
            .for_each(|((d, p), _)| {
                let dist: f64 = p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < *d {
                    *d = dist;
                }
            });
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|i| !chosen[*i]) {
            best = match best {
                None => Some(i),
                Some(b) if nearest[i] > nearest[b] => Some(i),
                Some(b) if nearest[i] == nearest[b] && ids[i] < ids[b] => Some(i),
                keep => keep,
            };
        }
        next = best.expect("unchosen points remain");
    }
    Ok(order)
}
