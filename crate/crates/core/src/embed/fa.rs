//! Feature activation: tiles whose embeddings have a large mean and a
//! large spread score highest.

use rayon::prelude::*;

use crate::csem::EmbeddingMatrix;
use crate::label::sorted_ranking;
use crate::model::Ranking;

/// Floor of the (0, 1] scaling, keeping ln(sigma) finite.
pub const SCALE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaStats {
    pub mu: f64,
    /// Population standard deviation over the row's entries.
    pub sigma: f64,
    pub mu_scaled: f64,
    pub sigma_scaled: f64,
    pub gamma: f64,
}

/// gamma = -(1 - mu) ln(sigma) for scaled mu, sigma in (0, 1].
pub fn gamma(mu_scaled: f64, sigma_scaled: f64) -> f64 {
    -(1.0 - mu_scaled) * sigma_scaled.ln()
}

/// Min-max scaling into [eps, 1]; a constant column maps to 1.
fn scale_unit(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(values);
    if hi > lo {
        values
            .iter()
            .map(|x| SCALE_EPSILON + (1.0 - SCALE_EPSILON) * (x - lo) / (hi - lo))
            .collect()
    } else {
        vec![1.0; values.len()]
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
}

pub fn fa_stats(matrix: &EmbeddingMatrix) -> Vec<FaStats> {
    let raw: Vec<(f64, f64)> = (0..matrix.rows())
        .into_par_iter()
        .map(|i| {
            let row = matrix.row(i);
            let d = row.len() as f64;
            let mu = row.iter().map(|v| *v as f64).sum::<f64>() / d;
            let var = row.iter().map(|v| (*v as f64 - mu).powi(2)).sum::<f64>() / d;
            (mu, var.sqrt())
        })
        .collect();
    let mus: Vec<f64> = raw.iter().map(|r| r.0).collect();
    let sigmas: Vec<f64> = raw.iter().map(|r| r.1).collect();
    let mu_s = scale_unit(&mus);
    let sigma_s = scale_unit(&sigmas);
    raw.iter()
        .zip(mu_s.iter().zip(&sigma_s))
        .map(|((mu, sigma), (ms, ss))| FaStats {
            mu: *mu,
            sigma: *sigma,
            mu_scaled: *ms,
            sigma_scaled: *ss,
            gamma: gamma(*ms, *ss),
        })
        .collect()
}

/// Maps gammas to `1 - (g - min)/(max - min)`; all-equal gammas score 1.
pub fn scores_from_gamma(gammas: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(gammas);
    if hi > lo {
        gammas
            .iter()
            .map(|g| (1.0 - (g - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![1.0; gammas.len()]
    }
}

pub fn rank_fa(matrix: &EmbeddingMatrix) -> Ranking {
    let gammas: Vec<f64> = fa_stats(matrix).iter().map(|s| s.gamma).collect();
    let scores = scores_from_gamma(&gammas);
    sorted_ranking(
        "fa",
        scores
            .into_iter()
            .zip(matrix.ids().iter().map(String::as_str))
            .collect(),
    )
}
