//! Vendi score: the exponential of the Shannon entropy of the eigenvalues
//! of the cosine-similarity kernel scaled by 1/n. It ranges from 1 (all rows
//! parallel) to n (all rows orthogonal).

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues;

const NORM_FLOOR: f64 = 1e-12;

fn normalized(rows: &[&[f32]]) -> Result<(Vec<Vec<f64>>, usize)> {
    let dim = rows.first().map_or(0, |r| r.len());
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::InvalidParameter("rows of differing length".into()));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: j });
        }
        let v: Vec<f64> = row.iter().map(|x| *x as f64).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
        out.push(v.into_iter().map(|x| x / norm).collect());
    }
    Ok((out, dim))
}

/// Eigenvalues of K/n, computed from whichever of the n x n kernel or the
/// D x D Gram matrix is smaller; both share the same nonzero spectrum.
pub fn kernel_spectrum(rows: &[&[f32]]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("Vendi score of an empty set".into()));
    }
    let (x, dim) = normalized(rows)?;
    let n = x.len();
    let scale = 1.0 / n as f64;
    let (mut m, size) = if n <= dim {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&x[i], &x[j]) * scale;
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        (k, n)
    } else {
        let mut g = vec![0.0; dim * dim];
        for row in &x {
            for a in 0..dim {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..=a {
                    g[a * dim + b] += ra * row[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..=a {
                let v = g[a * dim + b] * scale;
                g[a * dim + b] = v;
                g[b * dim + a] = v;
            }
        }
        (g, dim)
    };
    Ok(symmetric_eigenvalues(&mut m, size))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// exp of the entropy of a spectrum, with 0 ln 0 = 0. Round-off negatives count as zero.
pub fn vendi_from_spectrum(eigenvalues: &[f64]) -> f64 {
    let h: f64 = eigenvalues
        .iter()
        .filter(|l| **l > 0.0)
        .map(|l| -l * l.ln())
        .sum();
    h.exp()
}

pub fn vendi_score(rows: &[&[f32]]) -> Result<f64> {
    Ok(vendi_from_spectrum(&kernel_spectrum(rows)?))
}
