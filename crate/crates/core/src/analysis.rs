//! Cross-method analysis: budgeted subsets, Kendall tau-b agreement between
//! rankings, and per-tile average rank profiles.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ensure_same_ids, Ranking};
use crate::ranking_io::format_f64;

/// Number of tiles kept by a budget: ceil(budget * n), at least one.
///
/// Products within 1e-9 of an integer count as that integer, so binary
/// round-off such as 0.07 * 100 = 7.000000000000001 does not add a tile.
pub fn budget_count(n: usize, budget: f64) -> Result<usize> {
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "budget {budget} outside (0, 1]"
        )));
    }
    let x = budget * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * x.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    Ok((k as usize).clamp(n.min(1), n))
}

/// Ids of the top `ceil(budget * N)` entries, in rank order.
pub fn export_subset(ranking: &Ranking, budget: f64) -> Result<Vec<String>> {
    let k = budget_count(ranking.len(), budget)?;
    Ok(ranking.ids().take(k).map(String::from).collect())
}

/// Rank key per tile in which tiles with equal scores share the position of
/// the first member of their group.
fn tied_positions(r: &Ranking) -> HashMap<&str, usize> {
    let mut out = HashMap::with_capacity(r.len());
    let mut group_start = 0;
    for (i, e) in r.entries.iter().enumerate() {
        if i > 0 && e.score != r.entries[i - 1].score {
            group_start = i;
        }
        out.insert(e.tile_id.as_str(), group_start);
    }
    out
}

fn tie_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for i in 1..=sorted.len() {
        if i < sorted.len() && sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total
}

/// Bottom-up merge sort counting pairs i < j with v[i] > v[j].
fn count_inversions(v: &mut Vec<usize>) -> u64 {
    let n = v.len();
    let mut buf = vec![0usize; n];
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if v[i] <= v[j] {
                    buf[k] = v[i];
                    i += 1;
                } else {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                }
                k += 1;
            }
            buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + hi - j].copy_from_slice(&v[j..hi]);
            lo = hi;
        }
        std::mem::swap(v, &mut buf);
        width *= 2;
    }
    swaps
}

/// Kendall tau-b between two rankings of the same tiles, with equal scores
/// treated as ties. O(N log N). Returns 0 when either ranking is a single
/// tie group, where tau-b is undefined.
pub fn kendall_tau(a: &Ranking, b: &Ranking) -> Result<f64> {
    ensure_same_ids(a, b)?;
    let ka = tied_positions(a);
    let kb = tied_positions(b);
    let mut pairs: Vec<(usize, usize)> = a.ids().map(|id| (ka[id], kb[id])).collect();
    pairs.sort_unstable();
    let n = pairs.len() as u64;
    let n0 = n * n.saturating_sub(1) / 2;
    let xs: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let n1 = tie_pairs(&xs);
    let n3 = tie_pairs(&pairs);
    let mut ys: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let swaps = count_inversions(&mut ys);
    let n2 = tie_pairs(&ys);
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    let s = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    Ok((s as f64 / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub methods: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for m in &self.methods {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for (m, row) in self.methods.iter().zip(&self.values) {
            out.push_str(m);
            for v in row {
                out.push(',');
                out.push_str(&format_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise tau-b; symmetric with a unit diagonal.
pub fn correlation_matrix(rankings: &[Ranking]) -> Result<CorrelationMatrix> {
    let n = rankings.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "correlation needs at least two rankings".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let taus: Vec<f64> = pairs
        .par_iter()
        .map(|(i, j)| kendall_tau(&rankings[*i], &rankings[*j]))
        .collect::<Result<_>>()?;
    let mut values = vec![vec![1.0; n]; n];
    for ((i, j), t) in pairs.into_iter().zip(taus) {
        values[i][j] = t;
        values[j][i] = t;
    }
    Ok(CorrelationMatrix {
        methods: rankings.iter().map(|r| r.method.clone()).collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEntry {
    pub tile_id: String,
    pub mean: f64,
    pub std: f64,
}

/// Per-tile mean and population std of 1-based rank positions, best mean first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankProfile {
    pub entries: Vec<ProfileEntry>,
}

impl RankProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tile_id,mean_rank,std_rank\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.tile_id, format_f64(e.mean), format_f64(e.std)));
        }
        out
    }
}

pub fn rank_profile(rankings: &[Ranking]) -> Result<RankProfile> {
    let first = rankings
        .first()
        .ok_or_else(|| Error::InvalidParameter("rank profile needs a ranking".into()))?;
    for r in &rankings[1..] {
        ensure_same_ids(first, r)?;
    }
    let positions: Vec<HashMap<&str, usize>> = rankings.iter().map(Ranking::positions).collect();
    let m = rankings.len() as f64;
    let mut entries: Vec<ProfileEntry> = first
        .ids()
        .map(|id| {
            let ranks: Vec<f64> = positions.iter().map(|p| (p[id] + 1) as f64).collect();
            let mean = ranks.iter().sum::<f64>() / m;
            let var = ranks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / m;
            ProfileEntry {
                tile_id: id.to_string(),
                mean,
                std: var.sqrt(),
            }
        })
        .collect();
    entries.sort_by(|a, b| a.mean.total_cmp(&b.mean).then_with(|| a.tile_id.cmp(&b.tile_id)));
    Ok(RankProfile { entries })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extremes {
    /// k best mean ranks, best first.
    pub top: Vec<ProfileEntry>,
    /// k worst mean ranks, in profile order (worst last).
    pub bottom: Vec<ProfileEntry>,
}

impl Extremes {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,position,tile_id,mean_rank,std_rank\n");
        for (kind, list) in [("top", &self.top), ("bottom", &self.bottom)] {
            for (i, e) in list.iter().enumerate() {
                out.push_str(&format!(
                    "{kind},{},{},{},{}\n",
                    i + 1,
                    e.tile_id,
                    format_f64(e.mean),
                    format_f64(e.std)
                ));
            }
        }
        out
    }
}

/// Tiles with the `k` smallest and `k` largest mean ranks; `k` is capped at N.
pub fn extremes_report(rankings: &[Ranking], k: usize) -> Result<Extremes> {
    let profile = rank_profile(rankings)?;
    let n = profile.entries.len();
    let k = k.min(n);
    Ok(Extremes {
        top: profile.entries[..k].to_vec(),
        bottom: profile.entries[n - k..].to_vec(),
    })
}

/// Writes `tau_matrix.csv`, `rank_profile.csv` and `extremes.csv` into `dir`.
pub fn write_report(rankings: &[Ranking], extremes_k: usize, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    if rankings.len() >= 2 {
        write("tau_matrix.csv", correlation_matrix(rankings)?.to_csv())?;
    }
    write("rank_profile.csv", rank_profile(rankings)?.to_csv())?;
    write("extremes.csv", extremes_report(rankings, extremes_k)?.to_csv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RankEntry;

    fn ranking(method: &str, ids: &[&str]) -> Ranking {
        Ranking::from_order(method, ids.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn budget_rounding() {
        assert_eq!(budget_count(1000, 0.25).unwrap(), 250);
        assert_eq!(budget_count(7, 0.5).unwrap(), 4);
        assert_eq!(budget_count(100, 0.07).unwrap(), 7);
        assert_eq!(budget_count(10, 0.01).unwrap(), 1);
        assert_eq!(budget_count(9, 1.0).unwrap(), 9);
        assert!(budget_count(9, 0.0).is_err());
        assert!(budget_count(9, 1.01).is_err());
        assert!(budget_count(9, f64::NAN).is_err());
    }

    #[test]
    fn export_full_and_quarter() {
        let ids: Vec<String> = (0..1000).map(|i| format!("t{i:04}")).collect();
        let r = Ranking::from_order("x", ids.clone());
        assert_eq!(export_subset(&r, 1.0).unwrap(), ids);
        assert_eq!(export_subset(&r, 0.25).unwrap(), ids[..250].to_vec());
    }

    #[test]
    fn tau_identity_and_reversal() {
        let a = ranking("a", &["p", "q", "r", "s"]);
        let b = ranking("b", &["s", "r", "q", "p"]);
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &b).unwrap(), -1.0);
    }

    #[test]
    fn tau_with_ties() {
        // a ties q and r; b orders p<q<r<s. 6 pairs: 5 concordant, 1 tied in a.
        let a = Ranking::new(
            "a",
            [("p", 1.0), ("q", 0.5), ("r", 0.5), ("s", 0.0)]
                .iter()
                .map(|(id, s)| RankEntry { tile_id: id.to_string(), score: *s })
                .collect(),
        );
        let b = ranking("b", &["p", "q", "r", "s"]);
        let expect = 5.0 / (5.0f64 * 6.0).sqrt();
        assert!((kendall_tau(&a, &b).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn inversions_counted() {
        let mut v = vec![3, 1, 2, 0];
        assert_eq!(count_inversions(&mut v), 5);
        assert_eq!(v, vec![0, 1, 2, 3]);
    }

    #[test]
    fn correlation_of_reversed_pair() {
        let a = ranking("a", &["x", "y", "z"]);
        let b = ranking("b", &["z", "y", "x"]);
        let m = correlation_matrix(&[a.clone(), b]).unwrap();
        assert_eq!(m.values, vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let same = correlation_matrix(&[a.clone(), a]).unwrap();
        assert_eq!(same.values, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn profile_hand_computed() {
        // positions per tile over three rankings:
        // a: 1,2,1 -> mean 4/3; b: 2,1,3 -> 2; c: 3,4,2 -> 3; d: 4,3,4 -> 11/3
        let rs = [
            ranking("r1", &["a", "b", "c", "d"]),
            ranking("r2", &["b", "a", "d", "c"]),
            ranking("r3", &["a", "c", "b", "d"]),
        ];
        let p = rank_profile(&rs).unwrap();
        let ids: Vec<_> = p.entries.iter().map(|e| e.tile_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c", "d"]);
        let expect = [
            (4.0 / 3.0, (2.0f64 / 9.0).sqrt()),
            (2.0, (2.0f64 / 3.0).sqrt()),
            (3.0, (2.0f64 / 3.0).sqrt()),
            (11.0 / 3.0, (2.0f64 / 9.0).sqrt()),
        ];
        for (e, (m, s)) in p.entries.iter().zip(expect) {
            assert!((e.mean - m).abs() < 1e-12 && (e.std - s).abs() < 1e-12, "{e:?}");
        }
        let ex = extremes_report(&rs, 3).unwrap();
        let top: Vec<_> = ex.top.iter().map(|e| e.tile_id.as_str()).collect();
        let bottom: Vec<_> = ex.bottom.iter().map(|e| e.tile_id.as_str()).collect();
        assert_eq!(top, vec!["a", "b", "c"]);
        assert_eq!(bottom, vec!["b", "c", "d"]);
    }

    #[test]
    fn profile_of_opposites_is_flat() {
        let a = ranking("a", &["w", "x", "y", "z", "v"]);
        let b = ranking("b", &["v", "z", "y", "x", "w"]);
        let p = rank_profile(&[a.clone(), b]).unwrap();
        assert!(p.entries.iter().all(|e| e.mean == 3.0));
        let single = rank_profile(std::slice::from_ref(&a)).unwrap();
        assert!(single.entries.iter().enumerate().all(|(i, e)| e.mean == (i + 1) as f64 && e.std == 0.0));
        let ex = extremes_report(&[a], 1).unwrap();
        assert_eq!((ex.top[0].tile_id.as_str(), ex.bottom[0].tile_id.as_str()), ("w", "v"));
    }

    #[test]
    fn mismatched_ids_rejected() {
        let a = ranking("a", &["x", "y"]);
        let b = ranking("b", &["x", "z"]);
        assert!(kendall_tau(&a, &b).is_err());
        assert!(rank_profile(&[a, b]).is_err());
    }
}
