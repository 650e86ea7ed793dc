//! Label-only scorers: per-tile label complexity (class entropy) and the
//! greedy class-balance ordering.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::model::{ClassHistogram, ClassSchema, DatasetManifest, RankEntry, Ranking};

/// Classes that take part in entropy computations; the logarithm base is their count.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyContext {
    valid_classes: Vec<usize>,
    ln_base: f64,
}

impl EntropyContext {
    pub fn new(schema: &ClassSchema) -> Self {
        let valid_classes = schema.valid_classes();
        assert!(valid_classes.len() >= 2, "schema needs two scorable classes");
        let ln_base = (valid_classes.len() as f64).ln();
        EntropyContext {
            valid_classes,
            ln_base,
        }
    }

    pub fn valid_classes(&self) -> &[usize] {
        &self.valid_classes
    }

    pub fn base(&self) -> usize {
        self.valid_classes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropy {
    /// Normalized entropy in [0, 1].
    pub value: f64,
    /// No pixels fall in a scorable class.
    pub degenerate: bool,
}

/// Normalized Shannon entropy of the scorable class proportions.
pub fn entropy_of_counts(h: &ClassHistogram, ctx: &EntropyContext) -> Entropy {
    let mut buf = Vec::with_capacity(ctx.valid_classes.len());
    buf.extend(ctx.valid_classes.iter().map(|c| h.0[*c]));
    entropy_of_valid(&mut buf, ctx.ln_base)
}

// Terms are summed in sorted count order so permuted histograms give
// bit-identical results.
fn entropy_of_valid(counts: &mut [u64], ln_base: f64) -> Entropy {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Entropy {
            value: 0.0,
            degenerate: true,
        };
    }
    counts.sort_unstable();
    let t = total as f64;
    let s: f64 = counts
        .iter()
        .filter(|n| **n > 0)
        .map(|n| {
            let n = *n as f64;
            n * n.ln()
        })
        .sum();
    let value = ((t.ln() - s / t) / ln_base).clamp(0.0, 1.0);
    Entropy {
        value,
        degenerate: false,
    }
}

/// Descending score, ascending id.
pub(crate) fn by_score_then_id(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

pub(crate) fn sorted_ranking(method: &str, scored: Vec<(f64, &str)>) -> Ranking {
    let mut scored = scored;
    scored.sort_by(by_score_then_id);
    Ranking::new(
        method,
        scored
            .into_iter()
            .map(|(score, id)| RankEntry {
                tile_id: id.to_string(),
                score,
            })
            .collect(),
    )
}

/// Label complexity: tiles ordered by class entropy, highest first.
pub fn rank_lc(manifest: &DatasetManifest) -> Ranking {
    let ctx = EntropyContext::new(&manifest.schema);
    let scored: Vec<(f64, &str)> = manifest
        .tiles
        .par_iter()
        .map(|t| (entropy_of_counts(&t.histogram, &ctx).value, t.tile_id.as_str()))
        .collect();
    sorted_ranking("lc", scored)
}

/// Class balance: greedily appends the tile whose histogram, added to the
/// running total of the tiles chosen so far, gives the highest entropy.
/// The tile picked at step r (1-based) of N scores `1 - r/N`. Tiles without
/// scorable pixels go last, in id order.
pub fn rank_cb(manifest: &DatasetManifest) -> Ranking {
    let ctx = EntropyContext::new(&manifest.schema);
    let n = manifest.len();
    let project = |h: &ClassHistogram| -> Vec<u64> {
        ctx.valid_classes.iter().map(|c| h.0[*c]).collect()
    };

    let mut pool: Vec<(&str, Vec<u64>)> = Vec::with_capacity(n);
    let mut degenerate: Vec<&str> = Vec::new();
    for t in &manifest.tiles {
        let counts = project(&t.histogram);
        if counts.iter().all(|c| *c == 0) {
            degenerate.push(&t.tile_id);
        } else {
            pool.push((&t.tile_id, counts));
        }
    }
    pool.sort_by(|a, b| a.0.cmp(b.0));
    degenerate.sort_unstable();

    let mut acc = vec![0u64; ctx.valid_classes.len()];
    let mut order: Vec<&str> = Vec::with_capacity(n);
    while !pool.is_empty() {
        let gains: Vec<f64> = pool
            .par_iter()
            .map_init(
                || Vec::with_capacity(acc.len()),
                |buf, (_, counts)| {
                    buf.clear();
                    buf.extend(acc.iter().zip(counts).map(|(a, c)| a + c));
                    entropy_of_valid(buf, ctx.ln_base).value
                },
            )
            .collect();
        // pool is id-sorted, so the first maximum is the tie-break winner
        let mut best = 0;
        for (i, g) in gains.iter().enumerate().skip(1) {
            if *g > gains[best] {
                best = i;
            }
        }
        let (id, counts) = pool.remove(best);
        for (a, c) in acc.iter_mut().zip(&counts) {
            *a += c;
        }
        order.push(id);
    }
    order.extend(degenerate);

    let entries = order
        .into_iter()
        .enumerate()
        .map(|(i, id)| RankEntry {
            tile_id: id.to_string(),
            score: 1.0 - (i + 1) as f64 / n as f64,
        })
        .collect();
    Ranking::new("cb", entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TileRecord;
    use proptest::prelude::*;

    fn ctx(c: usize, ignore: &[usize]) -> EntropyContext {
        EntropyContext::new(&ClassSchema::new(c, ignore.iter().copied()).unwrap())
    }

    fn manifest(c: usize, ignore: &[usize], hists: &[Vec<u64>]) -> DatasetManifest {
        let tiles = hists
            .iter()
            .enumerate()
            .map(|(i, h)| TileRecord {
                tile_id: format!("t{i:03}"),
                source: String::new(),
                histogram: ClassHistogram(h.clone()),
                embedding_row: None,
                degenerate: false,
            })
            .collect();
        DatasetManifest::new(ClassSchema::new(c, ignore.iter().copied()).unwrap(), 256, tiles)
    }

    #[test]
    fn single_class_is_zero() {
        let e = entropy_of_counts(&ClassHistogram(vec![0, 0, 0, 65536, 0, 0]), &ctx(6, &[]));
        assert_eq!(e.value, 0.0);
        assert!(!e.degenerate);
    }

    #[test]
    fn uniform_is_one() {
        let e = entropy_of_counts(&ClassHistogram(vec![7; 12]), &ctx(12, &[]));
        assert!((e.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_of_twelve_classes() {
        let mut h = vec![0; 12];
        h[2] = 100;
        h[9] = 100;
        let e = entropy_of_counts(&ClassHistogram(h), &ctx(12, &[]));
        assert!((e.value - 0.278_942_945_651_129_8).abs() < 1e-12);
    }

    #[test]
    fn ignored_classes_are_excluded() {
        // class 0 ignored: the remaining two classes are split evenly, base 2
        let e = entropy_of_counts(&ClassHistogram(vec![1000, 5, 5]), &ctx(3, &[0]));
        assert!((e.value - 1.0).abs() < 1e-12);
        let d = entropy_of_counts(&ClassHistogram(vec![1000, 0, 0]), &ctx(3, &[0]));
        assert_eq!(d, Entropy { value: 0.0, degenerate: true });
    }

    #[test]
    fn lc_sorts_by_entropy() {
        // entropies (base 2): t000 ~0.47, t001 = 0, t002 = 1
        let m = manifest(2, &[], &[vec![9, 1], vec![5, 0], vec![4, 4]]);
        let r = rank_lc(&m);
        assert_eq!(r.ids().collect::<Vec<_>>(), vec!["t002", "t000", "t001"]);
        assert!(r.check().is_none());
    }

    #[test]
    fn lc_ties_break_by_id() {
        let m = manifest(3, &[], &vec![vec![1, 2, 3]; 5]);
        let r = rank_lc(&m);
        assert_eq!(r.ids().collect::<Vec<_>>(), vec!["t000", "t001", "t002", "t003", "t004"]);
    }

    #[test]
    fn cb_first_pick_is_max_individual_entropy_and_last_scores_zero() {
        let m = manifest(3, &[], &[vec![10, 0, 0], vec![3, 3, 3], vec![5, 5, 0], vec![0, 0, 4]]);
        let r = rank_cb(&m);
        assert_eq!(r.entries[0].tile_id, "t001");
        assert_eq!(r.entries[3].score, 0.0);
        assert_eq!(r.entries[0].score, 0.75);
    }

    #[test]
    fn cb_complements_the_accumulated_distribution() {
        // after the balanced first pick, the pure class-2 tile balances class 2
        // better than more of classes 0/1
        let m = manifest(3, &[], &[vec![6, 6, 0], vec![0, 0, 12], vec![6, 6, 1]]);
        let order: Vec<_> = rank_cb(&m).ids().map(String::from).collect();
        assert_eq!(order, vec!["t002", "t001", "t000"]);
    }

    #[test]
    fn cb_degenerate_tiles_go_last() {
        let m = manifest(3, &[0], &[vec![9, 0, 0], vec![0, 1, 2], vec![4, 0, 0], vec![0, 3, 0]]);
        let r = rank_cb(&m);
        assert_eq!(r.ids().collect::<Vec<_>>(), vec!["t001", "t003", "t000", "t002"]);
        let lc = rank_lc(&m);
        assert_eq!(lc.entries[2].score, 0.0);
    }

    proptest! {
        #[test]
        fn scale_invariant(counts in proptest::collection::vec(0u64..1000, 5), k in 1u64..50) {
            let c = ctx(5, &[]);
            let a = entropy_of_counts(&ClassHistogram(counts.clone()), &c).value;
            let b = entropy_of_counts(&ClassHistogram(counts.iter().map(|x| x * k).collect()), &c).value;
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn lc_permutation_invariant(
            hists in proptest::collection::vec(proptest::collection::vec(0u64..20, 4), 1..20),
            rot in 0usize..20,
        ) {
            let m = manifest(4, &[], &hists);
            let mut shuffled = m.clone();
            let len = shuffled.tiles.len();
            shuffled.tiles.rotate_left(rot % len);
            prop_assert_eq!(rank_lc(&m), rank_lc(&shuffled));
        }

        #[test]
        fn cb_scores_are_arithmetic(
            hists in proptest::collection::vec(proptest::collection::vec(0u64..20, 4), 1..15),
        ) {
            let m = manifest(4, &[], &hists);
            let r = rank_cb(&m);
            let n = hists.len();
            for (i, e) in r.entries.iter().enumerate() {
                prop_assert_eq!(e.score, 1.0 - (i + 1) as f64 / n as f64);
            }
            prop_assert!(r.check().is_none());
        }
    }
}
