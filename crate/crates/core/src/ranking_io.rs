//! Ranking CSV files: a `# params:` comment line, then `rank,tile_id,score`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{RankEntry, Ranking};

const HEADER: &str = "rank,tile_id,score";
const PARAMS_PREFIX: &str = "# params:";

/// Formats a float with 17 significant digits so parsing it back is lossless.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        return "0.0000000000000000".to_string();
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .expect("exponent present");
    if (-5..17).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, x)
    } else {
        sci
    }
}

impl Ranking {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(PARAMS_PREFIX);
        out.push_str(&format!(" method={}", self.method));
        if let Some(seed) = self.seed {
            out.push_str(&format!(" seed={seed}"));
        }
        for (k, v) in &self.params {
            out.push_str(&format!(" {k}={v}"));
        }
        out.push('\n');
        out.push_str(HEADER);
        out.push('\n');
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, e.tile_id, format_f64(e.score)));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::RankingFormat(msg);
        let mut method = None;
        let mut seed = None;
        let mut params = BTreeMap::new();
        let mut entries = Vec::new();
        let mut saw_header = false;

        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if let Some(rest) = line.strip_prefix(PARAMS_PREFIX) {
                for tok in rest.split_whitespace() {
                    let (k, v) = tok
                        .split_once('=')
                        .ok_or_else(|| bad(format!("line {lineno}: bad parameter {tok:?}")))?;
                    match k {
                        "method" => method = Some(v.to_string()),
                        "seed" => {
                            seed = Some(v.parse::<u64>().map_err(|_| {
                                bad(format!("line {lineno}: bad seed {v:?}"))
                            })?)
                        }
                        _ => {
                            params.insert(k.to_string(), v.to_string());
                        }
                    }
                }
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !saw_header {
                if line.trim_end_matches('\r') != HEADER {
                    return Err(bad(format!("line {lineno}: expected header {HEADER:?}")));
                }
                saw_header = true;
                continue;
            }
            let mut cols = line.trim_end_matches('\r').split(',');
            let (rank, id, score) = match (cols.next(), cols.next(), cols.next(), cols.next()) {
                (Some(r), Some(id), Some(s), None) => (r, id, s),
                _ => return Err(bad(format!("line {lineno}: expected 3 columns"))),
            };
            let rank: usize = rank
                .parse()
                .map_err(|_| bad(format!("line {lineno}: bad rank {rank:?}")))?;
            if rank != entries.len() + 1 {
                return Err(bad(format!(
                    "line {lineno}: rank {rank} out of sequence, expected {}",
                    entries.len() + 1
                )));
            }
            let score: f64 = score
                .parse()
                .map_err(|_| bad(format!("line {lineno}: bad score {score:?}")))?;
            entries.push(RankEntry {
                tile_id: id.to_string(),
                score,
            });
        }
        if !saw_header {
            return Err(bad("missing header".into()));
        }
        let ranking = Ranking {
            method: method.unwrap_or_default(),
            entries,
            seed,
            params,
        };
        if let Some(problem) = ranking.check() {
            return Err(bad(problem));
        }
        Ok(ranking)
    }

    /// Reads a ranking file. A missing method tag falls back to the file stem.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut r = Self::from_csv(&text)?;
        if r.method.is_empty() {
            r.method = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(r)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn score_formatting() {
        assert_eq!(format_f64(1.0), "1.0000000000000000");
        assert_eq!(format_f64(0.0), "0.0000000000000000");
        assert_eq!(format_f64(0.5), "0.50000000000000000");
        assert_eq!(format_f64(2f64.ln() / 12f64.ln()), "0.27894294565112981");
        assert_eq!(format_f64(1e-20), "9.9999999999999995e-21");
    }

    #[test]
    fn csv_layout() {
        let r = Ranking::from_order("fd", vec!["a".into(), "b".into(), "c".into()])
            .with_seed(7)
            .with_param("k", 3);
        assert_eq!(
            r.to_csv(),
            "# params: method=fd seed=7 k=3\nrank,tile_id,score\n\
             1,a,1.0000000000000000\n2,b,0.50000000000000000\n3,c,0.0000000000000000\n"
        );
        assert_eq!(Ranking::from_csv(&r.to_csv()).unwrap(), r);
    }

    #[test]
    fn rejects_malformed() {
        assert!(Ranking::from_csv("1,a,0.5\n").is_err());
        assert!(Ranking::from_csv("rank,tile_id,score\n2,a,0.5\n").is_err());
        assert!(Ranking::from_csv("rank,tile_id,score\n1,a,0.2\n2,b,0.5\n").is_err());
        assert!(Ranking::from_csv("rank,tile_id,score\n1,a,x\n").is_err());
    }

    proptest! {
        #[test]
        fn score_text_is_lossless(x in 0.0f64..=1.0) {
            let s = format_f64(x);
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }

        #[test]
        fn tiny_scores_lossless(x in 1e-300f64..1e-5) {
            prop_assert_eq!(format_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
