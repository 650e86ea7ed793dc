//! Per-tile embedding matrix and its binary file format.
//!
//! Layout (little-endian): magic `CSEM`, `u16` version (1), `u32` rows,
//! `u32` columns, rows*columns `f32` values row-major, then one
//! newline-terminated UTF-8 tile id per row. Nothing may follow the ids.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::DatasetManifest;

pub const MAGIC: [u8; 4] = *b"CSEM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    data: Vec<f32>,
    dim: usize,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form {} rows of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        if let Some(bad) = ids.iter().find(|id| id.is_empty() || id.contains('\n')) {
            return Err(Error::InvalidParameter(format!("invalid tile id {bad:?}")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: i / dim,
                col: i % dim,
            });
        }
        Ok(EmbeddingMatrix { ids, data, dim })
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter("ragged embedding rows".into()));
        }
        Self::new(ids, rows.concat(), dim)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Reorders rows to follow the manifest's tile order.
    ///
    /// Tiles with an `embedding_row` use that row (its id must agree); others
    /// are matched by id. The two id sets must coincide exactly.
    pub fn aligned_to(&self, manifest: &DatasetManifest) -> Result<EmbeddingMatrix> {
        if manifest.len() != self.rows() {
            return Err(Error::IdMismatch(format!(
                "manifest has {} tiles, embeddings have {} rows",
                manifest.len(),
                self.rows()
            )));
        }
        let by_id: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        if by_id.len() != self.rows() {
            return Err(Error::IdMismatch("duplicate ids in embeddings".into()));
        }
        let mut data = Vec::with_capacity(self.data.len());
        let mut ids = Vec::with_capacity(self.rows());
        for tile in &manifest.tiles {
            let row = match tile.embedding_row {
                Some(r) if self.ids.get(r) == Some(&tile.tile_id) => r,
                Some(r) => {
                    return Err(Error::IdMismatch(format!(
                        "{} points at embedding row {r} which holds {:?}",
                        tile.tile_id,
                        self.ids.get(r)
                    )))
                }
                None => *by_id.get(tile.tile_id.as_str()).ok_or_else(|| {
                    Error::IdMismatch(format!("{} has no embedding row", tile.tile_id))
                })?,
            };
            ids.push(tile.tile_id.clone());
            data.extend_from_slice(self.row(row));
        }
        Ok(EmbeddingMatrix {
            ids,
            data,
            dim: self.dim,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let id_bytes: usize = self.ids.iter().map(|id| id.len() + 1).sum();
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4 + id_bytes);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in &self.ids {
            out.extend_from_slice(id.as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
        let d = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
        let payload = n
            .checked_mul(d)
            .and_then(|x| x.checked_mul(4))
            .ok_or_else(|| Error::InvalidParameter(format!("{n}x{d} matrix too large")))?;
        let data_end = HEADER_LEN + payload;
        if bytes.len() < data_end {
            return Err(Error::Truncated {
                expected: data_end,
                found: bytes.len(),
            });
        }
        let data: Vec<f32> = bytes[HEADER_LEN..data_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();

        let tail = &bytes[data_end..];
        let newlines: Vec<usize> = tail
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == b'\n')
            .map(|(i, _)| i)
            .collect();
        if newlines.len() != n {
            return Err(Error::IdCountMismatch {
                expected: n,
                found: newlines.len(),
            });
        }
        let id_end = newlines.last().map_or(0, |i| i + 1);
        if id_end != tail.len() {
            return Err(Error::TrailingBytes(tail.len() - id_end));
        }
        let text = std::str::from_utf8(&tail[..id_end]).map_err(|_| Error::InvalidUtf8)?;
        let ids: Vec<String> = text.split_terminator('\n').map(str::to_string).collect();
        Self::new(ids, data, d)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t_{i:05}")).collect()
    }

    #[test]
    fn small_matrix_exact_round_trip() {
        let data = vec![0.1f32, -2.5, 3.0e-7, 1.0 / 3.0, f32::MAX, f32::MIN_POSITIVE];
        let m = EmbeddingMatrix::new(ids(3), data.clone(), 2).unwrap();
        let back = EmbeddingMatrix::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.rows(), 3);
        assert_eq!(back.dim(), 2);
        assert_eq!(back.ids(), m.ids());
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.data()), bits(&data));
        assert_eq!(back.row(1), &[3.0e-7, 1.0 / 3.0]);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = EmbeddingMatrix::new(ids(1), vec![1.0], 1).unwrap().to_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(EmbeddingMatrix::from_bytes(&bytes), Err(Error::BadMagic(m)) if &m == b"XXXX"));
    }

    #[test]
    fn distinct_structural_errors() {
        let good = EmbeddingMatrix::new(ids(2), vec![1.0, 2.0, 3.0, 4.0], 2)
            .unwrap()
            .to_bytes();

        let truncated = &good[..HEADER_LEN + 6];
        assert!(matches!(
            EmbeddingMatrix::from_bytes(truncated),
            Err(Error::Truncated { .. })
        ));

        let one_id = &good[..good.len() - "t_00001\n".len()];
        assert!(matches!(
            EmbeddingMatrix::from_bytes(one_id),
            Err(Error::IdCountMismatch { expected: 2, found: 1 })
        ));

        let mut extra_id = good.clone();
        extra_id.extend_from_slice(b"t_00002\n");
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&extra_id),
            Err(Error::IdCountMismatch { expected: 2, found: 3 })
        ));

        let mut trailing = good.clone();
        trailing.extend_from_slice(b"zz");
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&trailing),
            Err(Error::TrailingBytes(2))
        ));

        let mut version = good.clone();
        version[4] = 9;
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&version),
            Err(Error::UnsupportedVersion(9))
        ));

        let mut nan = good;
        nan[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&nan),
            Err(Error::NonFinite { row: 0, col: 0 })
        ));
    }

    proptest! {
        #[test]
        fn bytes_round_trip_identical(
            n in 0usize..6,
            d in 1usize..5,
            seed in proptest::collection::vec(-1.0e6f32..1.0e6, 0..30),
        ) {
            let data: Vec<f32> = (0..n * d).map(|i| seed.get(i).copied().unwrap_or(i as f32)).collect();
            let m = EmbeddingMatrix::new(ids(n), data, d).unwrap();
            let bytes = m.to_bytes();
            let back = EmbeddingMatrix::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back, m);
        }
    }
}
