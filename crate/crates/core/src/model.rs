//! Shared domain types: class schema, per-tile histograms, the dataset
//! manifest and method rankings.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TILE_SIZE: u32 = 256;

/// Number of classes and which of them are excluded from entropy computations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSchema {
    pub num_classes: usize,
    #[serde(default)]
    pub ignore_classes: BTreeSet<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

impl ClassSchema {
    /// Builds a schema, rejecting anything that leaves fewer than two scorable classes.
    pub fn new(num_classes: usize, ignore_classes: impl IntoIterator<Item = usize>) -> Result<Self> {
        let schema = ClassSchema {
            num_classes,
            ignore_classes: ignore_classes.into_iter().collect(),
            class_names: None,
        };
        match schema.problems().into_iter().next() {
            Some(reason) => Err(Error::InvalidParameter(reason)),
            None => Ok(schema),
        }
    }

    pub fn is_ignored(&self, class: usize) -> bool {
        self.ignore_classes.contains(&class)
    }

    /// Non-ignored class ids in ascending order.
    pub fn valid_classes(&self) -> Vec<usize> {
        (0..self.num_classes).filter(|c| !self.is_ignored(*c)).collect()
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.num_classes < 2 {
            out.push(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if let Some(bad) = self.ignore_classes.iter().find(|c| **c >= self.num_classes) {
            out.push(format!("ignore class {bad} outside 0..{}", self.num_classes));
        } else if self.num_classes >= 2 && self.ignore_classes.len() + 2 > self.num_classes {
            out.push(format!(
                "ignoring {} of {} classes leaves fewer than two scorable classes",
                self.ignore_classes.len(),
                self.num_classes
            ));
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.num_classes {
                out.push(format!(
                    "class_names has {} entries, expected {}",
                    names.len(),
                    self.num_classes
                ));
            }
        }
        out
    }
}

/// Per-class pixel counts, indexed by class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassHistogram(pub Vec<u64>);

impl ClassHistogram {
    pub fn zeros(num_classes: usize) -> Self {
        ClassHistogram(vec![0; num_classes])
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Pixel count over classes the schema does not ignore.
    pub fn valid_total(&self, schema: &ClassSchema) -> u64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(c, _)| !schema.is_ignored(*c))
            .map(|(_, n)| n)
            .sum()
    }

    pub fn add_assign(&mut self, other: &ClassHistogram) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub tile_id: String,
    pub source: String,
    pub histogram: ClassHistogram,
    #[serde(default)]
    pub embedding_row: Option<usize>,
    /// Set at ingest when every pixel of the tile belongs to an ignored class.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: ClassSchema,
    #[serde(default = "default_tile_size")]
    pub tile_size: u32,
    pub tiles: Vec<TileRecord>,
}

fn default_tile_size() -> u32 {
    DEFAULT_TILE_SIZE
}

impl DatasetManifest {
    /// Sorts tiles by id and recomputes degenerate flags.
    pub fn new(schema: ClassSchema, tile_size: u32, mut tiles: Vec<TileRecord>) -> Self {
        tiles.sort_by(|a, b| a.tile_id.cmp(&b.tile_id));
        for t in &mut tiles {
            t.degenerate = t.histogram.valid_total(&schema) == 0;
        }
        DatasetManifest {
            schema,
            tile_size,
            tiles,
        }
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn tile_ids(&self) -> Vec<&str> {
        self.tiles.iter().map(|t| t.tile_id.as_str()).collect()
    }

    /// Renders the manifest as JSON with a fixed key order and one tile per line.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        out.push_str("  \"schema\": ");
        out.push_str(&serde_json::to_string(&self.schema).expect("schema serializes"));
        out.push_str(",\n");
        out.push_str(&format!("  \"tile_size\": {},\n", self.tile_size));
        out.push_str("  \"tiles\": [");
        for (i, tile) in self.tiles.iter().enumerate() {
            out.push_str(if i == 0 { "\n    " } else { ",\n    " });
            out.push_str(&serde_json::to_string(tile).expect("tile serializes"));
        }
        if !self.tiles.is_empty() {
            out.push_str("\n  ");
        }
        out.push_str("]\n}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ManifestFormat(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// One failed invariant found by [`validate_manifest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub tile_id: Option<String>,
    pub reason: String,
}

impl Violation {
    fn global(reason: impl Into<String>) -> Self {
        Violation {
            tile_id: None,
            reason: reason.into(),
        }
    }

    fn tile(id: &str, reason: impl Into<String>) -> Self {
        Violation {
            tile_id: Some(id.to_string()),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.tile_id {
            Some(id) => write!(f, "{id}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

/// Checks every manifest invariant. An empty result means the manifest is valid.
pub fn validate_manifest(manifest: &DatasetManifest) -> Vec<Violation> {
    let mut out: Vec<Violation> = manifest
        .schema
        .problems()
        .into_iter()
        .map(Violation::global)
        .collect();
    if manifest.tile_size == 0 {
        out.push(Violation::global("tile_size must be positive"));
    }
    if manifest.tiles.is_empty() {
        out.push(Violation::global("manifest has no tiles"));
    }

    let c = manifest.schema.num_classes;
    let mut seen = BTreeSet::new();
    let mut duplicates = BTreeSet::new();
    for (i, tile) in manifest.tiles.iter().enumerate() {
        let id = tile.tile_id.as_str();
        if !seen.insert(id) && duplicates.insert(id) {
            out.push(Violation::tile(id, "duplicate tile_id"));
        }
        if i > 0 && manifest.tiles[i - 1].tile_id > tile.tile_id {
            out.push(Violation::tile(id, "tiles not sorted by tile_id"));
        }
        if tile.histogram.len() != c {
            out.push(Violation::tile(
                id,
                format!(
                    "histogram length mismatch: {} entries for {c} classes",
                    tile.histogram.len()
                ),
            ));
            continue;
        }
        let degenerate = tile.histogram.valid_total(&manifest.schema) == 0;
        if degenerate != tile.degenerate {
            out.push(Violation::tile(
                id,
                if degenerate {
                    "no pixels in scorable classes but tile not flagged degenerate"
                } else {
                    "tile flagged degenerate but has scorable pixels"
                },
            ));
        }
    }
    out
}

/// Checks that every `embedding_row` points into a matrix of `rows` rows.
pub fn validate_embedding_rows(manifest: &DatasetManifest, rows: usize) -> Vec<Violation> {
    manifest
        .tiles
        .iter()
        .filter_map(|t| match t.embedding_row {
            Some(r) if r >= rows => Some(Violation::tile(
                &t.tile_id,
                format!("embedding_row {r} out of range for {rows} rows"),
            )),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub tile_id: String,
    pub score: f64,
}

/// A method's ordering of tiles, best first. Position `r` (1-based) is the rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub method: String,
    pub entries: Vec<RankEntry>,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, String>,
}

impl Ranking {
    pub fn new(method: impl Into<String>, entries: Vec<RankEntry>) -> Self {
        Ranking {
            method: method.into(),
            entries,
            seed: None,
            params: BTreeMap::new(),
        }
    }

    /// Builds a ranking from an ordered id list, scoring positions linearly
    /// from 1 (first) down to 0 (last).
    pub fn from_order(method: impl Into<String>, ids: Vec<String>) -> Self {
        let scores = linear_scores(ids.len());
        let entries = ids
            .into_iter()
            .zip(scores)
            .map(|(tile_id, score)| RankEntry { tile_id, score })
            .collect();
        Ranking::new(method, entries)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.tile_id.as_str())
    }

    /// Tile id to 0-based position.
    pub fn positions(&self) -> HashMap<&str, usize> {
        self.ids().enumerate().map(|(i, id)| (id, i)).collect()
    }

    pub fn scores(&self) -> HashMap<&str, f64> {
        self.entries
            .iter()
            .map(|e| (e.tile_id.as_str(), e.score))
            .collect()
    }

    /// Returns the first broken ranking invariant, if any.
    pub fn check(&self) -> Option<String> {
        let mut seen = BTreeSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !seen.insert(e.tile_id.as_str()) {
                return Some(format!("duplicate tile_id {}", e.tile_id));
            }
            if !(0.0..=1.0).contains(&e.score) {
                return Some(format!("score {} of {} outside [0,1]", e.score, e.tile_id));
            }
            if i > 0 && self.entries[i - 1].score < e.score {
                return Some(format!("scores increase at rank {}", i + 1));
            }
        }
        None
    }
}

/// Scores `1 - p/(n-1)` for positions `p = 0..n`; a single entry scores 1.
pub fn linear_scores(n: usize) -> Vec<f64> {
    match n {
        0 => return Vec::new(),
        1 => return vec![1.0],
        _ => {}
    }
    let last = (n - 1) as f64;
    (0..n).map(|p| 1.0 - p as f64 / last).collect()
}

/// Errors unless both rankings cover the same set of tile ids.
pub fn ensure_same_ids(a: &Ranking, b: &Ranking) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::IdMismatch(format!(
            "{} has {} entries, {} has {}",
            a.method,
            a.len(),
            b.method,
            b.len()
        )));
    }
    let pa = a.positions();
    if let Some(missing) = b.ids().find(|id| !pa.contains_key(id)) {
        return Err(Error::IdMismatch(format!(
            "{missing} appears in {} but not in {}",
            b.method, a.method
        )));
    }
    Ok(())
}
