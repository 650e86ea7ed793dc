//! Cutting image/mask rasters into non-overlapping square tiles and
//! building the dataset manifest from per-tile class histograms.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use png::{BitDepth, ColorType, Transformations};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ClassHistogram, ClassSchema, DatasetManifest, TileRecord};

pub const DEFAULT_MASK_PATTERN: &str = "{stem}_mask.png";
const IMAGE_EXTENSIONS: &[&str] = &["png", "tif", "tiff", "jpg", "jpeg"];

/// Single-channel label raster, one class id per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub values: Vec<u16>,
}

impl Mask {
    pub fn new(width: u32, height: u32, values: Vec<u16>) -> Self {
        assert_eq!(values.len(), width as usize * height as usize);
        Mask {
            width,
            height,
            values,
        }
    }

    pub fn get(&self, row: u32, col: u32) -> u16 {
        self.values[row as usize * self.width as usize + col as usize]
    }

    /// Copies out the `size`x`size` window whose top-left corner is (row, col).
    pub fn crop(&self, row: u32, col: u32, size: u32) -> Mask {
        let w = self.width as usize;
        let mut values = Vec::with_capacity(size as usize * size as usize);
        for r in row..row + size {
            let start = r as usize * w + col as usize;
            values.extend_from_slice(&self.values[start..start + size as usize]);
        }
        Mask::new(size, size, values)
    }
}

/// Decodes an 8- or 16-bit grayscale PNG, or a palette PNG as raw indices.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let enc = |reason: String| Error::MaskEncoding {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| enc(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| enc("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| enc(e.to_string()))?;
    match info.color_type {
        ColorType::Grayscale | ColorType::Indexed => {}
        other => return Err(enc(format!("expected single-channel mask, got {other:?}"))),
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut values = Vec::with_capacity(w * h);
    for line in buf.chunks(info.line_size).take(h) {
        match info.bit_depth {
            BitDepth::Eight => values.extend(line[..w].iter().map(|v| *v as u16)),
            BitDepth::Sixteen => values.extend(
                line[..2 * w]
                    .chunks_exact(2)
                    .map(|b| u16::from_be_bytes([b[0], b[1]])),
            ),
            depth => {
                let bits = depth as usize;
                let mask = (1u16 << bits) - 1;
                values.extend((0..w).map(|x| {
                    let bit = x * bits;
                    let byte = line[bit / 8] as u16;
                    (byte >> (8 - bits - bit % 8)) & mask
                }));
            }
        }
    }
    Ok(Mask::new(info.width, info.height, values))
}

/// Writes a mask as 8-bit grayscale PNG, or 16-bit when any value exceeds 255.
pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let enc = |e: png::EncodingError| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), mask.width, mask.height);
    encoder.set_color(ColorType::Grayscale);
    let wide = mask.values.iter().any(|v| *v > 255);
    let data: Vec<u8> = if wide {
        encoder.set_depth(BitDepth::Sixteen);
        mask.values.iter().flat_map(|v| v.to_be_bytes()).collect()
    } else {
        encoder.set_depth(BitDepth::Eight);
        mask.values.iter().map(|v| *v as u8).collect()
    };
    let mut writer = encoder.write_header().map_err(enc)?;
    writer.write_image_data(&data).map_err(enc)?;
    writer.finish().map_err(enc)
}

/// An image and its label mask, matched by file stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterPair {
    pub stem: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub width: u32,
    pub height: u32,
}

/// One tile cut from a raster pair.
#[derive(Debug, Clone)]
pub struct Tile {
    pub tile_id: String,
    pub source: String,
    pub row: u32,
    pub col: u32,
    pub mask: Mask,
}

pub fn tile_id(stem: &str, row: u32, col: u32) -> String {
    format!("{stem}_{row:05}_{col:05}")
}

/// Top-left offsets of the full tiles covering a raster, row-major.
/// Partial strips on the right and bottom edges are dropped.
pub fn tile_offsets(width: u32, height: u32, tile_size: u32) -> Vec<(u32, u32)> {
    assert!(tile_size >= 1, "tile size must be positive");
    let rows = height / tile_size;
    let cols = width / tile_size;
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r * tile_size, c * tile_size)))
        .collect()
}

/// Checks every mask value is a class id of the schema, naming the first bad pixel.
pub fn check_mask(path: &Path, mask: &Mask, schema: &ClassSchema) -> Result<()> {
    let c = schema.num_classes;
    match mask.values.iter().position(|v| (*v as usize) >= c) {
        None => Ok(()),
        Some(i) => Err(Error::MaskValue {
            path: path.to_path_buf(),
            row: (i / mask.width as usize) as u32,
            col: (i % mask.width as usize) as u32,
            value: mask.values[i],
        }),
    }
}

/// Cuts the pair's mask into tiles. The mask is decoded from `pair.mask_path`.
pub fn tile_pair(pair: &RasterPair, tile_size: u32, schema: &ClassSchema) -> Result<Vec<Tile>> {
    if tile_size == 0 {
        return Err(Error::InvalidParameter("tile size must be positive".into()));
    }
    let mask = read_mask(&pair.mask_path)?;
    if (mask.width, mask.height) != (pair.width, pair.height) {
        return Err(Error::DimensionMismatch {
            stem: pair.stem.clone(),
            image: (pair.width, pair.height),
            mask: (mask.width, mask.height),
        });
    }
    check_mask(&pair.mask_path, &mask, schema)?;
    let file_name = pair
        .image_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| pair.stem.clone());
    Ok(tile_offsets(mask.width, mask.height, tile_size)
        .into_iter()
        .map(|(row, col)| Tile {
            tile_id: tile_id(&pair.stem, row, col),
            source: format!("{file_name}@{row},{col}"),
            row,
            col,
            mask: mask.crop(row, col, tile_size),
        })
        .collect())
}

/// Per-class pixel counts. Ignored classes are counted too; they are only
/// excluded when scoring.
pub fn compute_histogram(mask: &Mask, schema: &ClassSchema) -> ClassHistogram {
    let mut counts = vec![0u64; schema.num_classes];
    for v in &mask.values {
        counts[*v as usize] += 1;
    }
    ClassHistogram(counts)
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub images_dir: PathBuf,
    pub masks_dir: PathBuf,
    /// Mask file name template; `{stem}` is replaced by the image stem.
    pub mask_pattern: String,
    pub schema: ClassSchema,
    pub tile_size: u32,
    /// When set, every tile's image and mask crops are written here as
    /// `<tile_id>.png` and `<tile_id>_mask.png`.
    pub tiles_out: Option<PathBuf>,
}

impl IngestConfig {
    pub fn new(images_dir: impl Into<PathBuf>, schema: ClassSchema) -> Self {
        let images_dir = images_dir.into();
        IngestConfig {
            masks_dir: images_dir.clone(),
            images_dir,
            mask_pattern: DEFAULT_MASK_PATTERN.to_string(),
            schema,
            tile_size: crate::model::DEFAULT_TILE_SIZE,
            tiles_out: None,
        }
    }

    fn pattern_parts(&self) -> Result<(&str, &str)> {
        self.mask_pattern.split_once("{stem}").ok_or_else(|| {
            Error::InvalidParameter(format!(
                "mask pattern {:?} lacks a {{stem}} placeholder",
                self.mask_pattern
            ))
        })
    }

    fn mask_stem<'a>(&self, file_name: &'a str) -> Option<&'a str> {
        let (prefix, suffix) = self.pattern_parts().ok()?;
        file_name
            .strip_prefix(prefix)?
            .strip_suffix(suffix)
            .filter(|s| !s.is_empty())
    }
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Matches images to masks by the configured file name pattern.
pub fn find_pairs(config: &IngestConfig) -> Result<Vec<RasterPair>> {
    let (prefix, suffix) = config.pattern_parts()?;
    let file_name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned());

    let images: Vec<PathBuf> = list_files(&config.images_dir)?
        .into_iter()
        .filter(|p| is_image(p))
        .filter(|p| file_name(p).and_then(|n| config.mask_stem(&n).map(|_| ())).is_none())
        .collect();

    let mut stems = BTreeSet::new();
    let mut pairs = Vec::with_capacity(images.len());
    for image_path in images {
        let stem = image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mask_path = config.masks_dir.join(format!("{prefix}{stem}{suffix}"));
        if !mask_path.is_file() {
            return Err(Error::Unpaired(image_path));
        }
        if !stems.insert(stem.clone()) {
            return Err(Error::InvalidParameter(format!(
                "two images share the stem {stem:?}"
            )));
        }
        let (width, height) = image::image_dimensions(&image_path).map_err(|e| Error::Image {
            path: image_path.clone(),
            reason: e.to_string(),
        })?;
        pairs.push(RasterPair {
            stem,
            image_path,
            mask_path,
            width,
            height,
        });
    }

    for mask_path in list_files(&config.masks_dir)? {
        if let Some(stem) = file_name(&mask_path).and_then(|n| config.mask_stem(&n).map(String::from)) {
            if !stems.contains(&stem) {
                return Err(Error::Unpaired(mask_path));
            }
        }
    }

    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    Ok(pairs)
}

fn write_tile_files(dir: &Path, pair: &RasterPair, tiles: &[Tile], size: u32) -> Result<()> {
    let img_err = |path: &Path, e: image::ImageError| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let image = image::open(&pair.image_path).map_err(|e| img_err(&pair.image_path, e))?;
    for tile in tiles {
        let out = dir.join(format!("{}.png", tile.tile_id));
        image
            .crop_imm(tile.col, tile.row, size, size)
            .save_with_format(&out, image::ImageFormat::Png)
            .map_err(|e| img_err(&out, e))?;
        write_mask(&dir.join(format!("{}_mask.png", tile.tile_id)), &tile.mask)?;
    }
    Ok(())
}

/// Tiles every pair in the configured directories and returns the sorted manifest.
///
/// Pairs are processed in parallel; the result does not depend on scheduling
/// or directory enumeration order.
pub fn build_manifest(config: &IngestConfig) -> Result<DatasetManifest> {
    if config.tile_size == 0 {
        return Err(Error::InvalidParameter("tile size must be positive".into()));
    }
    let pairs = find_pairs(config)?;
    if let Some(dir) = &config.tiles_out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let per_pair: Vec<Vec<TileRecord>> = pairs
        .par_iter()
        .map(|pair| {
            let tiles = tile_pair(pair, config.tile_size, &config.schema)?;
            if let Some(dir) = &config.tiles_out {
                write_tile_files(dir, pair, &tiles, config.tile_size)?;
            }
            Ok(tiles
                .into_iter()
                .map(|t| TileRecord {
                    histogram: compute_histogram(&t.mask, &config.schema),
                    tile_id: t.tile_id,
                    source: t.source,
                    embedding_row: None,
                    degenerate: false,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(DatasetManifest::new(
        config.schema.clone(),
        config.tile_size,
        per_pair.into_iter().flatten().collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schema6() -> ClassSchema {
        ClassSchema::new(6, []).unwrap()
    }

    #[test]
    fn offsets_exact_division() {
        assert_eq!(
            tile_offsets(512, 512, 256),
            vec![(0, 0), (0, 256), (256, 0), (256, 256)]
        );
    }

    #[test]
    fn offsets_drop_partial_edges() {
        assert_eq!(tile_offsets(600, 600, 256).len(), 4);
        assert!(tile_offsets(100, 100, 256).is_empty());
        assert_eq!(tile_offsets(600, 300, 256), vec![(0, 0), (0, 256)]);
    }

    #[test]
    fn single_class_histogram() {
        let m = Mask::new(256, 256, vec![3; 65536]);
        assert_eq!(compute_histogram(&m, &schema6()).0, vec![0, 0, 0, 65536, 0, 0]);
    }

    #[test]
    fn half_and_half_histogram() {
        let values = (0..65536).map(|i| if i < 32768 { 0 } else { 1 }).collect();
        let m = Mask::new(256, 256, values);
        assert_eq!(compute_histogram(&m, &schema6()).0, vec![32768, 32768, 0, 0, 0, 0]);
    }

    #[test]
    fn random_histogram_matches_pixel_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h) = (37u32, 23u32);
        let values: Vec<u16> = (0..w * h).map(|_| rng.random_range(0..6)).collect();
        let m = Mask::new(w, h, values);
        let mut oracle = [0u64; 6];
        for r in 0..h {
            for c in 0..w {
                oracle[m.get(r, c) as usize] += 1;
            }
        }
        assert_eq!(compute_histogram(&m, &schema6()).0, oracle.to_vec());
    }

    #[test]
    fn crop_reads_the_right_window() {
        let m = Mask::new(4, 4, (0..16).collect());
        assert_eq!(m.crop(2, 2, 2).values, vec![10, 11, 14, 15]);
    }

    #[test]
    fn out_of_range_mask_value_names_pixel() {
        let mut values = vec![0u16; 12];
        values[7] = 9;
        let m = Mask::new(4, 3, values);
        match check_mask(Path::new("m.png"), &m, &schema6()) {
            Err(Error::MaskValue { row, col, value, .. }) => assert_eq!((row, col, value), (1, 3, 9)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mask_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = Mask::new(5, 3, (0..15).collect());
        write_mask(&p, &m).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);
        let wide = Mask::new(2, 1, vec![300, 7]);
        write_mask(&p, &wide).unwrap();
        assert_eq!(read_mask(&p).unwrap(), wide);
    }

    #[test]
    fn palette_png_decodes_to_indices() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pal.png");
        let file = File::create(&p).unwrap();
        let mut enc = png::Encoder::new(BufWriter::new(file), 4, 2);
        enc.set_color(ColorType::Indexed);
        enc.set_depth(BitDepth::Four);
        enc.set_palette(vec![0u8, 0, 0, 255, 0, 0, 0, 255, 0, 0, 0, 255]);
        let mut w = enc.write_header().unwrap();
        // rows: [0,1,2,3] and [3,2,1,0], two 4-bit indices per byte
        w.write_image_data(&[0x01, 0x23, 0x32, 0x10]).unwrap();
        w.finish().unwrap();
        let m = read_mask(&p).unwrap();
        assert_eq!(m.values, vec![0, 1, 2, 3, 3, 2, 1, 0]);
    }
}
