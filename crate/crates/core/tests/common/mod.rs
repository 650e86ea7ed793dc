#![allow(dead_code)]

use std::path::Path;

use coreset_core::ingest::{write_mask, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Class layout for quadrant `q` of a synthetic raster; quadrant 3 of the
/// second raster is all background so the pair set contains a degenerate tile.
fn quadrant_class(raster: usize, q: usize, r: u32, c: u32) -> u16 {
    match (raster, q) {
        (0, 0) => 1,
        (0, 1) => 1 + ((r / 32 + c / 32) % 2) as u16,
        (0, 2) => 1 + ((r / 16) % 5) as u16,
        (0, 3) => if c < 200 { 3 } else { 0 },
        (1, 0) => 2 + ((c / 64) % 3) as u16,
        (1, 1) => if (r + c).is_multiple_of(7) { 5 } else { 4 },
        (1, 2) => 1 + (((r / 8) * 3 + c / 8) % 5) as u16,
        _ => 0,
    }
}

/// Writes `{stem}.png` and `{stem}_mask.png` (512 x 512, classes 0..6) into `dir`.
pub fn write_raster_pair(dir: &Path, stem: &str, raster: usize, size: u32) {
    let half = size / 2;
    let values: Vec<u16> = (0..size)
        .flat_map(|r| {
            (0..size).map(move |c| {
                let q = ((r >= half) as usize) * 2 + (c >= half) as usize;
                quadrant_class(raster, q, r % half, c % half)
            })
        })
        .collect();
    write_mask(&dir.join(format!("{stem}_mask.png")), &Mask::new(size, size, values.clone())).unwrap();

    let img = image::RgbImage::from_fn(size, size, |x, y| {
        let v = values[(y * size + x) as usize] as u8;
        image::Rgb([v.wrapping_mul(40), (x % 256) as u8, (y % 256) as u8])
    });
    img.save(dir.join(format!("{stem}.png"))).unwrap();
}

pub fn write_fixture_rasters(dir: &Path) {
    write_raster_pair(dir, "alpha", 0, 512);
    write_raster_pair(dir, "beta", 1, 512);
}

/// Non-negative synthetic features (post-ReLU-like): a shared sparse base plus
/// per-tile noise.
pub fn synthetic_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f32> = (0..dim).map(|_| rng.random::<f32>()).collect();
    (0..n)
        .map(|_| {
            base.iter()
                .map(|b| {
                    let x: f32 = rng.random::<f32>() - 0.5 + b * 0.5;
                    x.max(0.0)
                })
                .collect()
        })
        .collect()
}
