//! PNG grids of original, projected and noise-added images.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::privacy::{noisify, NoiseBudget};
use crate::projection::{generate_projection, project};
use crate::rng::Rng64;

const SIDE: usize = 28;
const COLUMNS: usize = 10;
const GAP: usize = 2;

fn to_pixels(v: &[f64], stretch: bool) -> Vec<u8> {
    let (lo, hi) = if stretch {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi } else { lo + 1.0 })
    } else {
        (0.0, 1.0)
    };
    v.iter()
        .map(|&x| (((x - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Renders rows of 28x28 tiles: the first test images, their projections
/// through a square key (contrast-stretched) and one noise-added row per
/// budget. Returns `None` for data that are not 28x28 images in `[0, 1]`.
pub fn write_dp_grid(
    dir: &Path,
    test: &Dataset,
    budgets: &[NoiseBudget],
    seed: u64,
) -> Result<Option<PathBuf>> {
    let d = test.dim();
    if d != SIDE * SIDE || test.len() < COLUMNS {
        return Ok(None);
    }
    let key = generate_projection(d, d, seed)?;
    let mut rows: Vec<Vec<Vec<u8>>> = Vec::new();
    let samples: Vec<&[f64]> = (0..COLUMNS).map(|i| test.sample(i)).collect();
    rows.push(samples.iter().map(|x| to_pixels(x, false)).collect());
    rows.push(
        samples
            .iter()
            .map(|x| project(&key, x).map(|y| to_pixels(&y, true)))
            .collect::<Result<_>>()?,
    );
    for (b, budget) in budgets.iter().enumerate() {
        let mut rng = Rng64::derive(seed, 100 + b as u64);
        rows.push(
            samples
                .iter()
                .map(|x| to_pixels(&noisify(x, budget, &mut rng), false))
                .collect(),
        );
    }
    let width = COLUMNS * (SIDE + GAP) + GAP;
    let height = rows.len() * (SIDE + GAP) + GAP;
    let mut img = GrayImage::from_pixel(width as u32, height as u32, Luma([128]));
    for (r, row) in rows.iter().enumerate() {
        for (c, tile) in row.iter().enumerate() {
            let (x0, y0) = (GAP + c * (SIDE + GAP), GAP + r * (SIDE + GAP));
            for (p, &v) in tile.iter().enumerate() {
                img.put_pixel((x0 + p % SIDE) as u32, (y0 + p / SIDE) as u32, Luma([v]));
            }
        }
    }
    std::fs::create_dir_all(dir)?;
    let path = dir.join("dp_grid.png");
    img.save(&path).map_err(|e| Error::Output(e.to_string()))?;
    Ok(Some(path))
}
