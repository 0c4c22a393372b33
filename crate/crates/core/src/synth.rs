//! Deterministic synthetic inputs: blob images with a target foreground
//! coverage, and marker/mask pairs for reconstruction workloads. All
//! randomness comes from ChaCha8 seeded with a caller-provided 64-bit seed,
//! so outputs are bit-reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::Image2D;
use crate::{Error, Result};

pub const FOREGROUND: u32 = 255;

/// Tolerance of the generator around the requested coverage, in percentage
/// points.
pub const COVERAGE_TOLERANCE_PP: f64 = 2.0;

/// Generates a binary blob image: `blobs` random discs grow one radius step
/// at a time, round-robin, until the foreground fraction reaches `coverage`
/// percent. Deterministic for a fixed seed.
pub fn generate_blobs(
    width: usize,
    height: usize,
    coverage: f64,
    blobs: usize,
    seed: u64,
) -> Result<Image2D> {
    if !(0.0..=100.0).contains(&coverage) {
        return Err(Error::InvalidArgument(format!(
            "coverage {coverage} outside 0..=100"
        )));
    }
    let mut img = Image2D::new(width, height, 0, 0)?;
    if coverage == 0.0 {
        return Ok(img);
    }
    if coverage == 100.0 {
        for p in img.scan_raster() {
            img.set(p, FOREGROUND);
        }
        return Ok(img);
    }
    if blobs == 0 {
        return Err(Error::InvalidArgument(
            "coverage above zero needs at least one blob".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<(i64, i64)> = (0..blobs)
        .map(|_| {
            (
                rng.gen_range(0..width as i64),
                rng.gen_range(0..height as i64),
            )
        })
        .collect();
    let mut radii = vec![0i64; blobs];
    let target = (coverage / 100.0 * (width * height) as f64).round() as usize;
    let mut covered = 0usize;
    let mut turn = 0usize;

    while covered < target {
        let b = turn % blobs;
        turn += 1;
        radii[b] += 1;
        let (cx, cy) = centers[b];
        let r = radii[b];
        // Paint the ring of cells whose distance just entered the radius.
        let r_sq = r * r;
        let prev_sq = (r - 1) * (r - 1);
        for y in (cy - r).max(0)..=(cy + r).min(height as i64 - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(width as i64 - 1) {
                let d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                if d <= r_sq && d > prev_sq {
                    let a = img.addr(x as usize, y as usize);
                    if img.get(a) == 0 {
                        img.set(a, FOREGROUND);
                        covered += 1;
                    }
                }
            }
        }
        // All blobs clipped out of growth room: stop rather than spin.
        if turn > blobs * (width + height) * 2 {
            break;
        }
    }
    Ok(img)
}

/// Fraction of nonzero interior pixels, in percent.
pub fn measure_coverage(img: &Image2D) -> f64 {
    let fg = img.scan_raster().filter(|&p| img.get(p) != 0).count();
    100.0 * fg as f64 / (img.width() * img.height()) as f64
}

/// A reconstruction workload: a shaded blob mask plus a marker holding the
/// mask value at a few scattered foreground points. Reconstruction then has
/// to carry those peaks across the whole of each shaded component.
pub fn recon_fixture(
    width: usize,
    height: usize,
    coverage: f64,
    blobs: usize,
    seed: u64,
) -> Result<(Image2D, Image2D)> {
    let binary = generate_blobs(width, height, coverage, blobs, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);

    // Shade each foreground pixel with a deterministic ripple so that wave
    // values vary and queue ordering has something to bite on.
    let mut mask = Image2D::new(width, height, 0, 0)?;
    for y in 0..height {
        for x in 0..width {
            let a = binary.addr(x, y);
            if binary.get(a) != 0 {
                let ripple = ((x * 7 + y * 13) % 96) as u32;
                mask.set(a, 160 + ripple.min(95));
            }
        }
    }

    // Peaks: one marker point per blob-ish region, at the mask value.
    let mut marker = Image2D::new(width, height, 0, 0)?;
    let mut placed = 0;
    let mut attempts = 0;
    while placed < blobs.max(1) && attempts < 10_000 {
        attempts += 1;
        let x = rng.gen_range(0..width);
        let y = rng.gen_range(0..height);
        let a = mask.addr(x, y);
        if mask.get(a) != 0 && marker.get(a) == 0 {
            marker.set(a, mask.get(a));
            placed += 1;
        }
    }
    Ok((mask, marker))
}
