//! Wavefront Euclidean distance transform. Every pixel tracks the address of
//! its best background candidate (its Voronoi root); roots spread to any
//! neighbor for which they are strictly closer, and the squared-distance map
//! falls out of the final assignment.
//!
//! Distances are squared Euclidean in integers, so comparisons are exact.
//! The wavefront scheme inherits the classical small-neighborhood
//! inexactness: the map is an upper bound on the exact squared distance and
//! equals it almost everywhere.

use std::time::Instant;

use crate::engine::{self, EngineVariant, PropagationOperator, RunStats};
use crate::grid::{Addr, Image2D, Neighborhood};
use crate::lanes::Dir;
use crate::pixelqueue::{QueueKind, WaveQueue};
use crate::Result;

/// Root address meaning "no background candidate yet".
pub const INF: u32 = u32::MAX;

/// Result of a distance-transform run.
pub struct EdtResult {
    /// Squared Euclidean distance per pixel; `INF` where no root arrived.
    pub distance: Image2D,
    /// Voronoi root per pixel: the linear address of its nearest background
    /// candidate; background pixels name themselves.
    pub voronoi: Image2D,
    pub stats: RunStats,
    /// Interior pixels left without a root (nonzero only when the input has
    /// no reachable background; callers should surface a warning).
    pub unreachable: u64,
}

/// Propagation operator carrying the grid geometry. The state image holds
/// root addresses, not intensities; "better" means lexicographically smaller
/// (squared distance, root address), so ties cannot flap between roots.
pub struct EdtOp {
    width: usize,
    height: usize,
    stride: usize,
}

impl EdtOp {
    pub fn new(img: &Image2D) -> Self {
        EdtOp {
            width: img.width(),
            height: img.height(),
            stride: img.stride(),
        }
    }

    #[inline]
    fn decode(&self, addr: Addr) -> (i64, i64) {
        let a = addr as usize;
        ((a % self.stride) as i64, (a / self.stride) as i64)
    }

    #[inline]
    fn is_interior(&self, addr: Addr) -> bool {
        let a = addr as usize;
        let x = a % self.stride;
        let y = a / self.stride;
        (1..=self.width).contains(&x) && (1..=self.height).contains(&y)
    }

    /// Squared distance from `p` to the root `vr`; unbounded for `INF`.
    #[inline]
    pub fn dist_sq(&self, p: Addr, vr: u32) -> u64 {
        if vr == INF {
            return u64::MAX;
        }
        let (px, py) = self.decode(p);
        let (rx, ry) = self.decode(vr);
        let dx = px - rx;
        let dy = py - ry;
        (dx * dx + dy * dy) as u64
    }

    #[inline]
    fn rank(&self, p: Addr, vr: u32) -> (u64, u32) {
        (self.dist_sq(p, vr), vr)
    }
}

impl PropagationOperator for EdtOp {
    fn direction(&self) -> Dir {
        Dir::Min
    }

    #[inline]
    fn condition(&self, receiver: Addr, receiver_state: u32, donor_state: u32) -> bool {
        self.is_interior(receiver) && self.rank(receiver, donor_state) < self.rank(receiver, receiver_state)
    }

    #[inline]
    fn absorb(&self, receiver: Addr, receiver_state: u32, donor_state: u32) -> u32 {
        if self.rank(receiver, donor_state) < self.rank(receiver, receiver_state) {
            donor_state
        } else {
            receiver_state
        }
    }

    // Root addresses are not ordered by value; two candidates for the same
    // cell compare by their rank for that cell.
    #[inline]
    fn merge_states(&self, receiver: Addr, a: u32, b: u32) -> u32 {
        self.absorb(receiver, a, b)
    }

    #[inline]
    fn priority_key(&self, receiver: Addr, candidate: u32) -> u32 {
        self.dist_sq(receiver, candidate).min(u32::MAX as u64) as u32
    }
}

#[inline]
fn foreground(v: u32) -> bool {
    v != 0
}

/// Builds the root image (background pixels name themselves, everything else
/// `INF`) and seeds the queue with background pixels that touch foreground.
pub fn edt_init(binary: &Image2D, nb: &Neighborhood, kind: QueueKind) -> (Image2D, WaveQueue) {
    let mut roots = Image2D::new(binary.width(), binary.height(), 0, INF)
        .expect("dimensions validated by the input image");
    let height = roots.height();
    let view = roots.view();
    let seeds = edt_block_init(&view, binary, nb, 0..height, kind);
    (roots, seeds)
}

/// Root initialization and seeding restricted to one row block, writing only
/// that block's rows. The binary input is read-only, so blocks can run side
/// by side.
pub fn edt_block_init(
    view: &crate::grid::CellView<'_>,
    binary: &Image2D,
    nb: &Neighborhood,
    rows: std::ops::Range<usize>,
    kind: QueueKind,
) -> WaveQueue {
    let mut seeds = WaveQueue::new(kind, Dir::Min);
    for y in rows {
        for x in 0..binary.width() {
            let p = binary.addr(x, y);
            if foreground(binary.get(p)) {
                view.set(p, INF);
            } else {
                view.set(p, p);
                let touches_fg = nb
                    .neighbors_of(p)
                    .any(|q| binary.is_interior(q) && foreground(binary.get(q)));
                if touches_fg {
                    seeds.push(p, 0);
                }
            }
        }
    }
    seeds
}

/// Distance map and unreached count from a final root assignment.
pub(crate) fn roots_to_distance(binary: &Image2D, roots: &Image2D) -> (Image2D, u64) {
    let op = EdtOp::new(binary);
    let mut distance = Image2D::new(binary.width(), binary.height(), 0, 0).unwrap();
    let mut unreachable = 0u64;
    for p in binary.scan_raster() {
        let vr = roots.get(p);
        if vr == INF {
            unreachable += 1;
            distance.set(p, INF);
        } else {
            distance.set(p, op.dist_sq(p, vr).min(u32::MAX as u64) as u32);
        }
    }
    (distance, unreachable)
}

/// Distance transform of a binary image (zero = background, nonzero =
/// foreground). The batched engine is not applicable: the propagation
/// condition needs coordinate arithmetic, not 32-bit lane compares.
pub fn edt(binary: &Image2D, nb: &Neighborhood, variant: EngineVariant) -> Result<EdtResult> {
    let total = Instant::now();
    let init = Instant::now();
    let (mut roots, seeds) = edt_init(binary, nb, QueueKind::Fifo);
    let init_ms = init.elapsed().as_millis() as u64;

    let op = EdtOp::new(binary);
    let mut stats = engine::run(&mut roots, seeds, &op, nb, variant)?;
    stats.init_ms = init_ms;
    stats.total_ms = total.elapsed().as_millis() as u64;

    debug_assert!(engine::find_condition_violation(&roots, &op, nb).is_none());

    let (distance, unreachable) = roots_to_distance(binary, &roots);
    Ok(EdtResult {
        distance,
        voronoi: roots,
        stats,
        unreachable,
    })
}

/// Distance transform across `threads` workers over the shared root image.
pub fn edt_parallel(
    binary: &Image2D,
    nb: &Neighborhood,
    variant: EngineVariant,
    threads: usize,
) -> Result<EdtResult> {
    let total = Instant::now();
    let mut roots = Image2D::new(binary.width(), binary.height(), 0, INF).unwrap();
    let plan = crate::parallel::partition_rows(binary.height(), threads)?;
    let op = EdtOp::new(binary);
    let outcome = crate::parallel::run_parallel(
        &mut roots,
        &op,
        nb,
        &plan,
        QueueKind::Fifo,
        variant,
        |view, rows, kind| edt_block_init(view, binary, nb, rows, kind),
    )?;
    let mut stats = outcome.stats;
    stats.total_ms = total.elapsed().as_millis() as u64;
    let (distance, unreachable) = roots_to_distance(binary, &roots);
    Ok(EdtResult {
        distance,
        voronoi: roots,
        stats,
        unreachable,
    })
}

/// Exact squared Euclidean distance by exhaustive search over all background
/// pixels. Quadratic; desk scale only.
pub fn oracle_edt_exact_sq(binary: &Image2D) -> Image2D {
    let mut bg: Vec<(i64, i64)> = Vec::new();
    for y in 0..binary.height() {
        for x in 0..binary.width() {
            if !foreground(binary.get(binary.addr(x, y))) {
                bg.push((x as i64, y as i64));
            }
        }
    }
    let mut out = Image2D::new(binary.width(), binary.height(), 0, 0).unwrap();
    for y in 0..binary.height() {
        for x in 0..binary.width() {
            let a = binary.addr(x, y);
            if !foreground(binary.get(a)) {
                continue;
            }
            let mut best = u64::MAX;
            for &(bx, by) in &bg {
                let dx = x as i64 - bx;
                let dy = y as i64 - by;
                best = best.min((dx * dx + dy * dy) as u64);
            }
            out.set(a, best.min(u32::MAX as u64) as u32);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Connectivity;

    fn binary(w: usize, h: usize, fg: &[(usize, usize)]) -> Image2D {
        let mut img = Image2D::new(w, h, 0, 0).unwrap();
        for &(x, y) in fg {
            let a = img.addr(x, y);
            img.set(a, 1);
        }
        img
    }

    #[test]
    fn single_foreground_center() {
        let img = binary(3, 3, &[(1, 1)]);
        let nb = Neighborhood::for_image(Connectivity::N8, &img);
        let res = edt(&img, &nb, EngineVariant::TwoPhase).unwrap();
        let center = img.addr(1, 1);
        assert_eq!(res.distance.get(center), 1);
        assert_eq!(res.unreachable, 0);
        // Background pixels are at distance zero and root themselves.
        for p in img.scan_raster() {
            if p != center {
                assert_eq!(res.distance.get(p), 0);
                assert_eq!(res.voronoi.get(p), p);
            }
        }
    }

    #[test]
    fn line_matches_brute_force() {
        let img = binary(5, 1, &[(1, 0), (2, 0), (3, 0), (4, 0)]);
        let nb = Neighborhood::for_image(Connectivity::N8, &img);
        let res = edt(&img, &nb, EngineVariant::TwoPhase).unwrap();
        let vals: Vec<u32> = (0..5).map(|x| res.distance.get(img.addr(x, 0))).collect();
        assert_eq!(vals, vec![0, 1, 4, 9, 16]);
        let oracle = oracle_edt_exact_sq(&img);
        assert_eq!(res.distance.interior(), oracle.interior());
    }

    #[test]
    fn all_foreground_flags_unreachable() {
        let img = binary(3, 2, &[(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]);
        let nb = Neighborhood::for_image(Connectivity::N8, &img);
        let res = edt(&img, &nb, EngineVariant::TwoPhase).unwrap();
        assert_eq!(res.unreachable, 6);
        assert!(res.distance.interior().iter().all(|&v| v == INF));
    }

    #[test]
    fn classic_and_two_phase_agree_on_blobs() {
        // Deterministic scatter of foreground blocks.
        let mut img = Image2D::new(24, 24, 0, 0).unwrap();
        let mut s = 0x12345678u64;
        for y in 0..24 {
            for x in 0..24 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if (s >> 60) > 6 {
                    let a = img.addr(x, y);
                    img.set(a, 1);
                }
            }
        }
        let a = img.addr(0, 0);
        img.set(a, 0); // guarantee background
        let nb = Neighborhood::for_image(Connectivity::N8, &img);
        let two = edt(&img, &nb, EngineVariant::TwoPhase).unwrap();
        let classic = edt(&img, &nb, EngineVariant::Classic).unwrap();
        assert_eq!(two.distance.interior(), classic.distance.interior());
        assert_eq!(two.voronoi.interior(), classic.voronoi.interior());

        // Upper bound on the exact distance, exact zero on background.
        let oracle = oracle_edt_exact_sq(&img);
        for p in img.scan_raster() {
            assert!(two.distance.get(p) >= oracle.get(p));
            if img.get(p) == 0 {
                assert_eq!(two.distance.get(p), 0);
            } else {
                // Roots name actual background pixels.
                let vr = two.voronoi.get(p);
                assert_eq!(img.get(vr), 0);
            }
        }
    }

    #[test]
    fn batched_is_rejected() {
        let img = binary(3, 3, &[(1, 1)]);
        let nb = Neighborhood::for_image(Connectivity::N8, &img);
        assert!(matches!(
            edt(&img, &nb, EngineVariant::TwoPhaseBatched),
            Err(crate::Error::UnsupportedOperator)
        ));
    }
}
