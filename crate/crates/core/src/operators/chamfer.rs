//! Grid-metric (chamfer) distance transforms: the wavefront operator used by
//! the engines, plus the four textbook reference algorithms it is verified
//! against — full-sweep iteration, two-scan sequential, seeded pixel queue,
//! and the scan-seeded hybrid — with the normalization that reconciles their
//! output conventions.
//!
//! With 4-connectivity the metric is city-block; with 8-connectivity,
//! chessboard.

use crate::engine::PropagationOperator;
use crate::grid::{apply_offset, Addr, Connectivity, Image2D, Neighborhood};
use crate::lanes::{self, Dir, LaneBatch, LaneMask};

pub const INF: u32 = u32::MAX;

#[inline]
fn foreground(v: u32) -> bool {
    v != 0
}

/// Wavefront chamfer operator: distances shrink toward `neighbor + 1`,
/// restricted to pixels that are foreground in the original binary image.
pub struct ChamferOp<'a> {
    binary: &'a Image2D,
}

impl<'a> ChamferOp<'a> {
    pub fn new(binary: &'a Image2D) -> Self {
        ChamferOp { binary }
    }

    /// Distance state seeded for the engines: background 0, foreground
    /// unreached, frame unreached so it never wins a pull.
    pub fn initial_state(&self) -> Image2D {
        let mut state = Image2D::new(self.binary.width(), self.binary.height(), 0, INF).unwrap();
        for p in self.binary.scan_raster() {
            state.set(p, if foreground(self.binary.get(p)) { INF } else { 0 });
        }
        state
    }

    /// FIFO seeds: background pixels touching foreground, like the queue
    /// reference's wavefront.
    pub fn seeds(&self, nb: &Neighborhood, kind: crate::pixelqueue::QueueKind) -> crate::pixelqueue::WaveQueue {
        let mut q = crate::pixelqueue::WaveQueue::new(kind, Dir::Min);
        for p in self.binary.scan_raster() {
            if !foreground(self.binary.get(p))
                && nb
                    .neighbors_of(p)
                    .any(|r| self.binary.is_interior(r) && foreground(self.binary.get(r)))
            {
                q.push(p, 0);
            }
        }
        q
    }
}

impl PropagationOperator for ChamferOp<'_> {
    fn direction(&self) -> Dir {
        Dir::Min
    }

    #[inline]
    fn condition(&self, receiver: Addr, receiver_state: u32, donor_state: u32) -> bool {
        foreground(self.binary.get(receiver)) && receiver_state > donor_state.saturating_add(1)
    }

    #[inline]
    fn absorb(&self, receiver: Addr, receiver_state: u32, donor_state: u32) -> u32 {
        if foreground(self.binary.get(receiver)) {
            receiver_state.min(donor_state.saturating_add(1))
        } else {
            receiver_state
        }
    }

    fn supports_lanes(&self) -> bool {
        true
    }

    #[inline]
    fn lane_condition(
        &self,
        donor_state: u32,
        receiver_addrs: &LaneBatch,
        receiver_states: &LaneBatch,
    ) -> LaneMask {
        let orig = lanes::gather(self.binary, receiver_addrs);
        let cap = LaneBatch::splat(donor_state.saturating_add(1));
        let further = lanes::cmp_mask(receiver_states, &cap, lanes::Rel::Gt);
        let is_fg = lanes::cmp_mask(&orig, &LaneBatch::splat(0), lanes::Rel::Ne);
        LaneMask(further.0 & is_fg.0)
    }

    #[inline]
    fn lane_priority_keys(
        &self,
        donor_state: u32,
        _receiver_addrs: &LaneBatch,
        _receiver_states: &LaneBatch,
    ) -> LaneBatch {
        LaneBatch::splat(donor_state.saturating_add(1))
    }
}

/// How a reference algorithm encodes its output, for [`normalize_dt`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtConvention {
    /// Background 0, foreground carries the chamfer distance directly.
    Direct,
    /// Seed pixels start at 2, so every foreground value is offset by one.
    SeededAtTwo,
}

/// Rewrites a reference output to "0 on background, chamfer distance on
/// foreground" so the four algorithms can be compared.
pub fn normalize_dt(img: &Image2D, convention: DtConvention) -> Image2D {
    let mut out = img.clone();
    if convention == DtConvention::SeededAtTwo {
        for p in img.scan_raster() {
            let v = img.get(p);
            if v > 0 && v != INF {
                out.set(p, v - 1);
            }
        }
    }
    out
}

/// Full-sweep reference: every foreground pixel repeatedly takes
/// `min(neighbors) + 1` from the previous sweep's values until stable.
/// Requires at least one background pixel to terminate; an all-foreground
/// image returns all-unreached directly.
pub fn oracle_dt_parallel(binary: &Image2D, connectivity: Connectivity) -> Image2D {
    let nb = Neighborhood::for_image(connectivity, binary);
    let has_bg = binary.scan_raster().any(|p| !foreground(binary.get(p)));
    let mut cur = Image2D::new(binary.width(), binary.height(), 0, INF).unwrap();
    for p in binary.scan_raster() {
        cur.set(p, if foreground(binary.get(p)) { 1 } else { 0 });
    }
    if !has_bg {
        for p in binary.scan_raster() {
            cur.set(p, INF);
        }
        return cur;
    }
    loop {
        let prev = cur.clone();
        for p in binary.scan_raster() {
            if foreground(binary.get(p)) {
                let mut m = INF;
                for q in nb.neighbors_of(p) {
                    m = m.min(prev.get(q));
                }
                cur.set(p, m.saturating_add(1));
            }
        }
        if cur == prev {
            return cur;
        }
    }
}

/// Two-scan sequential reference: a raster pass pulls from the preceding
/// half-neighborhood, an anti-raster pass from the following half.
pub fn oracle_dt_sequential(binary: &Image2D, connectivity: Connectivity) -> Image2D {
    let nb = Neighborhood::for_image(connectivity, binary);
    let mut img = Image2D::new(binary.width(), binary.height(), 0, INF).unwrap();
    for p in binary.scan_raster() {
        img.set(p, if foreground(binary.get(p)) { 1 } else { 0 });
    }
    for p in img.scan_raster() {
        if img.get(p) != 0 {
            let mut m = INF;
            for &d in nb.raster_half() {
                m = m.min(img.get(apply_offset(p, d)).saturating_add(1));
            }
            img.set(p, m);
        }
    }
    for p in img.scan_antiraster() {
        if img.get(p) != 0 {
            let mut m = img.get(p);
            for &d in nb.anti_raster_half() {
                m = m.min(img.get(apply_offset(p, d)).saturating_add(1));
            }
            img.set(p, m);
        }
    }
    img
}

/// Pixel-queue reference: foreground pixels adjacent to background seed a
/// FIFO at value 2; propagation writes `popped + 1` into still-unvisited
/// foreground neighbors. Output carries the seed-at-two offset.
pub fn oracle_dt_queue(binary: &Image2D, connectivity: Connectivity) -> Image2D {
    let nb = Neighborhood::for_image(connectivity, binary);
    let mut img = Image2D::new(binary.width(), binary.height(), 0, 0).unwrap();
    for p in binary.scan_raster() {
        img.set(p, if foreground(binary.get(p)) { 1 } else { 0 });
    }
    let mut fifo = std::collections::VecDeque::new();
    for p in img.scan_raster() {
        if img.get(p) == 1 && nb.neighbors_of(p).any(|q| img.get(q) == 0 && img.is_interior(q)) {
            fifo.push_back(p);
            img.set(p, 2);
        }
    }
    while let Some(p) = fifo.pop_front() {
        let v = img.get(p);
        for q in nb.neighbors_of(p) {
            if img.get(q) == 1 {
                img.set(q, v + 1);
                fifo.push_back(q);
            }
        }
    }
    img
}

/// Hybrid reference: the seeding happens inside a raster scan, then the same
/// queue propagation as [`oracle_dt_queue`]. Same seed-at-two offset.
pub fn oracle_dt_hybrid(binary: &Image2D, connectivity: Connectivity) -> Image2D {
    let nb = Neighborhood::for_image(connectivity, binary);
    let mut img = Image2D::new(binary.width(), binary.height(), 0, 0).unwrap();
    for p in binary.scan_raster() {
        img.set(p, if foreground(binary.get(p)) { 1 } else { 0 });
    }
    let mut fifo = std::collections::VecDeque::new();
    for p in img.scan_raster() {
        if img.get(p) != 0 && nb.neighbors_of(p).any(|q| img.get(q) == 0 && img.is_interior(q)) {
            fifo.push_back(p);
            img.set(p, 2);
        }
    }
    while let Some(p) = fifo.pop_front() {
        let v = img.get(p);
        for q in nb.neighbors_of(p) {
            if img.get(q) == 1 {
                img.set(q, v + 1);
                fifo.push_back(q);
            }
        }
    }
    img
}

/// Metric oracle: per-pixel minimum of the grid metric (L1 for N4,
/// Chebyshev for N8) over every background pixel. Independent of any
/// propagation scheme; quadratic.
pub fn oracle_chamfer_brute(binary: &Image2D, connectivity: Connectivity) -> Image2D {
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
            let mut best = INF as u64;
            for &(bx, by) in &bg {
                let dx = (x as i64 - bx).unsigned_abs();
                let dy = (y as i64 - by).unsigned_abs();
                let d = match connectivity {
                    Connectivity::N4 => dx + dy,
                    Connectivity::N8 => dx.max(dy),
                };
                best = best.min(d);
            }
            out.set(a, best as u32);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{self, EngineVariant};
    use crate::pixelqueue::QueueKind;

    fn line_fixture() -> Image2D {
        Image2D::from_interior(5, 1, &[0, 1, 1, 1, 1], 0).unwrap()
    }

    #[test]
    fn line_all_conventions() {
        let img = line_fixture();
        let expect = vec![0, 1, 2, 3, 4];
        assert_eq!(
            normalize_dt(&oracle_dt_parallel(&img, Connectivity::N4), DtConvention::Direct)
                .interior(),
            expect
        );
        assert_eq!(
            normalize_dt(&oracle_dt_sequential(&img, Connectivity::N4), DtConvention::Direct)
                .interior(),
            expect
        );
        assert_eq!(
            normalize_dt(&oracle_dt_queue(&img, Connectivity::N4), DtConvention::SeededAtTwo)
                .interior(),
            expect
        );
        assert_eq!(
            normalize_dt(&oracle_dt_hybrid(&img, Connectivity::N4), DtConvention::SeededAtTwo)
                .interior(),
            expect
        );
        assert_eq!(oracle_chamfer_brute(&img, Connectivity::N4).interior(), expect);
    }

    #[test]
    fn all_background_is_all_zero() {
        let img = Image2D::new(4, 3, 0, 0).unwrap();
        for conn in [Connectivity::N4, Connectivity::N8] {
            assert_eq!(oracle_dt_parallel(&img, conn).interior(), vec![0; 12]);
            assert_eq!(oracle_dt_sequential(&img, conn).interior(), vec![0; 12]);
            assert_eq!(oracle_dt_queue(&img, conn).interior(), vec![0; 12]);
            assert_eq!(oracle_dt_hybrid(&img, conn).interior(), vec![0; 12]);
        }
    }

    fn random_binary(w: usize, h: usize, seed: u64) -> Image2D {
        let mut img = Image2D::new(w, h, 0, 0).unwrap();
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).max(1);
        for y in 0..h {
            for x in 0..w {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                if s & 3 != 0 {
                    let a = img.addr(x, y);
                    img.set(a, 1);
                }
            }
        }
        let a = img.addr(w / 2, h / 2);
        img.set(a, 0); // keep at least one background pixel
        img
    }

    #[test]
    fn oracles_mutually_agree_on_random_images() {
        for seed in 0..25 {
            let img = random_binary(16, 16, seed + 1);
            for conn in [Connectivity::N4, Connectivity::N8] {
                let a = normalize_dt(&oracle_dt_parallel(&img, conn), DtConvention::Direct);
                let b = normalize_dt(&oracle_dt_sequential(&img, conn), DtConvention::Direct);
                let c = normalize_dt(&oracle_dt_queue(&img, conn), DtConvention::SeededAtTwo);
                let d = normalize_dt(&oracle_dt_hybrid(&img, conn), DtConvention::SeededAtTwo);
                let brute = oracle_chamfer_brute(&img, conn);
                assert_eq!(a.interior(), brute.interior(), "parallel vs brute {conn:?} {seed}");
                assert_eq!(b.interior(), brute.interior(), "sequential vs brute {conn:?} {seed}");
                assert_eq!(c.interior(), brute.interior(), "queue vs brute {conn:?} {seed}");
                assert_eq!(d.interior(), brute.interior(), "hybrid vs brute {conn:?} {seed}");
            }
        }
    }

    #[test]
    fn engine_chamfer_matches_parallel_oracle() {
        let img = random_binary(20, 13, 7);
        for conn in [Connectivity::N4, Connectivity::N8] {
            let nb = Neighborhood::for_image(conn, &img);
            let op = ChamferOp::new(&img);
            let mut state = op.initial_state();
            let seeds = op.seeds(&nb, QueueKind::Fifo);
            engine::run_classic(&mut state, seeds, &op, &nb);

            let oracle = oracle_dt_parallel(&img, conn);
            assert_eq!(state.interior(), oracle.interior(), "{conn:?}");

            let mut two = op.initial_state();
            let seeds = op.seeds(&nb, QueueKind::Fifo);
            engine::run_two_phase(&mut two, seeds, &op, &nb);
            assert_eq!(two.interior(), oracle.interior(), "{conn:?} two-phase");

            let mut batched = op.initial_state();
            let seeds = op.seeds(&nb, QueueKind::Fifo);
            engine::run_two_phase_batched(&mut batched, seeds, &op, &nb).unwrap();
            assert_eq!(batched.interior(), oracle.interior(), "{conn:?} batched");
        }
    }

    #[test]
    fn engine_chamfer_5x5_fixture_matches_parallel_oracle() {
        let img = Image2D::from_interior(
            5,
            5,
            &[
                0, 1, 1, 1, 1, //
                1, 1, 1, 1, 1, //
                1, 1, 1, 1, 1, //
                1, 1, 1, 1, 0, //
                1, 1, 1, 1, 1,
            ],
            0,
        )
        .unwrap();
        let nb = Neighborhood::for_image(Connectivity::N4, &img);
        let op = ChamferOp::new(&img);
        let mut state = op.initial_state();
        let seeds = op.seeds(&nb, QueueKind::Fifo);
        engine::run_classic(&mut state, seeds, &op, &nb);
        assert_eq!(
            state.interior(),
            oracle_dt_parallel(&img, Connectivity::N4).interior()
        );
    }
}
