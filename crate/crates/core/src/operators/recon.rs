//! Grayscale morphological reconstruction: the marker image J is dilated
//! under the mask image I (J <= I pointwise) until nothing changes. Ships
//! with the iterate-until-stable sweep reference it is verified against.

use std::borrow::Cow;
use std::time::Instant;

use crate::engine::{self, EngineVariant, PropagationOperator, RunStats};
use crate::grid::{Addr, CellView, Connectivity, Image2D, Neighborhood};
use crate::lanes::{self, Dir, LaneBatch, LaneMask};
use crate::pixelqueue::{QueueKind, WaveQueue};
use crate::{Error, Result};

/// Mask and marker pair; the marker is the mutable state.
#[derive(Debug, Clone)]
pub struct ReconContext {
    pub mask: Image2D,
    pub marker: Image2D,
}

impl ReconContext {
    pub fn new(mask: Image2D, marker: Image2D) -> Result<Self> {
        validate_marker_under_mask(&mask, &marker)?;
        Ok(ReconContext { mask, marker })
    }
}

/// Checks dimensions and the J <= I invariant, naming the first violation.
pub fn validate_marker_under_mask(mask: &Image2D, marker: &Image2D) -> Result<()> {
    if mask.width() != marker.width() || mask.height() != marker.height() {
        return Err(Error::InvalidInput(format!(
            "mask is {}x{} but marker is {}x{}",
            mask.width(),
            mask.height(),
            marker.width(),
            marker.height()
        )));
    }
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let a = mask.addr(x, y);
            if marker.get(a) > mask.get(a) {
                return Err(Error::InvalidInput(format!(
                    "marker exceeds mask at ({x}, {y}): {} > {}",
                    marker.get(a),
                    mask.get(a)
                )));
            }
        }
    }
    Ok(())
}

/// Propagation operator for reconstruction. Values spread to any neighbor
/// holding less, clamped by the mask at the receiving cell.
pub struct ReconOp<'a> {
    mask: &'a Image2D,
}

impl<'a> ReconOp<'a> {
    pub fn new(mask: &'a Image2D) -> Self {
        ReconOp { mask }
    }
}

impl PropagationOperator for ReconOp<'_> {
    fn direction(&self) -> Dir {
        Dir::Max
    }

    #[inline]
    fn condition(&self, receiver: Addr, receiver_state: u32, donor_state: u32) -> bool {
        // Frame cells carry mask 0, so they never qualify.
        receiver_state < donor_state && receiver_state < self.mask.get(receiver)
    }

    #[inline]
    fn absorb(&self, receiver: Addr, receiver_state: u32, donor_state: u32) -> u32 {
        receiver_state.max(donor_state.min(self.mask.get(receiver)))
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
        let clamp = lanes::gather(self.mask, receiver_addrs);
        let donor = LaneBatch::splat(donor_state);
        let lt_donor = lanes::cmp_mask(receiver_states, &donor, lanes::Rel::Lt);
        let lt_clamp = lanes::cmp_mask(receiver_states, &clamp, lanes::Rel::Lt);
        LaneMask(lt_donor.0 & lt_clamp.0)
    }

    #[inline]
    fn lane_priority_keys(
        &self,
        donor_state: u32,
        receiver_addrs: &LaneBatch,
        _receiver_states: &LaneBatch,
    ) -> LaneBatch {
        // The candidate each receiver would take: the donor value clamped by
        // the mask at the receiver.
        let clamp = lanes::gather(self.mask, receiver_addrs);
        lanes::min_lanes(&LaneBatch::splat(donor_state), &clamp)
    }
}

pub(crate) fn with_zero_frame(img: &Image2D) -> Cow<'_, Image2D> {
    let frame_clear = img.cells().iter().take(img.stride()).all(|&v| v == 0)
        && img
            .cells()
            .iter()
            .skip((img.height() + 1) * img.stride())
            .all(|&v| v == 0)
        && (0..img.height()).all(|y| {
            let row = (y + 1) * img.stride();
            img.cells()[row] == 0 && img.cells()[row + img.stride() - 1] == 0
        });
    if frame_clear {
        Cow::Borrowed(img)
    } else {
        let mut fixed = img.clone();
        fixed.set_frame(0);
        Cow::Owned(fixed)
    }
}

/// Raster pass over the preceding half-neighborhood and anti-raster pass
/// over the following half, restricted to the rows of one block, updating
/// the marker through the shared view and seeding every anti-raster pixel
/// that still has a strictly improvable neighbor. Writes touch only the
/// block's rows.
pub fn recon_block_scans(
    view: &CellView<'_>,
    mask: &Image2D,
    nb: &Neighborhood,
    rows: std::ops::Range<usize>,
    kind: QueueKind,
) -> WaveQueue {
    let mut queue = WaveQueue::new(kind, Dir::Max);
    for y in rows.clone() {
        for x in 0..view.width() {
            let p = view.addr(x, y);
            let mut m = view.get(p);
            for &d in nb.raster_half() {
                m = m.max(view.get(crate::grid::apply_offset(p, d)));
            }
            view.set(p, m.min(mask.get(p)));
        }
    }
    for y in rows.rev() {
        for x in (0..view.width()).rev() {
            let p = view.addr(x, y);
            let mut m = view.get(p);
            for &d in nb.anti_raster_half() {
                m = m.max(view.get(crate::grid::apply_offset(p, d)));
            }
            let v = m.min(mask.get(p));
            view.set(p, v);
            let improvable = nb.anti_raster_half().iter().any(|&d| {
                let q = crate::grid::apply_offset(p, d);
                let jq = view.get(q);
                jq < v && jq < mask.get(q)
            });
            if improvable {
                queue.push(p, v);
            }
        }
    }
    queue
}

/// One raster pass over the preceding half-neighborhood and one anti-raster
/// pass over the following half, each updating the marker in place, and a
/// queue seeded with every anti-raster pixel that still has a strictly
/// improvable neighbor.
pub fn recon_init_scans(
    marker: &mut Image2D,
    mask: &Image2D,
    nb: &Neighborhood,
    kind: QueueKind,
) -> Result<WaveQueue> {
    validate_marker_under_mask(mask, marker)?;
    marker.set_frame(0);
    let mask = with_zero_frame(mask);
    let height = marker.height();
    let view = marker.view();
    Ok(recon_block_scans(&view, &mask, nb, 0..height, kind))
}

/// Morphological reconstruction of the marker under the mask with the chosen
/// engine variant and queue discipline. Returns the reconstructed image; the
/// inputs are left untouched.
pub fn reconstruct(
    mask: &Image2D,
    marker: &Image2D,
    nb: &Neighborhood,
    variant: EngineVariant,
    kind: QueueKind,
) -> Result<(Image2D, RunStats)> {
    let total = Instant::now();
    let mask = with_zero_frame(mask);
    let mut out = marker.clone();

    let init = Instant::now();
    let seeds = recon_init_scans(&mut out, &mask, nb, kind)?;
    let init_ms = init.elapsed().as_millis() as u64;

    let op = ReconOp::new(&mask);
    let mut stats = engine::run(&mut out, seeds, &op, nb, variant)?;
    stats.init_ms = init_ms;
    stats.total_ms = total.elapsed().as_millis() as u64;

    debug_assert!(
        engine::find_condition_violation(&out, &op, nb).is_none(),
        "reconstruction ended away from the fixpoint"
    );
    Ok((out, stats))
}

/// Reconstruction across `threads` workers: each worker scans its own row
/// block for seeds, then all of them propagate over the shared marker until
/// their queues drain. The result is bit-identical to the single-threaded
/// fixpoint for any thread count.
pub fn reconstruct_parallel(
    mask: &Image2D,
    marker: &Image2D,
    nb: &Neighborhood,
    kind: QueueKind,
    variant: EngineVariant,
    threads: usize,
) -> Result<(Image2D, crate::parallel::ParallelOutcome)> {
    let total = Instant::now();
    validate_marker_under_mask(mask, marker)?;
    let mask = with_zero_frame(mask);
    let mut out = marker.clone();
    out.set_frame(0);
    let plan = crate::parallel::partition_rows(out.height(), threads)?;
    let op = ReconOp::new(&mask);
    let mask_ref: &Image2D = &mask;
    let mut outcome = crate::parallel::run_parallel(
        &mut out,
        &op,
        nb,
        &plan,
        kind,
        variant,
        |view, rows, kind| recon_block_scans(view, mask_ref, nb, rows, kind),
    )?;
    outcome.stats.total_ms = total.elapsed().as_millis() as u64;
    Ok((out, outcome))
}

/// Reference reconstruction: full-image sweeps, each pixel taking the
/// maximum of its neighborhood and itself clamped by the mask, repeated
/// until a whole sweep changes nothing. Desk-scale only.
pub fn oracle_recon_parallel(
    mask: &Image2D,
    marker: &Image2D,
    connectivity: Connectivity,
) -> Result<Image2D> {
    validate_marker_under_mask(mask, marker)?;
    let mask = with_zero_frame(mask);
    let nb = Neighborhood::for_image(connectivity, &mask);
    let mut cur = marker.clone();
    cur.set_frame(0);
    loop {
        let prev = cur.clone();
        for p in mask.scan_raster() {
            let mut m = prev.get(p);
            for q in nb.neighbors_of(p) {
                m = m.max(prev.get(q));
            }
            cur.set(p, m.min(mask.get(p)));
        }
        if cur == prev {
            return Ok(cur);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, v: &[u32]) -> Image2D {
        Image2D::from_interior(w, h, v, 0).unwrap()
    }

    #[test]
    fn identity_when_marker_equals_mask() {
        let mask = img(3, 3, &[5, 1, 2, 8, 0, 3, 4, 4, 4]);
        let nb = Neighborhood::for_image(Connectivity::N8, &mask);
        let (out, stats) =
            reconstruct(&mask, &mask, &nb, EngineVariant::TwoPhase, QueueKind::Fifo).unwrap();
        assert_eq!(out.interior(), mask.interior());
        assert_eq!(stats.elements_propagated, 0);
    }

    #[test]
    fn zero_marker_stays_zero_with_empty_queue() {
        let mask = img(3, 3, &[5, 1, 2, 8, 0, 3, 4, 4, 4]);
        let mut marker = Image2D::new(3, 3, 0, 0).unwrap();
        let nb = Neighborhood::for_image(Connectivity::N8, &mask);
        let q = recon_init_scans(&mut marker, &mask, &nb, QueueKind::Fifo).unwrap();
        assert!(q.is_empty());
        assert_eq!(marker.interior(), vec![0; 9]);
    }

    #[test]
    fn line_fixture_flat() {
        let mask = img(5, 1, &[3, 3, 3, 3, 3]);
        let marker = img(5, 1, &[0, 0, 3, 0, 0]);
        let nb = Neighborhood::for_image(Connectivity::N8, &mask);
        let (out, _) =
            reconstruct(&mask, &marker, &nb, EngineVariant::TwoPhase, QueueKind::Fifo).unwrap();
        assert_eq!(out.interior(), vec![3, 3, 3, 3, 3]);
        let oracle = oracle_recon_parallel(&mask, &marker, Connectivity::N8).unwrap();
        assert_eq!(out.interior(), oracle.interior());
    }

    #[test]
    fn line_fixture_valley() {
        let mask = img(5, 1, &[2, 1, 3, 1, 2]);
        let marker = img(5, 1, &[0, 0, 3, 0, 0]);
        for variant in [
            EngineVariant::Classic,
            EngineVariant::TwoPhase,
            EngineVariant::TwoPhaseBatched,
        ] {
            for kind in [QueueKind::Fifo, QueueKind::Priority] {
                let nb = Neighborhood::for_image(Connectivity::N8, &mask);
                let (out, _) = reconstruct(&mask, &marker, &nb, variant, kind).unwrap();
                assert_eq!(out.interior(), vec![1, 1, 3, 1, 1], "{variant:?} {kind:?}");
            }
        }
        let oracle = oracle_recon_parallel(&mask, &marker, Connectivity::N8).unwrap();
        assert_eq!(oracle.interior(), vec![1, 1, 3, 1, 1]);
    }

    #[test]
    fn marker_above_mask_rejected_with_pixel() {
        let mask = img(2, 2, &[1, 1, 1, 1]);
        let marker = img(2, 2, &[0, 0, 0, 2]);
        let nb = Neighborhood::for_image(Connectivity::N8, &mask);
        let err =
            reconstruct(&mask, &marker, &nb, EngineVariant::TwoPhase, QueueKind::Fifo).unwrap_err();
        match err {
            Error::InvalidInput(msg) => assert!(msg.contains("(1, 1)"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mask = img(2, 2, &[1, 1, 1, 1]);
        let marker = img(2, 1, &[0, 0]);
        let nb = Neighborhood::for_image(Connectivity::N8, &mask);
        assert!(matches!(
            reconstruct(&mask, &marker, &nb, EngineVariant::TwoPhase, QueueKind::Fifo),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn init_scan_queue_matches_reference_trace() {
        // 5x5 mask with a single marker peak in the middle.
        let mask = img(
            5,
            5,
            &[
                1, 1, 1, 1, 1, //
                1, 4, 4, 4, 1, //
                1, 4, 9, 4, 1, //
                1, 4, 4, 4, 1, //
                1, 1, 1, 1, 1,
            ],
        );
        let mut marker = Image2D::new(5, 5, 0, 0).unwrap();
        let peak = marker.addr(2, 2);
        marker.set(peak, 9);
        let nb = Neighborhood::for_image(Connectivity::N8, &mask);

        // Independent trace of the two scans.
        let mut trace = marker.clone();
        let mut expected = Vec::new();
        for p in mask.scan_raster() {
            let mut m = trace.get(p);
            for &d in nb.raster_half() {
                m = m.max(trace.get(crate::grid::apply_offset(p, d)));
            }
            trace.set(p, m.min(mask.get(p)));
        }
        for p in mask.scan_antiraster() {
            let mut m = trace.get(p);
            for &d in nb.anti_raster_half() {
                m = m.max(trace.get(crate::grid::apply_offset(p, d)));
            }
            let v = m.min(mask.get(p));
            trace.set(p, v);
            if nb.anti_raster_half().iter().any(|&d| {
                let q = crate::grid::apply_offset(p, d);
                trace.get(q) < v && trace.get(q) < mask.get(q)
            }) {
                expected.push((p, v));
            }
        }

        let mut queue = recon_init_scans(&mut marker, &mask, &nb, QueueKind::Fifo).unwrap();
        assert_eq!(queue.drain_all(), expected);
        assert_eq!(marker.interior(), trace.interior());

        // The engine must finish exactly at the sweep oracle's fixpoint.
        let (out, _) = reconstruct(
            &mask,
            &{
                let mut m = Image2D::new(5, 5, 0, 0).unwrap();
                m.set(peak, 9);
                m
            },
            &nb,
            EngineVariant::TwoPhase,
            QueueKind::Fifo,
        )
        .unwrap();
        let oracle = oracle_recon_parallel(
            &mask,
            &{
                let mut m = Image2D::new(5, 5, 0, 0).unwrap();
                m.set(peak, 9);
                m
            },
            Connectivity::N8,
        )
        .unwrap();
        assert_eq!(out.interior(), oracle.interior());
    }

    #[test]
    fn reconstruction_is_idempotent() {
        let mask = img(4, 4, &[7, 3, 5, 1, 2, 8, 6, 4, 9, 0, 3, 5, 1, 6, 2, 7]);
        let marker = img(4, 4, &[0, 0, 0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        let nb = Neighborhood::for_image(Connectivity::N8, &mask);
        let (once, _) =
            reconstruct(&mask, &marker, &nb, EngineVariant::TwoPhase, QueueKind::Fifo).unwrap();
        let (twice, _) =
            reconstruct(&mask, &once, &nb, EngineVariant::TwoPhase, QueueKind::Fifo).unwrap();
        assert_eq!(once.interior(), twice.interior());
    }
}
