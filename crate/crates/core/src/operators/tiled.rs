//! Strip-decomposed runs of the concrete operators: reconstruction, distance
//! transform and fill-holes over a [`TilePlan`], all ending in the seam
//! correction pass that makes the result equal the untiled run.

use std::time::Instant;

use crate::engine::{
    self, run_two_phase_batched_on, run_two_phase_on, EngineVariant, RunStats,
};
use crate::grid::{Image2D, Neighborhood};
use crate::lanes::Dir;
use crate::operators::edt::{edt_block_init, edt_init, roots_to_distance, EdtOp, EdtResult, INF};
use crate::operators::recon::{
    recon_block_scans, recon_init_scans, validate_marker_under_mask, with_zero_frame, ReconOp,
};
use crate::parallel::{self, seed_seam_donors};
use crate::pixelqueue::{QueueKind, WaveQueue};
use crate::tiling::{run_tiled, TileOperation, TilePlan};
use crate::{Error, Result};

fn check_plan_height(plan: &TilePlan, height: usize) -> Result<()> {
    if plan.height() != height {
        return Err(Error::InvalidArgument(format!(
            "plan covers {} rows but the image has {height}",
            plan.height()
        )));
    }
    Ok(())
}

// --- Reconstruction ---

struct TiledRecon<'a> {
    mask: &'a Image2D,
    nb: &'a Neighborhood,
    state: Image2D,
}

struct ReconTile {
    mask: Image2D,
    marker: Image2D,
}

impl TileOperation for TiledRecon<'_> {
    type Tile = ReconTile;

    fn slice(&self, rows: std::ops::Range<usize>) -> ReconTile {
        ReconTile {
            mask: self.mask.slice_rows(rows.clone(), 0).expect("plan validated"),
            marker: self.state.slice_rows(rows, 0).expect("plan validated"),
        }
    }

    fn run_tile(
        &self,
        tile: &mut ReconTile,
        variant: EngineVariant,
        kind: QueueKind,
        threads: usize,
    ) -> Result<RunStats> {
        if threads <= 1 {
            let seeds = recon_init_scans(&mut tile.marker, &tile.mask, self.nb, kind)?;
            let op = ReconOp::new(&tile.mask);
            engine::run(&mut tile.marker, seeds, &op, self.nb, variant)
        } else {
            let plan = parallel::partition_rows(tile.marker.height(), threads)?;
            tile.marker.set_frame(0);
            let op = ReconOp::new(&tile.mask);
            let mask = &tile.mask;
            let nb = self.nb;
            let outcome = parallel::run_parallel(
                &mut tile.marker,
                &op,
                nb,
                &plan,
                kind,
                variant,
                |view, rows, kind| recon_block_scans(view, mask, nb, rows, kind),
            )?;
            Ok(outcome.stats)
        }
    }

    fn merge(&mut self, tile: ReconTile, row_start: usize) -> Result<()> {
        self.state.paste_rows(&tile.marker, row_start)
    }

    fn correct_seams(
        &mut self,
        seams: &[usize],
        variant: EngineVariant,
        kind: QueueKind,
    ) -> Result<RunStats> {
        let op = ReconOp::new(self.mask);
        let view = self.state.view();
        let mut queue = WaveQueue::new(kind, Dir::Max);
        for &row in seams {
            seed_seam_donors(&view, &op, self.nb, row, &mut queue);
        }
        // Border correction is a two-phase run regardless of how the tiles
        // themselves were executed.
        let stats = if variant == EngineVariant::TwoPhaseBatched {
            run_two_phase_batched_on(&view, queue, &op, self.nb)?
        } else {
            run_two_phase_on(&view, queue, &op, self.nb)
        };
        Ok(stats)
    }
}

/// Morphological reconstruction over a strip plan.
pub fn reconstruct_tiled(
    mask: &Image2D,
    marker: &Image2D,
    nb: &Neighborhood,
    plan: &TilePlan,
    variant: EngineVariant,
    kind: QueueKind,
) -> Result<(Image2D, RunStats)> {
    let total = Instant::now();
    validate_marker_under_mask(mask, marker)?;
    check_plan_height(plan, marker.height())?;
    let mask = with_zero_frame(mask);
    let mut state = marker.clone();
    state.set_frame(0);
    let mut op = TiledRecon {
        mask: &mask,
        nb,
        state,
    };
    let mut stats = run_tiled(&mut op, plan, variant, kind)?;
    stats.total_ms = total.elapsed().as_millis() as u64;
    let out = op.state;
    debug_assert!(
        engine::find_condition_violation(&out, &ReconOp::new(&mask), nb).is_none(),
        "tiled reconstruction ended away from the fixpoint"
    );
    Ok((out, stats))
}

// --- Distance transform ---

struct TiledEdt<'a> {
    binary: &'a Image2D,
    nb: &'a Neighborhood,
    roots: Image2D,
}

struct EdtTile {
    binary: Image2D,
    roots: Image2D,
}

impl TileOperation for TiledEdt<'_> {
    type Tile = EdtTile;

    fn slice(&self, rows: std::ops::Range<usize>) -> EdtTile {
        let binary = self.binary.slice_rows(rows, 0).expect("plan validated");
        let roots = Image2D::new(binary.width(), binary.height(), 0, INF).unwrap();
        EdtTile { binary, roots }
    }

    fn run_tile(
        &self,
        tile: &mut EdtTile,
        variant: EngineVariant,
        _kind: QueueKind,
        threads: usize,
    ) -> Result<RunStats> {
        let op = EdtOp::new(&tile.binary);
        if threads <= 1 {
            let (roots, seeds) = edt_init(&tile.binary, self.nb, QueueKind::Fifo);
            tile.roots = roots;
            engine::run(&mut tile.roots, seeds, &op, self.nb, variant)
        } else {
            let plan = parallel::partition_rows(tile.binary.height(), threads)?;
            let binary = &tile.binary;
            let nb = self.nb;
            let outcome = parallel::run_parallel(
                &mut tile.roots,
                &op,
                nb,
                &plan,
                QueueKind::Fifo,
                variant,
                |view, rows, kind| edt_block_init(view, binary, nb, rows, kind),
            )?;
            Ok(outcome.stats)
        }
    }

    fn merge(&mut self, tile: EdtTile, row_start: usize) -> Result<()> {
        // Tile-local root addresses shift by whole rows; the stride is the
        // same, so the offset is a constant.
        let shift = (row_start * self.roots.stride()) as u32;
        for y in 0..tile.roots.height() {
            for x in 0..tile.roots.width() {
                let local = tile.roots.get(tile.roots.addr(x, y));
                let remapped = if local == INF { INF } else { local + shift };
                let dst = self.roots.addr(x, y + row_start);
                self.roots.set(dst, remapped);
            }
        }
        Ok(())
    }

    fn correct_seams(
        &mut self,
        seams: &[usize],
        _variant: EngineVariant,
        kind: QueueKind,
    ) -> Result<RunStats> {
        let op = EdtOp::new(self.binary);
        let view = self.roots.view();
        let mut queue = WaveQueue::new(kind, Dir::Min);
        for &row in seams {
            seed_seam_donors(&view, &op, self.nb, row, &mut queue);
        }
        Ok(run_two_phase_on(&view, queue, &op, self.nb))
    }
}

/// Distance transform over a strip plan. Tiles with no background of their
/// own stay unreached until the correction pass floods them from the seams.
pub fn edt_tiled(
    binary: &Image2D,
    nb: &Neighborhood,
    plan: &TilePlan,
    variant: EngineVariant,
) -> Result<EdtResult> {
    let total = Instant::now();
    check_plan_height(plan, binary.height())?;
    if variant == EngineVariant::TwoPhaseBatched {
        return Err(Error::UnsupportedOperator);
    }
    let mut op = TiledEdt {
        binary,
        nb,
        roots: Image2D::new(binary.width(), binary.height(), 0, INF).unwrap(),
    };
    let mut stats = run_tiled(&mut op, plan, variant, QueueKind::Fifo)?;
    stats.total_ms = total.elapsed().as_millis() as u64;
    let roots = op.roots;
    debug_assert!(
        engine::find_condition_violation(&roots, &EdtOp::new(binary), nb).is_none(),
        "tiled distance transform ended away from the fixpoint"
    );
    let (distance, unreachable) = roots_to_distance(binary, &roots);
    Ok(EdtResult {
        distance,
        voronoi: roots,
        stats,
        unreachable,
    })
}

// --- Fill holes ---

/// Hole filling over a strip plan: complement, border-seeded tiled
/// reconstruction, complement back.
pub fn fill_holes_tiled(
    img: &Image2D,
    max_intensity: u32,
    nb: &Neighborhood,
    plan: &TilePlan,
    variant: EngineVariant,
    kind: QueueKind,
) -> Result<(Image2D, RunStats)> {
    let mask = crate::operators::fill::complement(img, max_intensity)?;
    let marker = crate::operators::fill::border_marker(&mask);
    let (filled, stats) = reconstruct_tiled(&mask, &marker, nb, plan, variant, kind)?;
    Ok((
        crate::operators::fill::complement(&filled, max_intensity)?,
        stats,
    ))
}
