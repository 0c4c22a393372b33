//! Multi-threaded two-phase execution: the image rows are split into
//! contiguous blocks, each worker seeds its own queue pair from its block,
//! and all workers then propagate over the whole shared image until their own
//! queues run dry — no global barrier, no atomic read-modify-write.
//!
//! Cell stores are tear-free and unordered; a worker may read a stale value,
//! identify a receiver another worker already fixed, or have its own store
//! superseded. All of it is absorbed by the pull re-check: every propagated
//! element re-enters its owner's wave, so any condition the sweep can still
//! find has a live witness in some queue. Block scans race on boundary rows,
//! which is why each worker also seeds the seam above its block after all
//! scans have settled.

use std::ops::Range;
use std::sync::Barrier;
use std::time::Instant;

use crate::engine::{
    run_two_phase_batched_on, run_two_phase_on, EngineVariant, PropagationOperator, RunStats,
};
use crate::grid::{apply_offset, CellView, Image2D, Neighborhood};
use crate::pixelqueue::{QueueKind, WaveQueue};
use crate::{Error, Result};

/// Contiguous row blocks, one per worker; trailing blocks may be empty when
/// there are more workers than rows.
#[derive(Debug, Clone)]
pub struct ParallelPlan {
    blocks: Vec<Range<usize>>,
}

impl ParallelPlan {
    pub fn threads(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }
}

/// Splits `height` rows into `threads` contiguous blocks whose sizes differ
/// by at most one.
pub fn partition_rows(height: usize, threads: usize) -> Result<ParallelPlan> {
    if threads == 0 {
        return Err(Error::InvalidArgument("thread count must be positive".into()));
    }
    let base = height / threads;
    let extra = height % threads;
    let mut blocks = Vec::with_capacity(threads);
    let mut start = 0;
    for i in 0..threads {
        let len = base + usize::from(i < extra);
        blocks.push(start..start + len);
        start += len;
    }
    Ok(ParallelPlan { blocks })
}

/// Merged counters plus each worker's own run record.
#[derive(Debug, Clone)]
pub struct ParallelOutcome {
    pub stats: RunStats,
    pub per_thread: Vec<RunStats>,
}

/// Pushes every donor of a condition-true pair across the seam between
/// `upper_row` and `upper_row + 1` (both directions, all adjacent pairs).
pub fn seed_seam_donors<O: PropagationOperator>(
    view: &CellView<'_>,
    op: &O,
    nb: &Neighborhood,
    upper_row: usize,
    queue: &mut WaveQueue,
) {
    let down: Vec<i32> = nb
        .offsets()
        .iter()
        .copied()
        .filter(|&d| d >= view.stride() as i32 - 1)
        .collect();
    for x in 0..view.width() {
        let p = view.addr(x, upper_row);
        let ps = view.get(p);
        for &d in &down {
            let q = apply_offset(p, d);
            let qs = view.get(q);
            // p donates down into q.
            if op.condition(q, qs, ps) {
                queue.push(p, op.priority_key(p, ps));
            }
            // q donates up into p.
            if op.condition(p, ps, qs) {
                queue.push(q, op.priority_key(q, qs));
            }
        }
    }
}

/// Runs the two-phase engine with one worker per plan block.
///
/// `seeder` performs the operator's initialization over one row block —
/// writing only that block's rows — and returns the block's seed queue.
/// Workers seed the seam above their block once every block scan has
/// settled, then propagate until their own queues are empty. The final
/// state equals the single-threaded fixpoint.
pub fn run_parallel<O, S>(
    state: &mut Image2D,
    op: &O,
    nb: &Neighborhood,
    plan: &ParallelPlan,
    kind: QueueKind,
    variant: EngineVariant,
    seeder: S,
) -> Result<ParallelOutcome>
where
    O: PropagationOperator,
    S: Fn(&CellView<'_>, Range<usize>, QueueKind) -> WaveQueue + Sync,
{
    if variant == EngineVariant::Classic {
        return Err(Error::InvalidArgument(
            "the classic engine writes into neighbors and cannot share state across workers"
                .into(),
        ));
    }
    let view = state.view();
    let scans_settled = Barrier::new(plan.blocks.len());
    let seeder = &seeder;
    let view_ref = &view;

    let results: Vec<Result<RunStats>> = std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(plan.blocks.len());
        for rows in plan.blocks.iter().cloned() {
            let scans_settled = &scans_settled;
            handles.push(scope.spawn(move || -> Result<RunStats> {
                let start = Instant::now();
                let mut queue = seeder(view_ref, rows.clone(), kind);
                scans_settled.wait();
                // Cross-block instabilities left by the racing scans live on
                // the block boundary; this worker owns the seam above it.
                if rows.start > 0 && !rows.is_empty() {
                    seed_seam_donors(view_ref, op, nb, rows.start - 1, &mut queue);
                }
                let init_ms = start.elapsed().as_millis() as u64;
                let mut stats = match variant {
                    EngineVariant::TwoPhase => run_two_phase_on(view_ref, queue, op, nb),
                    EngineVariant::TwoPhaseBatched => {
                        run_two_phase_batched_on(view_ref, queue, op, nb)?
                    }
                    EngineVariant::Classic => unreachable!(),
                };
                stats.init_ms = init_ms;
                stats.total_ms = start.elapsed().as_millis() as u64;
                Ok(stats)
            }));
        }
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut per_thread = Vec::with_capacity(results.len());
    for r in results {
        per_thread.push(r?);
    }
    let mut merged = RunStats::default();
    for s in &per_thread {
        merged.merge_parallel(s);
    }

    debug_assert!(
        crate::engine::find_condition_violation(state, op, nb).is_none(),
        "parallel run ended away from the fixpoint"
    );
    Ok(ParallelOutcome {
        stats: merged,
        per_thread,
    })
}
