//! Cooperative execution for inputs larger than one worker's budget: the
//! image is cut into horizontal strips, each strip runs to its own fixpoint
//! as an independent task, the pieces are written back, and a final
//! border-correction pass propagates the waves that should have crossed the
//! seams. Worker shares come from their relative speedups, exactly
//! 100 * s_i / sum(s).

use std::collections::VecDeque;
use std::ops::Range;
use std::sync::Mutex;
use std::time::Instant;

use num_rational::Ratio;

use crate::engine::{EngineVariant, RunStats};
use crate::pixelqueue::QueueKind;
use crate::{Error, Result};

/// Exact share arithmetic for the partitioner.
pub type Share = Ratio<u64>;

/// A worker pool entry: a name for reports, its relative speedup, and how
/// many threads each of its tile runs may use.
#[derive(Debug, Clone)]
pub struct WorkerSpec {
    pub name: String,
    pub speedup: Share,
    pub threads: usize,
}

impl WorkerSpec {
    pub fn new(name: impl Into<String>, speedup: Share, threads: usize) -> Self {
        WorkerSpec {
            name: name.into(),
            speedup,
            threads: threads.max(1),
        }
    }

    /// A single local worker of unit speed.
    pub fn local() -> Self {
        WorkerSpec::new("local", Share::from_integer(1), 1)
    }
}

/// One horizontal strip and the worker it is assigned to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strip {
    pub row_start: usize,
    pub row_count: usize,
    pub worker: usize,
}

impl Strip {
    pub fn rows(&self) -> Range<usize> {
        self.row_start..self.row_start + self.row_count
    }
}

/// Strip decomposition plus seam metadata.
#[derive(Debug, Clone)]
pub struct TilePlan {
    strips: Vec<Strip>,
    workers: Vec<WorkerSpec>,
}

impl TilePlan {
    /// Cuts `height` rows into `tiles` strips assigned round-robin to the
    /// workers, strip sizes proportional to the assigned worker's speedup
    /// (equal speedups give an even split). Every strip must get at least
    /// one row.
    pub fn new(height: usize, tiles: usize, workers: Vec<WorkerSpec>) -> Result<TilePlan> {
        if tiles == 0 {
            return Err(Error::InvalidArgument("tile count must be positive".into()));
        }
        let workers = if workers.is_empty() {
            vec![WorkerSpec::local()]
        } else {
            workers
        };
        let assignment: Vec<usize> = (0..tiles).map(|i| i % workers.len()).collect();
        let shares: Vec<Share> = assignment.iter().map(|&w| workers[w].speedup).collect();
        let rows = apportion_rows(&shares, height)?;
        let mut strips = Vec::with_capacity(tiles);
        let mut start = 0;
        for (i, &count) in rows.iter().enumerate() {
            if count == 0 {
                return Err(Error::InvalidArgument(format!(
                    "strip {i} would be shorter than one row"
                )));
            }
            strips.push(Strip {
                row_start: start,
                row_count: count,
                worker: assignment[i],
            });
            start += count;
        }
        Ok(TilePlan { strips, workers })
    }

    pub fn strips(&self) -> &[Strip] {
        &self.strips
    }

    pub fn workers(&self) -> &[WorkerSpec] {
        &self.workers
    }

    /// Upper row of every adjacent-strip boundary: the seam between strips
    /// k and k+1 separates `row` from `row + 1`.
    pub fn seams(&self) -> Vec<usize> {
        self.strips
            .windows(2)
            .map(|w| w[1].row_start - 1)
            .collect()
    }

    pub fn height(&self) -> usize {
        self.strips.iter().map(|s| s.row_count).sum()
    }
}

/// Percentage of the work each worker should take, `100 * s_i / sum(s)`,
/// in exact rational arithmetic. The results sum to exactly 100.
pub fn partition_by_speedup(speedups: &[Share]) -> Result<Vec<Share>> {
    if speedups.is_empty() {
        return Err(Error::InvalidArgument("no speedups given".into()));
    }
    if speedups.iter().any(|s| *s <= Share::from_integer(0)) {
        return Err(Error::InvalidArgument(
            "speedups must be strictly positive".into(),
        ));
    }
    let total: Share = speedups.iter().sum();
    Ok(speedups
        .iter()
        .map(|s| Share::from_integer(100) * s / total)
        .collect())
}

/// Largest-remainder apportionment of `height` rows over exact shares.
pub fn apportion_rows(shares: &[Share], height: usize) -> Result<Vec<usize>> {
    if shares.is_empty() {
        return Err(Error::InvalidArgument("no shares given".into()));
    }
    if shares.iter().any(|s| *s <= Share::from_integer(0)) {
        return Err(Error::InvalidArgument("shares must be strictly positive".into()));
    }
    let total: Share = shares.iter().sum();
    let quotas: Vec<Share> = shares
        .iter()
        .map(|s| Share::from_integer(height as u64) * s / total)
        .collect();
    let mut rows: Vec<usize> = quotas.iter().map(|q| q.to_integer() as usize).collect();
    let assigned: usize = rows.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    // Largest fractional part first; ties go to the earlier strip.
    order.sort_by(|&a, &b| {
        let fa = quotas[a].fract();
        let fb = quotas[b].fract();
        fb.cmp(&fa).then(a.cmp(&b))
    });
    for i in 0..height - assigned {
        rows[order[i % order.len()]] += 1;
    }
    Ok(rows)
}

/// An operation that can run strip by strip: slicing, per-tile execution,
/// write-back, and the seam correction pass.
pub trait TileOperation: Sync {
    type Tile: Send;

    /// Stage 1: extract the rows of one strip as a self-contained tile.
    fn slice(&self, rows: Range<usize>) -> Self::Tile;

    /// Stage 2: run one tile to its local fixpoint using only its own data.
    fn run_tile(
        &self,
        tile: &mut Self::Tile,
        variant: EngineVariant,
        kind: QueueKind,
        threads: usize,
    ) -> Result<RunStats>;

    /// Stage 3: write a finished tile back into the full state.
    fn merge(&mut self, tile: Self::Tile, row_start: usize) -> Result<()>;

    /// Stage 4: seed every condition-true pair across the given seams and
    /// run the engine to the global fixpoint.
    fn correct_seams(
        &mut self,
        seams: &[usize],
        variant: EngineVariant,
        kind: QueueKind,
    ) -> Result<RunStats>;
}

/// Runs the four-stage tiled pipeline. Tile tasks go through a shared queue;
/// each worker of the plan's pool consumes the tasks assigned to it, with
/// the worker's configured thread count inside each tile run. The final
/// state equals the untiled run exactly.
pub fn run_tiled<T: TileOperation>(
    op: &mut T,
    plan: &TilePlan,
    variant: EngineVariant,
    kind: QueueKind,
) -> Result<RunStats> {
    let total = Instant::now();

    // Stage 1: slice.
    let tiles: Vec<T::Tile> = plan.strips().iter().map(|s| op.slice(s.rows())).collect();

    // Stage 2: task queue consumed by the worker pool.
    let tasks: Mutex<VecDeque<usize>> = Mutex::new((0..tiles.len()).collect());
    let slots: Vec<Mutex<Option<(T::Tile, Result<RunStats>)>>> =
        tiles.into_iter().map(|t| Mutex::new(Some((t, Ok(RunStats::default()))))).collect();

    std::thread::scope(|scope| {
        for (w, spec) in plan.workers().iter().enumerate() {
            let tasks = &tasks;
            let slots = &slots;
            let op_ref: &T = op;
            let strips = plan.strips();
            let threads = spec.threads;
            scope.spawn(move || loop {
                let task = {
                    let mut q = tasks.lock().unwrap();
                    let pos = q.iter().position(|&t| strips[t].worker == w);
                    match pos {
                        Some(p) => q.remove(p).unwrap(),
                        None => break,
                    }
                };
                let mut slot = slots[task].lock().unwrap();
                let (tile, result) = slot.as_mut().unwrap();
                *result = op_ref.run_tile(tile, variant, kind, threads);
            });
        }
    });

    // Stage 3: merge.
    let mut stats = RunStats::default();
    for (i, slot) in slots.into_iter().enumerate() {
        let (tile, result) = slot.into_inner().unwrap().unwrap();
        stats.merge_parallel(&result?);
        op.merge(tile, plan.strips()[i].row_start)?;
    }

    // Stage 4: border correction.
    let correction = op.correct_seams(&plan.seams(), variant, kind)?;
    stats.merge_sequential(&correction);
    stats.total_ms = total.elapsed().as_millis() as u64;
    Ok(stats)
}
