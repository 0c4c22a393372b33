//! Wavefront propagation engines, generic over a propagation operator.
//!
//! Three variants produce the same fixpoint:
//!
//! * [`run_classic`]: push-style — a popped element writes into every
//!   neighbor that satisfies the condition and enqueues it.
//! * [`run_two_phase`]: the identification phase only enqueues receivers;
//!   the propagation phase lets each receiver recompute itself from its full
//!   neighborhood and write **only its own cell**. Stale or duplicate queue
//!   entries become harmless re-checks, which is what lets many workers share
//!   one state image with no atomic read-modify-write.
//! * [`run_two_phase_batched`]: the same two phases with the 16-lane kernel:
//!   identification gathers a popped element's whole neighborhood at once and
//!   batch-appends the receivers selected by the condition mask; propagation
//!   consumes two pixels per step, packing each one's 8-neighborhood into
//!   half the batch.

use std::time::Instant;

use crate::grid::{Addr, CellView, Image2D, Neighborhood};
use crate::lanes::{self, Dir, LaneBatch, LaneMask};
use crate::pixelqueue::{QueueKind, WaveQueue};
use crate::{Error, Result};

/// Engine flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineVariant {
    Classic,
    TwoPhase,
    TwoPhaseBatched,
}

/// Counters and timings of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    /// Entries pushed into a wave queue (seeds included).
    pub elements_identified: u64,
    /// Entries popped in a propagation phase.
    pub elements_propagated: u64,
    /// Wave generations (outer loop passes).
    pub iterations: u64,
    pub init_ms: u64,
    pub prop_ms: u64,
    pub total_ms: u64,
}

impl RunStats {
    /// Accumulates element counters; wall times take the maximum, as for
    /// workers that ran side by side.
    pub fn merge_parallel(&mut self, other: &RunStats) {
        self.elements_identified += other.elements_identified;
        self.elements_propagated += other.elements_propagated;
        self.iterations = self.iterations.max(other.iterations);
        self.init_ms = self.init_ms.max(other.init_ms);
        self.prop_ms = self.prop_ms.max(other.prop_ms);
        self.total_ms = self.total_ms.max(other.total_ms);
    }

    /// Accumulates counters and times of a stage that ran after `self`.
    pub fn merge_sequential(&mut self, other: &RunStats) {
        self.elements_identified += other.elements_identified;
        self.elements_propagated += other.elements_propagated;
        self.iterations += other.iterations;
        self.init_ms += other.init_ms;
        self.prop_ms += other.prop_ms;
        self.total_ms += other.total_ms;
    }
}

/// A propagation operator: the condition under which a donor improves a
/// receiver, the state merge itself, and the priority key of a candidate.
///
/// `absorb` must be monotone (the receiver never moves against `direction`)
/// and idempotent; `condition` must be false whenever the donor cannot
/// improve the receiver, and in particular for a receiver against itself and
/// for any frame cell as receiver.
pub trait PropagationOperator: Sync {
    /// Whether states move toward larger or smaller values.
    fn direction(&self) -> Dir;

    /// True when the donor state can improve the receiver.
    fn condition(&self, receiver: Addr, receiver_state: u32, donor_state: u32) -> bool;

    /// The receiver's new state after absorbing one donor.
    fn absorb(&self, receiver: Addr, receiver_state: u32, donor_state: u32) -> u32;

    /// Commutative merge of two candidate states for the same cell; the
    /// default keeps the extremum in the operator's direction. Overridden
    /// when states are not ordered by value.
    fn merge_states(&self, receiver: Addr, a: u32, b: u32) -> u32 {
        let _ = receiver;
        match self.direction() {
            Dir::Max => a.max(b),
            Dir::Min => a.min(b),
        }
    }

    /// Priority of a receiver that would move to `candidate`.
    fn priority_key(&self, receiver: Addr, candidate: u32) -> u32 {
        let _ = receiver;
        candidate
    }

    /// The receiver's new state after absorbing its whole neighborhood.
    fn pull_merge(&self, receiver: Addr, receiver_state: u32, neighbor_states: &[u32]) -> u32 {
        neighbor_states
            .iter()
            .fold(receiver_state, |acc, &s| self.absorb(receiver, acc, s))
    }

    /// True when the operator's condition can run on 32-bit lanes; required
    /// by the batched engine.
    fn supports_lanes(&self) -> bool {
        false
    }

    /// Condition mask for 16 receiver candidates of one donor.
    fn lane_condition(
        &self,
        donor_state: u32,
        receiver_addrs: &LaneBatch,
        receiver_states: &LaneBatch,
    ) -> LaneMask {
        let _ = (donor_state, receiver_addrs, receiver_states);
        unimplemented!("operator does not support the batched engine")
    }

    /// Per-lane priority keys for the candidates selected by
    /// [`PropagationOperator::lane_condition`].
    fn lane_priority_keys(
        &self,
        donor_state: u32,
        receiver_addrs: &LaneBatch,
        receiver_states: &LaneBatch,
    ) -> LaneBatch {
        let _ = (receiver_addrs, receiver_states);
        LaneBatch::splat(donor_state)
    }
}

#[inline]
fn identity_for(dir: Dir) -> u32 {
    match dir {
        Dir::Max => 0,
        Dir::Min => u32::MAX,
    }
}

/// Classic push-style engine: pops an element, tests each neighbor, writes
/// improvements into the neighbors and enqueues them. Runs until the queue
/// is empty; the result is the operator's fixpoint.
pub fn run_classic<O: PropagationOperator>(
    state: &mut Image2D,
    mut seeds: WaveQueue,
    op: &O,
    nb: &Neighborhood,
) -> RunStats {
    let start = Instant::now();
    let view = state.view();
    let mut stats = RunStats {
        elements_identified: seeds.pushes(),
        ..RunStats::default()
    };
    while let Some((p, _)) = seeds.pop() {
        stats.elements_propagated += 1;
        stats.iterations += 1;
        let donor = view.get(p);
        for q in nb.neighbors_of(p) {
            let receiver = view.get(q);
            if op.condition(q, receiver, donor) {
                let new = op.absorb(q, receiver, donor);
                view.set(q, new);
                seeds.push(q, op.priority_key(q, new));
                stats.elements_identified += 1;
            }
        }
    }
    stats.prop_ms = start.elapsed().as_millis() as u64;
    stats.total_ms = stats.prop_ms;
    stats
}

/// Two-phase engine over a shared cell view; the caller owns seeding.
pub fn run_two_phase_on<O: PropagationOperator>(
    view: &CellView<'_>,
    mut current: WaveQueue,
    op: &O,
    nb: &Neighborhood,
) -> RunStats {
    let start = Instant::now();
    let mut stats = RunStats {
        elements_identified: current.pushes(),
        ..RunStats::default()
    };
    let mut next = current.like();
    let mut neighbor_states = [0u32; 8];
    let n = nb.offsets().len();

    while !current.is_empty() {
        stats.iterations += 1;

        // Identification: wave elements act as donors; every receiver whose
        // condition holds is enqueued with the key of its candidate value.
        while let Some((p, _)) = current.pop() {
            let donor = view.get(p);
            for q in nb.neighbors_of(p) {
                let receiver = view.get(q);
                if op.condition(q, receiver, donor) {
                    let candidate = op.absorb(q, receiver, donor);
                    next.push(q, op.priority_key(q, candidate));
                    stats.elements_identified += 1;
                }
            }
        }

        // Propagation: each receiver recomputes itself from its full
        // neighborhood and writes only its own cell. Draining into `current`
        // makes the propagated wave the next identification wave and leaves
        // `next` empty.
        while let Some((q, key)) = next.pop() {
            stats.elements_propagated += 1;
            for (i, r) in nb.neighbors_of(q).enumerate() {
                neighbor_states[i] = view.get(r);
            }
            let cur = view.get(q);
            let candidate = op.pull_merge(q, cur, &neighbor_states[..n]);
            // Merge once more against the live cell: under concurrent
            // writers the store keeps whichever value is further along.
            let merged = op.merge_states(q, view.get(q), candidate);
            view.set(q, merged);
            current.push(q, key);
        }
    }
    stats.prop_ms = start.elapsed().as_millis() as u64;
    stats.total_ms = stats.prop_ms;
    stats
}

/// Two-phase scalar engine on a whole image.
pub fn run_two_phase<O: PropagationOperator>(
    state: &mut Image2D,
    seeds: WaveQueue,
    op: &O,
    nb: &Neighborhood,
) -> RunStats {
    let view = state.view();
    run_two_phase_on(&view, seeds, op, nb)
}

/// Batched two-phase engine over a shared cell view.
///
/// Falls back to the scalar loop for 4-connectivity, where half-empty lanes
/// buy nothing. Operators without lane support are rejected.
pub fn run_two_phase_batched_on<O: PropagationOperator>(
    view: &CellView<'_>,
    mut current: WaveQueue,
    op: &O,
    nb: &Neighborhood,
) -> Result<RunStats> {
    if !op.supports_lanes() {
        return Err(Error::UnsupportedOperator);
    }
    if nb.offsets().len() != 8 {
        return Ok(run_two_phase_on(view, current, op, nb));
    }

    let start = Instant::now();
    let mut stats = RunStats {
        elements_identified: current.pushes(),
        ..RunStats::default()
    };
    let mut next = current.like();
    let priority = current.kind() == QueueKind::Priority;
    let dir = op.direction();
    let identity = identity_for(dir);

    while !current.is_empty() {
        stats.iterations += 1;

        // Identification: gather the popped donor's neighborhood, turn the
        // condition into a 16-bit mask, prefix-sum it and scatter the
        // selected receivers into the next wave in one append.
        while let Some((p, _)) = current.pop() {
            let donor = view.get(p);
            let addrs = lanes::shift_offsets(p, nb);
            let states = lanes::gather_view(view, &addrs);
            let mask = op.lane_condition(donor, &addrs, &states);
            let prefix = lanes::prefix_sum16(mask);
            let keys = if priority {
                op.lane_priority_keys(donor, &addrs, &states)
            } else {
                LaneBatch::splat(0)
            };
            stats.elements_identified += next.batch_append(&addrs, &keys, mask, &prefix) as u64;
        }

        // Propagation: two receivers per step, each pulling its neighborhood
        // from half of a single gathered batch. An odd tail duplicates the
        // last pixel into the upper half; the duplicate halves read the same
        // snapshot, so processing the copy twice cannot diverge.
        while let Some((p1, k1)) = next.pop() {
            stats.elements_propagated += 1;
            let second = next.pop();
            if second.is_some() {
                stats.elements_propagated += 1;
            }
            let (p2, k2) = second.unwrap_or((p1, k1));

            let addrs = lanes::shift_offsets_pair(p1, p2, nb);
            let states = lanes::gather_view(view, &addrs);

            let ext1 = lanes::reduce_extremum(&states, LaneMask::LOW_HALF, dir, identity);
            let new1 = op.absorb(p1, view.get(p1), ext1);
            view.set(p1, new1);
            current.push(p1, k1);

            let ext2 = lanes::reduce_extremum(&states, LaneMask::HIGH_HALF, dir, identity);
            let new2 = op.absorb(p2, view.get(p2), ext2);
            view.set(p2, new2);
            if second.is_some() {
                current.push(p2, k2);
            }
        }
    }
    stats.prop_ms = start.elapsed().as_millis() as u64;
    stats.total_ms = stats.prop_ms;
    Ok(stats)
}

/// Batched two-phase engine on a whole image.
pub fn run_two_phase_batched<O: PropagationOperator>(
    state: &mut Image2D,
    seeds: WaveQueue,
    op: &O,
    nb: &Neighborhood,
) -> Result<RunStats> {
    let view = state.view();
    run_two_phase_batched_on(&view, seeds, op, nb)
}

/// Runs the requested engine variant.
pub fn run<O: PropagationOperator>(
    state: &mut Image2D,
    seeds: WaveQueue,
    op: &O,
    nb: &Neighborhood,
    variant: EngineVariant,
) -> Result<RunStats> {
    match variant {
        EngineVariant::Classic => Ok(run_classic(state, seeds, op, nb)),
        EngineVariant::TwoPhase => Ok(run_two_phase(state, seeds, op, nb)),
        EngineVariant::TwoPhaseBatched => run_two_phase_batched(state, seeds, op, nb),
    }
}

/// Full-image sweep verifying the fixpoint: no pair (receiver, donor in its
/// neighborhood) may still satisfy the condition. Returns the first
/// violating pair, if any.
pub fn find_condition_violation<O: PropagationOperator>(
    state: &Image2D,
    op: &O,
    nb: &Neighborhood,
) -> Option<(Addr, Addr)> {
    for p in state.scan_raster() {
        let donor = state.get(p);
        for q in nb.neighbors_of(p) {
            if op.condition(q, state.get(q), donor) {
                return Some((q, p));
            }
        }
    }
    None
}
