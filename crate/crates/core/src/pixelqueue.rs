//! Wavefront containers: a FIFO queue and a priority (heap) queue behind one
//! interface, with the masked batch append used by the batched kernel.
//!
//! Entries are (address, key) pairs. Keys are captured at insertion and never
//! updated; a stale key is corrected by the identification re-check, not by
//! the queue. Each instance is single-owner: one thread pushes and pops it,
//! though instances may move between threads at phase boundaries.

use std::collections::{BinaryHeap, VecDeque};

use crate::grid::Addr;
use crate::lanes::{self, Dir, LaneBatch, LaneMask};

/// Queue discipline for wavefront extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueKind {
    Fifo,
    /// Extraction by key: max-first for maximization operators, min-first
    /// for minimization.
    Priority,
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    /// Key transformed so the std max-heap pops in the operator's direction.
    ord: u32,
    addr: Addr,
    key: u32,
}

// Ordering looks at the transformed key only; extraction order among equal
// keys is unspecified.
impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.ord == other.ord
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.ord.cmp(&other.ord)
    }
}

enum Store {
    Fifo(VecDeque<(Addr, u32)>),
    Priority { heap: BinaryHeap<HeapEntry>, dir: Dir },
}

/// A wavefront queue.
pub struct WaveQueue {
    store: Store,
    pushes: u64,
    pops: u64,
}

impl WaveQueue {
    /// An empty queue; priority queues extract max-first for `Dir::Max` and
    /// min-first for `Dir::Min`.
    pub fn new(kind: QueueKind, dir: Dir) -> Self {
        let store = match kind {
            QueueKind::Fifo => Store::Fifo(VecDeque::new()),
            QueueKind::Priority => Store::Priority {
                heap: BinaryHeap::new(),
                dir,
            },
        };
        WaveQueue {
            store,
            pushes: 0,
            pops: 0,
        }
    }

    /// An empty queue with the same kind and direction as `self`.
    pub fn like(&self) -> Self {
        WaveQueue::new(self.kind(), self.dir())
    }

    pub fn kind(&self) -> QueueKind {
        match self.store {
            Store::Fifo(_) => QueueKind::Fifo,
            Store::Priority { .. } => QueueKind::Priority,
        }
    }

    fn dir(&self) -> Dir {
        match self.store {
            Store::Fifo(_) => Dir::Max,
            Store::Priority { dir, .. } => dir,
        }
    }

    #[inline]
    fn ord_key(key: u32, dir: Dir) -> u32 {
        match dir {
            Dir::Max => key,
            // Bitwise complement reverses the unsigned order, so the std
            // max-heap pops the minimum key first.
            Dir::Min => !key,
        }
    }

    #[inline]
    pub fn push(&mut self, addr: Addr, key: u32) {
        self.pushes += 1;
        match &mut self.store {
            Store::Fifo(ring) => ring.push_back((addr, key)),
            Store::Priority { heap, dir } => heap.push(HeapEntry {
                ord: Self::ord_key(key, *dir),
                addr,
                key,
            }),
        }
    }

    #[inline]
    pub fn pop(&mut self) -> Option<(Addr, u32)> {
        let entry = match &mut self.store {
            Store::Fifo(ring) => ring.pop_front(),
            Store::Priority { heap, .. } => heap.pop().map(|e| (e.addr, e.key)),
        };
        if entry.is_some() {
            self.pops += 1;
        }
        entry
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn len(&self) -> usize {
        match &self.store {
            Store::Fifo(ring) => ring.len(),
            Store::Priority { heap, .. } => heap.len(),
        }
    }

    /// Total entries ever pushed.
    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    /// Total entries ever popped.
    pub fn pops(&self) -> u64 {
        self.pops
    }

    /// Appends the lanes of `addrs` whose mask bit is set, in ascending lane
    /// order, so lane i lands `prefix[i]` slots past the old tail. `prefix`
    /// must be the inclusive prefix sum of the mask bits; `keys` lane i is
    /// the priority of `addrs` lane i. Returns the number appended.
    pub fn batch_append(
        &mut self,
        addrs: &LaneBatch,
        keys: &LaneBatch,
        mask: LaneMask,
        prefix: &LaneBatch,
    ) -> u8 {
        debug_assert_eq!(
            prefix.0,
            lanes::scalar::prefix_scan_oracle(mask).0,
            "prefix vector inconsistent with mask"
        );
        let count = lanes::popcount(mask);
        match &mut self.store {
            Store::Fifo(ring) => {
                let tail = ring.len();
                ring.resize(tail + count as usize, (0, 0));
                for i in 0..lanes::LANES {
                    if mask.bit(i) {
                        // Scatter: inclusive prefix positions are 1-based.
                        let slot = tail + prefix.lane(i) as usize - 1;
                        ring[slot] = (addrs.lane(i), keys.lane(i));
                    }
                }
            }
            Store::Priority { heap, dir } => {
                let dir = *dir;
                for i in 0..lanes::LANES {
                    if mask.bit(i) {
                        heap.push(HeapEntry {
                            ord: Self::ord_key(keys.lane(i), dir),
                            addr: addrs.lane(i),
                            key: keys.lane(i),
                        });
                    }
                }
            }
        }
        self.pushes += count as u64;
        count
    }

    /// Drains every entry in extraction order.
    pub fn drain_all(&mut self) -> Vec<(Addr, u32)> {
        let mut out = Vec::with_capacity(self.len());
        while let Some(e) = self.pop() {
            out.push(e);
        }
        out
    }
}

/// Exchanges the contents (and counters) of the two queues, then clears any
/// entries left in `next`: afterwards `current` holds what `next` held and
/// `next` is empty.
pub fn swap(current: &mut WaveQueue, next: &mut WaveQueue) {
    std::mem::swap(current, next);
    match &mut next.store {
        Store::Fifo(ring) => ring.clear(),
        Store::Priority { heap, .. } => heap.clear(),
    }
}
