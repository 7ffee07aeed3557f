//! Pending-splitter containers.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::refine::{BlockId, Partition};

/// A block as it was when enqueued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SplitterRef {
    pub block: BlockId,
    pub generation: u32,
}

impl SplitterRef {
    /// True once the block has been split since this reference was taken.
    pub fn is_stale(&self, partition: &Partition) -> bool {
        partition.generation(self.block) != self.generation
    }
}

/// Which container orders pending splitters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Uniformly random live entry.
    Random,
    /// First in, first out.
    Fifo,
    /// Smallest enqueue-time size first (binary heap).
    SizeHeap,
    /// Two FIFO queues for small blocks, heap for the rest.
    SizeHybrid,
}

type HeapEntry = Reverse<(usize, u64, BlockId, u32)>;

enum Pending {
    Random(Vec<SplitterRef>, ChaCha8Rng),
    Fifo(VecDeque<SplitterRef>),
    Heap(BinaryHeap<HeapEntry>),
    Hybrid {
        small: VecDeque<SplitterRef>,
        medium: VecDeque<SplitterRef>,
        heap: BinaryHeap<HeapEntry>,
    },
}

/// Worklist of splitter candidates with staleness detection.
///
/// A block is pending at most once per generation. Popping skips references
/// whose block was split after they were enqueued.
pub struct SplitterSchedule {
    pending: Pending,
    live: Vec<Option<u32>>,
    seq: u64,
    small_max: usize,
    medium_max: usize,
    enqueues: u64,
    stale_skips: u64,
}

/// `(⌈log₂ n⌉, ⌈c·log₂ n⌉)`.
pub fn hybrid_thresholds(num_states: usize, c: f64) -> (usize, usize) {
    let lg = (num_states.max(1) as f64).log2();
    (lg.ceil() as usize, (c * lg).ceil() as usize)
}

impl SplitterSchedule {
    pub fn new(kind: ScheduleKind, num_states: usize, seed: u64, hybrid_c: f64) -> Self {
        let pending = match kind {
            ScheduleKind::Random => Pending::Random(Vec::new(), ChaCha8Rng::seed_from_u64(seed)),
            ScheduleKind::Fifo => Pending::Fifo(VecDeque::new()),
            ScheduleKind::SizeHeap => Pending::Heap(BinaryHeap::new()),
            ScheduleKind::SizeHybrid => Pending::Hybrid {
                small: VecDeque::new(),
                medium: VecDeque::new(),
                heap: BinaryHeap::new(),
            },
        };
        let (small_max, medium_max) = hybrid_thresholds(num_states, hybrid_c);
        Self {
            pending,
            live: Vec::new(),
            seq: 0,
            small_max,
            medium_max,
            enqueues: 0,
            stale_skips: 0,
        }
    }

    pub fn thresholds(&self) -> (usize, usize) {
        (self.small_max, self.medium_max)
    }

    pub fn enqueues(&self) -> u64 {
        self.enqueues
    }

    pub fn stale_skips(&self) -> u64 {
        self.stale_skips
    }

    /// True if `(block, generation)` is waiting in the schedule.
    pub fn is_pending(&self, block: BlockId, generation: u32) -> bool {
        self.live.get(block).copied().flatten() == Some(generation)
    }

    /// Enqueues `block` at its current generation; returns false if it is
    /// already pending.
    pub fn push(&mut self, partition: &Partition, block: BlockId) -> bool {
        let r = SplitterRef {
            block,
            generation: partition.generation(block),
        };
        let size = partition.block_size(block);
        if block >= self.live.len() {
            self.live.resize(block + 1, None);
        }
        if self.live[block] == Some(r.generation) {
            return false;
        }
        self.live[block] = Some(r.generation);
        self.enqueues += 1;
        self.seq += 1;
        let entry = Reverse((size, self.seq, r.block, r.generation));
        match &mut self.pending {
            Pending::Random(v, _) => v.push(r),
            Pending::Fifo(q) => q.push_back(r),
            Pending::Heap(h) => h.push(entry),
            Pending::Hybrid { small, medium, heap } => {
                if size <= self.small_max {
                    small.push_back(r);
                } else if size <= self.medium_max {
                    medium.push_back(r);
                } else {
                    heap.push(entry);
                }
            }
        }
        true
    }

    fn take(&mut self) -> Option<SplitterRef> {
        let from_heap = |h: &mut BinaryHeap<HeapEntry>| {
            h.pop().map(|Reverse((_, _, block, generation))| SplitterRef { block, generation })
        };
        match &mut self.pending {
            Pending::Random(v, rng) => {
                if v.is_empty() {
                    None
                } else {
                    let i = rng.gen_range(0..v.len());
                    Some(v.swap_remove(i))
                }
            }
            Pending::Fifo(q) => q.pop_front(),
            Pending::Heap(h) => from_heap(h),
            Pending::Hybrid { small, medium, heap } => small
                .pop_front()
                .or_else(|| medium.pop_front())
                .or_else(|| from_heap(heap)),
        }
    }

    /// Next live splitter, or `None` when nothing live remains.
    pub fn pop(&mut self, partition: &Partition) -> Option<SplitterRef> {
        while let Some(r) = self.take() {
            if self.live[r.block] == Some(r.generation) {
                self.live[r.block] = None;
            }
            if r.is_stale(partition) {
                self.stale_skips += 1;
                continue;
            }
            return Some(r);
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sized_blocks(sizes: &[usize]) -> Partition {
        let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &n)| std::iter::repeat(b).take(n)).collect();
        Partition::from_labels(&labels)
    }

    #[test]
    fn heap_pops_smallest_first() {
        let p = sized_blocks(&[5, 2, 9]);
        let mut s = SplitterSchedule::new(ScheduleKind::SizeHeap, p.num_states(), 0, 8.0);
        for b in 0..3 {
            assert!(s.push(&p, b));
        }
        let sizes: Vec<usize> = std::iter::from_fn(|| s.pop(&p)).map(|r| p.block_size(r.block)).collect();
        assert_eq!(sizes, vec![2, 5, 9]);
    }

    #[test]
    fn stale_refs_are_skipped() {
        let mut p = Partition::trivial(4);
        let mut s = SplitterSchedule::new(ScheduleKind::Fifo, 4, 0, 8.0);
        s.push(&p, 0);
        p.split_block(0, &[3], &[1]).unwrap();
        assert!(s.pop(&p).is_none());
        assert_eq!(s.stale_skips(), 1);
        assert!(s.stale_skips() <= s.enqueues());
    }

    #[test]
    fn duplicate_push_is_ignored() {
        let p = Partition::trivial(3);
        let mut s = SplitterSchedule::new(ScheduleKind::Random, 3, 1, 8.0);
        assert!(s.push(&p, 0));
        assert!(!s.push(&p, 0));
        assert!(s.is_pending(0, 0));
        assert!(s.pop(&p).is_some());
        assert!(!s.is_pending(0, 0));
        assert!(s.pop(&p).is_none());
    }

    #[test]
    fn hybrid_routing() {
        assert_eq!(hybrid_thresholds(1024, 8.0), (10, 80));
        let p = sized_blocks(&[100, 50, 10, 1, 81, 80]);
        let mut s = SplitterSchedule::new(ScheduleKind::SizeHybrid, 1024, 0, 8.0);
        for b in 0..p.num_blocks() {
            s.push(&p, b);
        }
        let sizes: Vec<usize> = std::iter::from_fn(|| s.pop(&p)).map(|r| p.block_size(r.block)).collect();
        // small queue (FIFO), medium queue (FIFO), then heap by size
        assert_eq!(sizes, vec![10, 1, 50, 80, 81, 100]);
    }

    #[test]
    fn random_is_seeded() {
        let p = sized_blocks(&[1; 20]);
        let run = |seed| {
            let mut s = SplitterSchedule::new(ScheduleKind::Random, 20, seed, 8.0);
            for b in 0..20 {
                s.push(&p, b);
            }
            std::iter::from_fn(|| s.pop(&p)).map(|r| r.block).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
        let mut all = run(3);
        all.sort();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
    }
}
