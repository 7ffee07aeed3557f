use std::fmt;

use crate::model::StateId;

pub type BlockId = usize;

/// Refinable partition of `0..n`.
///
/// Every block occupies a contiguous slice of `state_order`; `position_of_state`
/// is the inverse permutation. Splitting a block only permutes its own slice, so
/// the cost of a split is proportional to the states that move.
#[derive(Clone)]
pub struct Partition {
    state_order: Vec<StateId>,
    slices: Vec<(usize, usize)>,
    block_of_state: Vec<BlockId>,
    position_of_state: Vec<usize>,
    generation: Vec<u32>,
}

impl Partition {
    /// One block holding every state.
    pub fn trivial(num_states: usize) -> Self {
        Self {
            state_order: (0..num_states).collect(),
            slices: if num_states == 0 { vec![] } else { vec![(0, num_states)] },
            block_of_state: vec![0; num_states],
            position_of_state: (0..num_states).collect(),
            generation: if num_states == 0 { vec![] } else { vec![0] },
        }
    }

    /// Builds a partition from per-state class labels.
    ///
    /// Block ids are assigned in order of first occurrence, so `0` is the
    /// block of state `0`.
    pub fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        let mut relabel = std::collections::HashMap::new();
        let mut block_of_state = Vec::with_capacity(n);
        for &l in labels {
            let next = relabel.len();
            block_of_state.push(*relabel.entry(l).or_insert(next));
        }
        let num_blocks = relabel.len();
        let mut sizes = vec![0usize; num_blocks];
        for &b in &block_of_state {
            sizes[b] += 1;
        }
        let mut slices = Vec::with_capacity(num_blocks);
        let mut start = 0;
        for &sz in &sizes {
            slices.push((start, start + sz));
            start += sz;
        }
        let mut fill: Vec<usize> = slices.iter().map(|s| s.0).collect();
        let mut state_order = vec![0; n];
        let mut position_of_state = vec![0; n];
        for (s, &b) in block_of_state.iter().enumerate() {
            state_order[fill[b]] = s;
            position_of_state[s] = fill[b];
            fill[b] += 1;
        }
        Self {
            state_order,
            slices,
            block_of_state,
            position_of_state,
            generation: vec![0; num_blocks],
        }
    }

    pub fn num_states(&self) -> usize {
        self.block_of_state.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.slices.len()
    }

    pub fn block_of(&self, s: StateId) -> BlockId {
        self.block_of_state[s]
    }

    /// Block membership indexed by state.
    pub fn block_of_state(&self) -> &[BlockId] {
        &self.block_of_state
    }

    /// States of block `b` (in no particular order).
    pub fn block(&self, b: BlockId) -> &[StateId] {
        let (start, end) = self.slices[b];
        &self.state_order[start..end]
    }

    pub fn block_size(&self, b: BlockId) -> usize {
        let (start, end) = self.slices[b];
        end - start
    }

    /// Bumped every time `b` is split.
    pub fn generation(&self, b: BlockId) -> u32 {
        self.generation[b]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[StateId]> + '_ {
        (0..self.num_blocks()).map(move |b| self.block(b))
    }

    /// Blocks as sorted state lists, sorted by their smallest state.
    pub fn canonical_blocks(&self) -> Vec<Vec<StateId>> {
        let mut out: Vec<Vec<StateId>> = self
            .blocks()
            .map(|b| {
                let mut v = b.to_vec();
                v.sort_unstable();
                v
            })
            .collect();
        out.sort();
        out
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn is_finer_than(&self, coarser: &Partition) -> bool {
        self.num_states() == coarser.num_states()
            && self.blocks().all(|b| {
                let owner = coarser.block_of(b[0]);
                b.iter().all(|&s| coarser.block_of(s) == owner)
            })
    }

    /// Sorts the slice of `b` ascending by state id.
    pub(crate) fn sort_block(&mut self, b: BlockId) {
        let (start, end) = self.slices[b];
        let slice = &mut self.state_order[start..end];
        slice.sort_unstable();
        for (i, &s) in slice.iter().enumerate() {
            self.position_of_state[s] = start + i;
        }
    }

    /// Splits `b`.
    ///
    /// `touched` lists a subset of the block's states arranged group by group,
    /// with `group_sizes` giving the length of each group. States of `b` not
    /// in `touched` form the residual child. The residual (or, if it is empty,
    /// the first group) keeps the id `b`; other children get fresh ids in
    /// order. Returns the children with their sizes, or `None` if the block
    /// would not change.
    pub(crate) fn split_block(
        &mut self,
        b: BlockId,
        touched: &[StateId],
        group_sizes: &[usize],
    ) -> Option<Vec<(BlockId, usize)>> {
        let (start, end) = self.slices[b];
        let k = touched.len();
        debug_assert_eq!(group_sizes.iter().sum::<usize>(), k);
        let residual = end - start - k;
        if residual == 0 && group_sizes.len() <= 1 {
            return None;
        }

        let mut tail = end;
        for &s in touched {
            debug_assert_eq!(self.block_of_state[s], b);
            tail -= 1;
            let p = self.position_of_state[s];
            let other = self.state_order[tail];
            self.state_order.swap(p, tail);
            self.position_of_state[other] = p;
            self.position_of_state[s] = tail;
        }
        let base = end - k;
        for (i, &s) in touched.iter().enumerate() {
            self.state_order[base + i] = s;
            self.position_of_state[s] = base + i;
        }

        self.generation[b] += 1;
        let mut children = Vec::with_capacity(group_sizes.len() + 1);
        let mut cursor = start;
        let mut reuse_parent = true;
        if residual > 0 {
            self.slices[b] = (start, base);
            children.push((b, residual));
            cursor = base;
            reuse_parent = false;
        }
        for &sz in group_sizes {
            let id = if reuse_parent {
                reuse_parent = false;
                self.slices[b] = (cursor, cursor + sz);
                b
            } else {
                let id = self.slices.len();
                self.slices.push((cursor, cursor + sz));
                self.generation.push(0);
                for &s in &self.state_order[cursor..cursor + sz] {
                    self.block_of_state[s] = id;
                }
                id
            };
            children.push((id, sz));
            cursor += sz;
        }
        Some(children)
    }

    /// Full consistency walk; returns a description of the first violation.
    pub fn audit(&self) -> Result<(), String> {
        let n = self.num_states();
        if self.state_order.len() != n || self.position_of_state.len() != n {
            return Err("array lengths disagree".into());
        }
        let mut covered = 0;
        let mut seen = vec![false; n];
        for (b, &(start, end)) in self.slices.iter().enumerate() {
            if start >= end {
                return Err(format!("block {b} is empty"));
            }
            for pos in start..end {
                let s = self.state_order[pos];
                if seen[s] {
                    return Err(format!("state {s} appears twice"));
                }
                seen[s] = true;
                if self.position_of_state[s] != pos {
                    return Err(format!("position of state {s} is stale"));
                }
                if self.block_of_state[s] != b {
                    return Err(format!("state {s} lies in the slice of {b} but maps to {}", self.block_of_state[s]));
                }
            }
            covered += end - start;
        }
        if covered != n {
            return Err(format!("blocks cover {covered} of {n} states"));
        }
        Ok(())
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.canonical_blocks()).finish()
    }
}

/// True iff both partitions induce the same equivalence relation.
pub fn partitions_equal(a: &Partition, b: &Partition) -> bool {
    if a.num_states() != b.num_states() || a.num_blocks() != b.num_blocks() {
        return false;
    }
    let mut map = vec![usize::MAX; a.num_blocks()];
    for s in 0..a.num_states() {
        let (x, y) = (a.block_of(s), b.block_of(s));
        if map[x] == usize::MAX {
            map[x] = y;
        } else if map[x] != y {
            return false;
        }
    }
    true
}
