//! Quotient construction and stability auditing.
//!
//! A partition is stable when, for every block `B` and all `s, t ∈ B`, each
//! action of `s` is matched by an action of `t` with the same probability of
//! entering every block. [`check_stability`] tests exactly that condition by
//! comparing each state's set of block-lifted distributions.

mod oracle;

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{DeadlockPolicy, Distribution, ModelBuilder, ModelError, SparseModel, StateId};
use crate::num::Probability;
use crate::refine::{BlockId, BlockSplit, Partition};

pub use crate::refine::partitions_equal;
pub use oracle::oracle_bisimulation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuotientError {
    #[error("partition is not stable: block {block} ({state_s} vs {state_t}) is split by block {splitter}")]
    UnstablePartition {
        block: BlockId,
        splitter: BlockId,
        state_s: StateId,
        state_t: StateId,
    },
    #[error("block {block} mixes goal state {goal} and non-goal state {non_goal}")]
    MixedGoalBlock {
        block: BlockId,
        goal: StateId,
        non_goal: StateId,
    },
    #[error("partition covers {found} states but the model has {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Result of [`check_stability`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    /// `state_s` and `state_t` share `block` but differ with respect to `splitter`.
    Witness {
        block: BlockId,
        splitter: BlockId,
        state_s: StateId,
        state_t: StateId,
    },
}

impl Stability {
    pub fn is_stable(&self) -> bool {
        matches!(self, Stability::Stable)
    }
}

/// Block-lifted distribution, `(block, exact probability key)` sorted by block.
type Lifted = Vec<(BlockId, u64)>;

/// Computes lifted-distribution sets for all states against one partition.
struct Lifter<P> {
    acc: Vec<P>,
    stamp: Vec<u32>,
    epoch: u32,
    touched: Vec<BlockId>,
}

impl<P: Probability> Lifter<P> {
    fn new(num_blocks: usize) -> Self {
        Self {
            acc: vec![P::zero(); num_blocks],
            stamp: vec![0; num_blocks],
            epoch: 0,
            touched: Vec::new(),
        }
    }

    fn ensure(&mut self, num_blocks: usize) {
        if self.acc.len() < num_blocks {
            self.acc.resize(num_blocks, P::zero());
            self.stamp.resize(num_blocks, 0);
        }
    }

    /// `δ(s,a)[C]` for every block `C` the action reaches, sorted by block.
    /// Probabilities are summed in ascending target order.
    fn lift_action(&mut self, model: &SparseModel<P>, block_of: &[BlockId], a: usize) -> Vec<(BlockId, P)> {
        self.epoch += 1;
        self.touched.clear();
        for (t, p) in model.entries(a) {
            let b = block_of[t];
            if self.stamp[b] != self.epoch {
                self.stamp[b] = self.epoch;
                self.acc[b] = P::zero();
                self.touched.push(b);
            }
            self.acc[b] = self.acc[b] + p;
        }
        self.touched.sort_unstable();
        self.touched.iter().map(|&b| (b, self.acc[b])).collect()
    }

    fn signature(&mut self, model: &SparseModel<P>, block_of: &[BlockId], s: StateId) -> Vec<Lifted> {
        let mut sig: Vec<Lifted> = model
            .actions(s)
            .map(|a| {
                self.lift_action(model, block_of, a)
                    .into_iter()
                    .map(|(b, p)| (b, p.exact_key()))
                    .collect()
            })
            .collect();
        sig.sort_unstable();
        sig.dedup();
        sig
    }
}

fn signatures<P: Probability>(model: &SparseModel<P>, partition: &Partition) -> Vec<Vec<Lifted>> {
    let mut lifter = Lifter::new(partition.num_blocks());
    let block_of = partition.block_of_state();
    (0..model.num_states())
        .map(|s| lifter.signature(model, block_of, s))
        .collect()
}

/// Finds a block separating `s` and `t`, given that their signatures differ.
fn separating_block(sig_s: &[Lifted], sig_t: &[Lifted]) -> BlockId {
    let values = |sig: &[Lifted], c: BlockId| -> Vec<u64> {
        let mut v: Vec<u64> = sig
            .iter()
            .map(|d| d.iter().find(|(b, _)| *b == c).map_or(0, |&(_, k)| k))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut candidates: Vec<BlockId> = sig_s.iter().chain(sig_t).flatten().map(|&(b, _)| b).collect();
    candidates.sort_unstable();
    candidates.dedup();
    candidates
        .iter()
        .copied()
        .find(|&c| values(sig_s, c) != values(sig_t, c))
        .or_else(|| {
            // The per-block value sets agree; the difference is in how values pair up across blocks.
            sig_s
                .iter()
                .find(|d| !sig_t.contains(d))
                .or_else(|| sig_t.iter().find(|d| !sig_s.contains(d)))
                .and_then(|d| d.first().map(|&(b, _)| b))
        })
        .unwrap_or(0)
}

/// Checks the full bisimulation condition for `partition`.
pub fn check_stability<P: Probability>(model: &SparseModel<P>, partition: &Partition) -> Stability {
    let sigs = signatures(model, partition);
    for b in 0..partition.num_blocks() {
        let members = partition.block(b);
        let s = *members.iter().min().expect("blocks are nonempty");
        for &t in members {
            if sigs[t] != sigs[s] {
                return Stability::Witness {
                    block: b,
                    splitter: separating_block(&sigs[s], &sigs[t]),
                    state_s: s,
                    state_t: t,
                };
            }
        }
    }
    Stability::Stable
}

/// Splits every unstable block by full lifted signature.
///
/// Returns one entry per split block; empty iff the partition was stable.
pub(crate) fn split_unstable<P: Probability>(model: &SparseModel<P>, partition: &mut Partition) -> Vec<BlockSplit> {
    let sigs = signatures(model, partition);
    let mut splits = Vec::new();
    let num_blocks = partition.num_blocks();
    for b in 0..num_blocks {
        let mut members = partition.block(b).to_vec();
        members.sort_unstable();
        let mut group_of: HashMap<&[Lifted], usize> = HashMap::new();
        let group_ids: Vec<usize> = members
            .iter()
            .map(|&s| {
                let next = group_of.len();
                *group_of.entry(sigs[s].as_slice()).or_insert(next)
            })
            .collect();
        let k = group_of.len();
        if k > 1 {
            splits.extend(split_by_groups(partition, b, &members, &group_ids, k, true));
        }
    }
    splits
}

/// Moves `members` of block `b` into `k` children by `group_ids`.
/// With `whole`, `members` is the entire block and group 0 stays as the residual.
fn split_by_groups(
    partition: &mut Partition,
    b: BlockId,
    members: &[StateId],
    group_ids: &[usize],
    k: usize,
    whole: bool,
) -> Option<BlockSplit> {
    let mut sizes = vec![0usize; k];
    for &g in group_ids {
        sizes[g] += 1;
    }
    let mut offsets = Vec::with_capacity(k);
    let mut acc = 0;
    for &sz in &sizes {
        offsets.push(acc);
        acc += sz;
    }
    let mut ordered = vec![0; members.len()];
    for (&s, &g) in members.iter().zip(group_ids) {
        ordered[offsets[g]] = s;
        offsets[g] += 1;
    }
    let (moved, moved_sizes) = if whole {
        (&ordered[sizes[0]..], &sizes[1..])
    } else {
        (&ordered[..], &sizes[..])
    };
    let generation = partition.generation(b);
    let children = partition.split_block(b, moved, moved_sizes)?;
    let largest = children
        .iter()
        .fold(children[0], |best, &c| if c.1 > best.1 || (c.1 == best.1 && c.0 < best.0) { c } else { best })
        .0;
    Some(BlockSplit {
        parent: b,
        parent_generation: generation,
        children,
        largest,
    })
}

/// Splits a subset of a block off by full lifted signature.
pub(crate) struct SignatureSplitter<P> {
    lifter: Lifter<P>,
}

impl<P: Probability> SignatureSplitter<P> {
    pub(crate) fn new() -> Self {
        Self { lifter: Lifter::new(0) }
    }

    /// Separates `members` (ascending, all in block `b`) from the rest of `b`
    /// and groups them by signature. Returns `None` if nothing changes.
    pub(crate) fn split_off(
        &mut self,
        model: &SparseModel<P>,
        partition: &mut Partition,
        b: BlockId,
        members: &[StateId],
    ) -> Option<BlockSplit> {
        self.lifter.ensure(partition.num_blocks());
        let sigs: Vec<Vec<Lifted>> = members
            .iter()
            .map(|&s| self.lifter.signature(model, partition.block_of_state(), s))
            .collect();
        let mut group_of: HashMap<&[Lifted], usize> = HashMap::new();
        let group_ids: Vec<usize> = sigs
            .iter()
            .map(|sig| {
                let next = group_of.len();
                *group_of.entry(sig.as_slice()).or_insert(next)
            })
            .collect();
        let k = group_of.len();
        split_by_groups(partition, b, members, &group_ids, k, members.len() == partition.block_size(b))
    }
}

/// Minimized model together with the state mapping.
#[derive(Debug, Clone)]
pub struct QuotientModel<P> {
    pub model: SparseModel<P>,
    /// Original state → quotient state.
    pub block_map: Vec<StateId>,
    /// Quotient state → lowest original state of its block.
    pub representative: Vec<StateId>,
}

impl<P: Probability> QuotientModel<P> {
    pub fn num_states(&self) -> usize {
        self.model.num_states()
    }

    /// Sidecar text: one `<original_state> <quotient_state>` row per state.
    pub fn block_map_text(&self) -> String {
        let mut out = String::with_capacity(self.block_map.len() * 8);
        for (s, q) in self.block_map.iter().enumerate() {
            writeln!(out, "{s} {q}").unwrap();
        }
        out
    }
}

/// Builds the quotient of `model` under a stable partition.
///
/// Quotient states are numbered by their lowest original state, so the output
/// does not depend on internal block ids.
pub fn build_quotient<P: Probability>(
    model: &SparseModel<P>,
    partition: &Partition,
) -> Result<QuotientModel<P>, QuotientError> {
    if partition.num_states() != model.num_states() {
        return Err(QuotientError::SizeMismatch {
            expected: model.num_states(),
            found: partition.num_states(),
        });
    }
    for b in 0..partition.num_blocks() {
        let members = partition.block(b);
        let goal = members.iter().copied().find(|&s| model.is_goal(s));
        let non_goal = members.iter().copied().find(|&s| !model.is_goal(s));
        if let (Some(goal), Some(non_goal)) = (goal, non_goal) {
            return Err(QuotientError::MixedGoalBlock { block: b, goal, non_goal });
        }
    }
    if let Stability::Witness {
        block,
        splitter,
        state_s,
        state_t,
    } = check_stability(model, partition)
    {
        return Err(QuotientError::UnstablePartition {
            block,
            splitter,
            state_s,
            state_t,
        });
    }

    let mut reps: Vec<(StateId, BlockId)> = (0..partition.num_blocks())
        .map(|b| (*partition.block(b).iter().min().expect("nonempty"), b))
        .collect();
    reps.sort_unstable();
    let mut quotient_of_block = vec![0; partition.num_blocks()];
    for (q, &(_, b)) in reps.iter().enumerate() {
        quotient_of_block[b] = q;
    }
    let block_map: Vec<StateId> = (0..model.num_states())
        .map(|s| quotient_of_block[partition.block_of(s)])
        .collect();
    let representative: Vec<StateId> = reps.iter().map(|&(r, _)| r).collect();

    let mut builder = ModelBuilder::new(reps.len());
    let mut lifter = Lifter::new(partition.num_blocks());
    let block_of = partition.block_of_state();
    for (q, &r) in representative.iter().enumerate() {
        let mut seen: Vec<Vec<(StateId, u64)>> = Vec::new();
        for a in model.actions(r) {
            let lifted: Vec<(StateId, P)> = lifter
                .lift_action(model, block_of, a)
                .into_iter()
                .map(|(b, p)| (quotient_of_block[b], p))
                .collect();
            let mut key: Vec<(StateId, u64)> = lifted.iter().map(|&(t, p)| (t, p.exact_key())).collect();
            key.sort_unstable();
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            builder.add_action(q, Distribution::new(lifted)?)?;
        }
        builder.set_goal(q, model.is_goal(r))?;
    }
    builder.set_initial(block_map[model.initial()])?;
    let (model, _) = builder.build(DeadlockPolicy::Reject)?;
    Ok(QuotientModel {
        model,
        block_map,
        representative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::chain;
    use crate::refine::initial_partition_two_block;

    fn identity(n: usize) -> Partition {
        Partition::from_labels(&(0..n).collect::<Vec<_>>())
    }

    #[test]
    fn singletons_are_stable() {
        let m = chain(5);
        assert_eq!(check_stability(&m, &identity(5)), Stability::Stable);
    }

    #[test]
    fn two_block_chain_is_unstable() {
        let m = chain(4);
        let p = initial_partition_two_block(&m);
        match check_stability(&m, &p) {
            Stability::Witness {
                block,
                state_s,
                state_t,
                ..
            } => {
                assert_eq!(p.block(block).len(), 3);
                assert_eq!((state_s, state_t), (0, 2));
            }
            Stability::Stable => panic!("expected a witness"),
        }
    }

    #[test]
    fn identity_quotient_is_isomorphic() {
        let m = chain(4);
        let q = build_quotient(&m, &identity(4)).unwrap();
        assert_eq!(q.model, m);
        assert_eq!(q.block_map, vec![0, 1, 2, 3]);
        assert_eq!(q.block_map_text(), "0 0\n1 1\n2 2\n3 3\n");
    }

    #[test]
    fn lifted_duplicates_collapse() {
        // 0 and 1 both move to goal 2 with probability one.
        let mut b = ModelBuilder::<f64>::new(3);
        b.add_action(0, Distribution::point(2)).unwrap();
        b.add_action(1, Distribution::point(2)).unwrap();
        b.add_action(1, Distribution::point(2)).unwrap();
        b.set_goal(2, true).unwrap();
        let (m, _) = b.build(DeadlockPolicy::SelfLoop).unwrap();
        let p = Partition::from_labels(&[0, 0, 1]);
        let q = build_quotient(&m, &p).unwrap();
        assert_eq!(q.num_states(), 2);
        assert_eq!(q.model.actions(0).len(), 1);
        assert_eq!(q.representative, vec![0, 2]);
        assert!(q.model.is_goal(1));
    }

    #[test]
    fn mixed_goal_block_rejected() {
        let m = chain(3);
        let p = Partition::from_labels(&[0, 1, 1]);
        assert!(matches!(build_quotient(&m, &p), Err(QuotientError::MixedGoalBlock { .. })));
    }

    #[test]
    fn unstable_partition_rejected() {
        let m = chain(4);
        let p = initial_partition_two_block(&m);
        assert!(matches!(build_quotient(&m, &p), Err(QuotientError::UnstablePartition { .. })));
    }

    #[test]
    fn split_unstable_makes_progress() {
        let m = chain(4);
        let mut p = initial_partition_two_block(&m);
        let splits = split_unstable(&m, &mut p);
        assert_eq!(splits.len(), 1);
        assert_eq!(p.num_blocks(), 3);
        p.audit().unwrap();
    }

    #[test]
    fn joint_mismatch_is_detected() {
        // Both states reach A and B with the same values, but the actions
        // pair them differently.
        let mut b = ModelBuilder::<f64>::new(5);
        // blocks: {0,1}, A={2}, B={3}, C={4}
        b.add_action(0, Distribution::new(vec![(2, 0.5), (3, 0.25), (4, 0.25)]).unwrap()).unwrap();
        b.add_action(0, Distribution::new(vec![(2, 0.25), (3, 0.5), (4, 0.25)]).unwrap()).unwrap();
        b.add_action(1, Distribution::new(vec![(2, 0.5), (3, 0.5)]).unwrap()).unwrap();
        b.add_action(1, Distribution::new(vec![(2, 0.25), (3, 0.25), (4, 0.5)]).unwrap()).unwrap();
        let (m, _) = b.build(DeadlockPolicy::SelfLoop).unwrap();
        let p = Partition::from_labels(&[0, 0, 1, 2, 3]);
        assert!(!check_stability(&m, &p).is_stable());
    }
}
