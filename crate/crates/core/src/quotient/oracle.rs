//! Naive fixpoint bisimulation used as the reference in tests.
//!
//! Each round recomputes every state's full set of lifted distributions
//! against the current classes and regroups all states. It shares no code
//! with the splitter-driven refinement. Cost is `O(rounds · |M| log |M|)`;
//! intended for models of a few hundred states.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::model::SparseModel;
use crate::num::Probability;
use crate::refine::Partition;

/// Coarsest stable refinement of `initial`.
pub fn oracle_bisimulation<P: Probability>(model: &SparseModel<P>, initial: &Partition) -> Partition {
    let n = model.num_states();
    let mut class: Vec<usize> = initial.block_of_state().to_vec();
    let mut num_classes = initial.num_blocks();
    loop {
        let mut ids: HashMap<(usize, BTreeSet<Vec<(usize, u64)>>), usize> = HashMap::new();
        let mut next = Vec::with_capacity(n);
        for s in 0..n {
            let mut sig = BTreeSet::new();
            for a in model.actions(s) {
                let mut lifted: BTreeMap<usize, P> = BTreeMap::new();
                for (t, p) in model.entries(a) {
                    let e = lifted.entry(class[t]).or_insert_with(P::zero);
                    *e = *e + p;
                }
                sig.insert(lifted.into_iter().map(|(c, p)| (c, p.exact_key())).collect());
            }
            let len = ids.len();
            next.push(*ids.entry((class[s], sig)).or_insert(len));
        }
        let count = ids.len();
        class = next;
        if count == num_classes {
            break;
        }
        num_classes = count;
    }
    Partition::from_labels(&class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::chain;
    use crate::model::{DeadlockPolicy, Distribution, ModelBuilder};
    use crate::quotient::check_stability;
    use crate::refine::{initial_partition_two_block, partitions_equal};

    #[test]
    fn all_bisimilar_without_goal() {
        let mut b = ModelBuilder::<f64>::new(3);
        b.add_action(0, Distribution::point(1)).unwrap();
        b.add_action(1, Distribution::point(2)).unwrap();
        b.add_action(2, Distribution::point(0)).unwrap();
        let (m, _) = b.build(DeadlockPolicy::Reject).unwrap();
        let p = oracle_bisimulation(&m, &initial_partition_two_block(&m));
        assert_eq!(p.num_blocks(), 1);
    }

    #[test]
    fn chain_is_fully_split() {
        let m = chain(4);
        let p = oracle_bisimulation(&m, &initial_partition_two_block(&m));
        assert_eq!(p.num_blocks(), 4);
        assert!(check_stability(&m, &p).is_stable());
    }

    #[test]
    fn symmetric_branches_merge() {
        // 0 -> {1, 2} evenly, 1 -> 3, 2 -> 3, 3 goal
        let mut b = ModelBuilder::<f64>::new(4);
        b.add_action(0, Distribution::new(vec![(1, 0.5), (2, 0.5)]).unwrap()).unwrap();
        b.add_action(1, Distribution::point(3)).unwrap();
        b.add_action(2, Distribution::point(3)).unwrap();
        b.set_goal(3, true).unwrap();
        let (m, _) = b.build(DeadlockPolicy::SelfLoop).unwrap();
        let p = oracle_bisimulation(&m, &initial_partition_two_block(&m));
        assert!(partitions_equal(&p, &Partition::from_labels(&[0, 1, 1, 2])));
    }
}
