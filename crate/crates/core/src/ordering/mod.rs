//! Splitter ordering strategies and the refinement main loop.
//!
//! Every strategy runs the same loop: pop a live splitter, refine the
//! partition with it, enqueue the resulting sub-blocks. Strategies differ in
//! which container orders the pending splitters and, for the topological
//! strategy on acyclic models, in *when* a block becomes a splitter: only once
//! every transition leaving it points into an already-used splitter.
//!
//! When the worklist runs dry, a full stability sweep checks the result. Any
//! unstable block is split by its complete lifted signature and the loop
//! resumes with the new sub-blocks; the number of such resumptions is
//! reported as `fallback_count`. Each resumption adds at least one block, so
//! the loop terminates after at most `|S|` resumptions.

mod schedule;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SparseModel, StateId};
use crate::num::Probability;
use crate::quotient::{split_unstable, SignatureSplitter};
use crate::refine::{goal_distances, BlockId, Partition, RefineOutcome, Refiner, SplitBackend, TableConfig};

pub use schedule::{hybrid_thresholds, ScheduleKind, SplitterRef, SplitterSchedule};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RefineError {
    #[error("model is cyclic (state {0} lies on a cycle); use the topo-cyclic ordering")]
    CyclicModel(StateId),
    #[error("initial partition covers {found} states but the model has {expected}")]
    SizeMismatch { expected: usize, found: usize },
}

/// Splitter ordering strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    /// Exact topological order; acyclic models only.
    Topological,
    /// FIFO seeded with shortest-path layers.
    TopologicalCyclic,
    SizeHeap,
    SizeHybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Random,
        Strategy::Topological,
        Strategy::TopologicalCyclic,
        Strategy::SizeHeap,
        Strategy::SizeHybrid,
    ];

    /// Command-line name.
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Topological => "topo",
            Strategy::TopologicalCyclic => "topo-cyclic",
            Strategy::SizeHeap => "size",
            Strategy::SizeHybrid => "size-hybrid",
        }
    }

    fn schedule_kind(self) -> ScheduleKind {
        match self {
            Strategy::Random => ScheduleKind::Random,
            Strategy::Topological | Strategy::TopologicalCyclic => ScheduleKind::Fifo,
            Strategy::SizeHeap => ScheduleKind::SizeHeap,
            Strategy::SizeHybrid => ScheduleKind::SizeHybrid,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown ordering `{s}` (expected random, topo, topo-cyclic, size or size-hybrid)"))
    }
}

/// Knobs for [`run_refinement`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementConfig {
    pub strategy: Strategy,
    pub backend: SplitBackend,
    pub table: TableConfig,
    /// Seed for the random strategy.
    pub seed: u64,
    /// `c` in the hybrid thresholds `⌈log₂|S|⌉` and `⌈c·log₂|S|⌉`.
    pub hybrid_c: f64,
    /// Enqueue every sub-block, including the largest.
    pub enqueue_all_children: bool,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::SizeHeap,
            backend: SplitBackend::Hash,
            table: TableConfig::default(),
            seed: 0,
            hybrid_c: 8.0,
            enqueue_all_children: false,
        }
    }
}

impl RefinementConfig {
    pub fn new(strategy: Strategy, backend: SplitBackend) -> Self {
        Self {
            strategy,
            backend,
            ..Self::default()
        }
    }
}

/// Counters collected by one refinement run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub num_states: usize,
    pub refine_calls: u64,
    /// `Σ|C|` over all splitters used.
    pub splitter_mass: u64,
    pub enqueues: u64,
    pub stale_skips: u64,
    pub fallback_count: u64,
    /// Incoming transitions plus predecessor states processed, summed over refine calls.
    pub refine_work: u64,
    pub hash_collisions: u64,
    pub final_num_blocks: usize,
    /// `(block, size)` of every splitter, in order of use.
    pub splitters: Vec<(BlockId, usize)>,
    #[serde(with = "duration_ms")]
    pub wall_time: Duration,
}

impl RunStats {
    /// Average number of times a state served inside a splitter.
    pub fn spl_avg(&self) -> f64 {
        if self.num_states == 0 {
            0.0
        } else {
            self.splitter_mass as f64 / self.num_states as f64
        }
    }

    /// Equality of everything except wall time.
    pub fn same_counters(&self, other: &RunStats) -> bool {
        RunStats {
            wall_time: Duration::ZERO,
            ..self.clone()
        } == RunStats {
            wall_time: Duration::ZERO,
            ..other.clone()
        }
    }
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e3)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1e3))
    }
}

/// A state on a cycle, ignoring self-loops on goal states.
pub fn find_cycle<P: Probability>(model: &SparseModel<P>) -> Option<StateId> {
    let n = model.num_states();
    let edges = |s: StateId| {
        let mut succ: Vec<StateId> = model
            .successors(s)
            .filter(|&t| !(t == s && model.is_goal(s)))
            .collect();
        succ.sort_unstable();
        succ.dedup();
        succ
    };
    let mut indeg = vec![0usize; n];
    for s in 0..n {
        for t in edges(s) {
            indeg[t] += 1;
        }
    }
    let mut stack: Vec<StateId> = (0..n).filter(|&s| indeg[s] == 0).collect();
    let mut removed = 0;
    while let Some(s) = stack.pop() {
        removed += 1;
        for t in edges(s) {
            indeg[t] -= 1;
            if indeg[t] == 0 {
                stack.push(t);
            }
        }
    }
    if removed == n {
        None
    } else {
        (0..n).find(|&s| indeg[s] > 0)
    }
}

/// Per-state count of outgoing transitions not yet marked.
///
/// A state is ready once the count reaches 0: every successor then lies in a
/// block already used as a splitter, so its final class is determined.
struct MarkCounter<P> {
    unmarked: Vec<u64>,
    marked: Vec<bool>,
    /// Member of a splitter already taken from the list.
    used: Vec<bool>,
    newly_ready: Vec<StateId>,
    splitter: SignatureSplitter<P>,
}

impl<P: Probability> MarkCounter<P> {
    fn new(model: &SparseModel<P>) -> Self {
        Self {
            unmarked: (0..model.num_states()).map(|s| model.out_degree(s) as u64).collect(),
            marked: vec![false; model.num_transitions()],
            used: vec![false; model.num_states()],
            newly_ready: Vec::new(),
            splitter: SignatureSplitter::new(),
        }
    }

    /// Marks every transition entering `members`, a splitter just used.
    fn mark_into(&mut self, model: &SparseModel<P>, members: &[StateId]) {
        for &t in members {
            self.used[t] = true;
        }
        for &t in members {
            let base = model.incoming_start(t);
            for (j, e) in model.incoming(t).iter().enumerate() {
                if !self.marked[base + j] {
                    self.marked[base + j] = true;
                    self.unmarked[e.pred] -= 1;
                    if self.unmarked[e.pred] == 0 && !self.used[e.pred] {
                        self.newly_ready.push(e.pred);
                    }
                }
            }
        }
    }

    /// Splits newly ready states off their blocks, grouped by full signature,
    /// and enqueues the resulting all-ready blocks.
    fn enqueue_ready(&mut self, model: &SparseModel<P>, partition: &mut Partition, schedule: &mut SplitterSchedule) {
        let mut ready: Vec<(BlockId, StateId)> = self.newly_ready.drain(..).map(|s| (partition.block_of(s), s)).collect();
        ready.sort_unstable();
        let mut members = Vec::new();
        for group in ready.chunk_by(|x, y| x.0 == y.0) {
            let b = group[0].0;
            members.clear();
            members.extend(group.iter().map(|&(_, s)| s));
            let whole = members.len() == partition.block_size(b);
            match self.splitter.split_off(model, partition, b, &members) {
                Some(split) => {
                    for &(child, _) in &split.children {
                        if whole || child != b {
                            schedule.push(partition, child);
                        }
                    }
                }
                None => {
                    schedule.push(partition, b);
                }
            }
        }
    }
}

/// Runs partition refinement from `initial` until the partition is stable.
///
/// The topological strategy fails with [`RefineError::CyclicModel`] on cyclic
/// models; every other strategy accepts any model.
pub fn run_refinement<P: Probability>(
    model: &SparseModel<P>,
    initial: &Partition,
    config: &RefinementConfig,
) -> Result<(Partition, RunStats), RefineError> {
    let start = Instant::now();
    let n = model.num_states();
    if initial.num_states() != n {
        return Err(RefineError::SizeMismatch {
            expected: n,
            found: initial.num_states(),
        });
    }
    if config.strategy == Strategy::Topological {
        if let Some(s) = find_cycle(model) {
            return Err(RefineError::CyclicModel(s));
        }
    }

    let mut partition = initial.clone();
    let mut refiner = Refiner::new(model, config.backend, config.table);
    let mut schedule = SplitterSchedule::new(config.strategy.schedule_kind(), n, config.seed, config.hybrid_c);
    let mut marks = (config.strategy == Strategy::Topological).then(|| MarkCounter::new(model));
    let mut stats = RunStats {
        num_states: n,
        ..RunStats::default()
    };

    match config.strategy {
        Strategy::Topological => {
            for g in model.goal_states() {
                schedule.push(&partition, partition.block_of(g));
            }
        }
        Strategy::TopologicalCyclic => {
            for b in blocks_by_goal_distance(model, &partition) {
                schedule.push(&partition, b);
            }
        }
        _ => {
            // The whole state space is a trivially used splitter, so its
            // largest part may be left out like any other largest child.
            let largest = (0..partition.num_blocks()).rev().max_by_key(|&b| partition.block_size(b));
            for b in 0..partition.num_blocks() {
                if config.enqueue_all_children || Some(b) != largest {
                    schedule.push(&partition, b);
                }
            }
        }
    }

    let mut splitter_members: Vec<StateId> = Vec::new();
    loop {
        while let Some(r) = schedule.pop(&partition) {
            let size = partition.block_size(r.block);
            stats.refine_calls += 1;
            stats.splitter_mass += size as u64;
            stats.splitters.push((r.block, size));
            if marks.is_some() {
                splitter_members.clear();
                splitter_members.extend_from_slice(partition.block(r.block));
            }

            let outcome = refiner.refine(model, &mut partition, r.block);
            stats.refine_work += outcome.work() as u64;

            match marks.as_mut() {
                Some(marks) => {
                    marks.mark_into(model, &splitter_members);
                    marks.enqueue_ready(model, &mut partition, &mut schedule);
                }
                None => enqueue_children(&partition, &outcome, config.enqueue_all_children, &mut schedule),
            }
        }

        let splits = split_unstable(model, &mut partition);
        if splits.is_empty() {
            break;
        }
        stats.fallback_count += 1;
        log::debug!("stability sweep split {} blocks; resuming", splits.len());
        for split in &splits {
            for &(child, _) in &split.children {
                schedule.push(&partition, child);
            }
        }
    }

    debug_assert!(partition.audit().is_ok());
    stats.enqueues = schedule.enqueues();
    stats.stale_skips = schedule.stale_skips();
    stats.hash_collisions = refiner.collisions();
    stats.final_num_blocks = partition.num_blocks();
    stats.wall_time = start.elapsed();
    Ok((partition, stats))
}

fn enqueue_children(partition: &Partition, outcome: &RefineOutcome, all: bool, schedule: &mut SplitterSchedule) {
    for split in &outcome.splits {
        // A parent still waiting to be used is replaced by all of its parts.
        let parent_pending = schedule.is_pending(split.parent, split.parent_generation);
        for &(child, _) in &split.children {
            if all || parent_pending || child != split.largest {
                schedule.push(partition, child);
            }
        }
    }
}

/// Blocks ordered by the smallest goal distance of their members;
/// blocks that cannot reach the goal come last.
fn blocks_by_goal_distance<P: Probability>(model: &SparseModel<P>, partition: &Partition) -> Vec<BlockId> {
    let depth = goal_distances(model);
    let mut keyed: Vec<(usize, BlockId)> = (0..partition.num_blocks())
        .map(|b| {
            let d = partition.block(b).iter().filter_map(|&s| depth[s]).min().unwrap_or(usize::MAX);
            (d, b)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, b)| b).collect()
}

/// Refinement for acyclic models: a block becomes a splitter once all its
/// outgoing transitions lead into used splitters.
pub fn topological_acyclic<P: Probability>(
    model: &SparseModel<P>,
    initial: &Partition,
    backend: SplitBackend,
) -> Result<(Partition, RunStats), RefineError> {
    run_refinement(model, initial, &RefinementConfig::new(Strategy::Topological, backend))
}

/// FIFO refinement seeded with the shortest-path layers, for cyclic models.
pub fn topological_cyclic_heuristic<P: Probability>(
    model: &SparseModel<P>,
    initial_bfs_layers: &Partition,
    backend: SplitBackend,
) -> Result<(Partition, RunStats), RefineError> {
    run_refinement(
        model,
        initial_bfs_layers,
        &RefinementConfig::new(Strategy::TopologicalCyclic, backend),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::chain;
    use crate::model::{DeadlockPolicy, Distribution, ModelBuilder};
    use crate::quotient::{check_stability, oracle_bisimulation};
    use crate::refine::{initial_partition_bfs_layers, initial_partition_two_block, partitions_equal};

    fn all_configs() -> Vec<RefinementConfig> {
        let mut out = Vec::new();
        for strategy in Strategy::ALL {
            for backend in SplitBackend::ALL {
                out.push(RefinementConfig::new(strategy, backend));
            }
        }
        out
    }

    fn initial_for<P: Probability>(model: &SparseModel<P>, s: Strategy) -> Partition {
        if s == Strategy::TopologicalCyclic {
            initial_partition_bfs_layers(model)
        } else {
            initial_partition_two_block(model)
        }
    }

    #[test]
    fn one_step_to_goal_needs_one_refine() {
        // 0, 1, 2 jump straight into goal 3.
        let mut b = ModelBuilder::<f64>::new(4);
        for s in 0..3 {
            b.add_action(s, Distribution::point(3)).unwrap();
        }
        b.set_goal(3, true).unwrap();
        let (m, _) = b.build(DeadlockPolicy::SelfLoop).unwrap();
        let init = initial_partition_two_block(&m);
        let cfg = RefinementConfig::new(Strategy::SizeHeap, SplitBackend::Hash);
        let (p, stats) = run_refinement(&m, &init, &cfg).unwrap();
        assert!(partitions_equal(&p, &init));
        assert_eq!(stats.refine_calls, 1);
        assert_eq!(stats.splitters, vec![(init.block_of(3), 1)]);
        assert_eq!(stats.spl_avg(), 0.25);
        assert_eq!(stats.fallback_count, 0);

        let (p, stats) = topological_acyclic(&m, &init, SplitBackend::Sort).unwrap();
        assert!(partitions_equal(&p, &init));
        assert_eq!(stats.refine_calls, 2);
        assert_eq!(stats.spl_avg(), 1.0);
    }

    #[test]
    fn chain_splits_completely_under_every_strategy() {
        let m = chain(4);
        for cfg in all_configs() {
            let init = initial_for(&m, cfg.strategy);
            let (p, stats) = run_refinement(&m, &init, &cfg).unwrap();
            assert_eq!(p.canonical_blocks(), vec![vec![0], vec![1], vec![2], vec![3]], "{cfg:?}");
            assert_eq!(stats.fallback_count, 0, "{cfg:?}");
        }
    }

    #[test]
    fn topological_chain_uses_each_block_once() {
        let m = chain(3);
        let (_, stats) = topological_acyclic(&m, &initial_partition_two_block(&m), SplitBackend::Hash).unwrap();
        assert!(stats.spl_avg() <= 1.0);
        let sizes: Vec<usize> = stats.splitters.iter().map(|&(_, sz)| sz).collect();
        assert_eq!(sizes, vec![1, 1, 1]);
    }

    #[test]
    fn cycle_detection() {
        assert_eq!(find_cycle(&chain(4)), None);
        let mut b = ModelBuilder::<f64>::new(2);
        b.add_action(0, Distribution::point(0)).unwrap();
        b.add_action(1, Distribution::point(1)).unwrap();
        b.set_goal(1, true).unwrap();
        let (m, _) = b.build(DeadlockPolicy::Reject).unwrap();
        assert_eq!(find_cycle(&m), Some(0));
        let err = topological_acyclic(&m, &initial_partition_two_block(&m), SplitBackend::Hash).unwrap_err();
        assert_eq!(err, RefineError::CyclicModel(0));
        assert!(err.to_string().contains("topo-cyclic"));
    }

    #[test]
    fn mutual_loop_stays_together() {
        // 0 <-> 1 each with 0.5, both reach goal 2 with 0.5.
        let mut b = ModelBuilder::<f64>::new(3);
        b.add_action(0, Distribution::new(vec![(1, 0.5), (2, 0.5)]).unwrap()).unwrap();
        b.add_action(1, Distribution::new(vec![(0, 0.5), (2, 0.5)]).unwrap()).unwrap();
        b.set_goal(2, true).unwrap();
        let (m, _) = b.build(DeadlockPolicy::SelfLoop).unwrap();
        let (p, _) = topological_cyclic_heuristic(&m, &initial_partition_bfs_layers(&m), SplitBackend::Hash).unwrap();
        assert_eq!(p.canonical_blocks(), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn joint_mismatch_is_repaired_by_the_sweep() {
        // Against singleton splitters 0 and 1 have equal value sets {1/2};
        // their lifted distributions still differ. 2 is the goal, 3 -> 2,
        // 4 -> 3, 5 -> 4.
        let half = |u, v| Distribution::new(vec![(u, 0.5), (v, 0.5)]).unwrap();
        let mut b = ModelBuilder::<f64>::new(6);
        b.add_action(0, half(2, 3)).unwrap();
        b.add_action(0, half(4, 5)).unwrap();
        b.add_action(1, half(2, 4)).unwrap();
        b.add_action(1, half(3, 5)).unwrap();
        b.add_action(3, Distribution::point(2)).unwrap();
        b.add_action(4, Distribution::point(3)).unwrap();
        b.add_action(5, Distribution::point(4)).unwrap();
        b.set_goal(2, true).unwrap();
        let (m, _) = b.build(DeadlockPolicy::SelfLoop).unwrap();
        let init = initial_partition_two_block(&m);
        let oracle = oracle_bisimulation(&m, &init);
        for cfg in all_configs() {
            if cfg.strategy == Strategy::Topological {
                continue;
            }
            let (p, _) = run_refinement(&m, &initial_for(&m, cfg.strategy), &cfg).unwrap();
            assert!(partitions_equal(&p, &oracle), "{cfg:?}");
            assert!(check_stability(&m, &p).is_stable());
        }
    }

    #[test]
    fn zero_valued_action_is_separated() {
        // 0: one action 1/2 into goal. 1: same plus an action that never reaches the goal.
        let mut b = ModelBuilder::<f64>::new(4);
        b.add_action(0, Distribution::new(vec![(2, 0.5), (3, 0.5)]).unwrap()).unwrap();
        b.add_action(1, Distribution::new(vec![(2, 0.5), (3, 0.5)]).unwrap()).unwrap();
        b.add_action(1, Distribution::point(3)).unwrap();
        b.set_goal(2, true).unwrap();
        let (m, _) = b.build(DeadlockPolicy::SelfLoop).unwrap();
        let init = initial_partition_two_block(&m);
        let oracle = oracle_bisimulation(&m, &init);
        for cfg in all_configs() {
            if cfg.strategy == Strategy::Topological {
                continue;
            }
            let (p, _) = run_refinement(&m, &initial_for(&m, cfg.strategy), &cfg).unwrap();
            assert!(partitions_equal(&p, &oracle), "{cfg:?}");
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let m = chain(9);
        let init = initial_partition_two_block(&m);
        for cfg in all_configs() {
            let init = if cfg.strategy == Strategy::TopologicalCyclic {
                initial_partition_bfs_layers(&m)
            } else {
                init.clone()
            };
            let (_, a) = run_refinement(&m, &init, &RefinementConfig { seed: 11, ..cfg }).unwrap();
            let (_, b) = run_refinement(&m, &init, &RefinementConfig { seed: 11, ..cfg }).unwrap();
            assert!(a.same_counters(&b));
        }
    }
}
