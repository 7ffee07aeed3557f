//! Splitting blocks by their probability of reaching a splitter.
//!
//! For a splitter `C`, every state `s` with a transition into `C` gets the
//! signature `{δ(s,a)[C] : a ∈ Act(s), δ(s,a)[C] > 0}`. Each block containing
//! such a state is split so that two states share a sub-block iff their
//! signatures are equal; states without a transition into `C` stay together.
//!
//! Two grouping backends produce identical results:
//! - [`SplitBackend::Sort`] sorts every signature and then sorts states by it;
//! - [`SplitBackend::Hash`] maps each value to a dense id through a
//!   [`ProbTable`] and groups states by their id sets.

mod partition;
mod table;

use std::collections::{BTreeMap, HashMap};

use crate::model::{ActionId, SparseModel, StateId};
use crate::num::{cmp_prob, Probability};

pub use partition::{partitions_equal, BlockId, Partition};
pub use table::{hash_probability, hash_probability_scaled, HashScheme, ProbTable, DEFAULT_TABLE_SIZE};

/// Grouping backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitBackend {
    Sort,
    Hash,
}

impl SplitBackend {
    pub const ALL: [SplitBackend; 2] = [SplitBackend::Sort, SplitBackend::Hash];

    pub fn name(self) -> &'static str {
        match self {
            SplitBackend::Sort => "sort",
            SplitBackend::Hash => "hash",
        }
    }
}

impl std::str::FromStr for SplitBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sort" => Ok(Self::Sort),
            "hash" => Ok(Self::Hash),
            _ => Err(format!("unknown split backend `{s}` (expected sort or hash)")),
        }
    }
}

/// Hash-table parameters for [`SplitBackend::Hash`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableConfig {
    pub scheme: HashScheme,
    /// Bucket count; ignored by [`HashScheme::ActionScaled`], which uses `|Act|`.
    pub size: usize,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            scheme: HashScheme::Digits,
            size: DEFAULT_TABLE_SIZE,
        }
    }
}

/// One block split by a refine step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSplit {
    pub parent: BlockId,
    /// Generation of `parent` before the split.
    pub parent_generation: u32,
    /// Children with their sizes; the first child reuses the parent id.
    pub children: Vec<(BlockId, usize)>,
    /// Largest child; ties go to the lowest id.
    pub largest: BlockId,
}

/// Result of one refine step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefineOutcome {
    pub splits: Vec<BlockSplit>,
    /// Blocks that contained a predecessor of the splitter (ids before splitting).
    pub touched_blocks: Vec<BlockId>,
    /// Transitions entering the splitter.
    pub incoming_transitions: usize,
    /// Distinct predecessor states.
    pub touched_states: usize,
}

impl RefineOutcome {
    /// Transition visits plus per-state grouping work for this step.
    pub fn work(&self) -> usize {
        self.incoming_transitions + self.touched_states
    }
}

/// Sorted set of distinct positive values `δ(s,a)[C]`.
pub type Signature<P> = Vec<P>;

/// Signatures of every state with a transition into `splitter`.
///
/// Contributions are summed in ascending target order so the values agree bit
/// for bit with forward summation over a distribution.
pub fn compute_signatures<P: Probability>(
    model: &SparseModel<P>,
    partition: &Partition,
    splitter: BlockId,
) -> BTreeMap<StateId, Signature<P>> {
    let mut members = partition.block(splitter).to_vec();
    members.sort_unstable();
    let mut per_action: BTreeMap<ActionId, P> = BTreeMap::new();
    for t in members {
        for e in model.incoming(t) {
            let acc = per_action.entry(e.action).or_insert_with(P::zero);
            *acc = *acc + e.prob;
        }
    }
    let mut out: BTreeMap<StateId, Signature<P>> = BTreeMap::new();
    for (a, v) in per_action {
        out.entry(model.state_of_action(a)).or_default().push(v);
    }
    for sig in out.values_mut() {
        sig.sort_by(cmp_prob);
        sig.dedup();
    }
    out
}

enum Grouper<P> {
    Sort,
    Hash(ProbTable<P>),
}

/// Reusable refine state: per-action accumulators and grouping scratch.
pub struct Refiner<P> {
    grouper: Grouper<P>,
    epoch: u32,
    acc: Vec<P>,
    action_epoch: Vec<u32>,
    state_slot: Vec<u32>,
    state_epoch: Vec<u32>,
    block_slot: Vec<u32>,
    block_epoch: Vec<u32>,
    touched_actions: Vec<ActionId>,
    touched_states: Vec<StateId>,
    touched_blocks: Vec<BlockId>,
    // Per touched state: range into `values`.
    value_start: Vec<usize>,
    values: Vec<P>,
    groups: Vec<u32>,
    block_members: Vec<Vec<u32>>,
}

impl<P: Probability> Refiner<P> {
    pub fn new(model: &SparseModel<P>, backend: SplitBackend, table: TableConfig) -> Self {
        let grouper = match backend {
            SplitBackend::Sort => Grouper::Sort,
            SplitBackend::Hash => {
                let size = match table.scheme {
                    HashScheme::Digits => table.size,
                    HashScheme::ActionScaled => model.num_actions(),
                };
                Grouper::Hash(ProbTable::with_scheme(table.scheme, size))
            }
        };
        let n = model.num_states();
        Self {
            grouper,
            epoch: 0,
            acc: vec![P::zero(); model.num_actions()],
            action_epoch: vec![0; model.num_actions()],
            state_slot: vec![0; n],
            state_epoch: vec![0; n],
            block_slot: vec![0; n],
            block_epoch: vec![0; n],
            touched_actions: Vec::new(),
            touched_states: Vec::new(),
            touched_blocks: Vec::new(),
            value_start: Vec::new(),
            values: Vec::new(),
            groups: Vec::new(),
            block_members: Vec::new(),
        }
    }

    pub fn backend(&self) -> SplitBackend {
        match self.grouper {
            Grouper::Sort => SplitBackend::Sort,
            Grouper::Hash(_) => SplitBackend::Hash,
        }
    }

    /// Hash-table collisions so far (zero for the sort backend).
    pub fn collisions(&self) -> u64 {
        match &self.grouper {
            Grouper::Sort => 0,
            Grouper::Hash(t) => t.collisions(),
        }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.action_epoch.iter_mut().for_each(|e| *e = 0);
            self.state_epoch.iter_mut().for_each(|e| *e = 0);
            self.block_epoch.iter_mut().for_each(|e| *e = 0);
            self.epoch = 1;
        }
    }

    /// Refines every block of `partition` with respect to `splitter`.
    ///
    /// The splitter may split itself.
    pub fn refine(&mut self, model: &SparseModel<P>, partition: &mut Partition, splitter: BlockId) -> RefineOutcome {
        self.next_epoch();
        let epoch = self.epoch;
        self.touched_actions.clear();
        self.touched_states.clear();
        self.touched_blocks.clear();
        if self.block_slot.len() < partition.num_blocks() {
            self.block_slot.resize(partition.num_blocks(), 0);
            self.block_epoch.resize(partition.num_blocks(), 0);
        }

        // Accumulate δ(s,a)[C] per action, visiting C in ascending order.
        partition.sort_block(splitter);
        let mut incoming = 0;
        for &t in partition.block(splitter) {
            for e in model.incoming(t) {
                incoming += 1;
                let a = e.action;
                if self.action_epoch[a] != epoch {
                    self.action_epoch[a] = epoch;
                    self.acc[a] = P::zero();
                    self.touched_actions.push(a);
                    let s = e.pred;
                    if self.state_epoch[s] != epoch {
                        self.state_epoch[s] = epoch;
                        self.state_slot[s] = self.touched_states.len() as u32;
                        self.touched_states.push(s);
                        let b = partition.block_of(s);
                        if self.block_epoch[b] != epoch {
                            self.block_epoch[b] = epoch;
                            self.block_slot[b] = self.touched_blocks.len() as u32;
                            self.touched_blocks.push(b);
                        }
                    }
                }
                self.acc[a] = self.acc[a] + e.prob;
            }
        }

        self.collect_values(model);
        self.assign_groups();

        // Touched states per block, in discovery order.
        let nb = self.touched_blocks.len();
        if self.block_members.len() < nb {
            self.block_members.resize_with(nb, Vec::new);
        }
        for m in &mut self.block_members[..nb] {
            m.clear();
        }
        for (i, &s) in self.touched_states.iter().enumerate() {
            let slot = self.block_slot[partition.block_of(s)] as usize;
            self.block_members[slot].push(i as u32);
        }

        let mut outcome = RefineOutcome {
            splits: Vec::new(),
            touched_blocks: self.touched_blocks.clone(),
            incoming_transitions: incoming,
            touched_states: self.touched_states.len(),
        };
        let mut ordered: Vec<StateId> = Vec::new();
        let mut sizes: Vec<usize> = Vec::new();
        let mut first_of_group: HashMap<u32, usize> = HashMap::new();
        for slot in 0..nb {
            let b = self.touched_blocks[slot];
            let members = &self.block_members[slot];
            // Order groups by first discovered member, then lay states out group by group.
            first_of_group.clear();
            sizes.clear();
            for &i in members {
                let g = self.groups[i as usize];
                let next = first_of_group.len();
                let idx = *first_of_group.entry(g).or_insert(next);
                if idx == sizes.len() {
                    sizes.push(0);
                }
                sizes[idx] += 1;
            }
            let mut offsets: Vec<usize> = Vec::with_capacity(sizes.len());
            let mut acc = 0;
            for &sz in &sizes {
                offsets.push(acc);
                acc += sz;
            }
            ordered.clear();
            ordered.resize(members.len(), 0);
            for &i in members {
                let idx = first_of_group[&self.groups[i as usize]];
                ordered[offsets[idx]] = self.touched_states[i as usize];
                offsets[idx] += 1;
            }

            let generation = partition.generation(b);
            if let Some(children) = partition.split_block(b, &ordered, &sizes) {
                let mut largest = children[0];
                for &(id, sz) in &children[1..] {
                    if sz > largest.1 || (sz == largest.1 && id < largest.0) {
                        largest = (id, sz);
                    }
                }
                outcome.splits.push(BlockSplit {
                    parent: b,
                    parent_generation: generation,
                    children,
                    largest: largest.0,
                });
            }
        }
        outcome
    }

    /// Fills `values`/`value_start` with each touched state's action values.
    fn collect_values(&mut self, model: &SparseModel<P>) {
        let ns = self.touched_states.len();
        self.value_start.clear();
        self.value_start.resize(ns + 1, 0);
        for &a in &self.touched_actions {
            let slot = self.state_slot[model.state_of_action(a)] as usize;
            self.value_start[slot + 1] += 1;
        }
        for i in 0..ns {
            self.value_start[i + 1] += self.value_start[i];
        }
        let mut fill = self.value_start.clone();
        self.values.clear();
        self.values.resize(self.touched_actions.len(), P::zero());
        for &a in &self.touched_actions {
            let slot = self.state_slot[model.state_of_action(a)] as usize;
            self.values[fill[slot]] = self.acc[a];
            fill[slot] += 1;
        }
    }

    /// Assigns each touched state a group id; equal signatures share an id.
    fn assign_groups(&mut self) {
        let ns = self.touched_states.len();
        self.groups.clear();
        self.groups.resize(ns, 0);
        match &mut self.grouper {
            Grouper::Sort => {
                for i in 0..ns {
                    let sig = &mut self.values[self.value_start[i]..self.value_start[i + 1]];
                    sig.sort_by(cmp_prob);
                }
                let starts = &self.value_start;
                let values = &self.values;
                let dedup = |i: usize| -> Vec<P> {
                    let mut v = values[starts[i]..starts[i + 1]].to_vec();
                    v.dedup();
                    v
                };
                let keys: Vec<Vec<P>> = (0..ns).map(dedup).collect();
                let mut order: Vec<usize> = (0..ns).collect();
                order.sort_by(|&x, &y| {
                    keys[x]
                        .iter()
                        .zip(&keys[y])
                        .map(|(a, b)| cmp_prob(a, b))
                        .find(|o| o.is_ne())
                        .unwrap_or_else(|| keys[x].len().cmp(&keys[y].len()))
                });
                let mut group = 0u32;
                for w in 0..ns {
                    if w > 0 && keys[order[w]] != keys[order[w - 1]] {
                        group += 1;
                    }
                    self.groups[order[w]] = group;
                }
            }
            Grouper::Hash(table) => {
                table.begin_epoch();
                let mut ids: Vec<u32> = Vec::with_capacity(self.values.len());
                let mut id_start = Vec::with_capacity(ns + 1);
                id_start.push(0);
                for i in 0..ns {
                    let from = ids.len();
                    for &v in &self.values[self.value_start[i]..self.value_start[i + 1]] {
                        ids.push(table.group_of(v));
                    }
                    let set = &mut ids[from..];
                    set.sort_unstable();
                    let mut len = 0;
                    for j in 0..set.len() {
                        if j == 0 || set[j] != set[len - 1] {
                            set[len] = set[j];
                            len += 1;
                        }
                    }
                    ids.truncate(from + len);
                    id_start.push(ids.len());
                }
                let mut seen: HashMap<&[u32], u32> = HashMap::with_capacity(ns);
                for i in 0..ns {
                    let key = &ids[id_start[i]..id_start[i + 1]];
                    let next = seen.len() as u32;
                    self.groups[i] = *seen.entry(key).or_insert(next);
                }
            }
        }
    }
}

/// Refines with the sort backend.
pub fn refine_sort<P: Probability>(
    model: &SparseModel<P>,
    partition: &mut Partition,
    splitter: BlockId,
) -> RefineOutcome {
    Refiner::new(model, SplitBackend::Sort, TableConfig::default()).refine(model, partition, splitter)
}

/// Refines with the hash backend using `table` for grouping.
pub fn refine_hash<P: Probability>(
    model: &SparseModel<P>,
    partition: &mut Partition,
    splitter: BlockId,
    table: ProbTable<P>,
) -> RefineOutcome {
    let mut r = Refiner::new(model, SplitBackend::Sort, TableConfig::default());
    r.grouper = Grouper::Hash(table);
    r.refine(model, partition, splitter)
}

/// Two blocks `{G, S∖G}`, with empty parts omitted.
pub fn initial_partition_two_block<P: Probability>(model: &SparseModel<P>) -> Partition {
    let labels: Vec<usize> = (0..model.num_states()).map(|s| usize::from(model.is_goal(s))).collect();
    Partition::from_labels(&labels)
}

/// One block per reverse-BFS distance to the goal set (ignoring probabilities
/// and actions), plus one block for states that cannot reach it.
pub fn initial_partition_bfs_layers<P: Probability>(model: &SparseModel<P>) -> Partition {
    let depth = goal_distances(model);
    let labels: Vec<usize> = depth.iter().map(|d| d.unwrap_or(usize::MAX)).collect();
    Partition::from_labels(&labels)
}

/// Shortest-path distance from each state to the goal set; `None` if unreachable.
pub fn goal_distances<P: Probability>(model: &SparseModel<P>) -> Vec<Option<usize>> {
    let n = model.num_states();
    let mut depth = vec![None; n];
    let mut queue = std::collections::VecDeque::new();
    for g in model.goal_states() {
        depth[g] = Some(0);
        queue.push_back(g);
    }
    while let Some(t) = queue.pop_front() {
        let d = depth[t].expect("queued states have a depth");
        for e in model.incoming(t) {
            if depth[e.pred].is_none() {
                depth[e.pred] = Some(d + 1);
                queue.push_back(e.pred);
            }
        }
    }
    depth
}

/// Initial-partition scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialPartition {
    TwoBlock,
    BfsLayers,
}

impl InitialPartition {
    pub fn build<P: Probability>(self, model: &SparseModel<P>) -> Partition {
        match self {
            InitialPartition::TwoBlock => initial_partition_two_block(model),
            InitialPartition::BfsLayers => initial_partition_bfs_layers(model),
        }
    }
}

impl std::str::FromStr for InitialPartition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two-block" => Ok(Self::TwoBlock),
            "bfs-layers" => Ok(Self::BfsLayers),
            _ => Err(format!("unknown initial partition `{s}` (expected two-block or bfs-layers)")),
        }
    }
}
