//! Explicit-state MDP/DTMC representation.
//!
//! A [`SparseModel`] stores actions in compressed rows: state `s` owns the
//! global action indices `action_offsets[s]..action_offsets[s + 1]`, and each
//! action owns a contiguous slice of `(target, probability)` entries sorted by
//! target. The reverse relation is stored the same way so that `Pre(C)` can be
//! enumerated in time linear in the number of transitions entering `C`.
//!
//! DTMCs are MDPs with exactly one action per state. Action names are never
//! stored; bisimilarity does not depend on them.

mod io;

use std::ops::Range;

use bitvec::vec::BitVec;
use thiserror::Error;

use crate::num::Probability;

pub use io::{load_model, load_model_with, write_model, write_model_labeled, LoadOptions, Loaded};

/// Dense state index in `0..num_states`.
pub type StateId = usize;
/// Global action index in `0..num_actions`.
pub type ActionId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("line {line}: malformed header: {msg}")]
    MalformedHeader { line: usize, msg: String },
    #[error("line {line}: malformed row: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("line {line}: row has {found} columns but the header declares a {kind} file")]
    MixedRowWidths { line: usize, found: usize, kind: &'static str },
    #[error("probability {value} outside (0, 1]{}", fmt_line(*line))]
    ProbabilityOutOfRange { line: Option<usize>, value: f64 },
    #[error("state {state}, choice {choice}: distribution sums to {}", fmt_sig(*sum))]
    BadSum { state: StateId, choice: usize, sum: f64 },
    #[error("state index {state} out of range (model has {num_states} states)")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("duplicate transition {src} -[{choice}]-> {dst}")]
    DuplicateTransition { src: StateId, choice: usize, dst: StateId },
    #[error("duplicate target {0} in distribution")]
    DuplicateTarget(StateId),
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("header declares {expected} {what} but the file has {found}")]
    CountMismatch { what: &'static str, expected: usize, found: usize },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("label file: {0}")]
    MalformedLabels(String),
    #[error("more than one initial state ({0} and {1})")]
    MultipleInitial(StateId, StateId),
    #[error("state {0} has no outgoing action")]
    Deadlock(StateId),
    #[error("model must have at least one state")]
    NoStates,
}

fn fmt_line(line: Option<usize>) -> String {
    line.map(|l| format!(" on line {l}")).unwrap_or_default()
}

/// Formats with 12 significant digits and trims trailing zeros.
pub(crate) fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 12i32;
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Probability distribution over states with sorted, distinct targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<P> {
    entries: Vec<(StateId, P)>,
}

impl<P: Probability> Distribution<P> {
    /// Validates and sorts `entries`.
    ///
    /// Every probability must lie in `(0, 1]` and the total must be within
    /// [`Probability::sum_tolerance`] of one.
    pub fn new(mut entries: Vec<(StateId, P)>) -> Result<Self, ModelError> {
        if entries.is_empty() {
            return Err(ModelError::EmptyDistribution);
        }
        entries.sort_by_key(|&(t, _)| t);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::DuplicateTarget(w[0].0));
            }
        }
        let mut sum = P::zero();
        for &(_, p) in &entries {
            if !(p > P::zero() && p <= P::one()) {
                return Err(ModelError::ProbabilityOutOfRange {
                    line: None,
                    value: p.to_f64().unwrap_or(f64::NAN),
                });
            }
            sum = sum + p;
        }
        if (sum - P::one()).abs() > P::sum_tolerance() {
            return Err(ModelError::BadSum {
                state: 0,
                choice: 0,
                sum: sum.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { entries })
    }

    /// Dirac distribution on `target`.
    pub fn point(target: StateId) -> Self {
        Self {
            entries: vec![(target, P::one())],
        }
    }

    pub fn entries(&self) -> &[(StateId, P)] {
        &self.entries
    }
}

/// One transition entering a state, as seen from the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseEntry<P> {
    pub pred: StateId,
    pub action: ActionId,
    pub prob: P,
}

/// Immutable explicit-state MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel<P> {
    num_states: usize,
    initial: StateId,
    goal: BitVec,
    action_offsets: Vec<usize>,
    action_state: Vec<StateId>,
    entry_offsets: Vec<usize>,
    targets: Vec<StateId>,
    probs: Vec<P>,
    reverse_offsets: Vec<usize>,
    reverse: Vec<ReverseEntry<P>>,
}

impl<P: Probability> SparseModel<P> {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.action_state.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.targets.len()
    }

    /// `|M|`: states plus transitions.
    pub fn size(&self) -> usize {
        self.num_states + self.num_transitions()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn is_goal(&self, s: StateId) -> bool {
        self.goal[s]
    }

    pub fn goal_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.goal.iter_ones()
    }

    pub fn goal_count(&self) -> usize {
        self.goal.count_ones()
    }

    /// True when every state has exactly one action.
    pub fn is_dtmc(&self) -> bool {
        self.action_offsets.windows(2).all(|w| w[1] - w[0] == 1)
    }

    /// Global action indices owned by `s`.
    pub fn actions(&self, s: StateId) -> Range<ActionId> {
        self.action_offsets[s]..self.action_offsets[s + 1]
    }

    pub fn state_of_action(&self, a: ActionId) -> StateId {
        self.action_state[a]
    }

    /// Targets of action `a`, ascending.
    pub fn targets(&self, a: ActionId) -> &[StateId] {
        &self.targets[self.entry_offsets[a]..self.entry_offsets[a + 1]]
    }

    /// Probabilities of action `a`, aligned with [`Self::targets`].
    pub fn probs(&self, a: ActionId) -> &[P] {
        &self.probs[self.entry_offsets[a]..self.entry_offsets[a + 1]]
    }

    pub fn entries(&self, a: ActionId) -> impl Iterator<Item = (StateId, P)> + '_ {
        self.targets(a).iter().copied().zip(self.probs(a).iter().copied())
    }

    /// Transitions entering `t`.
    pub fn incoming(&self, t: StateId) -> &[ReverseEntry<P>] {
        &self.reverse[self.reverse_offsets[t]..self.reverse_offsets[t + 1]]
    }

    /// Global index of the first entry of [`Self::incoming`]`(t)`.
    pub(crate) fn incoming_start(&self, t: StateId) -> usize {
        self.reverse_offsets[t]
    }

    /// Number of transitions entering `t`.
    pub fn in_degree(&self, t: StateId) -> usize {
        self.reverse_offsets[t + 1] - self.reverse_offsets[t]
    }

    /// Number of transitions leaving `s`, over all of its actions.
    pub fn out_degree(&self, s: StateId) -> usize {
        let r = self.actions(s);
        self.entry_offsets[r.end] - self.entry_offsets[r.start]
    }

    /// All forward transitions as `(src, action, dst, prob)`.
    pub fn transitions(&self) -> impl Iterator<Item = (StateId, ActionId, StateId, P)> + '_ {
        (0..self.num_actions())
            .flat_map(move |a| self.entries(a).map(move |(t, p)| (self.action_state[a], a, t, p)))
    }

    /// `δ(s,a)[T]` where `T` is the block `target_block` under `block_of_state`.
    pub fn accumulated_prob(&self, action: ActionId, block_of_state: &[usize], target_block: usize) -> P {
        self.entries(action)
            .filter(|&(t, _)| block_of_state[t] == target_block)
            .fold(P::zero(), |acc, (_, p)| acc + p)
    }

    /// Every `(pred_state, pred_action)` with positive probability into `block`,
    /// each exactly once, in order of first discovery.
    pub fn pre_states(&self, block: &[StateId]) -> Vec<(StateId, ActionId)> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for &t in block {
            for e in self.incoming(t) {
                if seen.insert(e.action) {
                    out.push((e.pred, e.action));
                }
            }
        }
        out
    }

    /// Successor states of `s` over all actions (may contain duplicates).
    pub fn successors(&self, s: StateId) -> impl Iterator<Item = StateId> + '_ {
        let r = self.actions(s);
        self.targets[self.entry_offsets[r.start]..self.entry_offsets[r.end]].iter().copied()
    }

    /// Per-state distributions, cloned out of the compressed storage.
    pub fn distributions(&self, s: StateId) -> Vec<Distribution<P>> {
        self.actions(s)
            .map(|a| Distribution {
                entries: self.entries(a).collect(),
            })
            .collect()
    }
}

/// What to do with a state that has no action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeadlockPolicy {
    /// Fail with [`ModelError::Deadlock`].
    Reject,
    /// Add a probability-one self-loop.
    #[default]
    SelfLoop,
}

/// Incremental constructor for [`SparseModel`].
#[derive(Debug, Clone)]
pub struct ModelBuilder<P> {
    initial: StateId,
    goal: BitVec,
    actions: Vec<Vec<Distribution<P>>>,
}

impl<P: Probability> ModelBuilder<P> {
    pub fn new(num_states: usize) -> Self {
        Self {
            initial: 0,
            goal: BitVec::repeat(false, num_states),
            actions: vec![Vec::new(); num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    fn check_state(&self, s: StateId) -> Result<(), ModelError> {
        if s >= self.actions.len() {
            return Err(ModelError::StateOutOfRange {
                state: s,
                num_states: self.actions.len(),
            });
        }
        Ok(())
    }

    pub fn set_initial(&mut self, s: StateId) -> Result<&mut Self, ModelError> {
        self.check_state(s)?;
        self.initial = s;
        Ok(self)
    }

    pub fn set_goal(&mut self, s: StateId, goal: bool) -> Result<&mut Self, ModelError> {
        self.check_state(s)?;
        self.goal.set(s, goal);
        Ok(self)
    }

    pub fn add_action(&mut self, s: StateId, dist: Distribution<P>) -> Result<&mut Self, ModelError> {
        self.check_state(s)?;
        for &(t, _) in dist.entries() {
            self.check_state(t)?;
        }
        self.actions[s].push(dist);
        Ok(self)
    }

    /// Finishes the model; returns it with the list of deadlock states that
    /// received a self-loop under [`DeadlockPolicy::SelfLoop`].
    pub fn build(mut self, policy: DeadlockPolicy) -> Result<(SparseModel<P>, Vec<StateId>), ModelError> {
        let n = self.actions.len();
        if n == 0 {
            return Err(ModelError::NoStates);
        }
        let mut completed = Vec::new();
        for (s, acts) in self.actions.iter_mut().enumerate() {
            if acts.is_empty() {
                match policy {
                    DeadlockPolicy::Reject => return Err(ModelError::Deadlock(s)),
                    DeadlockPolicy::SelfLoop => {
                        acts.push(Distribution::point(s));
                        completed.push(s);
                    }
                }
            }
        }

        let num_actions: usize = self.actions.iter().map(Vec::len).sum();
        let mut action_offsets = Vec::with_capacity(n + 1);
        let mut action_state = Vec::with_capacity(num_actions);
        let mut entry_offsets = Vec::with_capacity(num_actions + 1);
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        let mut in_degree = vec![0usize; n];
        action_offsets.push(0);
        entry_offsets.push(0);
        for (s, acts) in self.actions.iter().enumerate() {
            for d in acts {
                action_state.push(s);
                for &(t, p) in d.entries() {
                    targets.push(t);
                    probs.push(p);
                    in_degree[t] += 1;
                }
                entry_offsets.push(targets.len());
            }
            action_offsets.push(action_state.len());
        }

        let mut reverse_offsets = Vec::with_capacity(n + 1);
        reverse_offsets.push(0);
        for d in &in_degree {
            reverse_offsets.push(reverse_offsets.last().unwrap() + d);
        }
        let mut fill = reverse_offsets[..n].to_vec();
        let placeholder = ReverseEntry {
            pred: 0,
            action: 0,
            prob: P::zero(),
        };
        let mut reverse = vec![placeholder; targets.len()];
        for a in 0..num_actions {
            for i in entry_offsets[a]..entry_offsets[a + 1] {
                let t = targets[i];
                reverse[fill[t]] = ReverseEntry {
                    pred: action_state[a],
                    action: a,
                    prob: probs[i],
                };
                fill[t] += 1;
            }
        }

        let model = SparseModel {
            num_states: n,
            initial: self.initial,
            goal: self.goal,
            action_offsets,
            action_state,
            entry_offsets,
            targets,
            probs,
            reverse_offsets,
            reverse,
        };
        Ok((model, completed))
    }
}
