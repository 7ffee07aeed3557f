//! Seeded synthetic model families.
//!
//! Every probability is `k/d` with `d = prob_granularity` a power of two, so
//! distributions sum to exactly one in both `f32` and `f64` and duplicated
//! states produce bit-identical lifted values.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DeadlockPolicy, Distribution, ModelBuilder, SparseModel, StateId};
use crate::num::Probability;
use crate::ordering::find_cycle;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `s → s+1`, last state is the goal.
    Chain,
    /// Edges only to later layers; the last layer is the goal.
    LayeredDag,
    /// A layered DAG plus back-edges to earlier layers.
    CyclicLayered,
    /// Uniformly random targets.
    RandomMdp,
    /// Square grid, one action per direction; the far corner is the goal.
    GridDice,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Chain,
        Family::LayeredDag,
        Family::CyclicLayered,
        Family::RandomMdp,
        Family::GridDice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Chain => "chain",
            Family::LayeredDag => "layered-dag",
            Family::CyclicLayered => "cyclic-layered",
            Family::RandomMdp => "random-mdp",
            Family::GridDice => "grid-dice",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown family `{s}`"))
    }
}

/// Generator parameters. Ranges are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub family: Family,
    pub num_states: usize,
    pub actions_per_state: (usize, usize),
    pub fanout: (usize, usize),
    /// Denominator `d` of every probability; a power of two.
    pub prob_granularity: u32,
    pub seed: u64,
    /// Layer count for the layered families.
    pub layers: usize,
    /// Chance that an action of a cyclic layered model gets a back-edge.
    pub back_edge_density: f64,
    /// Every base state is copied this many times; copies are bisimilar.
    pub duplication: usize,
    /// Fraction of goal states in random MDPs (at least one).
    pub goal_fraction: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            family: Family::RandomMdp,
            num_states: 100,
            actions_per_state: (1, 3),
            fanout: (1, 4),
            prob_granularity: 8,
            seed: 0,
            layers: 10,
            back_edge_density: 0.1,
            duplication: 1,
            goal_fraction: 0.1,
        }
    }
}

impl GenSpec {
    pub fn new(family: Family, num_states: usize, seed: u64) -> Self {
        Self {
            family,
            num_states,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidSpec(m));
        let d = self.prob_granularity;
        if self.num_states == 0 {
            return bad("num_states must be positive".into());
        }
        if !d.is_power_of_two() || d > 1 << 20 {
            return bad(format!("prob_granularity {d} must be a power of two at most 2^20"));
        }
        let (amin, amax) = self.actions_per_state;
        if amin == 0 || amin > amax {
            return bad(format!("actions_per_state ({amin}, {amax}) must satisfy 1 <= min <= max"));
        }
        let (fmin, fmax) = self.fanout;
        if fmin == 0 || fmin > fmax || fmax as u64 > d as u64 {
            return bad(format!("fanout ({fmin}, {fmax}) must satisfy 1 <= min <= max <= granularity"));
        }
        if self.duplication == 0 || self.num_states % self.duplication != 0 {
            return bad(format!(
                "duplication {} must divide num_states {}",
                self.duplication, self.num_states
            ));
        }
        if !(0.0..=1.0).contains(&self.back_edge_density) || !(0.0..=1.0).contains(&self.goal_fraction) {
            return bad("densities must lie in [0, 1]".into());
        }
        let base = self.num_states / self.duplication;
        if matches!(self.family, Family::LayeredDag | Family::CyclicLayered) && (self.layers < 2 || self.layers > base) {
            return bad(format!("layers {} must lie in [2, {base}]", self.layers));
        }
        Ok(())
    }
}

/// One action of a base model: `(target, numerator)` pairs summing to `d`.
type RawAction = Vec<(StateId, u32)>;

/// Builds the model described by `spec`; the same spec always yields the same model.
pub fn generate<P: Probability>(spec: &GenSpec) -> Result<SparseModel<P>, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base_n = spec.num_states / spec.duplication;
    let (actions, goals) = match spec.family {
        Family::Chain => chain(base_n, spec.prob_granularity),
        Family::LayeredDag => layered(spec, base_n, false, &mut rng),
        Family::CyclicLayered => layered(spec, base_n, true, &mut rng),
        Family::RandomMdp => random_mdp(spec, base_n, &mut rng),
        Family::GridDice => grid_dice(base_n, spec.prob_granularity),
    };
    let model = expand::<P>(spec, actions, &goals, &mut rng);
    if spec.family == Family::LayeredDag {
        if let Some(s) = find_cycle(&model) {
            return Err(GenError::InvalidSpec(format!("layered output is cyclic at state {s}")));
        }
    }
    Ok(model)
}

/// Copies each base state `duplication` times (`id = base·k + copy`); each
/// entry goes to a random copy of its base target, self-loops stay on the copy.
fn expand<P: Probability>(spec: &GenSpec, actions: Vec<Vec<RawAction>>, goals: &[bool], rng: &mut ChaCha8Rng) -> SparseModel<P> {
    let k = spec.duplication;
    let d = P::from_u32(spec.prob_granularity).expect("granularity");
    let mut b = ModelBuilder::new(actions.len() * k);
    for (s, acts) in actions.iter().enumerate() {
        for c in 0..k {
            let id = s * k + c;
            for act in acts {
                let entries = act
                    .iter()
                    .map(|&(t, num)| {
                        let copy = if t == s {
                            c
                        } else if k > 1 {
                            rng.gen_range(0..k)
                        } else {
                            0
                        };
                        (t * k + copy, P::from_u32(num).expect("numerator") / d)
                    })
                    .collect();
                b.add_action(id, Distribution::new(entries).expect("dyadic distribution")).expect("state in range");
            }
            b.set_goal(id, goals[s]).expect("state in range");
        }
    }
    b.build(DeadlockPolicy::SelfLoop).expect("generated model").0
}

/// `parts` positive integers summing to `d`, uniformly over compositions.
fn composition(d: u32, parts: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut cuts: Vec<u32> = sample(rng, d as usize - 1, parts - 1)
        .into_iter()
        .map(|c| c as u32 + 1)
        .collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(d)) {
        out.push(c - prev);
        prev = c;
    }
    out
}

fn distribute(targets: Vec<StateId>, d: u32, rng: &mut ChaCha8Rng) -> RawAction {
    let parts = composition(d, targets.len(), rng);
    targets.into_iter().zip(parts).collect()
}

fn chain(n: usize, d: u32) -> (Vec<Vec<RawAction>>, Vec<bool>) {
    let actions = (0..n).map(|s| vec![vec![((s + 1).min(n - 1), d)]]).collect();
    let goals = (0..n).map(|s| s == n - 1).collect();
    (actions, goals)
}

fn layer_bounds(n: usize, layers: usize) -> Vec<usize> {
    (0..=layers).map(|i| i * n / layers).collect()
}

fn layered(spec: &GenSpec, n: usize, cyclic: bool, rng: &mut ChaCha8Rng) -> (Vec<Vec<RawAction>>, Vec<bool>) {
    let bounds = layer_bounds(n, spec.layers);
    let last = spec.layers - 1;
    let d = spec.prob_granularity;
    let mut actions = Vec::with_capacity(n);
    let mut goals = vec![false; n];
    for layer in 0..spec.layers {
        for s in bounds[layer]..bounds[layer + 1] {
            if layer == last {
                goals[s] = true;
                actions.push(vec![vec![(s, d)]]);
                continue;
            }
            // Targets in the next one or two layers.
            let lo = bounds[layer + 1];
            let hi = bounds[(layer + 3).min(spec.layers)];
            let num_actions = rng.gen_range(spec.actions_per_state.0..=spec.actions_per_state.1);
            let mut acts = Vec::with_capacity(num_actions);
            for _ in 0..num_actions {
                let back = cyclic && rng.gen_bool(spec.back_edge_density);
                let forward_max = spec.fanout.1.min(hi - lo).min(d as usize - usize::from(back));
                let fanout = rng.gen_range(spec.fanout.0.min(forward_max)..=forward_max).max(1);
                let mut targets: Vec<StateId> = sample(rng, hi - lo, fanout).into_iter().map(|i| lo + i).collect();
                if back {
                    targets.push(rng.gen_range(0..=s));
                }
                acts.push(distribute(targets, d, rng));
            }
            actions.push(acts);
        }
    }
    (actions, goals)
}

fn random_mdp(spec: &GenSpec, n: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<RawAction>>, Vec<bool>) {
    let d = spec.prob_granularity;
    let num_goals = ((n as f64 * spec.goal_fraction).round() as usize).clamp(1, n);
    let mut goals = vec![false; n];
    for g in sample(rng, n, num_goals) {
        goals[g] = true;
    }
    let actions = (0..n)
        .map(|_| {
            let num_actions = rng.gen_range(spec.actions_per_state.0..=spec.actions_per_state.1);
            (0..num_actions)
                .map(|_| {
                    let max = spec.fanout.1.min(n);
                    let fanout = rng.gen_range(spec.fanout.0.min(max)..=max);
                    distribute(sample(rng, n, fanout).into_vec(), d, rng)
                })
                .collect()
        })
        .collect();
    (actions, goals)
}

/// `w × w` grid with `w = ⌊√n⌋`; leftover states are absorbing non-goals.
/// Each move reaches the neighbour with 3/4 and stays with 1/4.
fn grid_dice(n: usize, d: u32) -> (Vec<Vec<RawAction>>, Vec<bool>) {
    let w = (n as f64).sqrt().floor() as usize;
    let goal = w * w - 1;
    let stay = (d / 4).max(1);
    let mut actions = Vec::with_capacity(n);
    for s in 0..n {
        if s >= w * w || s == goal {
            actions.push(vec![vec![(s, d)]]);
            continue;
        }
        let (r, c) = (s / w, s % w);
        let mut acts = Vec::new();
        let neighbours = [
            (r > 0).then(|| s - w),
            (r + 1 < w).then(|| s + w),
            (c > 0).then(|| s - 1),
            (c + 1 < w).then(|| s + 1),
        ];
        for t in neighbours.into_iter().flatten() {
            let mut act = vec![(s, stay), (t, d - stay)];
            act.sort_unstable();
            acts.push(act);
        }
        actions.push(acts);
    }
    let goals = (0..n).map(|s| s == goal).collect();
    (actions, goals)
}
