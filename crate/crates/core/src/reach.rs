//! Extremal reachability probabilities by Gauss–Seidel value iteration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SparseModel, StateId};
use crate::num::Probability;
use crate::quotient::QuotientModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Max,
    Min,
}

impl Objective {
    pub const ALL: [Objective; 2] = [Objective::Max, Objective::Min];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Max => "max",
            Objective::Min => "min",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(Objective::Max),
            "min" => Ok(Objective::Min),
            _ => Err(format!("unknown objective `{s}` (expected max or min)")),
        }
    }
}

/// Graph-based preprocessing before iterating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precompute {
    #[default]
    None,
    /// Pin states whose value is 0 or 1 by graph analysis alone.
    Qualitative,
}

/// Stopping criterion on the per-sweep change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convergence {
    /// `max |x' − x| ≤ ε`.
    #[default]
    Absolute,
    /// `max |x' − x| / x' ≤ ε` over states with `x' > 0`.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachQuery {
    pub objective: Objective,
    pub epsilon: f64,
    pub max_iters: u64,
    pub precompute: Precompute,
    pub convergence: Convergence,
}

impl Default for ReachQuery {
    fn default() -> Self {
        Self {
            objective: Objective::Max,
            epsilon: 1e-6,
            max_iters: 1_000_000,
            precompute: Precompute::None,
            convergence: Convergence::Absolute,
        }
    }
}

impl ReachQuery {
    pub fn new(objective: Objective, epsilon: f64) -> Self {
        Self {
            objective,
            epsilon,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachResult<P> {
    pub values: Vec<P>,
    /// Completed sweeps.
    pub iterations: u64,
    pub converged: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReachError<P: std::fmt::Debug> {
    #[error("value iteration did not converge within {} sweeps", .0.iterations)]
    NotConverged(ReachResult<P>),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

/// States with a path to some goal state.
pub fn can_reach_goal<P: Probability>(model: &SparseModel<P>) -> Vec<bool> {
    let mut seen = vec![false; model.num_states()];
    let mut stack: Vec<StateId> = model.goal_states().collect();
    for &g in &stack {
        seen[g] = true;
    }
    while let Some(t) = stack.pop() {
        for e in model.incoming(t) {
            if !seen[e.pred] {
                seen[e.pred] = true;
                stack.push(e.pred);
            }
        }
    }
    seen
}

/// States where every action keeps a positive chance of reaching the goal;
/// the complement is where some scheduler avoids the goal surely.
fn min_positive<P: Probability>(model: &SparseModel<P>) -> Vec<bool> {
    let n = model.num_states();
    let mut inside = vec![false; n];
    let mut hits = vec![false; model.num_actions()];
    let mut missing: Vec<usize> = (0..n).map(|s| model.actions(s).len()).collect();
    let mut stack: Vec<StateId> = model.goal_states().collect();
    for &g in &stack {
        inside[g] = true;
    }
    while let Some(t) = stack.pop() {
        for e in model.incoming(t) {
            if !hits[e.action] {
                hits[e.action] = true;
                missing[e.pred] -= 1;
                if missing[e.pred] == 0 && !inside[e.pred] {
                    inside[e.pred] = true;
                    stack.push(e.pred);
                }
            }
        }
    }
    inside
}

/// States with no goal-avoiding path into `zero`.
fn avoid_closure<P: Probability>(model: &SparseModel<P>, zero: &[bool]) -> Vec<bool> {
    let mut reach = zero.to_vec();
    let mut stack: Vec<StateId> = (0..model.num_states()).filter(|&s| zero[s]).collect();
    while let Some(t) = stack.pop() {
        for e in model.incoming(t) {
            if !reach[e.pred] && !model.is_goal(e.pred) {
                reach[e.pred] = true;
                stack.push(e.pred);
            }
        }
    }
    reach.into_iter().map(|r| !r).collect()
}

/// States where some scheduler reaches the goal with probability 1.
fn max_one<P: Probability>(model: &SparseModel<P>) -> Vec<bool> {
    let n = model.num_states();
    let mut region = vec![true; n];
    loop {
        let safe: Vec<bool> = (0..model.num_actions())
            .map(|a| model.targets(a).iter().all(|&t| region[t]))
            .collect();
        let mut next = vec![false; n];
        let mut stack: Vec<StateId> = model.goal_states().filter(|&g| region[g]).collect();
        for &g in &stack {
            next[g] = true;
        }
        while let Some(t) = stack.pop() {
            for e in model.incoming(t) {
                if region[e.pred] && !next[e.pred] && safe[e.action] {
                    next[e.pred] = true;
                    stack.push(e.pred);
                }
            }
        }
        if next == region {
            return region;
        }
        region = next;
    }
}

/// Graph-based pinning: `(zero, one)` for the given objective.
pub fn qualitative_sets<P: Probability>(model: &SparseModel<P>, objective: Objective) -> (Vec<bool>, Vec<bool>) {
    match objective {
        Objective::Max => {
            let zero = can_reach_goal(model).into_iter().map(|r| !r).collect();
            (zero, max_one(model))
        }
        Objective::Min => {
            let zero: Vec<bool> = min_positive(model).into_iter().map(|r| !r).collect();
            let one = avoid_closure(model, &zero);
            (zero, one)
        }
    }
}

/// Iterates `x[s] ← opt_a Σ_t δ(s,a)(t)·x[t]` in place, ascending `s`, from
/// the vector that is 1 on goal states and 0 elsewhere.
pub fn gauss_seidel_reach<P: Probability>(
    model: &SparseModel<P>,
    query: &ReachQuery,
) -> Result<ReachResult<P>, ReachError<P>> {
    if !(query.epsilon > 0.0) || query.max_iters == 0 {
        return Err(ReachError::InvalidQuery(format!(
            "epsilon must be positive and max_iters at least 1 (got {} and {})",
            query.epsilon, query.max_iters
        )));
    }
    let n = model.num_states();
    let mut x: Vec<P> = (0..n).map(|s| if model.is_goal(s) { P::one() } else { P::zero() }).collect();
    let mut fixed: Vec<bool> = (0..n).map(|s| model.is_goal(s)).collect();
    if query.precompute == Precompute::Qualitative {
        let (zero, one) = qualitative_sets(model, query.objective);
        for s in 0..n {
            if zero[s] || one[s] {
                fixed[s] = true;
                x[s] = if one[s] { P::one() } else { P::zero() };
            }
        }
    }
    let eps = P::from_f64(query.epsilon).expect("epsilon representable");

    let mut iterations = 0;
    while iterations < query.max_iters {
        iterations += 1;
        let mut delta = P::zero();
        for s in 0..n {
            if fixed[s] {
                continue;
            }
            let mut best: Option<P> = None;
            for a in model.actions(s) {
                let v = model.entries(a).fold(P::zero(), |acc, (t, p)| acc + p * x[t]);
                best = Some(match (best, query.objective) {
                    (None, _) => v,
                    (Some(b), Objective::Max) => b.max(v),
                    (Some(b), Objective::Min) => b.min(v),
                });
            }
            let v = best.unwrap_or_else(P::zero).min(P::one());
            let diff = (v - x[s]).abs();
            let change = match query.convergence {
                Convergence::Absolute => diff,
                Convergence::Relative if v > P::zero() => diff / v,
                Convergence::Relative => P::zero(),
            };
            if change > delta {
                delta = change;
            }
            x[s] = v;
        }
        if delta <= eps {
            return Ok(ReachResult {
                values: x,
                iterations,
                converged: true,
            });
        }
    }
    Err(ReachError::NotConverged(ReachResult {
        values: x,
        iterations,
        converged: false,
    }))
}

/// Worst disagreement for one objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    pub objective: Objective,
    pub max_deviation: f64,
    pub worst_state: Option<StateId>,
    pub converged: bool,
}

/// Outcome of [`verify_quotient_reach`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachAgreement {
    pub tolerance: f64,
    pub per_objective: Vec<Deviation>,
}

impl ReachAgreement {
    pub fn passed(&self) -> bool {
        self.per_objective
            .iter()
            .all(|d| d.converged && d.max_deviation <= self.tolerance)
    }

    pub fn max_deviation(&self) -> f64 {
        self.per_objective.iter().map(|d| d.max_deviation).fold(0.0, f64::max)
    }
}

/// Compares max and min reachability on `model` against `quotient`.
pub fn verify_quotient_reach<P: Probability>(
    model: &SparseModel<P>,
    quotient: &QuotientModel<P>,
    epsilon: f64,
    tolerance: f64,
) -> ReachAgreement {
    verify_quotient_reach_with(model, quotient, &ReachQuery::new(Objective::Max, epsilon), tolerance)
}

/// As [`verify_quotient_reach`], with every setting but the objective taken from `query`.
pub fn verify_quotient_reach_with<P: Probability>(
    model: &SparseModel<P>,
    quotient: &QuotientModel<P>,
    query: &ReachQuery,
    tolerance: f64,
) -> ReachAgreement {
    let per_objective = Objective::ALL
        .into_iter()
        .map(|objective| {
            let query = ReachQuery { objective, ..*query };
            let (orig, c1) = values_of(gauss_seidel_reach(model, &query));
            let (quot, c2) = values_of(gauss_seidel_reach(&quotient.model, &query));
            let mut worst = (0.0, None);
            for (s, &q) in quotient.block_map.iter().enumerate() {
                let d = match (orig.get(s), quot.get(q)) {
                    (Some(&a), Some(&b)) => (a - b).abs().to_f64().unwrap_or(f64::INFINITY),
                    _ => f64::INFINITY,
                };
                if worst.1.is_none() || d > worst.0 {
                    worst = (d, Some(s));
                }
            }
            Deviation {
                objective,
                max_deviation: worst.0,
                worst_state: worst.1,
                converged: c1 && c2,
            }
        })
        .collect();
    ReachAgreement {
        tolerance,
        per_objective,
    }
}

fn values_of<P: Probability>(r: Result<ReachResult<P>, ReachError<P>>) -> (Vec<P>, bool) {
    match r {
        Ok(r) => (r.values, true),
        Err(ReachError::NotConverged(r)) => (r.values, false),
        Err(ReachError::InvalidQuery(_)) => (Vec::new(), false),
    }
}
