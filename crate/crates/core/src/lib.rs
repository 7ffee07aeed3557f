//! Probabilistic bisimulation minimization for explicit-state MDPs and DTMCs.
//!
//! A model is loaded into a [`SparseModel`], an initial partition separates
//! goal from non-goal states, and [`run_refinement`] splits blocks until the
//! partition is a probabilistic bisimulation. [`build_quotient`] then
//! collapses every block into one state. Reachability probabilities are
//! preserved, which [`verify_quotient_reach`] checks by value iteration.
//!
//! All numeric code is generic over [`Probability`] (`f64` or `f32`); the
//! aliases below fix the scalar to `f64`.
//!
//! ```
//! use bisim_core::{minimize, load_model, RefinementConfig, InitialPartition};
//!
//! let tra = "3 3\n0 2 1.0\n1 2 1.0\n2 2 1.0\n";
//! let lab = "0=\"init\" 1=\"goal\"\n0: 0\n2: 1\n";
//! let model: bisim_core::Model = load_model(tra, lab, "goal").unwrap();
//! let (q, stats) = minimize(&model, InitialPartition::TwoBlock, &RefinementConfig::default()).unwrap();
//! assert_eq!(q.num_states(), 2);
//! assert_eq!(stats.fallback_count, 0);
//! ```

pub mod bench;
pub mod model;
pub mod num;
pub mod ordering;
pub mod quotient;
pub mod reach;
pub mod refine;

pub use model::{load_model, load_model_with, write_model, write_model_labeled, DeadlockPolicy, Distribution, LoadOptions, ModelBuilder, ModelError, SparseModel, StateId};
pub use num::Probability;
pub use ordering::{find_cycle, run_refinement, RefineError, RefinementConfig, RunStats, Strategy};
pub use quotient::{build_quotient, check_stability, oracle_bisimulation, QuotientError, QuotientModel, Stability};
pub use reach::{gauss_seidel_reach, verify_quotient_reach, Objective, ReachQuery, ReachResult};
pub use refine::{partitions_equal, BlockId, InitialPartition, Partition, SplitBackend, TableConfig};

pub type Model = SparseModel<f64>;
pub type Model32 = SparseModel<f32>;
pub type Quotient = QuotientModel<f64>;
pub type Quotient32 = QuotientModel<f32>;

/// Failure of [`minimize`].
#[derive(Debug, thiserror::Error)]
pub enum MinimizeError {
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Quotient(#[from] QuotientError),
}

/// Refines from `initial` and builds the quotient.
pub fn minimize<P: Probability>(
    model: &SparseModel<P>,
    initial: InitialPartition,
    config: &RefinementConfig,
) -> Result<(QuotientModel<P>, RunStats), MinimizeError> {
    let start = initial.build(model);
    let (partition, stats) = run_refinement(model, &start, config)?;
    Ok((build_quotient(model, &partition)?, stats))
}
