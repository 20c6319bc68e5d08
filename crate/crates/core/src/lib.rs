//! Multi-urn sequential search.
//!
//! A searcher draws marbles one at a time from a set of urns, each holding at
//! most one red marble, and wants to find a red marble with as few blue draws
//! as possible. The joint prior over which urns hold red marbles may carry
//! arbitrary correlations.
//!
//! - [`model`]: urns, priors, validation and exact-placement probabilities.
//! - [`dynamics`]: posteriors, draw distributions and survival at any state.
//! - [`policy`]: policies, block policies and exact expected cost.
//! - [`optimizer`]: index-sorted and enumerated optimal policies.
//! - [`simulator`]: seeded Monte Carlo cross-checks.

pub mod dynamics;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod policy;
pub mod simulator;
pub mod subset;

pub use dynamics::{
    draw_distribution, posterior, posterior_independent, posterior_marginals,
    posterior_single_marble, survival, DrawDistribution, SearchState,
};
pub use error::{Error, Result};
pub use model::{
    build_problem, AtomicOutcome, PriorKind, PriorModel, PriorSpec, Problem, ProblemFile, Urn,
    ValidProblem, ValidationReport, Violation, Warning, VALIDATE_EPS,
};
pub use optimizer::{
    optimal_block_enum, optimal_block_independent, optimal_block_single_marble, optimal_full_enum,
    optimize_auto, rank_policies, Method, OptimizationResult, RankedPolicy, DEFAULT_BLOCK_CAP,
    DEFAULT_FULL_CAP, TIE_TOL,
};
pub use policy::{
    block_cost_independent, block_cost_single_marble, expected_cost, trace, BlockPolicy,
    CostReport, Policy, TraceRow,
};
pub use simulator::{run_trial, sample_placement, simulate, SimulationReport, TrialOutcome};
pub use subset::{UrnSet, MAX_URNS};
