//! Equilibrium checks for the continuous-time examples: representative
//! utilities, Negishi aggregation and patching of deflators.
//!
//! The agents' outcomes here are scenario inputs. Exact multi-agent solves
//! live in [`crate::lattice::equilibrium`].

pub mod negishi;
pub mod patching;
pub mod scenario;
pub mod utility;

pub use negishi::{
    aggregate_allocation, aggregate_utility, negishi_weights, round_trip_residual, verify_aggregation, AggregationReport,
    AggregationRow, Allocation, NegishiWeights,
};
pub use patching::{
    deflator_from_integrand, partition, patch_deflators, run_patching, HoldingSchedule, IntegrandSpec, PatchAgent,
    PatchedIntegrand, PatchingReport, PatchingScenario,
};
pub use scenario::{clearing_error, run_negishi, AgentOutcome, NegishiReport, NegishiScenario, ScenarioAgent};
pub use utility::{optimality_gap, representative_utility, OptimalityGap, UtilityKind, UtilitySpec};
