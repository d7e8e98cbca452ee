//! Exact finite-market oracle: event trees, arbitrage searches, measure and
//! deflator feasibility, utility maximisation and its dual, equilibrium.

pub mod arbitrage;
pub mod duality;
pub mod equilibrium;
mod lp;
pub mod measures;
pub mod tree;
pub mod utility;

pub use arbitrage::{find_arbitrage, find_dominating_gain, find_dominating_strategy, find_unbounded_profit, is_c_maximal, Witness};
pub use duality::{classify, generate_family, verify_duality_theorem, Classification, DualityReport, FamilyConfig};
pub use measures::{
    find_local_martingale_deflator, find_local_martingale_measure, find_martingale_measure,
    find_supermartingale_deflator, find_supermartingale_measure, Deflator, MeasureVector, DEFAULT_EPSILON,
};
pub use tree::{LatticeSpec, MarketLattice, TreeStrategy};
pub use utility::{
    conjugacy_check, expected_utility, solve_constrained_utility, solve_dual, AgentProblem, Conjugacy, DualOutcome,
    DualSolution, PrimalOutcome, PrimalSolution, UtilityKind,
};
