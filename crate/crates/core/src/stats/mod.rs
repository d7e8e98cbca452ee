//! Monte Carlo statistics: accumulators, intervals and simple tests.

pub mod binomial;
pub mod estimate;
pub mod tests;

pub use binomial::{binomial_exact, BinomialEstimate};
pub use estimate::{accumulate, combined_z, normal_cdf, normal_quantile, Accumulator, McEstimate};
pub use tests::{equality_verified, one_sided_test, strictly_above, strictly_below, Direction, TestOutcome, Verdict};
