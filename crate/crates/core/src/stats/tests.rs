use serde::{Deserialize, Serialize};

use crate::stats::estimate::{normal_quantile, McEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Alternative: the mean lies below the null value.
    Less,
    /// Alternative: the mean lies above the null value.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Reject,
    FailToReject,
    /// Zero standard error with the mean sitting exactly on the null.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub z: f64,
    pub verdict: Verdict,
}

/// One-sided z-test of `mean == null` against `direction` at significance `alpha`.
pub fn one_sided_test(est: &McEstimate, null: f64, direction: Direction, alpha: f64) -> TestOutcome {
    let d = est.mean - null;
    let se = est.stderr.unwrap_or(0.0);
    if se == 0.0 {
        let verdict = match (d == 0.0, direction) {
            (true, _) => Verdict::Inconclusive,
            (false, Direction::Less) if d < 0.0 => Verdict::Reject,
            (false, Direction::Greater) if d > 0.0 => Verdict::Reject,
            _ => Verdict::FailToReject,
        };
        let z = if d == 0.0 { 0.0 } else { d.signum() * f64::INFINITY };
        return TestOutcome { z, verdict };
    }
    let z = d / se;
    let crit = normal_quantile(1.0 - alpha);
    let reject = match direction {
        Direction::Less => z < -crit,
        Direction::Greater => z > crit,
    };
    TestOutcome { z, verdict: if reject { Verdict::Reject } else { Verdict::FailToReject } }
}

/// "Strictly below" convention: the CI at `confidence` excludes `bound` from above.
pub fn strictly_below(est: &McEstimate, bound: f64, confidence: f64) -> bool {
    est.ci(confidence).is_some_and(|(_, hi)| hi < bound)
}

pub fn strictly_above(est: &McEstimate, bound: f64, confidence: f64) -> bool {
    est.ci(confidence).is_some_and(|(lo, _)| lo > bound)
}

/// "Equality verified" convention: the CI contains `value` and its
/// half-width is below `resolution`.
pub fn equality_verified(est: &McEstimate, value: f64, confidence: f64, resolution: f64) -> bool {
    match est.stderr {
        Some(0.0) => est.mean == value,
        _ => est
            .ci(confidence)
            .is_some_and(|(lo, hi)| lo <= value && value <= hi && 0.5 * (hi - lo) < resolution),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(mean: f64, se: f64) -> McEstimate {
        McEstimate { mean, stderr: Some(se), n: 1000 }
    }

    #[test]
    fn clear_rejection() {
        let o = one_sided_test(&est(0.9, 0.01), 1.0, Direction::Less, 0.001);
        assert!((o.z + 10.0).abs() < 1e-9);
        assert_eq!(o.verdict, Verdict::Reject);
    }

    #[test]
    fn at_null() {
        let o = one_sided_test(&est(1.0, 0.01), 1.0, Direction::Less, 0.001);
        assert_eq!(o.verdict, Verdict::FailToReject);
    }

    #[test]
    fn weak_evidence() {
        let o = one_sided_test(&est(0.97, 0.02), 1.0, Direction::Less, 0.001);
        assert!((o.z + 1.5).abs() < 1e-9);
        assert_eq!(o.verdict, Verdict::FailToReject);
    }

    #[test]
    fn degenerate_is_inconclusive() {
        let o = one_sided_test(&est(1.0, 0.0), 1.0, Direction::Less, 0.001);
        assert_eq!(o.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn conventions() {
        assert!(strictly_below(&est(0.9, 0.01), 1.0, 0.99));
        assert!(!strictly_below(&est(0.99, 0.01), 1.0, 0.99));
        assert!(equality_verified(&est(0.999, 0.002), 1.0, 0.99, 0.01));
        assert!(!equality_verified(&est(0.999, 0.01), 1.0, 0.99, 0.01));
    }
}
