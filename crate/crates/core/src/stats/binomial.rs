use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

/// Binomial proportion with an exact (Clopper–Pearson) interval.
///
/// With zero successes the upper bound is one-sided, `1 - (1 - c)^(1/n)`;
/// symmetrically with all successes the lower bound is one-sided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialEstimate {
    pub successes: u64,
    pub trials: u64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
}

pub fn binomial_exact(successes: u64, trials: u64, confidence: f64) -> BinomialEstimate {
    assert!(successes <= trials, "successes exceed trials");
    assert!(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0, 1)");
    if trials == 0 {
        return BinomialEstimate { successes, trials, point: 0.0, lower: 0.0, upper: 1.0, confidence };
    }
    let n = trials as f64;
    let s = successes as f64;
    let alpha = 1.0 - confidence;
    let (lower, upper) = if successes == 0 {
        (0.0, 1.0 - alpha.powf(1.0 / n))
    } else if successes == trials {
        (alpha.powf(1.0 / n), 1.0)
    } else {
        let lo = Beta::new(s, n - s + 1.0).expect("positive shape").inverse_cdf(alpha / 2.0);
        let hi = Beta::new(s + 1.0, n - s).expect("positive shape").inverse_cdf(1.0 - alpha / 2.0);
        (lo, hi)
    };
    BinomialEstimate { successes, trials, point: s / n, lower, upper, confidence }
}
