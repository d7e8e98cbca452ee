use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Running mean/variance (Welford) with an exact merge (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        self.mean += delta * nb / n as f64;
        self.m2 += other.m2 + delta * delta * na * nb / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> McEstimate {
        let stderr = (self.n >= 2).then(|| {
            let var = (self.m2 / (self.n - 1) as f64).max(0.0);
            (var / self.n as f64).sqrt()
        });
        McEstimate { mean: self.mean, stderr, n: self.n }
    }
}

impl Extend<f64> for Accumulator {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::new();
        acc.extend(iter);
        acc
    }
}

/// Sample mean with its standard error. `stderr` is `None` below two samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: Option<f64>,
    pub n: u64,
}

impl McEstimate {
    /// Symmetric normal interval at the given confidence (e.g. 0.99).
    pub fn ci(&self, confidence: f64) -> Option<(f64, f64)> {
        let se = self.stderr?;
        let half = normal_quantile(0.5 + confidence / 2.0) * se;
        Some((self.mean - half, self.mean + half))
    }

    pub fn half_width(&self, confidence: f64) -> Option<f64> {
        self.ci(confidence).map(|(lo, hi)| 0.5 * (hi - lo))
    }

    pub fn stderr_or_zero(&self) -> f64 {
        self.stderr.unwrap_or(0.0)
    }

    /// Affine image `a + b * X` of the estimated quantity.
    pub fn affine(&self, a: f64, b: f64) -> McEstimate {
        McEstimate {
            mean: a + b * self.mean,
            stderr: self.stderr.map(|s| s * b.abs()),
            n: self.n,
        }
    }
}

pub fn accumulate(values: impl IntoIterator<Item = f64>) -> McEstimate {
    values.into_iter().collect::<Accumulator>().estimate()
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `|a - b| / sqrt(se_a^2 + se_b^2)`.
pub fn combined_z(a: &McEstimate, b: &McEstimate) -> f64 {
    let se = (a.stderr_or_zero().powi(2) + b.stderr_or_zero().powi(2)).sqrt();
    let d = (a.mean - b.mean).abs();
    if se == 0.0 {
        if d == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        d / se
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_sample() {
        let e = accumulate([1.0, 1.0, 1.0, 1.0]);
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.stderr, Some(0.0));
    }

    #[test]
    fn two_points() {
        let e = accumulate([0.0, 2.0]);
        assert!((e.mean - 1.0).abs() < 1e-15);
        assert!((e.stderr.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_point_has_no_stderr() {
        assert_eq!(accumulate([3.0]).stderr, None);
        assert_eq!(accumulate([3.0]).ci(0.99), None);
    }

    #[test]
    fn merge_law() {
        let mut a: Accumulator = [1.0, 1.0].into_iter().collect();
        let b: Accumulator = [3.0, 3.0].into_iter().collect();
        a.merge(&b);
        assert_eq!(a.estimate(), accumulate([1.0, 1.0, 3.0, 3.0]));
    }

    #[test]
    fn large_offset_is_stable() {
        let e = accumulate((0..1000).map(|i| 1e9 + (i % 2) as f64));
        assert!((e.mean - (1e9 + 0.5)).abs() < 1e-6);
        let sd = e.stderr.unwrap() * (1000f64).sqrt();
        assert!((sd - 0.50025).abs() < 1e-4);
    }

    #[test]
    fn coverage_of_99pct_interval() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let reps = 10_000;
        let mut covered = 0;
        for _ in 0..reps {
            let e = accumulate((0..50).map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                2.0 + z
            }));
            let (lo, hi) = e.ci(0.99).unwrap();
            if lo <= 2.0 && 2.0 <= hi {
                covered += 1;
            }
        }
        let rate = covered as f64 / reps as f64;
        assert!((rate - 0.99).abs() <= 0.01, "coverage {rate}");
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(
            xs in proptest::collection::vec(-1e3f64..1e3, 0..40),
            ys in proptest::collection::vec(-1e3f64..1e3, 0..40),
            zs in proptest::collection::vec(-1e3f64..1e3, 0..40),
        ) {
            let a: Accumulator = xs.iter().copied().collect();
            let b: Accumulator = ys.iter().copied().collect();
            let c: Accumulator = zs.iter().copied().collect();
            let mut left = a; left.merge(&b); left.merge(&c);
            let mut bc = b; bc.merge(&c);
            let mut right = a; right.merge(&bc);
            let mut swapped = c; swapped.merge(&b); swapped.merge(&a);
            let all: Accumulator = xs.iter().chain(&ys).chain(&zs).copied().collect();
            for acc in [left, right, swapped] {
                let (e, f) = (acc.estimate(), all.estimate());
                prop_assert_eq!(e.n, f.n);
                prop_assert!((e.mean - f.mean).abs() <= 1e-12 * (1.0 + f.mean.abs()));
                if let (Some(s), Some(t)) = (e.stderr, f.stderr) {
                    prop_assert!((s - t).abs() <= 1e-10 * (1.0 + t));
                }
            }
        }
    }
}
