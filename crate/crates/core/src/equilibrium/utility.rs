use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::stats::{accumulate, McEstimate};

/// Shape of a per-path utility `w(omega) u(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityKind {
    Log,
    /// `x^(1-gamma) / (1-gamma)`.
    Power { gamma: f64 },
    /// Power shape whose state weight makes `U'(S_T) = Z_T`.
    Representative { gamma: f64 },
}

impl UtilityKind {
    /// Curvature `gamma` of `u`, 1 for log.
    pub fn gamma(&self) -> f64 {
        match *self {
            UtilityKind::Log => 1.0,
            UtilityKind::Power { gamma } | UtilityKind::Representative { gamma } => gamma,
        }
    }
}

/// A stochastic utility: one shape with a positive state weight per path.
/// Without weights every path has weight 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub kind: UtilityKind,
    pub weights: Option<Vec<f64>>,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        invalid(format!("power curvature must lie in (0, 1), got {gamma}"))
    }
}

impl UtilitySpec {
    pub fn log() -> Self {
        Self { kind: UtilityKind::Log, weights: None }
    }

    pub fn power(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { kind: UtilityKind::Power { gamma }, weights: None })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return invalid(format!("state weight on path {i} must be positive, got {w}"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            UtilityKind::Log => Ok(()),
            UtilityKind::Power { gamma } | UtilityKind::Representative { gamma } => check_gamma(gamma),
        }
    }

    pub fn weight(&self, path: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[path])
    }

    /// `U(x)` on one path; `-inf` for `x <= 0`.
    pub fn eval(&self, path: usize, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let w = self.weight(path);
        match self.kind {
            UtilityKind::Log => w * x.ln(),
            UtilityKind::Power { gamma } | UtilityKind::Representative { gamma } => {
                w * x.powf(1.0 - gamma) / (1.0 - gamma)
            }
        }
    }

    pub fn marginal(&self, path: usize, x: f64) -> f64 {
        self.weight(path) * x.powf(-self.kind.gamma())
    }

    /// Inverse of `x -> U'(x)` on one path.
    pub fn inverse_marginal(&self, path: usize, y: f64) -> f64 {
        let w = self.weight(path);
        match self.kind {
            UtilityKind::Log => w / y,
            _ => (w / y).powf(1.0 / self.kind.gamma()),
        }
    }
}

/// `U(x) = Z_T S_T^gamma x^(1-gamma) / (1-gamma)` per path, which makes
/// holding the market optimal: `U'(S_T) = Z_T`.
pub fn representative_utility(gamma: f64, z_t: &[f64], s_t: &[f64]) -> Result<UtilitySpec> {
    check_gamma(gamma)?;
    if z_t.len() != s_t.len() {
        return invalid(format!("{} deflator values but {} prices", z_t.len(), s_t.len()));
    }
    for (i, (&z, &s)) in z_t.iter().zip(s_t).enumerate() {
        if !(z > 0.0 && s > 0.0 && z.is_finite() && s.is_finite()) {
            return invalid(format!("path {i}: need Z_T > 0 and S_T > 0, got {z} and {s}"));
        }
    }
    let weights = z_t.iter().zip(s_t).map(|(&z, &s)| z * s.powf(gamma)).collect();
    Ok(UtilitySpec { kind: UtilityKind::Representative { gamma }, weights: Some(weights) })
}

/// The two inequalities of the concavity argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityGap {
    /// `E[U(X_T)] - E[U(S_T)]`.
    pub utility_gap: McEstimate,
    /// `E[U(X_T)] - E[U(S_T)] - E[Z_T (X_T - S_T)]`, at most zero by concavity
    /// when `U'(S_T) = Z_T`.
    pub tangent_gap: McEstimate,
    /// `E[Z_T X_T] - E[Z_T S_T]`, at most zero when `Z X` is a
    /// supermartingale and `Z S` a martingale from the same start.
    pub budget_gap: McEstimate,
    /// Paths where the tangent inequality fails pathwise.
    pub pathwise_violations: u64,
    /// Paths dropped for nonpositive candidate wealth.
    pub excluded: u64,
}

/// Relative slack allowed before a pathwise inequality counts as violated.
pub const PATHWISE_TOL: f64 = 1e-9;

pub fn optimality_gap(u: &UtilitySpec, x_t: &[f64], s_t: &[f64], z_t: &[f64]) -> Result<OptimalityGap> {
    u.validate()?;
    if x_t.len() != s_t.len() || s_t.len() != z_t.len() {
        return invalid("candidate, benchmark and deflator samples differ in length");
    }
    let mut utility = Vec::with_capacity(x_t.len());
    let mut tangent = Vec::with_capacity(x_t.len());
    let mut budget = Vec::with_capacity(x_t.len());
    let (mut excluded, mut violations) = (0, 0);
    for i in 0..x_t.len() {
        let (x, s, z) = (x_t[i], s_t[i], z_t[i]);
        if x <= 0.0 {
            excluded += 1;
            continue;
        }
        let (ux, us) = (u.eval(i, x), u.eval(i, s));
        let line = us + z * (x - s);
        if ux - line > PATHWISE_TOL * (1.0 + line.abs()) {
            violations += 1;
        }
        utility.push(ux - us);
        tangent.push(ux - line);
        budget.push(z * (x - s));
    }
    Ok(OptimalityGap {
        utility_gap: accumulate(utility),
        tangent_gap: accumulate(tangent),
        budget_gap: accumulate(budget),
        pathwise_violations: violations,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn representative_marginal_hits_deflator() {
        let z = [0.3, 1.0, 2.5];
        let s = [4.0, 1.0, 0.2];
        let u = representative_utility(0.5, &z, &s).unwrap();
        for i in 0..3 {
            assert!((u.marginal(i, s[i]) / z[i] - 1.0).abs() < 1e-12);
        }
        assert_eq!(u.eval(1, 4.0), 4.0);
    }

    #[test]
    fn substitution_example() {
        let u = representative_utility(0.5, &[1.0], &[4.0]).unwrap();
        assert!((u.eval(0, 4.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_curvature() {
        assert!(representative_utility(1.0, &[1.0], &[1.0]).is_err());
        assert!(UtilitySpec::power(0.0).is_err());
    }

    #[test]
    fn benchmark_has_zero_gaps() {
        let s = [1.0, 2.0, 0.5];
        let z: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
        let g = optimality_gap(&UtilitySpec::log(), &s, &s, &z).unwrap();
        assert_eq!(g.utility_gap.mean, 0.0);
        assert_eq!(g.budget_gap.mean, 0.0);
        assert_eq!(g.pathwise_violations, 0);
    }

    #[test]
    fn nonpositive_candidates_are_counted() {
        let g = optimality_gap(&UtilitySpec::log(), &[1.0, -1.0, 0.0], &[1.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(g.excluded, 2);
    }

    #[test]
    fn inverse_marginal_round_trips() {
        let u = UtilitySpec::power(0.3).unwrap().with_weights(vec![2.0]).unwrap();
        let y = u.marginal(0, 1.7);
        assert!((u.inverse_marginal(0, y) - 1.7).abs() < 1e-12);
    }
}
