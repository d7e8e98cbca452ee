use serde::{Deserialize, Serialize};

use crate::equilibrium::utility::{UtilitySpec, PATHWISE_TOL};
use crate::error::{invalid, LabError, Result};
use crate::stats::{accumulate, McEstimate};

/// Stochastic weights `lambda[k][path]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegishiWeights {
    pub lambda: Vec<Vec<f64>>,
}

impl NegishiWeights {
    pub fn n_agents(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_paths(&self) -> usize {
        self.lambda.first().map_or(0, Vec::len)
    }

    pub fn at(&self, path: usize) -> Vec<f64> {
        self.lambda.iter().map(|l| l[path]).collect()
    }

    /// All weights times `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { lambda: self.lambda.iter().map(|l| l.iter().map(|v| v * c).collect()).collect() }
    }
}

/// `lambda_k = Z_T / U_k'(X_k)` pathwise.
pub fn negishi_weights(z_t: &[f64], agents: &[(UtilitySpec, Vec<f64>)]) -> Result<NegishiWeights> {
    if agents.is_empty() {
        return invalid("no agents");
    }
    let mut lambda = Vec::with_capacity(agents.len());
    for (k, (u, x)) in agents.iter().enumerate() {
        u.validate()?;
        if x.len() != z_t.len() {
            return invalid(format!("agent {k}: {} wealth values for {} paths", x.len(), z_t.len()));
        }
        let mut row = Vec::with_capacity(x.len());
        for (i, (&xi, &zi)) in x.iter().zip(z_t).enumerate() {
            if !(xi > 0.0 && xi.is_finite()) {
                return invalid(format!("agent {k}, path {i}: terminal wealth must be positive, got {xi}"));
            }
            if !(zi > 0.0 && zi.is_finite()) {
                return invalid(format!("path {i}: deflator must be positive, got {zi}"));
            }
            row.push(zi / u.marginal(i, xi));
        }
        lambda.push(row);
    }
    Ok(NegishiWeights { lambda })
}

/// Solution of `sum c_k = x`, `lambda_k U_k'(c_k) = mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub c: Vec<f64>,
    pub mu: f64,
    /// `sum c_k - x` at the returned multiplier.
    pub residual: f64,
    pub iterations: usize,
}

const MU_ITERATIONS: usize = 200;
const MU_TOL: f64 = 1e-12;

fn demand(lambda: &[f64], agents: &[UtilitySpec], path: usize, mu: f64) -> Vec<f64> {
    agents.iter().zip(lambda).map(|(u, &l)| u.inverse_marginal(path, mu / l)).collect()
}

/// Each `c_k = I_k(mu / lambda_k)` falls in `mu`, so the aggregate does too.
/// At `min_k lambda_k U_k'(x)` some agent alone takes `x`; at
/// `max_k lambda_k U_k'(x/n)` every agent takes at most `x/n`. Bisection in
/// `log mu` between the two.
pub fn aggregate_allocation(weights: &NegishiWeights, path: usize, x: f64, agents: &[UtilitySpec]) -> Result<Allocation> {
    if !(x > 0.0 && x.is_finite()) {
        return invalid(format!("total wealth must be positive, got {x}"));
    }
    if weights.n_agents() != agents.len() {
        return invalid(format!("{} weight rows for {} agents", weights.n_agents(), agents.len()));
    }
    let lambda = weights.at(path);
    if let Some(l) = lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return invalid(format!("path {path}: weight {l} is not positive"));
    }
    let n = agents.len() as f64;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (u, &l) in agents.iter().zip(&lambda) {
        lo = lo.min(l * u.marginal(path, x));
        hi = hi.max(l * u.marginal(path, x / n));
    }
    let total = |mu: f64| demand(&lambda, agents, path, mu).iter().sum::<f64>() - x;
    let mut iterations = 0;
    let mut mu = lo;
    if lo < hi {
        while iterations < MU_ITERATIONS {
            iterations += 1;
            mu = (lo * hi).sqrt();
            if mu <= lo || mu >= hi {
                break;
            }
            let r = total(mu);
            if r.abs() <= MU_TOL * x {
                break;
            }
            if r > 0.0 {
                lo = mu;
            } else {
                hi = mu;
            }
        }
    }
    let c = demand(&lambda, agents, path, mu);
    let residual = c.iter().sum::<f64>() - x;
    if !residual.is_finite() {
        return Err(LabError::ContractViolation(format!("path {path}: allocation diverged")));
    }
    Ok(Allocation { c, mu, residual, iterations })
}

/// `U(x; lambda) = sum_k lambda_k U_k(c_k*)`.
pub fn aggregate_utility(weights: &NegishiWeights, path: usize, x: f64, agents: &[UtilitySpec]) -> Result<f64> {
    if x <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let a = aggregate_allocation(weights, path, x, agents)?;
    Ok(agents.iter().zip(weights.at(path)).zip(&a.c).map(|((u, l), &c)| l * u.eval(path, c)).sum())
}

/// Largest `|c_k - X_k|` and largest `|mu/Z - 1|` when the aggregate problem
/// is solved at `S_T = sum_k X_k` with the weights the wealths generate.
pub fn round_trip_residual(
    weights: &NegishiWeights,
    z_t: &[f64],
    agents: &[(UtilitySpec, Vec<f64>)],
) -> Result<(f64, f64)> {
    let specs: Vec<UtilitySpec> = agents.iter().map(|(u, _)| u.clone()).collect();
    let (mut worst_c, mut worst_mu): (f64, f64) = (0.0, 0.0);
    for (i, &z) in z_t.iter().enumerate() {
        let total: f64 = agents.iter().map(|(_, x)| x[i]).sum();
        let a = aggregate_allocation(weights, i, total, &specs)?;
        for ((_, x), c) in agents.iter().zip(&a.c) {
            worst_c = worst_c.max((c - x[i]).abs());
        }
        worst_mu = worst_mu.max((a.mu / z - 1.0).abs());
    }
    Ok((worst_c, worst_mu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationRow {
    pub label: String,
    /// `E[U(X_T; lambda)] - E[U(S_T; lambda)]`.
    pub gap: McEstimate,
    pub upper_ci: f64,
    /// Paths where `U(X; lambda) <= U(S; lambda) + Z (X - S)` fails.
    pub violations: u64,
    pub excluded: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationReport {
    pub confidence: f64,
    pub rows: Vec<AggregationRow>,
}

impl AggregationReport {
    pub fn total_violations(&self) -> u64 {
        self.rows.iter().map(|r| r.violations).sum()
    }

    /// Every candidate's upper bound is at most `tolerance` and no path
    /// breaks the tangent inequality.
    pub fn passes(&self, tolerance: f64) -> bool {
        self.total_violations() == 0 && self.rows.iter().all(|r| r.upper_ci <= tolerance)
    }

    pub const CSV_HEADER: &'static str = "candidate,gap_mean,gap_stderr,upper_ci,violations,excluded,n";

    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.label,
                r.gap.mean,
                r.gap.stderr_or_zero(),
                r.upper_ci,
                r.violations,
                r.excluded,
                r.gap.n
            )?;
        }
        Ok(())
    }
}

/// Compares each candidate terminal wealth against the market `S_T` under
/// the aggregate utility.
pub fn verify_aggregation(
    weights: &NegishiWeights,
    agents: &[UtilitySpec],
    z_t: &[f64],
    s_t: &[f64],
    candidates: &[(String, Vec<f64>)],
    confidence: f64,
) -> Result<AggregationReport> {
    if z_t.len() != s_t.len() || weights.n_paths() != s_t.len() {
        return invalid("deflator, price and weight samples differ in length");
    }
    let market: Vec<f64> =
        (0..s_t.len()).map(|i| aggregate_utility(weights, i, s_t[i], agents)).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(candidates.len());
    for (label, x) in candidates {
        if x.len() != s_t.len() {
            return invalid(format!("candidate {label}: {} values for {} paths", x.len(), s_t.len()));
        }
        let mut diffs = Vec::with_capacity(x.len());
        let (mut violations, mut excluded) = (0, 0);
        for i in 0..x.len() {
            if x[i] <= 0.0 {
                excluded += 1;
                continue;
            }
            let ux = aggregate_utility(weights, i, x[i], agents)?;
            let line = market[i] + z_t[i] * (x[i] - s_t[i]);
            if ux - line > PATHWISE_TOL * (1.0 + line.abs()) {
                violations += 1;
            }
            diffs.push(ux - market[i]);
        }
        let gap = accumulate(diffs);
        let upper_ci = gap.ci(confidence).map_or(gap.mean, |c| c.1);
        rows.push(AggregationRow { label: label.clone(), gap, upper_ci, violations, excluded });
    }
    Ok(AggregationReport { confidence, rows })
}
