use serde::{Deserialize, Serialize};

use crate::equilibrium::negishi::{negishi_weights, round_trip_residual, verify_aggregation, AggregationReport};
use crate::equilibrium::utility::{representative_utility, UtilityKind, UtilitySpec};
use crate::error::{invalid, LabError, Result};
use crate::follmer::{simulate_reference, BundleConfig, SERIES_S1, SERIES_Z1};
use crate::processes::PropParams;
use crate::sde::{constant_fraction, RandomSource};

/// What an agent ends up with in a given (solved or synthesised) economy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub utility: UtilitySpec,
    pub terminal_wealth: Vec<f64>,
    /// `holdings[path][cell]`; empty when only terminal wealth is known.
    pub holdings: Vec<Vec<f64>>,
}

impl AgentOutcome {
    pub fn validate(&self) -> Result<()> {
        self.utility.validate()?;
        match self.terminal_wealth.iter().position(|&x| !(x > 0.0)) {
            Some(i) => invalid(format!("terminal wealth on path {i} is {}", self.terminal_wealth[i])),
            None => Ok(()),
        }
    }
}

/// Largest `|sum_k H^k - 1|` over paths and cells.
pub fn clearing_error(outcomes: &[AgentOutcome]) -> Result<f64> {
    let Some(first) = outcomes.first() else {
        return invalid("no agents");
    };
    let mut worst: f64 = 0.0;
    for (i, row) in first.holdings.iter().enumerate() {
        for j in 0..row.len() {
            let total: f64 = outcomes.iter().map(|o| o.holdings[i][j]).sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAgent {
    pub utility: UtilityKind,
    /// Constant share of the supply held throughout.
    pub shares: f64,
}

/// Agents splitting the supply of the first example's price; candidates are
/// constrained constant-fraction strategies started at `S_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegishiScenario {
    pub horizon: f64,
    pub beta: f64,
    pub n_steps: usize,
    pub n_bins: usize,
    pub n_paths: u64,
    pub seed: u64,
    pub agents: Vec<ScenarioAgent>,
    pub fractions: Vec<f64>,
    pub confidence: f64,
}

impl Default for NegishiScenario {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            beta: 2.0,
            n_steps: 1024,
            n_bins: 64,
            n_paths: 20_000,
            seed: 48,
            agents: vec![
                ScenarioAgent { utility: UtilityKind::Log, shares: 0.3 },
                ScenarioAgent { utility: UtilityKind::Power { gamma: 0.5 }, shares: 0.5 },
                ScenarioAgent { utility: UtilityKind::Representative { gamma: 0.25 }, shares: 0.2 },
            ],
            fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            confidence: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegishiReport {
    pub n_paths: usize,
    /// Largest `|c_k - X_k|` from re-solving the aggregate problem at `S_T`.
    pub wealth_residual: f64,
    /// Largest `|mu / Z_T - 1|`.
    pub multiplier_residual: f64,
    /// Largest `|Z_T S_T - 1|`, zero up to rounding in this market.
    pub deflated_price_error: f64,
    pub aggregation: AggregationReport,
}

pub fn run_negishi(sc: &NegishiScenario) -> Result<NegishiReport> {
    let total: f64 = sc.agents.iter().map(|a| a.shares).sum();
    if (total - 1.0).abs() > 1e-12 || sc.agents.iter().any(|a| !(a.shares > 0.0)) {
        return invalid(format!("shares must be positive and sum to 1, got {total}"));
    }
    let params = PropParams::new(sc.horizon, sc.beta, sc.n_steps)?;
    let cfg = BundleConfig {
        n_bins: sc.n_bins,
        keep: Some(vec![SERIES_Z1.into(), SERIES_S1.into()]),
        ..BundleConfig::new(sc.n_paths)
    };
    let bundle = simulate_reference(&params, &cfg, &RandomSource::new(sc.seed))?;
    let terminal = |name: &str| -> Result<Vec<f64>> {
        bundle
            .series(name)?
            .iter()
            .map(|p| p.terminal().ok_or_else(|| LabError::ContractViolation(format!("{name} exploded"))))
            .collect()
    };
    let (z, s) = (terminal(SERIES_Z1)?, terminal(SERIES_S1)?);
    let outcomes: Vec<(UtilitySpec, Vec<f64>)> = sc
        .agents
        .iter()
        .map(|a| {
            let u = match a.utility {
                UtilityKind::Log => UtilitySpec::log(),
                UtilityKind::Power { gamma } => UtilitySpec::power(gamma)?,
                UtilityKind::Representative { gamma } => representative_utility(gamma, &z, &s)?,
            };
            Ok((u, s.iter().map(|v| a.shares * v).collect()))
        })
        .collect::<Result<_>>()?;
    let weights = negishi_weights(&z, &outcomes)?;
    let (wealth_residual, multiplier_residual) = round_trip_residual(&weights, &z, &outcomes)?;
    let prices = bundle.series(SERIES_S1)?;
    let candidates = sc
        .fractions
        .iter()
        .map(|&pi| {
            let x = prices
                .iter()
                .map(|p| constant_fraction(pi, 1.0, p).map(|(_, w)| w.terminal().unwrap_or(f64::NAN)))
                .collect::<Result<Vec<f64>>>()?;
            Ok((format!("pi={pi}"), x))
        })
        .collect::<Result<Vec<_>>>()?;
    let specs: Vec<UtilitySpec> = outcomes.iter().map(|o| o.0.clone()).collect();
    let aggregation = verify_aggregation(&weights, &specs, &z, &s, &candidates, sc.confidence)?;
    let deflated_price_error = z.iter().zip(&s).map(|(a, b)| (a * b - 1.0).abs()).fold(0.0, f64::max);
    Ok(NegishiReport { n_paths: z.len(), wealth_residual, multiplier_residual, deflated_price_error, aggregation })
}
