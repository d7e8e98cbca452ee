//! Gluing agents' deflators along their holding sets.
//!
//! Deflators are carried as exponent integrands against the driving
//! Brownian motion: `Y = E(-N)` with `N = n . W`. Patching concatenates
//! increments of `N`, which is not the same as splicing levels of `Y`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arbtests::{drift_test, BinVerdict, DriftConfig, DriftTestReport, TestKind};
use crate::error::{invalid, LabError, Result};
use crate::sde::{make_grid, sample_brownian, Path, RandomSource, TimeGrid};

/// Result of patching on one path: the owning agent and integrand per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchedIntegrand {
    /// `owner[j]` is the first agent holding a positive quantity in cell `j`.
    pub owner: Vec<usize>,
    pub integrand: Vec<f64>,
}

/// `D_1 = {H^1 > 0}`, `D_k = {H^k > 0}` minus the earlier sets, and
/// `n = sum_k 1_{D_k} n^k`. `holdings[k][j]` and `integrands[k][j]` are agent
/// `k`'s values on grid cell `j`.
pub fn patch_deflators(holdings: &[Vec<f64>], integrands: &[Vec<f64>]) -> Result<PatchedIntegrand> {
    if holdings.is_empty() || holdings.len() != integrands.len() {
        return invalid(format!("{} holding rows for {} integrand rows", holdings.len(), integrands.len()));
    }
    let cells = holdings[0].len();
    if holdings.iter().chain(integrands).any(|r| r.len() != cells) {
        return invalid("holding and integrand rows differ in length");
    }
    let mut owner = Vec::with_capacity(cells);
    let mut integrand = Vec::with_capacity(cells);
    for j in 0..cells {
        let Some(k) = (0..holdings.len()).find(|&k| holdings[k][j] > 0.0) else {
            return Err(LabError::ContractViolation(format!(
                "markets do not clear in cell {j}: no agent holds the asset"
            )));
        };
        owner.push(k);
        integrand.push(integrands[k][j]);
    }
    Ok(PatchedIntegrand { owner, integrand })
}

/// `D_k` indicators, agents by cells.
pub fn partition(patched: &PatchedIntegrand, n_agents: usize) -> Vec<Vec<bool>> {
    (0..n_agents).map(|k| patched.owner.iter().map(|&o| o == k).collect()).collect()
}

/// `E(-n . W)_t = exp(-sum n dW - 1/2 sum n^2 dt)`, using the predictable
/// bracket of the Brownian integral.
pub fn deflator_from_integrand(integrand: &[f64], w: &Path) -> Result<Path> {
    let grid = w.grid();
    if integrand.len() != grid.n_steps() {
        return invalid(format!("{} integrand cells for {} grid steps", integrand.len(), grid.n_steps()));
    }
    let wv = w.finite_values();
    if wv.len() != grid.len() {
        return invalid("driver must be finite on the whole grid");
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut exponent = 0.0;
    values.push(1.0);
    for (j, &n) in integrand.iter().enumerate() {
        exponent += -n * (wv[j + 1] - wv[j]) - 0.5 * n * n * grid.dt(j);
        values.push(exponent.exp());
    }
    Path::new(grid.clone(), values)
}

/// Holdings of one agent over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoldingSchedule {
    /// The whole supply on cells starting in `[from, to)`, nothing elsewhere.
    Interval { from: f64, to: f64 },
    Constant { shares: f64 },
}

impl HoldingSchedule {
    fn on(&self, grid: &TimeGrid) -> Vec<f64> {
        (0..grid.n_steps())
            .map(|j| match *self {
                HoldingSchedule::Interval { from, to } => {
                    let t = grid.time(j);
                    if t >= from && t < to { 1.0 } else { 0.0 }
                }
                HoldingSchedule::Constant { shares } => shares,
            })
            .collect()
    }
}

/// Exponent integrand of one agent's deflator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegrandSpec {
    /// Market price of risk where the agent holds, zero elsewhere.
    RiskPriceOnHoldings,
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchAgent {
    pub holdings: HoldingSchedule,
    pub integrand: IntegrandSpec,
}

/// Two-or-more-agent economy on a geometric Brownian price
/// `dS/S = theta sigma dt + sigma dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchingScenario {
    pub horizon: f64,
    pub n_steps: usize,
    pub n_bins: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Market price of risk.
    pub theta: f64,
    pub sigma: f64,
    pub agents: Vec<PatchAgent>,
    /// Two-sided level per bin.
    pub alpha: f64,
}

impl PatchingScenario {
    /// Agent 1 holds on the first half, agent 2 on the second, each
    /// deflating only where it holds.
    pub fn alternating() -> Self {
        let half = |from, to| PatchAgent {
            holdings: HoldingSchedule::Interval { from, to },
            integrand: IntegrandSpec::RiskPriceOnHoldings,
        };
        Self {
            horizon: 1.0,
            n_steps: 512,
            n_bins: 8,
            n_paths: 20_000,
            seed: 35,
            theta: 0.5,
            sigma: 1.0,
            agents: vec![half(0.0, 0.5), half(0.5, f64::INFINITY)],
            alpha: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.sigma > 0.0 && self.theta.is_finite()) {
            return invalid("horizon and volatility must be positive");
        }
        if self.agents.is_empty() {
            return invalid("no agents");
        }
        if self.n_bins == 0 || !self.n_steps.is_multiple_of(self.n_bins) {
            return invalid(format!("{} bins do not divide {} steps", self.n_bins, self.n_steps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchingReport {
    /// Two-sided drift test of `Y S` for the patched deflator.
    pub patched: DriftTestReport,
    /// The same test of `Y^k S` for each agent's own deflator.
    pub individual: Vec<DriftTestReport>,
    /// Bins lying entirely inside agent `k`'s set `D_k`.
    pub own_bins: Vec<Vec<usize>>,
    /// The sets `D_k` were disjoint and covered every cell on every path.
    pub partition_ok: bool,
}

impl PatchingReport {
    /// Bins outside agent `k`'s own set where `Y^k S` shows drift.
    pub fn off_own_failures(&self, k: usize) -> Vec<usize> {
        self.individual[k]
            .bins
            .iter()
            .enumerate()
            .filter(|(b, s)| !self.own_bins[k].contains(b) && s.verdict != BinVerdict::Zero)
            .map(|(b, _)| b)
            .collect()
    }

    /// Patched `Y S` is driftless on every bin while some agent's own
    /// deflator fails off its holding set.
    pub fn demonstrates_locality(&self) -> bool {
        self.partition_ok
            && self.patched.passes()
            && (0..self.individual.len()).any(|k| !self.off_own_failures(k).is_empty())
    }

    pub fn write_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        self.patched.write_csv(&mut out, true)?;
        for r in &self.individual {
            r.write_csv(&mut out, false)?;
        }
        Ok(())
    }
}

struct PathResult {
    patched: Path,
    individual: Vec<Path>,
    partition_ok: bool,
}

fn observe(p: &Path, idx: &[usize], grid: &Arc<TimeGrid>) -> Result<Path> {
    let v = p.finite_values();
    Path::new(grid.clone(), idx.iter().map(|&k| v[k]).collect())
}

pub fn run_patching(sc: &PatchingScenario) -> Result<PatchingReport> {
    sc.validate()?;
    let grid = make_grid(sc.horizon, sc.n_steps)?;
    let idx = grid.observation_indices(sc.n_bins)?;
    let obs = Arc::new(grid.subgrid(&idx)?);
    let holdings: Vec<Vec<f64>> = sc.agents.iter().map(|a| a.holdings.on(&grid)).collect();
    let integrands: Vec<Vec<f64>> = sc
        .agents
        .iter()
        .zip(&holdings)
        .map(|(a, h)| match a.integrand {
            IntegrandSpec::RiskPriceOnHoldings => h.iter().map(|&x| if x > 0.0 { sc.theta } else { 0.0 }).collect(),
            IntegrandSpec::Constant { value } => vec![value; sc.n_steps],
        })
        .collect();
    // Holdings are deterministic, so one patch serves every path.
    let patched = patch_deflators(&holdings, &integrands)?;
    let sets = partition(&patched, sc.agents.len());
    let partition_ok = (0..sc.n_steps).all(|j| sets.iter().filter(|d| d[j]).count() == 1);
    let src = RandomSource::new(sc.seed);
    let drift = sc.theta * sc.sigma - 0.5 * sc.sigma * sc.sigma;
    let results: Vec<PathResult> = (0..sc.n_paths)
        .into_par_iter()
        .map(|i| -> Result<PathResult> {
            let w = sample_brownian(&grid, &src, i as u64);
            let s: Vec<f64> = w.finite_values().iter().zip(grid.times()).map(|(&wv, &t)| (sc.sigma * wv + drift * t).exp()).collect();
            let s = Path::new(grid.clone(), s)?;
            let ys = |n: &[f64]| -> Result<Path> { observe(&deflator_from_integrand(n, &w)?.mul(&s)?, &idx, &obs) };
            Ok(PathResult {
                patched: ys(&patched.integrand)?,
                individual: integrands.iter().map(|n| ys(n)).collect::<Result<_>>()?,
                partition_ok,
            })
        })
        .collect::<Result<_>>()?;
    let config = DriftConfig { alpha: sc.alpha, ..DriftConfig::default() };
    let patched_paths: Vec<Path> = results.iter().map(|r| r.patched.clone()).collect();
    let patched_report = drift_test(TestKind::LocalMartingale, "Y*S", "patched", &patched_paths, &config)?;
    let mut individual = Vec::with_capacity(sc.agents.len());
    for k in 0..sc.agents.len() {
        let paths: Vec<Path> = results.iter().map(|r| r.individual[k].clone()).collect();
        individual.push(drift_test(TestKind::LocalMartingale, &format!("Y{}*S", k + 1), "own", &paths, &config)?);
    }
    let bin_len = sc.n_steps / sc.n_bins;
    let own_bins = sets
        .iter()
        .map(|d| (0..sc.n_bins).filter(|&b| d[b * bin_len..(b + 1) * bin_len].iter().all(|&x| x)).collect())
        .collect();
    Ok(PatchingReport {
        patched: patched_report,
        individual,
        own_bins,
        partition_ok: results.iter().all(|r| r.partition_ok),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_holder_keeps_its_integrand() {
        let p = patch_deflators(&[vec![1.0; 4]], &[vec![0.3, 0.1, 0.2, 0.4]]).unwrap();
        assert_eq!(p.integrand, vec![0.3, 0.1, 0.2, 0.4]);
        assert!(p.owner.iter().all(|&o| o == 0));
    }

    #[test]
    fn alternating_holders_splice() {
        let h = [vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]];
        let n = [vec![1.0; 4], vec![2.0; 4]];
        let p = patch_deflators(&h, &n).unwrap();
        assert_eq!(p.integrand, vec![1.0, 1.0, 2.0, 2.0]);
        let d = partition(&p, 2);
        assert!((0..4).all(|j| d[0][j] ^ d[1][j]));
    }

    #[test]
    fn first_holder_wins_ties() {
        let h = [vec![0.5], vec![0.5]];
        let p = patch_deflators(&h, &[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(p.owner, vec![0]);
    }

    #[test]
    fn empty_cell_is_a_clearing_violation() {
        let h = [vec![1.0, 0.0], vec![0.0, 0.0]];
        let err = patch_deflators(&h, &[vec![0.0; 2], vec![0.0; 2]]).unwrap_err();
        assert!(matches!(err, LabError::ContractViolation(_)));
    }

    #[test]
    fn zero_integrand_is_flat() {
        let g = make_grid(1.0, 8).unwrap();
        let w = sample_brownian(&g, &RandomSource::new(1), 0);
        let y = deflator_from_integrand(&[0.0; 8], &w).unwrap();
        assert!(y.finite_values().iter().all(|&v| v == 1.0));
    }
}
