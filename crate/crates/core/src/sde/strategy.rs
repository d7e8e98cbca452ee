use std::sync::Arc;

use crate::error::{invalid, LabError, Result};
use crate::sde::calculus::ito_integral;
use crate::sde::grid::TimeGrid;
use crate::sde::path::Path;

/// Grid-adapted holdings in the risky asset. `holdings[k]` is held over
/// `(t_k, t_{k+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    holdings: Path,
    constrained: bool,
    floor: f64,
}

impl Strategy {
    /// `holdings` may have `n_steps` or `n_steps + 1` entries; a missing
    /// terminal entry is filled with the last holding.
    pub fn new(grid: Arc<TimeGrid>, mut holdings: Vec<f64>, constrained: bool, floor: f64) -> Result<Self> {
        if !(floor >= 0.0) {
            return invalid(format!("admissibility floor must be >= 0, got {floor}"));
        }
        if holdings.len() == grid.n_steps() {
            let last = *holdings.last().unwrap_or(&0.0);
            holdings.push(last);
        }
        if constrained {
            if let Some(k) = holdings.iter().position(|&h| h < 0.0) {
                return Err(LabError::ContractViolation(format!(
                    "constrained strategy holds {} shares at grid index {k}",
                    holdings[k]
                )));
            }
        }
        let holdings = Path::new(grid, holdings)?;
        Ok(Self { holdings, constrained, floor })
    }

    pub fn constant(grid: Arc<TimeGrid>, shares: f64, constrained: bool, floor: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![shares; n], constrained, floor)
    }

    pub fn holdings(&self) -> &Path {
        &self.holdings
    }

    pub fn is_constrained(&self) -> bool {
        self.constrained
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
}

/// Wealth `x0 + (H . S)` plus the admissibility diagnosis.
#[derive(Debug, Clone)]
pub struct WealthOutcome {
    pub wealth: Path,
    /// Smallest value of the gains process `(H . S)_t` on the grid.
    pub min_gain: f64,
    /// Whether `(H . S) >= -floor` held at every grid time.
    pub admissible: bool,
}

pub fn wealth_process(x0: f64, strategy: &Strategy, price: &Path) -> Result<WealthOutcome> {
    if strategy.constrained {
        if let Some(k) = strategy.holdings.finite_values().iter().position(|&h| h < 0.0) {
            return Err(LabError::ContractViolation(format!(
                "negative holding at grid index {k} in a constrained strategy"
            )));
        }
    }
    let gains = ito_integral(&strategy.holdings, price)?;
    let min_gain = gains.finite_values().iter().copied().fold(0.0, f64::min);
    let admissible = min_gain >= -strategy.floor - 1e-12;
    Ok(WealthOutcome {
        wealth: gains.map(|g| x0 + g),
        min_gain,
        admissible,
    })
}

/// Self-financing strategy keeping the fraction `pi` of wealth in the risky
/// asset, rebalanced at each grid time.
pub fn constant_fraction(pi: f64, x0: f64, price: &Path) -> Result<(Strategy, Path)> {
    let s = price.finite_values();
    if s.len() < price.len() {
        return invalid("constant-fraction strategy needs a non-exploding price");
    }
    let mut wealth = Vec::with_capacity(s.len());
    let mut holdings = Vec::with_capacity(s.len());
    let mut x = x0;
    for k in 0..s.len() {
        wealth.push(x);
        let h = pi * x / s[k];
        holdings.push(h);
        if k + 1 < s.len() {
            x += h * (s[k + 1] - s[k]);
        }
    }
    let floor = x0.max(0.0);
    let strategy = Strategy::new(price.grid().clone(), holdings, pi >= 0.0, floor)?;
    Ok((strategy, Path::new(price.grid().clone(), wealth)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{build_example_one, PropParams};
    use crate::sde::calculus::sample_brownian;
    use crate::sde::grid::make_grid;
    use crate::sde::rng::RandomSource;

    fn gbm(seed: u64) -> Path {
        let g = make_grid(1.0, 128).unwrap();
        sample_brownian(&g, &RandomSource::new(seed), 0).map(|w| (0.3 * w).exp())
    }

    #[test]
    fn zero_holdings_keep_cash() {
        let s = gbm(1);
        let h = Strategy::constant(s.grid().clone(), 0.0, true, 0.0).unwrap();
        let w = wealth_process(2.5, &h, &s).unwrap();
        assert!(w.wealth.finite_values().iter().all(|&v| v == 2.5));
        assert!(w.admissible);
    }

    #[test]
    fn market_portfolio_tracks_price() {
        let s = gbm(2);
        let h = Strategy::constant(s.grid().clone(), 1.0, true, 1.0).unwrap();
        let w = wealth_process(s.initial().unwrap(), &h, &s).unwrap();
        for (a, b) in w.wealth.finite_values().iter().zip(s.finite_values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn buy_and_hold_on_example_one() {
        let params = PropParams::new(1.0, 2.0, 512).unwrap();
        let ex = build_example_one(&params, &RandomSource::new(3), 0);
        let h = Strategy::constant(ex.s.grid().clone(), 1.0, true, 1.0).unwrap();
        let w = wealth_process(1.0, &h, &ex.s).unwrap();
        let expected = 1.0 + ex.s.terminal().unwrap() - ex.s.initial().unwrap();
        assert!((w.wealth.terminal().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn constrained_rejects_short() {
        let g = make_grid(1.0, 4).unwrap();
        let err = Strategy::new(g, vec![0.0, 1.0, -0.5, 0.0], true, 0.0).unwrap_err();
        assert!(matches!(err, LabError::ContractViolation(_)));
    }

    #[test]
    fn floor_violation_reported() {
        let g = make_grid(1.0, 2).unwrap();
        let s = Path::new(g.clone(), vec![1.0, 0.2, 0.1]).unwrap();
        let h = Strategy::constant(g, 2.0, true, 1.0).unwrap();
        let w = wealth_process(1.0, &h, &s).unwrap();
        assert!(!w.admissible);
        assert!((w.min_gain + 1.8).abs() < 1e-12);
    }

    #[test]
    fn constant_fraction_matches_wealth_process() {
        let s = gbm(4);
        let (h, wealth) = constant_fraction(0.4, 1.0, &s).unwrap();
        let w = wealth_process(1.0, &h, &s).unwrap();
        for (a, b) in w.wealth.finite_values().iter().zip(wealth.finite_values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
