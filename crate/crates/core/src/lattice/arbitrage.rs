use serde::{Deserialize, Serialize};

use crate::lattice::lp::{Cmp, Lp, LpOutcome};
use crate::lattice::tree::{MarketLattice, TreeStrategy};

/// With a zero target the witnesses form a cone: any one can be rescaled
/// until its largest excess hits the cap of 1, so the true optimum is 0 or
/// at least 1. Splitting at one half keeps the decision far from the
/// solver's 1e-8 tolerance.
const DECISION: f64 = 0.5;

/// Nonzero targets (dominance, C-maximality) are not conic under the
/// short-sale ban, so small excesses are real. Two orders above the solver
/// tolerance.
const DECISION_AFFINE: f64 = 1e-6;

/// Slack allowed when re-checking a witness in plain arithmetic.
const RECHECK_TOL: f64 = 1e-9;

/// A strategy whose terminal gain weakly beats a target, with the excess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub strategy: TreeStrategy,
    /// Terminal gain minus target, per leaf (leaf order).
    pub excess: Vec<f64>,
}

/// Gains at every node as linear forms in the holding variables: node `i`
/// gets `(holding var, coefficient)` terms.
fn gain_forms(lattice: &MarketLattice, hvars: &[usize]) -> Vec<Vec<(usize, f64)>> {
    let mut forms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lattice.n_nodes()];
    for n in lattice.internal_nodes() {
        for c in lattice.children(n) {
            let mut f = forms[n].clone();
            f.push((hvars[n], lattice.price(c) - lattice.price(n)));
            forms[c] = f;
        }
    }
    forms
}

fn holding_vars(lp: &mut Lp, lattice: &MarketLattice, constrained: bool) -> Vec<usize> {
    let lo = if constrained { 0.0 } else { f64::NEG_INFINITY };
    lattice.internal_nodes().map(|_| lp.var(0.0, lo, f64::INFINITY)).collect()
}

/// Searches for holdings whose terminal gain `G` satisfies `G - target >= 0`
/// at every leaf and `> 0` at some leaf. The LP maximises the summed excess
/// with the excess capped at 1 per leaf, so it is always bounded.
pub fn find_dominating_gain(lattice: &MarketLattice, target: &[f64], constrained: bool) -> Option<Witness> {
    assert_eq!(target.len(), lattice.leaves().len());
    let mut lp = Lp::maximize();
    let h = holding_vars(&mut lp, lattice, constrained);
    let forms = gain_forms(lattice, &h);
    for (k, leaf) in lattice.leaves().enumerate() {
        let d = lp.var(1.0, 0.0, 1.0);
        let mut row = forms[leaf].clone();
        row.push((d, -1.0));
        lp.row(&row, Cmp::Eq, target[k]);
    }
    let LpOutcome::Optimal { objective, values } = lp.solve() else {
        return None;
    };
    let threshold = if target.iter().all(|&t| t == 0.0) { DECISION } else { DECISION_AFFINE };
    if objective < threshold {
        return None;
    }
    let strategy = TreeStrategy { holdings: h.iter().map(|&v| values[v]).collect() };
    let g = strategy.gains(lattice);
    let excess: Vec<f64> = lattice.leaves().zip(target).map(|(l, t)| g[l] - t).collect();
    // Recheck on the recovered holdings rather than trusting the solver.
    let ok = excess.iter().all(|&e| e >= -RECHECK_TOL) && excess.iter().any(|&e| e > 0.1 * DECISION_AFFINE);
    ok.then_some(Witness { strategy, excess })
}

/// Arbitrage: terminal gain `>= 0` everywhere and `> 0` somewhere.
pub fn find_arbitrage(lattice: &MarketLattice, constrained: bool) -> Option<Witness> {
    let zero = vec![0.0; lattice.leaves().len()];
    find_dominating_gain(lattice, &zero, constrained)
}

/// Dominance of buy-and-hold: terminal gain `>= S_T - S_0`, strictly somewhere.
pub fn find_dominating_strategy(lattice: &MarketLattice, constrained: bool) -> Option<Witness> {
    let s0 = lattice.price(0);
    let target: Vec<f64> = lattice.leaves().map(|l| lattice.price(l) - s0).collect();
    find_dominating_gain(lattice, &target, constrained)
}

/// Unbounded profit with bounded risk. The 1-admissible terminal wealths
/// `1 + G` (wealth `>= 0` at every node) form an unbounded set exactly when
/// the recession cone contains a ray whose gain is `>= 0` at every node and
/// whose terminal gain is positive somewhere. That ray is searched for
/// directly; along it, `n` times the ray stays 1-admissible for every `n`.
pub fn find_unbounded_profit(lattice: &MarketLattice, constrained: bool) -> Option<Witness> {
    let mut lp = Lp::maximize();
    let h = holding_vars(&mut lp, lattice, constrained);
    let forms = gain_forms(lattice, &h);
    for n in 1..lattice.n_internal() {
        lp.row(&forms[n], Cmp::Ge, 0.0);
    }
    for leaf in lattice.leaves() {
        let d = lp.var(1.0, 0.0, 1.0);
        let mut row = forms[leaf].clone();
        row.push((d, -1.0));
        lp.row(&row, Cmp::Eq, 0.0);
    }
    let LpOutcome::Optimal { objective, values } = lp.solve() else {
        return None;
    };
    if objective < DECISION {
        return None;
    }
    let strategy = TreeStrategy { holdings: h.iter().map(|&v| values[v]).collect() };
    let g = strategy.gains(lattice);
    let ok = g.iter().all(|&x| x >= -RECHECK_TOL) && lattice.leaves().any(|l| g[l] > 0.1 * DECISION_AFFINE);
    ok.then(|| Witness { excess: lattice.leaves().map(|l| g[l]).collect(), strategy })
}

/// C-maximality of a constrained strategy: no other constrained strategy's
/// terminal gain weakly dominates it.
pub fn is_c_maximal(lattice: &MarketLattice, strategy: &TreeStrategy) -> bool {
    let g = strategy.gains(lattice);
    let target: Vec<f64> = lattice.leaves().map(|l| g[l]).collect();
    find_dominating_gain(lattice, &target, true).is_none()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn up_only_has_constrained_arbitrage() {
        let l = MarketLattice::binomial(1.0, 3.0, 1.0, 0.5).unwrap();
        let w = find_arbitrage(&l, true).expect("buying is an arbitrage");
        assert!(w.strategy.holdings[0] > 0.0);
        assert!(w.excess[0] > 0.0 && w.excess[1].abs() < 1e-12);
        assert!(find_unbounded_profit(&l, true).is_some());
    }

    #[test]
    fn binomial_has_none() {
        let l = MarketLattice::binomial(1.0, 2.0, 0.5, 0.5).unwrap();
        for c in [true, false] {
            assert!(find_arbitrage(&l, c).is_none());
            assert!(find_dominating_strategy(&l, c).is_none());
            assert!(find_unbounded_profit(&l, c).is_none());
        }
    }

    #[test]
    fn constant_price_has_none() {
        let l = MarketLattice::constant(2.0, 3, 3).unwrap();
        for c in [true, false] {
            assert!(find_arbitrage(&l, c).is_none());
            assert!(find_dominating_strategy(&l, c).is_none());
        }
    }

    #[test]
    fn cash_dominates_falling_price() {
        let l = MarketLattice::binomial(1.0, 1.0, 0.25, 0.5).unwrap();
        let w = find_dominating_strategy(&l, true).expect("cash dominates");
        assert!(w.strategy.holdings[0].abs() < 1e-12);
        // Falling price: no constrained arbitrage, but shorting is one.
        assert!(find_arbitrage(&l, true).is_none());
        assert!(find_arbitrage(&l, false).is_some());
    }

    #[test]
    fn buy_and_hold_is_c_maximal_only_without_dominance() {
        let b = MarketLattice::binomial(1.0, 2.0, 0.5, 0.5).unwrap();
        assert!(is_c_maximal(&b, &TreeStrategy::buy_and_hold(&b)));
        let d = MarketLattice::binomial(1.0, 1.0, 0.25, 0.5).unwrap();
        assert!(!is_c_maximal(&d, &TreeStrategy::buy_and_hold(&d)));
        // A small dominance margin is still found.
        let d = MarketLattice::binomial(1.0, 1.0, 0.9999, 0.5).unwrap();
        assert!(find_dominating_strategy(&d, true).is_some());
    }
}
