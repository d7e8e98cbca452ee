use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

/// Finite recombination-free event tree with a full `branching`-ary shape.
///
/// Nodes are numbered breadth-first from the root `0`; the children of node
/// `i` are `b*i + 1 ..= b*i + b`. Prices live on every node and the
/// reference transition probabilities on every internal node.
///
/// This is a discrete-time stand-in used as an exact oracle for the duality
/// logic. Prices jump, so nothing here says anything about continuous paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeSpec", into = "LatticeSpec")]
pub struct MarketLattice {
    depth: usize,
    branching: usize,
    prices: Vec<f64>,
    ref_probs: Vec<Vec<f64>>,
}

/// On-disk form. Deserialisation goes through [`MarketLattice::new`] so
/// every loaded lattice is validated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub depth: usize,
    pub branching: usize,
    pub prices: Vec<f64>,
    pub ref_probs: Vec<Vec<f64>>,
}

impl TryFrom<LatticeSpec> for MarketLattice {
    type Error = LabError;
    fn try_from(s: LatticeSpec) -> Result<Self> {
        MarketLattice::new(s.depth, s.branching, s.prices, s.ref_probs)
    }
}

impl From<MarketLattice> for LatticeSpec {
    fn from(l: MarketLattice) -> Self {
        LatticeSpec { depth: l.depth, branching: l.branching, prices: l.prices, ref_probs: l.ref_probs }
    }
}

fn node_count(depth: usize, b: usize) -> usize {
    (0..=depth).map(|k| b.pow(k as u32)).sum()
}

pub(crate) fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return invalid(format!("{what}: probabilities must lie in (0, 1), got {p:?}"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return invalid(format!("{what}: probabilities sum to {s}"));
    }
    Ok(())
}

impl MarketLattice {
    pub fn new(depth: usize, branching: usize, prices: Vec<f64>, ref_probs: Vec<Vec<f64>>) -> Result<Self> {
        if !(branching == 2 || branching == 3) {
            return invalid(format!("branching must be 2 or 3, got {branching}"));
        }
        if depth == 0 || depth > 5 {
            return invalid(format!("depth must be in 1..=5, got {depth}"));
        }
        let n = node_count(depth, branching);
        if prices.len() != n {
            return invalid(format!("expected {n} node prices, got {}", prices.len()));
        }
        if let Some(i) = prices.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return invalid(format!("price at node {i} must be positive and finite, got {}", prices[i]));
        }
        let internal = node_count(depth - 1, branching);
        if ref_probs.len() != internal {
            return invalid(format!("expected {internal} probability rows, got {}", ref_probs.len()));
        }
        for (i, row) in ref_probs.iter().enumerate() {
            if row.len() != branching {
                return invalid(format!("node {i}: expected {branching} probabilities, got {}", row.len()));
            }
            check_simplex(row, &format!("node {i}"))?;
        }
        Ok(Self { depth, branching, prices, ref_probs })
    }

    /// Full tree whose every internal node moves the price by the same
    /// factors (non-recombining, so `multipliers.len()` is the branching).
    pub fn multiplicative(s0: f64, multipliers: &[f64], probs: &[f64], depth: usize) -> Result<Self> {
        let b = multipliers.len();
        if probs.len() != b {
            return invalid("one probability per multiplier is required");
        }
        let n = node_count(depth, b.max(2));
        let internal = node_count(depth.saturating_sub(1), b.max(2));
        let mut prices = vec![s0; n];
        for i in 0..internal.min(n) {
            for (k, m) in multipliers.iter().enumerate() {
                let c = b * i + 1 + k;
                if c < n {
                    prices[c] = prices[i] * m;
                }
            }
        }
        Self::new(depth, b, prices, vec![probs.to_vec(); internal])
    }

    /// One-period binomial `S0 -> {up, down}`.
    pub fn binomial(s0: f64, up: f64, down: f64, p_up: f64) -> Result<Self> {
        Self::new(1, 2, vec![s0, up, down], vec![vec![p_up, 1.0 - p_up]])
    }

    pub fn constant(s0: f64, depth: usize, branching: usize) -> Result<Self> {
        let n = node_count(depth, branching);
        let internal = node_count(depth.saturating_sub(1), branching);
        let p = vec![1.0 / branching as f64; branching];
        Self::new(depth, branching, vec![s0; n], vec![p; internal])
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn price(&self, node: usize) -> f64 {
        self.prices[node]
    }

    pub fn ref_probs(&self) -> &[Vec<f64>] {
        &self.ref_probs
    }

    pub fn n_nodes(&self) -> usize {
        self.prices.len()
    }

    pub fn n_internal(&self) -> usize {
        self.ref_probs.len()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node >= self.n_internal()
    }

    pub fn leaves(&self) -> Range<usize> {
        self.n_internal()..self.n_nodes()
    }

    pub fn internal_nodes(&self) -> Range<usize> {
        0..self.n_internal()
    }

    pub fn children(&self, node: usize) -> Range<usize> {
        debug_assert!(!self.is_leaf(node));
        let first = self.branching * node + 1;
        first..first + self.branching
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        (node > 0).then(|| (node - 1) / self.branching)
    }

    /// Number of periods from the root.
    pub fn level(&self, node: usize) -> usize {
        let mut k = 0;
        let mut i = node;
        while i > 0 {
            i = (i - 1) / self.branching;
            k += 1;
        }
        k
    }

    /// Nodes from the root down to `node`, inclusive.
    pub fn ancestry(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut i = node;
        while let Some(p) = self.parent(i) {
            path.push(p);
            i = p;
        }
        path.reverse();
        path
    }

    /// Unconditional node probabilities under per-node transition rows `q`.
    pub fn node_probs(&self, q: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        out[0] = 1.0;
        for n in self.internal_nodes() {
            for (k, c) in self.children(n).enumerate() {
                out[c] = out[n] * q[n][k];
            }
        }
        out
    }

    pub fn ref_node_probs(&self) -> Vec<f64> {
        self.node_probs(&self.ref_probs)
    }

    /// Lattice with the same shape and probabilities but new prices.
    pub fn with_prices(&self, prices: Vec<f64>) -> Result<Self> {
        Self::new(self.depth, self.branching, prices, self.ref_probs.clone())
    }

    pub fn with_ref_probs(&self, ref_probs: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.depth, self.branching, self.prices.clone(), ref_probs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Node holdings on a tree: `holdings[n]` shares over the period leaving
/// internal node `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStrategy {
    pub holdings: Vec<f64>,
}

impl TreeStrategy {
    pub fn zero(lattice: &MarketLattice) -> Self {
        Self { holdings: vec![0.0; lattice.n_internal()] }
    }

    pub fn buy_and_hold(lattice: &MarketLattice) -> Self {
        Self { holdings: vec![1.0; lattice.n_internal()] }
    }

    /// Cumulative gains `(H . S)` at every node.
    pub fn gains(&self, lattice: &MarketLattice) -> Vec<f64> {
        let mut g = vec![0.0; lattice.n_nodes()];
        for n in lattice.internal_nodes() {
            for c in lattice.children(n) {
                g[c] = g[n] + self.holdings[n] * (lattice.price(c) - lattice.price(n));
            }
        }
        g
    }

    pub fn is_constrained(&self) -> bool {
        self.holdings.iter().all(|&h| h >= 0.0)
    }

    pub fn add(&self, other: &TreeStrategy) -> TreeStrategy {
        TreeStrategy { holdings: self.holdings.iter().zip(&other.holdings).map(|(a, b)| a + b).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfs_shape() {
        let l = MarketLattice::multiplicative(1.0, &[2.0, 0.5], &[0.5, 0.5], 3).unwrap();
        assert_eq!(l.n_nodes(), 15);
        assert_eq!(l.n_internal(), 7);
        assert_eq!(l.children(0), 1..3);
        assert_eq!(l.children(2), 5..7);
        assert_eq!(l.parent(6), Some(2));
        assert_eq!(l.level(14), 3);
        assert_eq!(l.ancestry(13), vec![0, 2, 6, 13]);
        assert_eq!(l.price(5), 1.0);
        assert_eq!(l.price(14), 0.125);
        let p: f64 = l.leaves().map(|i| l.ref_node_probs()[i]).sum();
        assert!((p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ternary_counts() {
        let l = MarketLattice::constant(1.0, 3, 3).unwrap();
        assert_eq!(l.n_nodes(), 40);
        assert_eq!(l.n_internal(), 13);
        assert_eq!(l.leaves(), 13..40);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let l = MarketLattice::binomial(1.0, 2.0, 0.5, 0.5).unwrap();
        let s = l.to_json().unwrap();
        assert!(s.contains("\"ref_probs\""));
        assert_eq!(MarketLattice::from_json(&s).unwrap(), l);
        let bad = r#"{"depth":1,"branching":2,"prices":[1.0,-2.0,0.5],"ref_probs":[[0.5,0.5]]}"#;
        assert!(MarketLattice::from_json(bad).is_err());
        let bad = r#"{"depth":1,"branching":2,"prices":[1.0,2.0,0.5],"ref_probs":[[0.3,0.5]]}"#;
        assert!(MarketLattice::from_json(bad).is_err());
    }

    #[test]
    fn gains_of_buy_and_hold() {
        let l = MarketLattice::multiplicative(1.0, &[1.5, 0.9, 1.0], &[0.2, 0.3, 0.5], 2).unwrap();
        let g = TreeStrategy::buy_and_hold(&l).gains(&l);
        for i in 0..l.n_nodes() {
            assert!((g[i] - (l.price(i) - 1.0)).abs() < 1e-14);
        }
    }
}
