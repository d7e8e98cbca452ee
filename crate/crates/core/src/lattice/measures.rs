use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::lp::{Cmp, Lp, LpOutcome};
use crate::lattice::tree::MarketLattice;

/// Equivalence is approximated by a uniform lower bound on probabilities.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Transition probabilities of a candidate measure, one row per internal node.
/// Every entry is at least `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureVector {
    pub probs: Vec<Vec<f64>>,
    pub epsilon: f64,
}

impl MeasureVector {
    /// Density `dQ/dP` evaluated at every node.
    pub fn density(&self, lattice: &MarketLattice) -> Vec<f64> {
        let q = lattice.node_probs(&self.probs);
        let p = lattice.ref_node_probs();
        q.iter().zip(&p).map(|(a, b)| a / b).collect()
    }

    /// `E_Q[S_child | n] - S_n` per internal node.
    pub fn drift(&self, lattice: &MarketLattice) -> Vec<f64> {
        lattice
            .internal_nodes()
            .map(|n| {
                let m: f64 = lattice.children(n).zip(&self.probs[n]).map(|(c, q)| q * lattice.price(c)).sum();
                m - lattice.price(n)
            })
            .collect()
    }
}

/// Node values of a deflator, `values[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deflator {
    pub values: Vec<f64>,
    pub epsilon: f64,
}

fn check_eps(lattice: &MarketLattice, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0 / lattice.branching() as f64) {
        return invalid(format!("epsilon must lie in (0, 1/branching), got {eps}"));
    }
    Ok(())
}

/// Certified-feasibility slack: a recovered point counts only if it meets
/// every row and bound to this accuracy in plain arithmetic. The solver
/// itself works to 1e-8, so near-misses it accepts are rejected here.
const CERTIFY_TOL: f64 = 1e-11;

/// Floor used when re-solving for a representative point once strict
/// feasibility is established; comfortably above the solver tolerance.
const REPRESENTATIVE_FLOOR: f64 = 1e-6;

/// One node: `q` in the simplex with `sum q S_c (op) S_n`.
///
/// Phase 1 maximises the smallest `q_c`; the node is feasible at level `eps`
/// when that point is certified with `min q >= eps`. Phase 2 then picks the
/// feasible point closest to `p` in L1.
fn node_measure(prices: &[f64], s: f64, p: &[f64], eps: f64, op: Cmp) -> Option<Vec<f64>> {
    let b = prices.len();
    // Centred, scaled moves keep the price row well conditioned.
    let moves: Vec<f64> = prices.iter().map(|&sc| (sc - s) / s).collect();
    let build = |lp: &mut Lp, floor: f64| -> Vec<usize> {
        let q: Vec<usize> = (0..b).map(|_| lp.var(0.0, floor, 1.0)).collect();
        let ones: Vec<(usize, f64)> = q.iter().map(|&v| (v, 1.0)).collect();
        lp.row(&ones, Cmp::Eq, 1.0);
        let row: Vec<(usize, f64)> = q.iter().zip(&moves).map(|(&v, &m)| (v, m)).collect();
        lp.row(&row, op, 0.0);
        q
    };

    let mut lp = Lp::maximize();
    let q = build(&mut lp, 0.0);
    let t = lp.var(1.0, f64::NEG_INFINITY, 1.0);
    for &v in &q {
        lp.row(&[(v, 1.0), (t, -1.0)], Cmp::Ge, 0.0);
    }
    let LpOutcome::Optimal { values, .. } = lp.solve() else {
        return None;
    };
    let first: Vec<f64> = q.iter().map(|&v| values[v]).collect();
    let min_q = first.iter().copied().fold(f64::INFINITY, f64::min);
    if min_q < eps || lp.violation(&values) > CERTIFY_TOL {
        return None;
    }

    let floor = eps.max(REPRESENTATIVE_FLOOR.min(0.5 * min_q));
    let mut lp = Lp::minimize();
    let q = build(&mut lp, floor);
    let dev: Vec<usize> = (0..b).map(|_| lp.var(1.0, 0.0, f64::INFINITY)).collect();
    for k in 0..b {
        lp.row(&[(dev[k], 1.0), (q[k], -1.0)], Cmp::Ge, -p[k]);
        lp.row(&[(dev[k], 1.0), (q[k], 1.0)], Cmp::Ge, p[k]);
    }
    match lp.solve() {
        LpOutcome::Optimal { values, .. } if lp.violation(&values) <= CERTIFY_TOL => {
            Some(q.iter().map(|&v| values[v]).collect())
        }
        _ => Some(first),
    }
}

fn per_node(lattice: &MarketLattice, eps: f64, op: Cmp) -> Option<MeasureVector> {
    let mut probs = Vec::with_capacity(lattice.n_internal());
    for n in lattice.internal_nodes() {
        let prices: Vec<f64> = lattice.children(n).map(|c| lattice.price(c)).collect();
        probs.push(node_measure(&prices, lattice.price(n), &lattice.ref_probs()[n], eps, op)?);
    }
    Some(MeasureVector { probs, epsilon: eps })
}

/// Element of `M_sup`: per node `sum q S_child <= S_node`.
pub fn find_supermartingale_measure(lattice: &MarketLattice, eps: f64) -> Result<Option<MeasureVector>> {
    check_eps(lattice, eps)?;
    Ok(per_node(lattice, eps, Cmp::Le))
}

/// Element of `M_loc` from the per-node equality system. On a finite tree
/// a local martingale is a martingale, so this must agree with
/// [`find_martingale_measure`].
pub fn find_local_martingale_measure(lattice: &MarketLattice, eps: f64) -> Result<Option<MeasureVector>> {
    check_eps(lattice, eps)?;
    Ok(per_node(lattice, eps, Cmp::Eq))
}

/// Element of `M`, solved globally over leaf masses with the martingale
/// property imposed as `E_Q[S_T | F_n] = S_n` at every internal node, i.e.
/// through terminal prices rather than one step at a time. Feasible at
/// level `eps` when some certified solution has every leaf mass `>= eps`
/// (so every transition is `>= eps` too).
pub fn find_martingale_measure(lattice: &MarketLattice, eps: f64) -> Result<Option<MeasureVector>> {
    check_eps(lattice, eps)?;
    let leaves = lattice.leaves();
    let n_leaves = leaves.len();
    let under = descendants_at_leaves(lattice);
    let build = |lp: &mut Lp, floor: f64| -> Vec<usize> {
        let q: Vec<usize> = (0..n_leaves).map(|_| lp.var(0.0, floor, 1.0)).collect();
        let ones: Vec<(usize, f64)> = q.iter().map(|&v| (v, 1.0)).collect();
        lp.row(&ones, Cmp::Eq, 1.0);
        for n in lattice.internal_nodes() {
            let s = lattice.price(n);
            let row: Vec<(usize, f64)> =
                under[n].iter().map(|&k| (q[k], (lattice.price(leaves.start + k) - s) / s)).collect();
            lp.row(&row, Cmp::Eq, 0.0);
        }
        q
    };

    let mut lp = Lp::maximize();
    let q = build(&mut lp, 0.0);
    let t = lp.var(1.0, f64::NEG_INFINITY, 1.0);
    for &v in &q {
        lp.row(&[(v, 1.0), (t, -1.0)], Cmp::Ge, 0.0);
    }
    let LpOutcome::Optimal { values, .. } = lp.solve() else {
        return Ok(None);
    };
    let min_q = q.iter().map(|&v| values[v]).fold(f64::INFINITY, f64::min);
    if min_q < eps || lp.violation(&values) > CERTIFY_TOL {
        return Ok(None);
    }
    let mut masses: Vec<f64> = q.iter().map(|&v| values[v]).collect();

    let p = lattice.ref_node_probs();
    let floor = eps.max(REPRESENTATIVE_FLOOR.min(0.5 * min_q));
    let mut lp = Lp::minimize();
    let q = build(&mut lp, floor);
    let dev: Vec<usize> = (0..n_leaves).map(|_| lp.var(1.0, 0.0, f64::INFINITY)).collect();
    for (k, leaf) in leaves.clone().enumerate() {
        lp.row(&[(dev[k], 1.0), (q[k], -1.0)], Cmp::Ge, -p[leaf]);
        lp.row(&[(dev[k], 1.0), (q[k], 1.0)], Cmp::Ge, p[leaf]);
    }
    if let LpOutcome::Optimal { values, .. } = lp.solve() {
        if lp.violation(&values) <= CERTIFY_TOL {
            masses = q.iter().map(|&v| values[v]).collect();
        }
    }

    // Subtree masses give the transition rows.
    let mut mass = vec![0.0; lattice.n_nodes()];
    for (k, leaf) in leaves.enumerate() {
        mass[leaf] = masses[k];
    }
    for n in lattice.internal_nodes().rev() {
        mass[n] = lattice.children(n).map(|c| mass[c]).sum();
    }
    let probs: Vec<Vec<f64>> = lattice
        .internal_nodes()
        .map(|n| lattice.children(n).map(|c| mass[c] / mass[n]).collect())
        .collect();
    Ok(Some(MeasureVector { probs, epsilon: eps }))
}

/// Leaf offsets (relative to the first leaf) below each internal node.
fn descendants_at_leaves(lattice: &MarketLattice) -> Vec<Vec<usize>> {
    let first = lattice.leaves().start;
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); lattice.n_internal()];
    for leaf in lattice.leaves() {
        for a in lattice.ancestry(leaf) {
            if a < lattice.n_internal() {
                out[a].push(leaf - first);
            }
        }
    }
    out
}

/// Node-value formulation. Maximises the smallest node value `t` (the root
/// is pinned to 1) and then certifies `Y_child >= eps Y_node` on the
/// recovered point.
fn deflator_lp(lattice: &MarketLattice, eps: f64, supermartingale: bool) -> Option<Deflator> {
    let mut lp = Lp::maximize();
    let y: Vec<usize> = (0..lattice.n_nodes())
        .map(|i| if i == 0 { lp.var(0.0, 1.0, 1.0) } else { lp.var(0.0, 0.0, f64::INFINITY) })
        .collect();
    let t = lp.var(1.0, f64::NEG_INFINITY, 1.0);
    for &v in &y[1..] {
        lp.row(&[(v, 1.0), (t, -1.0)], Cmp::Ge, 0.0);
    }
    for n in lattice.internal_nodes() {
        let s = lattice.price(n);
        let p = &lattice.ref_probs()[n];
        let kids: Vec<usize> = lattice.children(n).collect();
        let mut cash: Vec<(usize, f64)> = kids.iter().zip(p).map(|(&c, &pc)| (y[c], pc)).collect();
        cash.push((y[n], -1.0));
        let moves: Vec<f64> = kids.iter().map(|&c| (lattice.price(c) - s) / s).collect();
        if supermartingale {
            lp.row(&cash, Cmp::Le, 0.0);
            // Extreme rays of the one-step cone {(V, h) : V, h >= 0, V + h dS >= 0}.
            let worst = moves.iter().copied().fold(f64::INFINITY, f64::min);
            if worst < 0.0 {
                let hmax = -1.0 / worst;
                let mut row: Vec<(usize, f64)> =
                    kids.iter().zip(p).zip(&moves).map(|((&c, &pc), &m)| (y[c], pc * (1.0 + hmax * m))).collect();
                row.push((y[n], -1.0));
                lp.row(&row, Cmp::Le, 0.0);
            } else {
                let row: Vec<(usize, f64)> = kids.iter().zip(p).zip(&moves).map(|((&c, &pc), &m)| (y[c], pc * m)).collect();
                lp.row(&row, Cmp::Le, 0.0);
            }
        } else {
            lp.row(&cash, Cmp::Eq, 0.0);
            let row: Vec<(usize, f64)> = kids.iter().zip(p).zip(&moves).map(|((&c, &pc), &m)| (y[c], pc * m)).collect();
            lp.row(&row, Cmp::Eq, 0.0);
        }
    }
    let LpOutcome::Optimal { values, .. } = lp.solve() else {
        return None;
    };
    let vals: Vec<f64> = y.iter().map(|&v| values[v]).collect();
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if lp.violation(&values) > CERTIFY_TOL * scale {
        return None;
    }
    let strict = lattice.internal_nodes().all(|n| lattice.children(n).all(|c| vals[c] >= eps * vals[n]));
    strict.then_some(Deflator { values: vals, epsilon: eps })
}

/// Strictly positive `Y` with `Y (1 + H . S)` a martingale for every `H`.
pub fn find_local_martingale_deflator(lattice: &MarketLattice, eps: f64) -> Result<Option<Deflator>> {
    check_eps(lattice, eps)?;
    Ok(deflator_lp(lattice, eps, false))
}

/// Strictly positive `Y` with `Y (1 + H . S)` a supermartingale for every
/// 1-admissible `H >= 0`.
pub fn find_supermartingale_deflator(lattice: &MarketLattice, eps: f64) -> Result<Option<Deflator>> {
    check_eps(lattice, eps)?;
    Ok(deflator_lp(lattice, eps, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = DEFAULT_EPSILON;

    #[test]
    fn binomial_martingale_measure() {
        let l = MarketLattice::binomial(1.0, 2.0, 0.5, 0.5).unwrap();
        for found in [find_martingale_measure(&l, EPS), find_local_martingale_measure(&l, EPS)] {
            let q = found.unwrap().expect("feasible");
            assert!((q.probs[0][0] - 1.0 / 3.0).abs() < 1e-12, "{:?}", q.probs);
        }
        assert!(find_supermartingale_measure(&l, EPS).unwrap().is_some());
    }

    #[test]
    fn up_only_is_infeasible() {
        let l = MarketLattice::binomial(1.0, 3.0, 1.0, 0.5).unwrap();
        for eps in [1e-9, 1e-3, 0.4] {
            assert!(find_supermartingale_measure(&l, eps).unwrap().is_none());
            assert!(find_martingale_measure(&l, eps).unwrap().is_none());
            assert!(find_supermartingale_deflator(&l, eps).unwrap().is_none());
            assert!(find_local_martingale_deflator(&l, eps).unwrap().is_none());
        }
    }

    #[test]
    fn constant_price_keeps_reference() {
        let l = MarketLattice::constant(1.0, 2, 3).unwrap();
        let q = find_supermartingale_measure(&l, EPS).unwrap().unwrap();
        for (a, b) in q.probs.iter().flatten().zip(l.ref_probs().iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_period_product_measure() {
        let l = MarketLattice::multiplicative(1.0, &[2.0, 0.5], &[0.5, 0.5], 2).unwrap();
        let q = find_martingale_measure(&l, EPS).unwrap().unwrap();
        for row in &q.probs {
            assert!((row[0] - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(q.drift(&l).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn deflator_is_martingale_density() {
        let l = MarketLattice::binomial(1.0, 2.0, 0.5, 0.5).unwrap();
        let y = find_local_martingale_deflator(&l, EPS).unwrap().unwrap();
        assert!((y.values[1] - 2.0 / 3.0).abs() < 1e-12 && (y.values[2] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn falling_price_has_supermartingale_measure_only() {
        let l = MarketLattice::binomial(1.0, 1.0, 0.25, 0.5).unwrap();
        assert!(find_supermartingale_measure(&l, EPS).unwrap().is_some());
        assert!(find_supermartingale_deflator(&l, EPS).unwrap().is_some());
        assert!(find_martingale_measure(&l, EPS).unwrap().is_none());
    }

    #[test]
    fn epsilon_range_checked() {
        let l = MarketLattice::binomial(1.0, 2.0, 0.5, 0.5).unwrap();
        assert!(find_martingale_measure(&l, 0.6).is_err());
        assert!(find_martingale_measure(&l, 0.0).is_err());
    }
}
