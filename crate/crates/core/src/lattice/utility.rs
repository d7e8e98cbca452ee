use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::lattice::arbitrage::{find_arbitrage, find_unbounded_profit, Witness};
use crate::lattice::lp::{Cmp, Lp, LpOutcome};
use crate::lattice::tree::{check_simplex, MarketLattice, TreeStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityKind {
    Log,
    /// `x^(1-gamma) / (1-gamma)` with `gamma` in (0, 1).
    Power { gamma: f64 },
}

impl UtilityKind {
    /// Relative risk aversion; log utility is the `gamma = 1` member.
    fn curvature(&self) -> f64 {
        match *self {
            UtilityKind::Log => 1.0,
            UtilityKind::Power { gamma } => gamma,
        }
    }

    /// `w U(x)` for a state weight `w`.
    pub fn eval(&self, w: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            UtilityKind::Log => w * x.ln(),
            UtilityKind::Power { gamma } => w * x.powf(1.0 - gamma) / (1.0 - gamma),
        }
    }

    pub fn marginal(&self, w: f64, x: f64) -> f64 {
        w * x.powf(-self.curvature())
    }

    /// Convex conjugate `V(eta) = sup_x (w U(x) - x eta)` and its first two
    /// derivatives.
    fn conjugate(&self, w: f64, eta: f64) -> (f64, f64, f64) {
        match *self {
            UtilityKind::Log => (w * (w / eta).ln() - w, -w / eta, w / (eta * eta)),
            UtilityKind::Power { gamma } => {
                let x = (eta / w).powf(-1.0 / gamma);
                (gamma / (1.0 - gamma) * eta * x, -x, x / (gamma * eta))
            }
        }
    }
}

/// A single investor on a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProblem {
    pub utility: UtilityKind,
    /// Per-leaf multiplicative weights for a state-dependent utility
    /// `w_leaf U(x)`; `None` means all ones.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub wealth: f64,
    pub constrained: bool,
    /// Subjective transition probabilities; `None` uses the lattice's.
    #[serde(default)]
    pub beliefs: Option<Vec<Vec<f64>>>,
}

impl AgentProblem {
    pub fn log(wealth: f64, constrained: bool) -> Self {
        Self { utility: UtilityKind::Log, weights: None, wealth, constrained, beliefs: None }
    }

    pub fn power(gamma: f64, wealth: f64, constrained: bool) -> Self {
        Self { utility: UtilityKind::Power { gamma }, weights: None, wealth, constrained, beliefs: None }
    }

    pub fn with_beliefs(mut self, beliefs: Vec<Vec<f64>>) -> Self {
        self.beliefs = Some(beliefs);
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn validate(&self, lattice: &MarketLattice) -> Result<()> {
        if !(self.wealth > 0.0 && self.wealth.is_finite()) {
            return invalid(format!("initial wealth must be positive, got {}", self.wealth));
        }
        if let UtilityKind::Power { gamma } = self.utility {
            if !(gamma > 0.0 && gamma < 1.0) {
                return invalid(format!("power exponent must lie in (0, 1), got {gamma}"));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != lattice.leaves().len() || w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return invalid("state weights must be positive, one per leaf");
            }
        }
        if let Some(b) = &self.beliefs {
            if b.len() != lattice.n_internal() {
                return invalid("beliefs need one row per internal node");
            }
            for (i, row) in b.iter().enumerate() {
                if row.len() != lattice.branching() {
                    return invalid(format!("beliefs at node {i} have the wrong length"));
                }
                check_simplex(row, &format!("beliefs at node {i}"))?;
            }
        }
        Ok(())
    }

    pub fn probs<'a>(&'a self, lattice: &'a MarketLattice) -> &'a [Vec<f64>] {
        self.beliefs.as_deref().unwrap_or(lattice.ref_probs())
    }

    fn weight(&self, leaf_offset: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[leaf_offset])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalSolution {
    pub value: f64,
    /// Fraction of current wealth in the risky asset, per internal node.
    pub fractions: Vec<f64>,
    pub holdings: TreeStrategy,
    /// Optimal wealth at every node.
    pub wealth: Vec<f64>,
    /// Largest first-order residual over nodes, relative to the size of the
    /// terms; boundary nodes contribute the positive part only.
    pub foc_residual: f64,
}

impl PrimalSolution {
    pub fn terminal_wealth(&self, lattice: &MarketLattice) -> Vec<f64> {
        lattice.leaves().map(|l| self.wealth[l]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PrimalOutcome {
    Finite(PrimalSolution),
    /// The value is `+inf`: the node where backward induction blew up, and
    /// an arbitrage witness.
    Unbounded { node: usize, witness: Option<Witness> },
}

enum NodeOpt {
    At(f64),
    Unbounded,
}

/// Marginal expected utility in the fraction `theta`:
/// `sum w_c (1 + theta r_c)^(-gamma) r_c`. Decreasing in `theta`.
fn slope(theta: f64, r: &[f64], w: &[f64], gamma: f64) -> (f64, f64) {
    let mut s = 0.0;
    let mut scale = 0.0;
    for (rc, wc) in r.iter().zip(w) {
        let t = wc * (1.0 + theta * rc).powf(-gamma) * rc;
        s += t;
        scale += t.abs();
    }
    (s, scale)
}

fn node_fraction(r: &[f64], w: &[f64], gamma: f64, constrained: bool) -> NodeOpt {
    if r.iter().all(|&x| x == 0.0) {
        // Flat node: every holding is optimal, take the smallest.
        return NodeOpt::At(0.0);
    }
    let lo_pole = r.iter().filter(|&&x| x > 0.0).map(|&x| -1.0 / x).fold(f64::NEG_INFINITY, f64::max);
    let hi_pole = r.iter().filter(|&&x| x < 0.0).map(|&x| -1.0 / x).fold(f64::INFINITY, f64::min);
    if hi_pole.is_infinite() {
        return NodeOpt::Unbounded;
    }
    let mut lo = lo_pole;
    if constrained {
        lo = lo.max(0.0);
        if slope(0.0, r, w, gamma).0 <= 0.0 {
            return NodeOpt::At(0.0);
        }
    } else if lo.is_infinite() {
        return NodeOpt::Unbounded;
    }
    // Bisection to adjacent floats; the slope changes sign inside (lo, hi).
    let mut a = lo;
    let mut b = hi_pole;
    loop {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if slope(m, r, w, gamma).0 > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let fa = slope(a, r, w, gamma).0.abs();
    let fb = slope(b, r, w, gamma).0.abs();
    let pick = if a <= lo { b } else if b >= hi_pole { a } else if fa <= fb { a } else { b };
    NodeOpt::At(pick)
}

/// Backward induction. At each node the continuation value is `A log x + B`
/// (log) or `C x^(1-gamma)/(1-gamma)` (power), so the node problem is one
/// concave equation in the risky fraction, solved by bisection.
pub fn solve_constrained_utility(lattice: &MarketLattice, agent: &AgentProblem) -> Result<PrimalOutcome> {
    agent.validate(lattice)?;
    let gamma = agent.utility.curvature();
    let probs = agent.probs(lattice);
    let first_leaf = lattice.leaves().start;
    // coef: A (log) or C (power); offset: B (log only).
    let mut coef = vec![0.0; lattice.n_nodes()];
    let mut offset = vec![0.0; lattice.n_nodes()];
    for l in lattice.leaves() {
        coef[l] = agent.weight(l - first_leaf);
    }
    let mut fractions = vec![0.0; lattice.n_internal()];
    let mut residual: f64 = 0.0;
    for n in lattice.internal_nodes().rev() {
        let s = lattice.price(n);
        let kids: Vec<usize> = lattice.children(n).collect();
        let r: Vec<f64> = kids.iter().map(|&c| lattice.price(c) / s - 1.0).collect();
        let w: Vec<f64> = kids.iter().zip(&probs[n]).map(|(&c, p)| p * coef[c]).collect();
        let theta = match node_fraction(&r, &w, gamma, agent.constrained) {
            NodeOpt::At(t) => t,
            NodeOpt::Unbounded => {
                let witness = find_arbitrage(lattice, agent.constrained)
                    .or_else(|| find_unbounded_profit(lattice, agent.constrained));
                return Ok(PrimalOutcome::Unbounded { node: n, witness });
            }
        };
        let (d, scale) = slope(theta, &r, &w, gamma);
        let res = if theta == 0.0 && agent.constrained { d.max(0.0) } else { d.abs() };
        if scale > 0.0 {
            residual = residual.max(res / scale);
        }
        fractions[n] = theta;
        match agent.utility {
            UtilityKind::Log => {
                coef[n] = w.iter().sum();
                offset[n] = kids
                    .iter()
                    .zip(&probs[n])
                    .zip(&r)
                    .map(|((&c, p), rc)| p * (coef[c] * (1.0 + theta * rc).ln() + offset[c]))
                    .sum();
            }
            UtilityKind::Power { .. } => {
                coef[n] = w.iter().zip(&r).map(|(wc, rc)| wc * (1.0 + theta * rc).powf(1.0 - gamma)).sum();
            }
        }
    }
    let x = agent.wealth;
    let value = match agent.utility {
        UtilityKind::Log => coef[0] * x.ln() + offset[0],
        UtilityKind::Power { gamma } => coef[0] * x.powf(1.0 - gamma) / (1.0 - gamma),
    };
    let mut wealth = vec![0.0; lattice.n_nodes()];
    wealth[0] = x;
    let mut holdings = vec![0.0; lattice.n_internal()];
    for n in lattice.internal_nodes() {
        holdings[n] = fractions[n] * wealth[n] / lattice.price(n);
        for c in lattice.children(n) {
            wealth[c] = wealth[n] + holdings[n] * (lattice.price(c) - lattice.price(n));
        }
    }
    Ok(PrimalOutcome::Finite(PrimalSolution {
        value,
        fractions,
        holdings: TreeStrategy { holdings },
        wealth,
        foc_residual: residual,
    }))
}

/// Expected utility of a given strategy, computed leaf by leaf.
pub fn expected_utility(lattice: &MarketLattice, agent: &AgentProblem, strategy: &TreeStrategy) -> f64 {
    let g = strategy.gains(lattice);
    let p = lattice.node_probs(agent.probs(lattice));
    let first = lattice.leaves().start;
    lattice
        .leaves()
        .map(|l| p[l] * agent.utility.eval(agent.weight(l - first), agent.wealth + g[l]))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub y: f64,
    pub value: f64,
    /// Node values of the optimal supermartingale deflator, root = 1.
    pub deflator: Vec<f64>,
    /// `v'(y)` by the envelope formula.
    pub derivative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DualOutcome {
    Finite(DualSolution),
    /// No strictly positive supermartingale deflator exists.
    Infeasible,
}

/// Linear description `a . z <= b` of the closed supermartingale-deflator
/// cone, with the root value fixed to 1 and `z` the remaining node values.
/// Unconstrained agents also get the short-side rays, which turns the set
/// into the martingale deflators that are supermartingales themselves.
struct DeflatorPolytope {
    rows: Vec<(Vec<(usize, f64)>, f64)>,
    dim: usize,
}

fn deflator_polytope(lattice: &MarketLattice, probs: &[Vec<f64>], constrained: bool) -> DeflatorPolytope {
    let idx = |node: usize| node - 1;
    let mut rows = Vec::new();
    let mut push = |mut terms: Vec<(usize, f64)>, parent_coef: f64, parent: usize| {
        let mut rhs = 0.0;
        if parent == 0 {
            rhs = -parent_coef;
        } else {
            terms.push((idx(parent), parent_coef));
        }
        if terms.iter().any(|&(_, c)| c != 0.0) {
            rows.push((terms, rhs));
        }
    };
    for n in lattice.internal_nodes() {
        let s = lattice.price(n);
        let kids: Vec<usize> = lattice.children(n).collect();
        let p = &probs[n];
        let moves: Vec<f64> = kids.iter().map(|&c| (lattice.price(c) - s) / s).collect();
        for &c in &kids {
            push(vec![(idx(c), -1.0)], 0.0, n);
        }
        push(kids.iter().zip(p).map(|(&c, &pc)| (idx(c), pc)).collect(), -1.0, n);
        let worst = moves.iter().copied().fold(f64::INFINITY, f64::min);
        if moves.iter().all(|&m| m == 0.0) {
            continue;
        }
        let best = moves.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut side = |h: f64, bounded: bool| {
            if bounded {
                push(kids.iter().zip(p).zip(&moves).map(|((&c, &pc), &m)| (idx(c), pc * (1.0 + h * m))).collect(), -1.0, n);
            } else {
                push(kids.iter().zip(p).zip(&moves).map(|((&c, &pc), &m)| (idx(c), pc * h * m)).collect(), 0.0, n);
            }
        };
        // Long side: h up to 1/|worst move|, or a ray when the price cannot fall.
        if worst < 0.0 { side(-1.0 / worst, true) } else { side(1.0, false) }
        if !constrained {
            if best > 0.0 { side(-1.0 / best, true) } else { side(-1.0, false) }
        }
    }
    DeflatorPolytope { rows, dim: lattice.n_nodes() - 1 }
}

impl DeflatorPolytope {
    fn slacks(&self, z: &DVector<f64>) -> Vec<f64> {
        self.rows.iter().map(|(a, b)| b - a.iter().map(|&(i, c)| c * z[i]).sum::<f64>()).collect()
    }

    /// Point maximising the smallest slack. `None` when the interior is empty.
    fn interior_point(&self) -> Option<DVector<f64>> {
        let mut lp = Lp::maximize();
        let z: Vec<usize> = (0..self.dim).map(|_| lp.var(0.0, -1e6, 1e6)).collect();
        let s = lp.var(1.0, f64::NEG_INFINITY, 1.0);
        for (a, b) in &self.rows {
            let mut row: Vec<(usize, f64)> = a.iter().map(|&(i, c)| (z[i], c)).collect();
            row.push((s, 1.0));
            lp.row(&row, Cmp::Le, *b);
        }
        match lp.solve() {
            LpOutcome::Optimal { values, .. } => {
                // The solver's own tolerance is 1e-8, so its slack is not
                // trusted; the point must be strictly interior in f64.
                let z = DVector::from_iterator(self.dim, z.iter().map(|&v| values[v]));
                let min = self.slacks(&z).into_iter().fold(f64::INFINITY, f64::min);
                (min > INTERIOR_TOL).then_some(z)
            }
            _ => None,
        }
    }
}

/// Smallest certified slack accepted as a strictly interior start.
const INTERIOR_TOL: f64 = 1e-10;

struct DualObjective {
    utility: UtilityKind,
    /// (index into z, probability, weight) for each leaf.
    leaves: Vec<(usize, f64, f64)>,
    y: f64,
}

impl DualObjective {
    fn value(&self, z: &DVector<f64>) -> f64 {
        self.leaves.iter().map(|&(i, p, w)| p * self.utility.conjugate(w, self.y * z[i]).0).sum()
    }

    fn grad_hess(&self, z: &DVector<f64>, g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        for &(i, p, w) in &self.leaves {
            let (_, d1, d2) = self.utility.conjugate(w, self.y * z[i]);
            g[i] += p * self.y * d1;
            h[(i, i)] += p * self.y * self.y * d2;
        }
    }
}

/// Solves `H dz = -g` after symmetric diagonal scaling, which tames the
/// spread between objective curvature and barrier curvature at large `t`.
/// Falls back to a small ridge if the scaled matrix still fails to factor.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let d: Vec<f64> = (0..n).map(|i| h[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let mut hs = DMatrix::from_fn(n, n, |i, j| h[(i, j)] / (d[i] * d[j]));
    let gs = DVector::from_fn(n, |i, _| g[i] / d[i]);
    let mut ridge = 0.0;
    for _ in 0..8 {
        if let Some(chol) = hs.clone().cholesky() {
            let x = chol.solve(&gs);
            return Some(DVector::from_fn(n, |i, _| -x[i] / d[i]));
        }
        ridge = if ridge == 0.0 { 1e-14 } else { ridge * 100.0 };
        for i in 0..n {
            hs[(i, i)] = 1.0 + ridge;
        }
    }
    None
}

/// Duality gap target of the barrier path.
const BARRIER_GAP: f64 = 1e-12;

fn barrier_minimise(poly: &DeflatorPolytope, obj: &DualObjective, start: DVector<f64>) -> Result<DVector<f64>> {
    let m = poly.rows.len() as f64;
    let mut z = start;
    let mut t = 1.0;
    let phi = |z: &DVector<f64>, t: f64| -> f64 {
        let s = poly.slacks(z);
        if s.iter().any(|&x| x <= 0.0) {
            return f64::INFINITY;
        }
        t * obj.value(z) - s.iter().map(|x| x.ln()).sum::<f64>()
    };
    loop {
        for _ in 0..200 {
            let s = poly.slacks(&z);
            let mut g = DVector::zeros(poly.dim);
            let mut h = DMatrix::zeros(poly.dim, poly.dim);
            obj.grad_hess(&z, &mut g, &mut h);
            g *= t;
            h *= t;
            for ((a, _), si) in poly.rows.iter().zip(&s) {
                for &(i, ci) in a {
                    g[i] += ci / si;
                    for &(j, cj) in a {
                        h[(i, j)] += ci * cj / (si * si);
                    }
                }
            }
            let Some(dz) = newton_direction(&h, &g) else {
                return Err(LabError::Solver(format!("barrier Hessian is not positive definite at t = {t:e}")));
            };
            let dec = -g.dot(&dz);
            if dec < 1e-12 {
                break;
            }
            let f0 = phi(&z, t);
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-20 {
                let cand = &z + step * &dz;
                if phi(&cand, t) <= f0 - 0.25 * step * dec {
                    z = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if m / t < BARRIER_GAP {
            return Ok(z);
        }
        t *= 32.0;
    }
}

/// `v(y) = inf over supermartingale deflators Y of E[V(y Y_T)]`, the
/// expectation taken under the agent's own probabilities. This is the
/// infimum form; a supremum over the same set would be `+inf` for log
/// utility and carries no information.
pub fn solve_dual(lattice: &MarketLattice, agent: &AgentProblem, y: f64) -> Result<DualOutcome> {
    match PreparedDual::new(lattice, agent)? {
        Some(d) => d.solve(y).map(DualOutcome::Finite),
        None => Ok(DualOutcome::Infeasible),
    }
}

/// The `y`-independent part of the dual problem, built once per agent.
struct PreparedDual {
    poly: DeflatorPolytope,
    start: DVector<f64>,
    utility: UtilityKind,
    leaves: Vec<(usize, f64, f64)>,
}

impl PreparedDual {
    fn new(lattice: &MarketLattice, agent: &AgentProblem) -> Result<Option<Self>> {
        agent.validate(lattice)?;
        let probs = agent.probs(lattice);
        let poly = deflator_polytope(lattice, probs, agent.constrained);
        let Some(start) = poly.interior_point() else {
            return Ok(None);
        };
        let p = lattice.node_probs(probs);
        let first = lattice.leaves().start;
        let leaves = lattice.leaves().map(|l| (l - 1, p[l], agent.weight(l - first))).collect();
        Ok(Some(Self { poly, start, utility: agent.utility, leaves }))
    }

    fn solve(&self, y: f64) -> Result<DualSolution> {
        if !(y > 0.0 && y.is_finite()) {
            return invalid(format!("dual variable must be positive, got {y}"));
        }
        let obj = DualObjective { utility: self.utility, leaves: self.leaves.clone(), y };
        let z = barrier_minimise(&self.poly, &obj, self.start.clone())?;
        let derivative = obj.leaves.iter().map(|&(i, pl, w)| pl * z[i] * self.utility.conjugate(w, y * z[i]).1).sum();
        let mut deflator = vec![1.0];
        deflator.extend(z.iter().copied());
        Ok(DualSolution { y, value: obj.value(&z), deflator, derivative })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conjugacy {
    pub primal: f64,
    /// `inf_y (v(y) + x y)`.
    pub dual: f64,
    pub y_star: f64,
    pub gap: f64,
}

/// Checks `u(x) = inf_y (v(y) + x y)` by locating `v'(y) = -x` with a
/// bisection in `log y`.
pub fn conjugacy_check(lattice: &MarketLattice, agent: &AgentProblem) -> Result<Option<Conjugacy>> {
    let PrimalOutcome::Finite(primal) = solve_constrained_utility(lattice, agent)? else {
        return Ok(None);
    };
    let x = agent.wealth;
    let Some(prepared) = PreparedDual::new(lattice, agent)? else {
        return Err(LabError::Infeasible("dual infeasible with finite primal".into()));
    };
    let eval = |y: f64| prepared.solve(y);
    // y -> v'(y) + x is increasing; bracket its root, then bisect.
    let mut lo = 1.0 / x;
    let mut hi = 1.0 / x;
    while eval(lo)?.derivative + x > 0.0 {
        lo *= 0.5;
    }
    while eval(hi)?.derivative + x < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if eval(mid)?.derivative + x < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        // Stationary in y at the root, so the value error is quadratic in this.
        if hi / lo - 1.0 < 1e-9 {
            break;
        }
    }
    let y_star = (lo * hi).sqrt();
    let dual = eval(y_star)?.value + x * y_star;
    Ok(Some(Conjugacy { primal: primal.value, dual, y_star, gap: (primal.value - dual).abs() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite(o: PrimalOutcome) -> PrimalSolution {
        match o {
            PrimalOutcome::Finite(s) => s,
            other => panic!("expected a finite optimum, got {other:?}"),
        }
    }

    #[test]
    fn log_binomial_half() {
        let l = MarketLattice::binomial(1.0, 2.0, 0.5, 0.5).unwrap();
        let s = finite(solve_constrained_utility(&l, &AgentProblem::log(1.0, true)).unwrap());
        assert!((s.fractions[0] - 0.5).abs() < 1e-12, "{}", s.fractions[0]);
        let v = 0.5 * 1.5f64.ln() + 0.5 * 0.75f64.ln();
        assert!((s.value - v).abs() < 1e-14);
        assert!(s.foc_residual < 1e-10);
    }

    #[test]
    fn interior_fraction_above_one() {
        let l = MarketLattice::binomial(1.0, 1.5, 0.9, 0.5).unwrap();
        let s = finite(solve_constrained_utility(&l, &AgentProblem::log(1.0, true)).unwrap());
        assert!((s.fractions[0] - 4.0).abs() < 1e-10, "{}", s.fractions[0]);
    }

    #[test]
    fn constant_price_value_is_log_wealth() {
        let l = MarketLattice::constant(1.0, 2, 2).unwrap();
        let s = finite(solve_constrained_utility(&l, &AgentProblem::log(3.0, true)).unwrap());
        assert!((s.value - 3f64.ln()).abs() < 1e-14);
        assert!(s.holdings.holdings.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn up_only_is_unbounded() {
        let l = MarketLattice::binomial(1.0, 3.0, 1.0, 0.5).unwrap();
        match solve_constrained_utility(&l, &AgentProblem::log(1.0, true)).unwrap() {
            PrimalOutcome::Unbounded { witness, .. } => assert!(witness.is_some()),
            other => panic!("{other:?}"),
        }
        assert_eq!(solve_dual(&l, &AgentProblem::log(1.0, true), 1.0).unwrap(), DualOutcome::Infeasible);
    }

    #[test]
    fn short_sale_ban_binds_when_price_falls_on_average() {
        let l = MarketLattice::binomial(1.0, 1.2, 0.7, 0.5).unwrap();
        let c = finite(solve_constrained_utility(&l, &AgentProblem::log(1.0, true)).unwrap());
        assert_eq!(c.fractions[0], 0.0);
        let u = finite(solve_constrained_utility(&l, &AgentProblem::log(1.0, false)).unwrap());
        assert!(u.fractions[0] < 0.0 && u.value > c.value);
    }

    #[test]
    fn value_matches_expected_utility_of_plan() {
        let l = MarketLattice::multiplicative(1.0, &[1.3, 1.0, 0.8], &[0.3, 0.3, 0.4], 3).unwrap();
        for agent in [AgentProblem::log(2.0, true), AgentProblem::power(0.4, 2.0, true)] {
            let s = finite(solve_constrained_utility(&l, &agent).unwrap());
            let e = expected_utility(&l, &agent, &s.holdings);
            assert!((s.value - e).abs() < 1e-12 * (1.0 + e.abs()), "{} vs {e}", s.value);
        }
    }

    #[test]
    fn log_dual_is_emm_density() {
        let l = MarketLattice::binomial(1.0, 2.0, 0.5, 0.5).unwrap();
        let agent = AgentProblem::log(1.0, true);
        let DualOutcome::Finite(d) = solve_dual(&l, &agent, 1.0).unwrap() else { panic!() };
        assert!((d.deflator[1] - 2.0 / 3.0).abs() < 1e-8 && (d.deflator[2] - 4.0 / 3.0).abs() < 1e-8, "{:?}", d.deflator);
        // v(1) = -1 - E[log Y_T].
        let v = -1.0 - 0.5 * ((2.0f64 / 3.0).ln() + (4.0f64 / 3.0).ln());
        assert!((d.value - v).abs() < 1e-10);
    }

    #[test]
    fn constant_price_dual_deflator_is_one() {
        let l = MarketLattice::constant(1.0, 2, 3).unwrap();
        let DualOutcome::Finite(d) = solve_dual(&l, &AgentProblem::log(1.0, true), 1.0).unwrap() else { panic!() };
        assert!(d.deflator.iter().all(|&y| (y - 1.0).abs() < 1e-8), "{:?}", d.deflator);
    }

    #[test]
    fn conjugacy_on_small_trees() {
        let l = MarketLattice::multiplicative(1.0, &[1.3, 0.95, 0.8], &[0.3, 0.3, 0.4], 2).unwrap();
        for agent in [AgentProblem::log(1.5, true), AgentProblem::power(0.5, 0.7, true), AgentProblem::log(1.0, false)] {
            let c = conjugacy_check(&l, &agent).unwrap().unwrap();
            assert!(c.gap < 1e-8, "{c:?}");
        }
    }
}
