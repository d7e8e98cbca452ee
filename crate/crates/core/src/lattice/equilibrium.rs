use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::lattice::arbitrage::is_c_maximal;
use crate::lattice::duality::random_lattice;
use crate::lattice::measures::{find_supermartingale_deflator, DEFAULT_EPSILON};
use crate::lattice::tree::{MarketLattice, TreeStrategy};
use crate::lattice::utility::{solve_constrained_utility, AgentProblem, PrimalOutcome, PrimalSolution};

/// An investor endowed with a fraction `share` of the unit supply; the
/// problem's own `wealth` is overwritten by `share * S_0` every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumAgent {
    pub problem: AgentProblem,
    pub share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TatonnementConfig {
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TatonnementConfig {
    fn default() -> Self {
        Self { damping: 0.5, max_iter: 10_000, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    /// Lattice carrying the equilibrium prices.
    pub lattice: MarketLattice,
    pub agents: Vec<PrimalSolution>,
    pub iterations: usize,
    /// Aggregate demand minus supply at every internal node.
    pub excess: Vec<f64>,
}

impl EquilibriumSolution {
    pub fn max_excess(&self) -> f64 {
        self.excess.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    pub fn holdings(&self) -> Vec<TreeStrategy> {
        self.agents.iter().map(|a| a.holdings.clone()).collect()
    }
}

fn agent_at(a: &EquilibriumAgent, s0: f64) -> AgentProblem {
    AgentProblem { wealth: a.share * s0, ..a.problem.clone() }
}

/// Excess demand per internal node, or the node and sign to push when some
/// agent's problem is unbounded.
fn excess_demand(lattice: &MarketLattice, agents: &[EquilibriumAgent]) -> Result<std::result::Result<(Vec<f64>, Vec<PrimalSolution>), (usize, f64)>> {
    let mut demand = vec![-1.0; lattice.n_internal()];
    let mut sols = Vec::with_capacity(agents.len());
    for a in agents {
        match solve_constrained_utility(lattice, &agent_at(a, lattice.price(0)))? {
            PrimalOutcome::Finite(s) => {
                for (d, h) in demand.iter_mut().zip(&s.holdings.holdings) {
                    *d += h;
                }
                sols.push(s);
            }
            PrimalOutcome::Unbounded { node, .. } => {
                let up = lattice.children(node).all(|c| lattice.price(c) >= lattice.price(node));
                return Ok(Err((node, if up { 1.0 } else { -1.0 })));
            }
        }
    }
    Ok(Ok((demand, sols)))
}

/// Tâtonnement on internal node prices with leaf prices held fixed as
/// terminal dividends. Starts from the reference-measure conditional means,
/// which lie inside every node's price range.
///
/// A price moves by `exp(step * clamp(excess, -1, 1))` with a per-node step
/// that starts at `damping`, halves whenever that node's excess changes
/// sign and creeps back up (never above `damping`) while it does not. Nodes
/// where some agent's problem is unbounded are pushed by a unit excess.
pub fn solve_equilibrium(
    dividends: &MarketLattice,
    agents: &[EquilibriumAgent],
    cfg: &TatonnementConfig,
) -> Result<EquilibriumSolution> {
    if agents.is_empty() || agents.len() > 3 {
        return invalid(format!("1 to 3 agents are supported, got {}", agents.len()));
    }
    let total: f64 = agents.iter().map(|a| a.share).sum();
    if agents.iter().any(|a| !(a.share > 0.0)) || (total - 1.0).abs() > 1e-12 {
        return invalid("agent shares must be positive and sum to 1");
    }
    let mut prices = dividends.prices().to_vec();
    for n in dividends.internal_nodes().rev() {
        prices[n] = dividends.children(n).zip(&dividends.ref_probs()[n]).map(|(c, p)| p * prices[c]).sum();
    }
    let mut lattice = dividends.with_prices(prices.clone())?;
    let mut step = vec![cfg.damping; dividends.n_internal()];
    let mut last_sign = vec![0.0f64; dividends.n_internal()];
    let mut profile = vec![f64::INFINITY; dividends.n_internal()];
    for it in 0..cfg.max_iter {
        let push = match excess_demand(&lattice, agents)? {
            Ok((excess, sols)) => {
                let worst = excess.iter().fold(0.0f64, |m, e| m.max(e.abs()));
                if worst < cfg.tol {
                    return Ok(EquilibriumSolution { lattice, agents: sols, iterations: it, excess });
                }
                profile = excess.clone();
                excess
            }
            Err((node, sign)) => {
                let mut e = vec![0.0; dividends.n_internal()];
                e[node] = sign;
                e
            }
        };
        for n in dividends.internal_nodes() {
            let sign = push[n].signum();
            if push[n] == 0.0 {
                continue;
            }
            // Overshoot: halve this node's step; steady direction: let it recover.
            if sign * last_sign[n] < 0.0 {
                step[n] *= 0.5;
            } else {
                step[n] = (step[n] * 1.1).min(cfg.damping);
            }
            last_sign[n] = sign;
            prices[n] *= (step[n] * push[n].clamp(-1.0, 1.0)).exp();
        }
        lattice = dividends.with_prices(prices.clone())?;
    }
    let max_excess = profile.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    Err(LabError::NoConvergence { iterations: cfg.max_iter, max_excess, excess: profile })
}

/// Node values of an agent's optimal deflator relative to the lattice's
/// reference probabilities: terminal marginal utility times the belief
/// density, conditioned back and normalised to 1 at the root.
pub fn agent_deflator(lattice: &MarketLattice, agent: &AgentProblem, sol: &PrimalSolution) -> Vec<f64> {
    let pk = lattice.node_probs(agent.probs(lattice));
    let p = lattice.ref_node_probs();
    let first = lattice.leaves().start;
    let mut y = vec![0.0; lattice.n_nodes()];
    for l in lattice.leaves() {
        let w = agent.weights.as_ref().map_or(1.0, |w| w[l - first]);
        y[l] = pk[l] / p[l] * agent.utility.marginal(w, sol.wealth[l]);
    }
    for n in lattice.internal_nodes().rev() {
        y[n] = lattice.children(n).zip(&lattice.ref_probs()[n]).map(|(c, q)| q * y[c]).sum();
    }
    let y0 = y[0];
    y.iter().map(|v| v / y0).collect()
}

/// `|E[Y_child (S_child - S_n) | n]| / (Y_n S_n)` at node `n`.
pub fn conditional_price_drift(lattice: &MarketLattice, y: &[f64], n: usize) -> f64 {
    let s = lattice.price(n);
    let d: f64 = lattice.children(n).zip(&lattice.ref_probs()[n]).map(|(c, q)| q * y[c] * (lattice.price(c) - s)).sum();
    d.abs() / (y[n] * s)
}

/// Splices per-agent deflators node by node: at each internal node the
/// first agent with positive holding supplies the one-step ratios.
pub fn patch_lattice_deflators(lattice: &MarketLattice, holdings: &[TreeStrategy], deflators: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut y = vec![0.0; lattice.n_nodes()];
    y[0] = 1.0;
    for n in lattice.internal_nodes() {
        let Some(k) = holdings.iter().position(|h| h.holdings[n] > 0.0) else {
            return Err(LabError::ContractViolation(format!("no agent holds the asset at node {n}")));
        };
        for c in lattice.children(n) {
            y[c] = y[n] * deflators[k][c] / deflators[k][n];
        }
    }
    Ok(y)
}

/// Exact checks on a solved equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCheck {
    pub max_excess: f64,
    /// Largest first-order residual over agents at the solved prices.
    pub max_foc: f64,
    /// Largest conditional price drift under an agent's own deflator, over
    /// the nodes where that agent holds a positive amount.
    pub max_own_drift: f64,
    /// Same for the patched deflator, over all internal nodes.
    pub max_patched_drift: f64,
    pub all_c_maximal: bool,
}

pub fn check_equilibrium(sol: &EquilibriumSolution, agents: &[EquilibriumAgent]) -> Result<EquilibriumCheck> {
    let l = &sol.lattice;
    let problems: Vec<AgentProblem> = agents.iter().map(|a| agent_at(a, l.price(0))).collect();
    let defl: Vec<Vec<f64>> = problems.iter().zip(&sol.agents).map(|(a, s)| agent_deflator(l, a, s)).collect();
    let mut own: f64 = 0.0;
    for (y, s) in defl.iter().zip(&sol.agents) {
        for n in l.internal_nodes() {
            if s.holdings.holdings[n] > 0.0 {
                own = own.max(conditional_price_drift(l, y, n));
            }
        }
    }
    let patched = patch_lattice_deflators(l, &sol.holdings(), &defl)?;
    let max_patched_drift = l.internal_nodes().map(|n| conditional_price_drift(l, &patched, n)).fold(0.0, f64::max);
    let all_c_maximal = problems
        .iter()
        .zip(&sol.agents)
        .all(|(a, s)| !a.constrained || is_c_maximal(l, &s.holdings));
    Ok(EquilibriumCheck {
        max_excess: sol.max_excess(),
        max_foc: sol.agents.iter().map(|s| s.foc_residual).fold(0.0, f64::max),
        max_own_drift: own,
        max_patched_drift,
        all_c_maximal,
    })
}

/// Exploratory search: is the sum of two C-maximal strategies C-maximal?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMaximalSumSearch {
    pub trials: usize,
    /// Trials where both summands were certified C-maximal.
    pub tested: usize,
    pub sum_not_maximal: usize,
    pub counterexamples: Vec<MarketLattice>,
}

/// Draws random lattices with a supermartingale deflator, solves two
/// constrained agents with different preferences and beliefs, and checks
/// C-maximality of the sum of their optimal holdings. Nothing is asserted.
pub fn c_maximal_sum_search(trials: usize, seed: u64) -> Result<CMaximalSumSearch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CMaximalSumSearch { trials, tested: 0, sum_not_maximal: 0, counterexamples: Vec::new() };
    for _ in 0..trials {
        let l = random_lattice(&mut rng, 3)?;
        if find_supermartingale_deflator(&l, DEFAULT_EPSILON)?.is_none() {
            continue;
        }
        let beliefs: Vec<Vec<f64>> = l
            .ref_probs()
            .iter()
            .map(|row| {
                let w: Vec<f64> = row.iter().map(|p| p * rng.random_range(0.5..1.5)).collect();
                let s: f64 = w.iter().sum();
                let mut r: Vec<f64> = w.iter().map(|x| x / s).collect();
                let head: f64 = r[..r.len() - 1].iter().sum();
                *r.last_mut().unwrap() = 1.0 - head;
                r
            })
            .collect();
        let a = AgentProblem::log(1.0, true);
        let b = AgentProblem::power(rng.random_range(0.2..0.9), 1.0, true).with_beliefs(beliefs);
        let (PrimalOutcome::Finite(sa), PrimalOutcome::Finite(sb)) =
            (solve_constrained_utility(&l, &a)?, solve_constrained_utility(&l, &b)?)
        else {
            continue;
        };
        if !(is_c_maximal(&l, &sa.holdings) && is_c_maximal(&l, &sb.holdings)) {
            continue;
        }
        out.tested += 1;
        if !is_c_maximal(&l, &sa.holdings.add(&sb.holdings)) {
            out.sum_not_maximal += 1;
            if out.counterexamples.len() < 10 {
                out.counterexamples.push(l);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::utility::UtilityKind;

    fn binomial_dividends(up: f64, down: f64) -> MarketLattice {
        MarketLattice::binomial(1.0, up, down, 0.5).unwrap()
    }

    #[test]
    fn single_agent_holds_supply() {
        let l = binomial_dividends(2.0, 0.5);
        let agents = [EquilibriumAgent { problem: AgentProblem::log(1.0, true), share: 1.0 }];
        let sol = solve_equilibrium(&l, &agents, &TatonnementConfig::default()).unwrap();
        assert!((sol.agents[0].holdings.holdings[0] - 1.0).abs() < 1e-8);
        // Harmonic mean of the dividends makes holding everything optimal.
        assert!((sol.lattice.price(0) - 0.8).abs() < 1e-8, "{}", sol.lattice.price(0));
    }

    #[test]
    fn weighted_log_agent() {
        let l = binomial_dividends(1.5, 0.75);
        let problem = AgentProblem { weights: Some(vec![0.8, 1.2]), ..AgentProblem::log(1.0, true) };
        let agents = [EquilibriumAgent { problem, share: 1.0 }];
        let sol = solve_equilibrium(&l, &agents, &TatonnementConfig::default()).unwrap();
        assert!((sol.agents[0].holdings.holdings[0] - 1.0).abs() < 1e-8);
        let chk = check_equilibrium(&sol, &agents).unwrap();
        assert!(chk.max_own_drift < 1e-8 && chk.max_patched_drift < 1e-8, "{chk:?}");
    }

    #[test]
    fn identical_agents_split_evenly() {
        let l = MarketLattice::multiplicative(1.0, &[1.4, 0.8], &[0.5, 0.5], 2).unwrap();
        let a = EquilibriumAgent { problem: AgentProblem::log(1.0, true), share: 0.5 };
        let agents = [a.clone(), a];
        let sol = solve_equilibrium(&l, &agents, &TatonnementConfig::default()).unwrap();
        for s in &sol.agents {
            for &h in &s.holdings.holdings {
                assert!((h - 0.5).abs() < 1e-8, "{h}");
            }
        }
    }

    #[test]
    fn three_period_two_utilities() {
        let l = MarketLattice::multiplicative(1.0, &[1.3, 1.0, 0.8], &[0.3, 0.4, 0.3], 3).unwrap();
        let agents = [
            EquilibriumAgent { problem: AgentProblem::log(1.0, true), share: 0.6 },
            EquilibriumAgent {
                problem: AgentProblem { utility: UtilityKind::Power { gamma: 0.5 }, ..AgentProblem::log(1.0, true) },
                share: 0.4,
            },
        ];
        let sol = solve_equilibrium(&l, &agents, &TatonnementConfig::default()).unwrap();
        let chk = check_equilibrium(&sol, &agents).unwrap();
        assert!(chk.max_excess < 1e-8);
        assert!(chk.max_own_drift < 1e-8 && chk.max_patched_drift < 1e-8, "{chk:?}");
        assert!(chk.all_c_maximal);
    }

    #[test]
    fn patch_requires_a_holder() {
        let l = binomial_dividends(2.0, 0.5);
        let h = [TreeStrategy::zero(&l)];
        let y = [vec![1.0; 3]];
        assert!(patch_lattice_deflators(&l, &h, &y).is_err());
    }

    #[test]
    fn no_convergence_reports_profile() {
        let l = binomial_dividends(2.0, 0.5);
        let agents = [EquilibriumAgent { problem: AgentProblem::log(1.0, true), share: 1.0 }];
        let cfg = TatonnementConfig { max_iter: 2, ..Default::default() };
        match solve_equilibrium(&l, &agents, &cfg) {
            Err(LabError::NoConvergence { excess, .. }) => assert_eq!(excess.len(), 1),
            other => panic!("{other:?}"),
        }
    }
}
