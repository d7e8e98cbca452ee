use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::arbitrage::{find_arbitrage, find_dominating_strategy, find_unbounded_profit};
use crate::lattice::measures::{
    find_local_martingale_deflator, find_local_martingale_measure, find_martingale_measure,
    find_supermartingale_deflator, find_supermartingale_measure,
};
use crate::lattice::tree::MarketLattice;

/// Both sides of every equivalence, each decided by its own program.
///
/// The first block is decided on the primal side (arbitrage-type searches),
/// the second on the dual side (measure and deflator feasibility).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub na: bool,
    pub na_c: bool,
    pub nd: bool,
    pub nd_c: bool,
    pub nupbr: bool,
    pub nupbr_c: bool,
    pub m: bool,
    pub m_loc: bool,
    pub m_sup: bool,
    pub d_loc: bool,
    pub d_sup: bool,
}

/// Outcome of each equivalence check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equivalences {
    pub nupbr_iff_dloc: bool,
    pub nupbr_c_iff_dsup: bool,
    pub nflvr_iff_mloc: bool,
    pub nflvr_c_iff_msup: bool,
    pub nflvr_nd_iff_m: bool,
    pub m_equals_mloc: bool,
}

impl Equivalences {
    pub fn all(&self) -> bool {
        self.nupbr_iff_dloc
            && self.nupbr_c_iff_dsup
            && self.nflvr_iff_mloc
            && self.nflvr_c_iff_msup
            && self.nflvr_nd_iff_m
            && self.m_equals_mloc
    }
}

impl Classification {
    pub fn nflvr(&self) -> bool {
        self.na && self.nupbr
    }

    pub fn nflvr_c(&self) -> bool {
        self.na_c && self.nupbr_c
    }

    pub fn equivalences(&self) -> Equivalences {
        Equivalences {
            nupbr_iff_dloc: self.nupbr == self.d_loc,
            nupbr_c_iff_dsup: self.nupbr_c == self.d_sup,
            nflvr_iff_mloc: self.nflvr() == self.m_loc,
            nflvr_c_iff_msup: self.nflvr_c() == self.m_sup,
            nflvr_nd_iff_m: (self.nflvr() && self.nd) == self.m,
            m_equals_mloc: self.m == self.m_loc,
        }
    }

    pub fn consistent(&self) -> bool {
        self.equivalences().all()
    }
}

pub fn classify(lattice: &MarketLattice, eps: f64) -> Result<Classification> {
    Ok(Classification {
        na: find_arbitrage(lattice, false).is_none(),
        na_c: find_arbitrage(lattice, true).is_none(),
        nd: find_dominating_strategy(lattice, false).is_none(),
        nd_c: find_dominating_strategy(lattice, true).is_none(),
        nupbr: find_unbounded_profit(lattice, false).is_none(),
        nupbr_c: find_unbounded_profit(lattice, true).is_none(),
        m: find_martingale_measure(lattice, eps)?.is_some(),
        m_loc: find_local_martingale_measure(lattice, eps)?.is_some(),
        m_sup: find_supermartingale_measure(lattice, eps)?.is_some(),
        d_loc: find_local_martingale_deflator(lattice, eps)?.is_some(),
        d_sup: find_supermartingale_deflator(lattice, eps)?.is_some(),
    })
}

/// Parameters of the generated family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    /// Up factors of the one-period binomial grid.
    pub ups: Vec<f64>,
    /// Down factors of the grid; only pairs with `d < u` are used.
    pub downs: Vec<f64>,
    /// Number of additional random trees.
    pub n_random: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        let step = |lo: f64, hi: f64| -> Vec<f64> {
            let n = ((hi - lo) / 0.25).round() as usize;
            (0..=n).map(|k| lo + 0.25 * k as f64).collect()
        };
        Self { ups: step(0.5, 3.0), downs: step(0.25, 1.5), n_random: 480, max_depth: 3, seed: 2009 }
    }
}

/// Factors used for random trees. Including 1 produces flat moves and exact
/// ties, which is where degeneracies live.
const FACTORS: [f64; 7] = [0.5, 0.8, 0.9, 1.0, 1.1, 1.25, 2.0];

pub(crate) fn random_lattice(rng: &mut ChaCha8Rng, max_depth: usize) -> Result<MarketLattice> {
    let depth = rng.random_range(1..=max_depth);
    let b: usize = if rng.random_bool(0.5) { 2 } else { 3 };
    let n: usize = (0..=depth).map(|k| b.pow(k as u32)).sum();
    let internal: usize = (0..depth).map(|k| b.pow(k as u32)).sum();
    // A node type per internal node sets how often arbitrage appears.
    let mut prices = vec![0.0; n];
    prices[0] = 1.0;
    let mut probs = Vec::with_capacity(internal);
    for i in 0..internal {
        let kind = rng.random_range(0..10u32);
        let mut f: Vec<f64> = (0..b).map(|_| FACTORS[rng.random_range(0..FACTORS.len())]).collect();
        match kind {
            0 => f.iter_mut().for_each(|x| *x = x.max(1.0)),
            1 => f.iter_mut().for_each(|x| *x = x.min(1.0)),
            2 => f.iter_mut().for_each(|x| *x = 1.0),
            _ => {
                if f.iter().all(|&x| x >= 1.0) || f.iter().all(|&x| x <= 1.0) {
                    f[0] = 2.0;
                    f[b - 1] = 0.5;
                }
            }
        }
        for k in 0..b {
            prices[b * i + 1 + k] = prices[i] * f[k];
        }
        let w: Vec<f64> = (0..b).map(|_| rng.random_range(0.2..1.0)).collect();
        let s: f64 = w.iter().sum();
        let mut row: Vec<f64> = w.iter().map(|x| x / s).collect();
        let head: f64 = row[..b - 1].iter().sum();
        row[b - 1] = 1.0 - head;
        probs.push(row);
    }
    MarketLattice::new(depth, b, prices, probs)
}

/// The one-period grid followed by random trees of depth `<= max_depth`.
pub fn generate_family(cfg: &FamilyConfig) -> Result<Vec<MarketLattice>> {
    let mut out = Vec::new();
    for &u in &cfg.ups {
        for &d in &cfg.downs {
            if d < u {
                out.push(MarketLattice::binomial(1.0, u, d, 0.5)?);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.n_random {
        out.push(random_lattice(&mut rng, cfg.max_depth)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRow {
    pub instance_id: usize,
    pub classification: Classification,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualityReport {
    pub epsilon: f64,
    pub rows: Vec<InstanceRow>,
}

impl DualityReport {
    pub fn mismatches(&self) -> usize {
        self.rows.iter().filter(|r| !r.classification.consistent()).count()
    }

    /// How many instances fail each primal-side property, for coverage.
    pub fn failure_counts(&self) -> [(&'static str, usize); 6] {
        let count = |f: fn(&Classification) -> bool| self.rows.iter().filter(|r| !f(&r.classification)).count();
        [
            ("NA", count(|c| c.na)),
            ("NA_C", count(|c| c.na_c)),
            ("ND", count(|c| c.nd)),
            ("ND_C", count(|c| c.nd_c)),
            ("NUPBR", count(|c| c.nupbr)),
            ("NUPBR_C", count(|c| c.nupbr_c)),
        ]
    }

    pub const CSV_HEADER: &'static str =
        "instance_id,M_nonempty,Msup_nonempty,Dloc_nonempty,NA,NA_C,ND,ND_C,NUPBR,NUPBR_C,consistent";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            let c = &r.classification;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.instance_id, c.m, c.m_sup, c.d_loc, c.na, c.na_c, c.nd, c.nd_c, c.nupbr, c.nupbr_c, c.consistent()
            )?;
        }
        Ok(())
    }
}

/// Classifies every lattice (in parallel, order preserved).
pub fn verify_duality_theorem(lattices: &[MarketLattice], eps: f64) -> Result<DualityReport> {
    let rows = lattices
        .par_iter()
        .enumerate()
        .map(|(i, l)| classify(l, eps).map(|classification| InstanceRow { instance_id: i, classification }))
        .collect::<Result<Vec<_>>>()?;
    Ok(DualityReport { epsilon: eps, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::measures::DEFAULT_EPSILON;

    #[test]
    fn named_cases() {
        let b = classify(&MarketLattice::binomial(1.0, 2.0, 0.5, 0.5).unwrap(), DEFAULT_EPSILON).unwrap();
        assert!(b.m && b.na && b.nd && b.consistent());
        let u = classify(&MarketLattice::binomial(1.0, 3.0, 1.0, 0.5).unwrap(), DEFAULT_EPSILON).unwrap();
        assert!(!u.m_sup && !u.na_c && u.consistent());
        let d = classify(&MarketLattice::binomial(1.0, 1.0, 0.25, 0.5).unwrap(), DEFAULT_EPSILON).unwrap();
        assert!(d.na_c && !d.nd_c && d.m_sup && !d.m && d.consistent());
    }

    #[test]
    fn family_size_and_determinism() {
        let cfg = FamilyConfig::default();
        let a = generate_family(&cfg).unwrap();
        assert!(a.len() >= 500, "{}", a.len());
        assert_eq!(a, generate_family(&cfg).unwrap());
        assert!(a.iter().all(|l| l.depth() <= 3));
    }

    #[test]
    fn csv_shape() {
        let fam = generate_family(&FamilyConfig { n_random: 5, ..FamilyConfig::default() }).unwrap();
        let rep = verify_duality_theorem(&fam[..8], DEFAULT_EPSILON).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(DualityReport::CSV_HEADER));
        assert_eq!(lines.count(), 8);
        assert_eq!(rep.mismatches(), 0);
    }
}
