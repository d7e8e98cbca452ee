//! Statistical drift tests on simulated bundles: supermartingale and
//! local-martingale checks, deflator verification over strategy families,
//! and the expected-log-wealth bound.
//!
//! All tests work on unconditional mean increments over time bins between
//! consecutive observation points. That is a necessary condition only; the
//! exact conditional statement is checked on lattices.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::follmer::PathBundle;
use crate::sde::{constant_fraction, wealth_process, Path, Strategy, TimeGrid};
use crate::stats::{normal_quantile, Accumulator, McEstimate};

pub const MIN_PATHS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinVerdict {
    Positive,
    Negative,
    Zero,
}

impl BinVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            BinVerdict::Positive => "positive",
            BinVerdict::Negative => "negative",
            BinVerdict::Zero => "zero",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    /// One-sided: only a significantly positive drift counts.
    Supermartingale,
    /// Two-sided.
    LocalMartingale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    /// Significance per bin.
    pub alpha: f64,
    pub min_paths: usize,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self { alpha: 1e-3, min_paths: MIN_PATHS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
    pub stderr: f64,
    pub tstat: f64,
    /// Paths contributing (those still finite at `hi`).
    pub n: u64,
    pub verdict: BinVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTestReport {
    pub test: TestKind,
    pub process: String,
    pub strategy: String,
    pub alpha: f64,
    pub bins: Vec<BinStat>,
    /// Increment over the whole horizon, tested at the same level.
    pub whole: BinStat,
}

fn critical(kind: TestKind, alpha: f64) -> f64 {
    match kind {
        TestKind::Supermartingale => normal_quantile(1.0 - alpha),
        TestKind::LocalMartingale => normal_quantile(1.0 - alpha / 2.0),
    }
}

/// Verdict for a t-statistic; a pure function of the stored statistics.
pub fn classify(kind: TestKind, alpha: f64, tstat: f64) -> BinVerdict {
    let c = critical(kind, alpha);
    if tstat > c {
        BinVerdict::Positive
    } else if tstat < -c {
        BinVerdict::Negative
    } else {
        BinVerdict::Zero
    }
}

fn tstat(est: &McEstimate) -> f64 {
    let se = est.stderr_or_zero();
    if se > 0.0 {
        est.mean / se
    } else if est.mean == 0.0 {
        0.0
    } else {
        est.mean.signum() * f64::INFINITY
    }
}

fn bin_stat(kind: TestKind, alpha: f64, lo: f64, hi: f64, acc: &Accumulator) -> BinStat {
    let est = acc.estimate();
    let t = tstat(&est);
    BinStat {
        lo,
        hi,
        mean: est.mean,
        stderr: est.stderr_or_zero(),
        tstat: t,
        n: acc.count(),
        verdict: classify(kind, alpha, t),
    }
}

impl DriftTestReport {
    /// Supermartingale: no significantly positive bin. Local martingale:
    /// every bin zero.
    pub fn passes(&self) -> bool {
        match self.test {
            TestKind::Supermartingale => self.bins.iter().all(|b| b.verdict != BinVerdict::Positive),
            TestKind::LocalMartingale => self.bins.iter().all(|b| b.verdict == BinVerdict::Zero),
        }
    }

    /// Whether any bin or the whole-horizon increment is flagged.
    pub fn flags_drift(&self) -> bool {
        let bad = |b: &BinStat| match self.test {
            TestKind::Supermartingale => b.verdict == BinVerdict::Positive,
            TestKind::LocalMartingale => b.verdict != BinVerdict::Zero,
        };
        self.bins.iter().any(bad) || bad(&self.whole)
    }

    pub fn positive_bins(&self) -> Vec<usize> {
        self.bins.iter().enumerate().filter(|(_, b)| b.verdict == BinVerdict::Positive).map(|(i, _)| i).collect()
    }

    /// Bins whose verdict is not `Zero`.
    pub fn nonzero_bins(&self) -> Vec<usize> {
        self.bins.iter().enumerate().filter(|(_, b)| b.verdict != BinVerdict::Zero).map(|(i, _)| i).collect()
    }

    /// Recompute every verdict from the stored statistics.
    pub fn verdicts_reproducible(&self) -> bool {
        self.bins
            .iter()
            .chain(std::iter::once(&self.whole))
            .all(|b| classify(self.test, self.alpha, b.tstat) == b.verdict)
    }

    pub fn write_csv(&self, mut out: impl Write, header: bool) -> Result<()> {
        if header {
            writeln!(out, "test,process,strategy,bin_lo,bin_hi,mean,stderr,tstat,verdict")?;
        }
        let test = match self.test {
            TestKind::Supermartingale => "supermartingale",
            TestKind::LocalMartingale => "local_martingale",
        };
        for b in &self.bins {
            writeln!(
                out,
                "{test},{},{},{},{},{},{},{},{}",
                self.process,
                self.strategy,
                b.lo,
                b.hi,
                b.mean,
                b.stderr,
                b.tstat,
                b.verdict.as_str()
            )?;
        }
        Ok(())
    }
}

/// Drift test on a family of paths sharing one grid. Paths exploded at the
/// end of a bin are left out of that bin and every later one.
pub fn drift_test(
    kind: TestKind,
    process: &str,
    strategy: &str,
    paths: &[Path],
    config: &DriftConfig,
) -> Result<DriftTestReport> {
    if paths.len() < config.min_paths {
        return Err(LabError::InsufficientData { needed: config.min_paths, got: paths.len() });
    }
    let grid: Arc<TimeGrid> = paths[0].grid().clone();
    for p in paths {
        p.check_grid(&paths[0])?;
    }
    let n_bins = grid.n_steps();
    let mut accs = vec![Accumulator::new(); n_bins];
    let mut whole = Accumulator::new();
    for p in paths {
        let v = p.finite_values();
        for k in 0..n_bins.min(v.len().saturating_sub(1)) {
            accs[k].push(v[k + 1] - v[k]);
        }
        if v.len() == grid.len() {
            whole.push(v[n_bins] - v[0]);
        }
    }
    let bins = accs
        .iter()
        .enumerate()
        .map(|(k, acc)| bin_stat(kind, config.alpha, grid.time(k), grid.time(k + 1), acc))
        .collect();
    Ok(DriftTestReport {
        test: kind,
        process: process.to_string(),
        strategy: strategy.to_string(),
        alpha: config.alpha,
        bins,
        whole: bin_stat(kind, config.alpha, 0.0, grid.horizon(), &whole),
    })
}

/// Named map from a bundle path to a process on the observation grid.
pub struct Extractor {
    name: String,
    f: Box<dyn Fn(&PathBundle, usize) -> Result<Path> + Sync + Send>,
}

impl Extractor {
    pub fn new(name: impl Into<String>, f: impl Fn(&PathBundle, usize) -> Result<Path> + Sync + Send + 'static) -> Self {
        Self { name: name.into(), f: Box::new(f) }
    }

    /// A stored series.
    pub fn series(name: &str) -> Self {
        let key = name.to_string();
        Self::new(name, move |b, i| Ok(b.series(&key)?[i].clone()))
    }

    /// Pointwise product of two stored series.
    pub fn product(a: &str, b: &str) -> Self {
        let (ka, kb) = (a.to_string(), b.to_string());
        Self::new(format!("{a}*{b}"), move |bundle, i| bundle.series(&ka)?[i].mul(&bundle.series(&kb)?[i]))
    }

    /// Constant one on the observation grid.
    pub fn one() -> Self {
        Self::new("1", |b, _| Ok(Path::constant(b.obs_grid().clone(), 1.0)))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn extract(&self, bundle: &PathBundle, i: usize) -> Result<Path> {
        (self.f)(bundle, i)
    }

    fn extract_all(&self, bundle: &PathBundle) -> Result<Vec<Path>> {
        (0..bundle.n_paths()).map(|i| self.extract(bundle, i)).collect()
    }
}

pub fn supermartingale_test(bundle: &PathBundle, process: &Extractor, config: &DriftConfig) -> Result<DriftTestReport> {
    drift_test(TestKind::Supermartingale, process.name(), "none", &process.extract_all(bundle)?, config)
}

pub fn local_martingale_drift_test(
    bundle: &PathBundle,
    process: &Extractor,
    config: &DriftConfig,
) -> Result<DriftTestReport> {
    drift_test(TestKind::LocalMartingale, process.name(), "none", &process.extract_all(bundle)?, config)
}

/// One generator of a [`StrategyFamily`]; all trade on the observation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StrategySpec {
    /// Keep fraction `pi` of wealth in the asset.
    ConstantFraction { pi: f64 },
    /// Hold one share until `switch_time`, then nothing.
    BuyThenSwitch { switch_time: f64 },
    /// Fraction `pi` while the price is at most `level`, otherwise nothing.
    Threshold { pi: f64, level: f64 },
}

impl StrategySpec {
    pub fn label(&self) -> String {
        match self {
            StrategySpec::ConstantFraction { pi } => format!("fraction={pi}"),
            StrategySpec::BuyThenSwitch { switch_time } => format!("buy_then_switch={switch_time}"),
            StrategySpec::Threshold { pi, level } => format!("threshold={pi}@{level}"),
        }
    }

    /// Strategy and wealth `x0 + H . S` on the grid of `price`.
    pub fn realise(&self, x0: f64, price: &Path, constrained: bool) -> Result<(Strategy, Path)> {
        let grid = price.grid().clone();
        if price.exploded_at().is_some() {
            return invalid("strategies need a finite price path");
        }
        let s = price.finite_values();
        let (strategy, wealth) = match *self {
            StrategySpec::ConstantFraction { pi } => {
                let (h, w) = constant_fraction(pi, x0, price)?;
                if constrained && pi < 0.0 {
                    return Err(LabError::ContractViolation(format!("fraction {pi} in a constrained family")));
                }
                (h, w)
            }
            StrategySpec::BuyThenSwitch { switch_time } => {
                let h: Vec<f64> = grid.times().iter().map(|&t| if t < switch_time { 1.0 } else { 0.0 }).collect();
                let h = Strategy::new(grid.clone(), h, constrained, x0)?;
                let w = wealth_process(x0, &h, price)?.wealth;
                (h, w)
            }
            StrategySpec::Threshold { pi, level } => {
                let mut x = x0;
                let mut hold = Vec::with_capacity(s.len());
                let mut wealth = Vec::with_capacity(s.len());
                for k in 0..s.len() {
                    wealth.push(x);
                    let h = if s[k] <= level { pi * x / s[k] } else { 0.0 };
                    hold.push(h);
                    if k + 1 < s.len() {
                        x += h * (s[k + 1] - s[k]);
                    }
                }
                (Strategy::new(grid.clone(), hold, constrained, x0)?, Path::new(grid, wealth)?)
            }
        };
        Ok((strategy, wealth))
    }
}

/// Generators of test strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyFamily {
    pub specs: Vec<StrategySpec>,
    pub constrained: bool,
}

impl StrategyFamily {
    pub fn new(specs: Vec<StrategySpec>) -> Self {
        Self { specs, constrained: true }
    }

    pub fn fractions(pis: &[f64]) -> Self {
        Self::new(pis.iter().map(|&pi| StrategySpec::ConstantFraction { pi }).collect())
    }

    /// Fractions `{0, 1/4, 1/2, 3/4, 1}`, buy-then-switch at quarters of the
    /// horizon, and two threshold rules.
    pub fn standard(horizon: f64) -> Self {
        let mut specs: Vec<StrategySpec> =
            [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&pi| StrategySpec::ConstantFraction { pi }).collect();
        for q in [0.25, 0.5, 0.75] {
            specs.push(StrategySpec::BuyThenSwitch { switch_time: q * horizon });
        }
        specs.push(StrategySpec::Threshold { pi: 1.0, level: 1.5 });
        specs.push(StrategySpec::Threshold { pi: 0.5, level: 2.0 });
        Self::new(specs)
    }

    pub fn unconstrained(mut self) -> Self {
        self.constrained = false;
        self
    }
}

#[derive(Debug, Clone)]
pub struct DeflatorCheck {
    pub reports: Vec<DriftTestReport>,
}

impl DeflatorCheck {
    pub fn passes(&self) -> bool {
        self.reports.iter().all(|r| r.passes())
    }

    pub fn failing(&self) -> Vec<&str> {
        self.reports.iter().filter(|r| !r.passes()).map(|r| r.strategy.as_str()).collect()
    }
}

/// Supermartingale test of `Y (1 + H . S)` for each strategy of the family.
pub fn deflator_check(
    y: &Extractor,
    s: &Extractor,
    family: &StrategyFamily,
    bundle: &PathBundle,
    config: &DriftConfig,
) -> Result<DeflatorCheck> {
    let ys = y.extract_all(bundle)?;
    let ss = s.extract_all(bundle)?;
    let mut reports = Vec::with_capacity(family.specs.len());
    for spec in &family.specs {
        let mut products = Vec::with_capacity(ys.len());
        for (i, (yp, sp)) in ys.iter().zip(&ss).enumerate() {
            let (strategy, wealth) = spec.realise(1.0, sp, family.constrained)?;
            if family.constrained {
                let outcome = wealth_process(1.0, &strategy, sp)?;
                if !outcome.admissible {
                    return Err(LabError::ContractViolation(format!(
                        "strategy {} is not 1-admissible on path {i} (min gain {})",
                        spec.label(),
                        outcome.min_gain
                    )));
                }
            }
            products.push(yp.mul(&wealth)?);
        }
        let name = format!("{}*(1+H.{})", y.name(), s.name());
        reports.push(drift_test(TestKind::Supermartingale, &name, &spec.label(), &products, config)?);
    }
    Ok(DeflatorCheck { reports })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogWealthReport {
    /// Estimate of `E[log(Z_T X_T)]` over retained paths.
    pub estimate: McEstimate,
    /// Paths dropped for nonpositive terminal wealth.
    pub excluded: u64,
    pub upper_ci: f64,
}

impl LogWealthReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.upper_ci <= tolerance
    }
}

/// Estimate `E[log(Z_T X_T)]`, which is at most zero when `Z` is a
/// supermartingale deflator for wealth `X` started at 1.
pub fn log_wealth_bound_check(
    z: &Extractor,
    wealth: &Extractor,
    bundle: &PathBundle,
    confidence: f64,
) -> Result<LogWealthReport> {
    let mut acc = Accumulator::new();
    let mut excluded = 0;
    for i in 0..bundle.n_paths() {
        let (zp, xp) = (z.extract(bundle, i)?, wealth.extract(bundle, i)?);
        zp.check_grid(&xp)?;
        let k = zp.grid().n_steps();
        match (zp.get(k), xp.get(k)) {
            (Some(zv), Some(xv)) if xv > 0.0 && zv > 0.0 => acc.push((zv * xv).ln()),
            _ => excluded += 1,
        }
    }
    if acc.count() < 2 {
        return Err(LabError::InsufficientData { needed: 2, got: acc.count() as usize });
    }
    let estimate = acc.estimate();
    let upper_ci = estimate.ci(confidence).map(|c| c.1).unwrap_or(estimate.mean);
    Ok(LogWealthReport { estimate, excluded, upper_ci })
}

/// Wealth extractor for a strategy spec trading in a stored price series.
/// Paths on which the spec leaves the positive half-line keep the wealth
/// path as computed, so the bound check can count and drop them.
pub fn strategy_wealth(price_series: &str, spec: StrategySpec, constrained: bool) -> Extractor {
    let key = price_series.to_string();
    Extractor::new(format!("X[{}]", spec.label()), move |b, i| {
        let (_, w) = spec.realise(1.0, &b.series(&key)?[i], constrained)?;
        Ok(w)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::follmer::MeasureTag;
    use crate::processes::PropParams;
    use crate::sde::{make_grid, sample_brownian, RandomSource};

    fn bundle_of(paths: Vec<Path>) -> PathBundle {
        let g = paths[0].grid().clone();
        let p = PropParams::new(g.horizon(), 2.0, g.n_steps()).unwrap();
        PathBundle::from_series(MeasureTag::Reference, p, g, vec![("P", paths)]).unwrap()
    }

    fn brownian(n: u64, seed: u64, scale: f64, drift: f64) -> Vec<Path> {
        let g = make_grid(1.0, 16).unwrap();
        let src = RandomSource::new(seed);
        (0..n)
            .map(|i| {
                let w = sample_brownian(&g, &src, i);
                Path::new(
                    g.clone(),
                    w.finite_values().iter().zip(g.times()).map(|(v, t)| scale * v + drift * t).collect(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn constant_process_has_zero_bins() {
        let g = make_grid(1.0, 16).unwrap();
        let b = bundle_of(vec![Path::constant(g, 3.0); 1000]);
        let r = supermartingale_test(&b, &Extractor::series("P"), &DriftConfig::default()).unwrap();
        assert!(r.bins.iter().all(|x| x.verdict == BinVerdict::Zero && x.mean == 0.0));
        assert!(r.passes() && !r.flags_drift());
    }

    #[test]
    fn too_few_paths() {
        let g = make_grid(1.0, 16).unwrap();
        let b = bundle_of(vec![Path::constant(g, 3.0); 10]);
        assert!(matches!(
            supermartingale_test(&b, &Extractor::series("P"), &DriftConfig::default()),
            Err(LabError::InsufficientData { .. })
        ));
    }

    #[test]
    fn brownian_passes_two_sided() {
        let b = bundle_of(brownian(4000, 1, 1.0, 0.0));
        let r = local_martingale_drift_test(&b, &Extractor::series("P"), &DriftConfig::default()).unwrap();
        assert!(r.passes());
        assert!(r.verdicts_reproducible());
        assert_eq!(r.bins.len(), 16);
        assert_eq!(r.bins[0].lo, 0.0);
        assert_eq!(r.bins[15].hi, 1.0);
    }

    #[test]
    fn doubling_paths_keeps_exact_passes() {
        let g = make_grid(1.0, 16).unwrap();
        for n in [1000, 2000, 4000] {
            let b = bundle_of(vec![Path::constant(g.clone(), 1.0); n]);
            assert!(local_martingale_drift_test(&b, &Extractor::series("P"), &DriftConfig::default()).unwrap().passes());
        }
    }

    #[test]
    fn injected_drift_is_flagged() {
        let mut flagged = 0;
        for seed in 0..20 {
            let b = bundle_of(brownian(10_000, 100 + seed, 0.5, 0.05));
            let r = local_martingale_drift_test(&b, &Extractor::series("P"), &DriftConfig::default()).unwrap();
            flagged += r.flags_drift() as usize;
        }
        assert_eq!(flagged, 20);
    }

    #[test]
    fn csv_rows() {
        let b = bundle_of(brownian(1000, 2, 1.0, 0.0));
        let r = supermartingale_test(&b, &Extractor::series("P"), &DriftConfig::default()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert!(text.lines().nth(1).unwrap().starts_with("supermartingale,P,none,0,0.0625,"));
    }

    #[test]
    fn zero_strategy_reduces_to_deflator_itself() {
        let b = bundle_of(brownian(1000, 3, 0.1, 0.0).into_iter().map(|p| p.map(|v| 1.0 + v)).collect());
        let fam = StrategyFamily::fractions(&[0.0]);
        let check = deflator_check(&Extractor::series("P"), &Extractor::one(), &fam, &b, &DriftConfig::default()).unwrap();
        let direct = supermartingale_test(&b, &Extractor::series("P"), &DriftConfig::default()).unwrap();
        let a: Vec<f64> = check.reports[0].bins.iter().map(|x| x.mean).collect();
        let d: Vec<f64> = direct.bins.iter().map(|x| x.mean).collect();
        assert_eq!(a, d);
    }

    #[test]
    fn negative_fraction_rejected_when_constrained() {
        let g = make_grid(1.0, 4).unwrap();
        let s = Path::constant(g, 1.0);
        assert!(StrategySpec::ConstantFraction { pi: -0.5 }.realise(1.0, &s, true).is_err());
        assert!(StrategySpec::ConstantFraction { pi: -0.5 }.realise(1.0, &s, false).is_ok());
    }

    #[test]
    fn threshold_and_switch_wealth() {
        let g = make_grid(1.0, 4).unwrap();
        let s = Path::new(g, vec![1.0, 2.0, 3.0, 1.0, 2.0]).unwrap();
        let (_, w) = StrategySpec::BuyThenSwitch { switch_time: 0.5 }.realise(1.0, &s, true).unwrap();
        assert_eq!(w.finite_values(), &[1.0, 2.0, 3.0, 3.0, 3.0]);
        let (_, w) = StrategySpec::Threshold { pi: 1.0, level: 2.5 }.realise(1.0, &s, true).unwrap();
        // all-in while S <= 2.5: 1 -> 2 -> 3, out at S = 3, back in at S = 1
        assert_eq!(w.finite_values(), &[1.0, 2.0, 3.0, 3.0, 6.0]);
    }
}
