//! Named, seeded experiments with their asserted claims and CSV artifacts.
//!
//! Shared by the command-line runner and the C interface. Every CSV starts
//! with a `#` line holding the full configuration as JSON.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::arbtests::{log_wealth_bound_check, strategy_wealth, supermartingale_test, DriftConfig, Extractor, StrategySpec};
use crate::equilibrium::{
    optimality_gap, representative_utility, run_negishi, run_patching, NegishiScenario, PatchingScenario,
};
use crate::error::{invalid, LabError, Result};
use crate::follmer::{
    defect_direct, explosion_binomial, simulate_reference, simulate_under_follmer_beta, BetaVariant, BundleConfig,
    SERIES_S1, SERIES_S2, SERIES_Z1, SERIES_Z2, SERIES_ZBETA,
};
use crate::lattice::{generate_family, verify_duality_theorem, FamilyConfig, DEFAULT_EPSILON};
use crate::processes::{hitting_prob_p, PropParams};
use crate::sde::{constant_fraction, RandomSource};
use crate::stats::{equality_verified, strictly_below};

/// Catalogue entry: name and the statement it checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExperimentInfo {
    pub name: &'static str,
    pub claim: &'static str,
}

pub const CATALOG: [ExperimentInfo; 7] = [
    ExperimentInfo { name: "prop51", claim: "strict defect E[Z_T^(1)] < 1 above p^2/(1+p); E[Z_T^(beta)] = 1 with no explosions under P^(beta)" },
    ExperimentInfo { name: "example1", claim: "S = 1/Z^(1) has positive drift under P but is a supermartingale under P^(beta); Z^(1) S = 1" },
    ExperimentInfo { name: "example2", claim: "constant holding of one share is log-optimal: E[log X_T] <= E[log S_T] for constant fractions" },
    ExperimentInfo { name: "lattice-duality", claim: "NUPBR(_C) iff D_loc (D_sup) nonempty; NFLVR(_C) iff M_loc (M_sup) nonempty; NFLVR and ND iff M nonempty" },
    ExperimentInfo { name: "negishi", claim: "lambda_k = Z_T / U_k'(X_k) makes the market allocation solve the aggregate problem; E[U(X;lambda)] <= E[U(S;lambda)]" },
    ExperimentInfo { name: "patching", claim: "deflators glued along holding sets make Y S a local martingale; individual ones only where their agent holds" },
    ExperimentInfo { name: "repr-agent", claim: "U = Z_T S_T^gamma x^(1-gamma)/(1-gamma) has U'(S_T) = Z_T and makes holding the market optimal" },
];

pub fn experiment_names() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().map(|e| e.name)
}

/// Full configuration of one run. Fields a given experiment does not use
/// are ignored by it but still recorded in its output header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub beta: f64,
    pub gamma: f64,
    pub paths: u64,
    pub steps: usize,
    pub bins: usize,
    pub seed: u64,
    /// Confidence level of the reported intervals.
    pub level: f64,
    pub out: Option<String>,
    /// Lattice family; `None` is the default grid.
    pub grid: Option<FamilyConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: String::new(),
            horizon: 1.0,
            beta: 2.0,
            gamma: 0.5,
            paths: 20_000,
            steps: 1024,
            bins: 16,
            seed: 42,
            level: 0.99,
            out: None,
            grid: None,
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(name: &str) -> Self {
        Self { experiment: name.to_string(), ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !experiment_names().any(|n| n == self.experiment) {
            problems.push(format!("experiment: unknown name {:?}", self.experiment));
        }
        if !(self.horizon > 0.0 && self.horizon <= 100.0) {
            problems.push(format!("T: must lie in (0, 100], got {}", self.horizon));
        }
        if !(self.beta > 1.0 && self.beta <= 50.0) {
            problems.push(format!("beta: must lie in (1, 50], got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            problems.push(format!("gamma: must lie in (0, 1), got {}", self.gamma));
        }
        if self.paths < 1000 {
            problems.push(format!("paths: at least 1000 needed for the drift tests, got {}", self.paths));
        }
        if self.bins == 0 || self.steps < self.bins || !self.steps.is_multiple_of(self.bins) {
            problems.push(format!("steps: must be a positive multiple of bins ({}), got {}", self.bins, self.steps));
        }
        if !(self.level > 0.5 && self.level < 1.0) {
            problems.push(format!("level: must lie in (0.5, 1), got {}", self.level));
        }
        if problems.is_empty() { Ok(()) } else { invalid(problems.join("; ")) }
    }

    pub fn header(&self) -> String {
        format!("# config: {}", self.to_json())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub experiment: String,
    pub claims: Vec<Claim>,
    pub artifacts: Vec<Artifact>,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }

    /// Writes each artifact into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &FsPath) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.artifacts
            .iter()
            .map(|a| {
                let p = dir.join(&a.file_name);
                std::fs::write(&p, &a.contents)?;
                Ok(p)
            })
            .collect()
    }
}

struct Builder {
    cfg: ExperimentConfig,
    claims: Vec<Claim>,
    artifacts: Vec<Artifact>,
}

impl Builder {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self { cfg: cfg.clone(), claims: Vec::new(), artifacts: Vec::new() }
    }

    fn claim(&mut self, name: &str, pass: bool, detail: String) {
        self.claims.push(Claim { name: name.to_string(), pass, detail });
    }

    /// CSV body with the config line prepended.
    fn csv(&mut self, file_name: &str, body: String) {
        let contents = format!("{}\n{body}", self.cfg.header());
        self.artifacts.push(Artifact { file_name: file_name.to_string(), contents });
    }

    fn finish(self) -> ExperimentOutput {
        ExperimentOutput { experiment: self.cfg.experiment, claims: self.claims, artifacts: self.artifacts }
    }
}

fn to_string(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    String::from_utf8(buf).map_err(|e| LabError::ContractViolation(e.to_string()))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut b = Builder::new(cfg);
    match cfg.experiment.as_str() {
        "prop51" => prop51(&mut b)?,
        "example1" => example1(&mut b)?,
        "example2" => example2(&mut b)?,
        "lattice-duality" => lattice_duality(&mut b)?,
        "negishi" => negishi(&mut b)?,
        "patching" => patching(&mut b)?,
        "repr-agent" => repr_agent(&mut b)?,
        other => return invalid(format!("unknown experiment {other:?}")),
    }
    Ok(b.finish())
}

fn src(cfg: &ExperimentConfig, salt: u64) -> RandomSource {
    RandomSource::new(cfg.seed).derive(salt)
}

fn bundle_config(cfg: &ExperimentConfig) -> BundleConfig {
    BundleConfig { n_bins: cfg.bins, ..BundleConfig::new(cfg.paths) }
}

fn prop51(b: &mut Builder) -> Result<()> {
    let cfg = b.cfg.clone();
    let params = PropParams::new(cfg.horizon, cfg.beta, cfg.steps)?;
    let refined = params.clone().refined_default();
    let bc = bundle_config(&cfg);
    let grid_ref = simulate_reference(&params, &BundleConfig { keep: Some(vec![SERIES_Z1.into()]), ..bc.clone() }, &src(&cfg, 1))?;
    let fine_ref = simulate_reference(&refined, &BundleConfig { keep: Some(vec![SERIES_ZBETA.into()]), ..bc.clone() }, &src(&cfg, 2))?;
    let follmer = simulate_under_follmer_beta(&refined, &bc, &src(&cfg, 3), BetaVariant::ExampleOne)?;
    let z1 = defect_direct(&grid_ref, SERIES_Z1, None)?.affine(1.0, -1.0);
    let zb = defect_direct(&fine_ref, SERIES_ZBETA, None)?.affine(1.0, -1.0);
    let ex = explosion_binomial(&follmer, None, cfg.level)?;
    let p = hitting_prob_p(cfg.horizon)?;
    let bound = p * p / (1.0 + p);
    let se = z1.stderr_or_zero();
    let mut body = String::from("quantity,mean,stderr,ci_lo,ci_hi,n\n");
    for (name, est) in [("E[Z1_T]", &z1), ("E[Zbeta_T]", &zb)] {
        let (lo, hi) = est.ci(cfg.level).unwrap_or((est.mean, est.mean));
        writeln!(body, "{name},{},{},{lo},{hi},{}", est.mean, est.stderr_or_zero(), est.n).expect("string write");
    }
    writeln!(body, "defect_bound,{bound},0,{bound},{bound},0").expect("string write");
    writeln!(body, "explosions_beta,{},0,{},{},{}", ex.point, ex.lower, ex.upper, ex.trials).expect("string write");
    b.csv("prop51.csv", body);
    let hi = z1.ci(cfg.level).map_or(z1.mean, |c| c.1);
    b.claim("E[Z1_T] < 1", strictly_below(&z1, 1.0, cfg.level), format!("mean {:.5}, upper {hi:.5}", z1.mean));
    b.claim(
        "defect above bound",
        1.0 - z1.mean > bound - 3.0 * se,
        format!("defect {:.5} vs p^2/(1+p) = {bound:.6}", 1.0 - z1.mean),
    );
    let hw = zb.half_width(cfg.level).unwrap_or(f64::INFINITY);
    b.claim(
        "E[Zbeta_T] = 1",
        equality_verified(&zb, 1.0, cfg.level, 0.01),
        format!("mean {:.5}, half-width {hw:.5} (resolution 0.01)", zb.mean),
    );
    b.claim(
        "no explosions under P^beta",
        ex.successes == 0,
        format!("{}/{} (upper {:.2e})", ex.successes, ex.trials, ex.upper),
    );
    Ok(())
}

fn example1(b: &mut Builder) -> Result<()> {
    let cfg = b.cfg.clone();
    let params = PropParams::new(cfg.horizon, cfg.beta, cfg.steps)?;
    let bc = bundle_config(&cfg);
    let reference = simulate_reference(&params, &BundleConfig { keep: Some(vec![SERIES_Z1.into(), SERIES_S1.into()]), ..bc.clone() }, &src(&cfg, 11))?;
    let under = simulate_under_follmer_beta(&params.clone().refined_default(), &bc, &src(&cfg, 12), BetaVariant::ExampleOne)?;
    let dc = DriftConfig { alpha: 1.0 - cfg.level, ..DriftConfig::default() };
    let r = supermartingale_test(&reference, &Extractor::series(SERIES_S1), &dc)?;
    let u = supermartingale_test(&under, &Extractor::series(SERIES_S1), &dc)?;
    let body = to_string(|w| {
        r.write_csv(&mut *w, true)?;
        u.write_csv(&mut *w, false)
    })?;
    b.csv("example1.csv", body);
    let mut worst: f64 = 0.0;
    for (z, s) in reference.series(SERIES_Z1)?.iter().zip(reference.series(SERIES_S1)?) {
        for (a, c) in z.finite_values().iter().zip(s.finite_values()) {
            worst = worst.max((a * c - 1.0).abs());
        }
    }
    b.claim("S has positive drift under P", !r.positive_bins().is_empty(), format!("positive bins {:?}", r.positive_bins()));
    b.claim("S supermartingale under P^beta", u.passes(), format!("positive bins {:?}", u.positive_bins()));
    b.claim("Z1 S = 1", worst <= 4.0 * f64::EPSILON, format!("max |Z1 S - 1| = {worst:.1e}"));
    Ok(())
}

const FRACTIONS: [f64; 6] = [-0.5, 0.0, 0.25, 0.5, 0.75, 1.0];

fn example2(b: &mut Builder) -> Result<()> {
    let cfg = b.cfg.clone();
    let params = PropParams::new(cfg.horizon, cfg.beta, cfg.steps)?;
    let bc = BundleConfig { keep: Some(vec![SERIES_Z2.into(), SERIES_S2.into()]), ..bundle_config(&cfg) };
    let bundle = simulate_reference(&params, &bc, &src(&cfg, 21))?;
    let z = Extractor::series(SERIES_Z2);
    let mut body = String::from("pi,mean,stderr,upper_ci,excluded\n");
    for pi in FRACTIONS {
        let wealth = strategy_wealth(SERIES_S2, StrategySpec::ConstantFraction { pi }, false);
        let r = log_wealth_bound_check(&z, &wealth, &bundle, cfg.level)?;
        writeln!(body, "{pi},{},{},{},{}", r.estimate.mean, r.estimate.stderr_or_zero(), r.upper_ci, r.excluded)
            .expect("string write");
        let mut pass = r.passes(1e-3);
        if pi == 1.0 {
            let (lo, hi) = r.estimate.ci(cfg.level).unwrap_or((r.estimate.mean, r.estimate.mean));
            pass &= lo - 1e-12 <= 0.0 && 0.0 <= hi + 1e-12;
        }
        b.claim(&format!("log-optimality pi={pi}"), pass, format!("E[log X_T - log S_T] upper {:.2e}", r.upper_ci));
    }
    b.csv("example2.csv", body);
    Ok(())
}

fn lattice_duality(b: &mut Builder) -> Result<()> {
    let fc = b.cfg.grid.clone().unwrap_or_default();
    let family = generate_family(&fc)?;
    let report = verify_duality_theorem(&family, DEFAULT_EPSILON)?;
    b.csv("lattice_duality.csv", to_string(|w| report.write_csv(w))?);
    let counts: Vec<String> = report.failure_counts().iter().map(|(k, n)| format!("{k}:{n}")).collect();
    b.claim(
        "equivalences hold on every lattice",
        report.mismatches() == 0,
        format!("{} lattices, {} mismatches; failing instances {}", family.len(), report.mismatches(), counts.join(" ")),
    );
    Ok(())
}

fn negishi(b: &mut Builder) -> Result<()> {
    let cfg = b.cfg.clone();
    let sc = NegishiScenario {
        horizon: cfg.horizon,
        beta: cfg.beta,
        n_steps: cfg.steps,
        n_bins: cfg.bins,
        n_paths: cfg.paths,
        seed: src(&cfg, 31).master_seed,
        confidence: cfg.level,
        ..NegishiScenario::default()
    };
    let r = run_negishi(&sc)?;
    b.csv("negishi.csv", to_string(|w| r.aggregation.write_csv(w))?);
    b.claim(
        "weights recover the generating wealths",
        r.wealth_residual < 1e-10,
        format!("max |c_k - X_k| = {:.1e}, max |mu/Z - 1| = {:.1e}", r.wealth_residual, r.multiplier_residual),
    );
    b.claim(
        "pathwise tangent inequality",
        r.aggregation.total_violations() == 0,
        format!("{} violations", r.aggregation.total_violations()),
    );
    let worst = r.aggregation.rows.iter().map(|row| row.upper_ci).fold(f64::NEG_INFINITY, f64::max);
    b.claim("E[U(X;lambda)] <= E[U(S;lambda)]", worst <= 1e-12, format!("largest upper bound {worst:.2e}"));
    Ok(())
}

fn patching(b: &mut Builder) -> Result<()> {
    let cfg = b.cfg.clone();
    let mut sc = PatchingScenario::alternating();
    sc.horizon = cfg.horizon;
    sc.n_steps = cfg.steps;
    sc.n_bins = cfg.bins;
    sc.n_paths = cfg.paths as usize;
    sc.seed = src(&cfg, 41).master_seed;
    sc.alpha = 1.0 - cfg.level;
    // Keep the switch at half the horizon.
    if let [first, second] = sc.agents.as_mut_slice() {
        first.holdings = crate::equilibrium::HoldingSchedule::Interval { from: 0.0, to: 0.5 * cfg.horizon };
        second.holdings = crate::equilibrium::HoldingSchedule::Interval { from: 0.5 * cfg.horizon, to: f64::INFINITY };
    }
    let r = run_patching(&sc)?;
    b.csv("patching.csv", to_string(|w| r.write_csv(w))?);
    b.claim("D_k partition", r.partition_ok, "disjoint and covering".into());
    b.claim("patched Y S driftless", r.patched.passes(), format!("nonzero bins {:?}", r.patched.nonzero_bins()));
    let off: Vec<String> = (0..r.individual.len()).map(|k| format!("agent {}: {:?}", k + 1, r.off_own_failures(k))).collect();
    b.claim("own deflators fail off their sets", r.demonstrates_locality(), off.join("; "));
    Ok(())
}

fn repr_agent(b: &mut Builder) -> Result<()> {
    let cfg = b.cfg.clone();
    let params = PropParams::new(cfg.horizon, cfg.beta, cfg.steps)?;
    let bc = BundleConfig { keep: Some(vec![SERIES_Z1.into(), SERIES_S1.into()]), ..bundle_config(&cfg) };
    let bundle = simulate_reference(&params, &bc, &src(&cfg, 51))?;
    let terminal = |name: &str| -> Result<Vec<f64>> {
        bundle.series(name)?.iter().map(|p| p.terminal().ok_or(LabError::Empty)).collect()
    };
    let (z, s) = (terminal(SERIES_Z1)?, terminal(SERIES_S1)?);
    let u = representative_utility(cfg.gamma, &z, &s)?;
    let marginal_err = (0..z.len()).map(|i| (u.marginal(i, s[i]) / z[i] - 1.0).abs()).fold(0.0, f64::max);
    b.claim("U'(S_T) = Z_T", marginal_err < 1e-12, format!("max relative error {marginal_err:.1e}"));
    let eu = crate::stats::accumulate((0..s.len()).map(|i| u.eval(i, s[i])));
    let target = 1.0 / (1.0 - cfg.gamma);
    b.claim(
        "E[U(S_T)] = 1/(1-gamma)",
        (eu.mean - target).abs() <= 1e-9 * target + 3.0 * eu.stderr_or_zero(),
        format!("{:.10} vs {target:.10}", eu.mean),
    );
    let mut body = String::from("pi,utility_gap,utility_gap_upper,budget_gap,budget_gap_upper,violations,excluded\n");
    let prices = bundle.series(SERIES_S1)?;
    for pi in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let x: Vec<f64> = prices
            .iter()
            .map(|p| constant_fraction(pi, 1.0, p).map(|(_, w)| w.terminal().unwrap_or(f64::NAN)))
            .collect::<Result<_>>()?;
        let g = optimality_gap(&u, &x, &s, &z)?;
        let up = |e: &crate::stats::McEstimate| e.ci(cfg.level).map_or(e.mean, |c| c.1);
        let (ug, bg) = (up(&g.utility_gap), up(&g.budget_gap));
        writeln!(
            body,
            "{pi},{},{ug},{},{bg},{},{}",
            g.utility_gap.mean, g.budget_gap.mean, g.pathwise_violations, g.excluded
        )
        .expect("string write");
        b.claim(
            &format!("holding the market is optimal vs pi={pi}"),
            ug <= 1e-12 && g.pathwise_violations == 0,
            format!("E[U(X)] - E[U(S)] upper {ug:.2e}, violations {}", g.pathwise_violations),
        );
    }
    b.csv("repr_agent.csv", body);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_seven_entries() {
        assert_eq!(CATALOG.len(), 7);
        assert!(experiment_names().any(|n| n == "lattice-duality"));
    }

    #[test]
    fn config_round_trips() {
        let mut c = ExperimentConfig::for_experiment("negishi");
        c.grid = Some(FamilyConfig { n_random: 3, ..FamilyConfig::default() });
        c.out = Some("runs".into());
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"experiment":"prop51","pathz":3}"#).is_err());
    }

    #[test]
    fn validation_lists_every_problem() {
        let c = ExperimentConfig { experiment: "nope".into(), gamma: 2.0, paths: 5, ..ExperimentConfig::default() };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("experiment") && msg.contains("gamma") && msg.contains("paths"), "{msg}");
    }

    #[test]
    fn csv_starts_with_config_line() {
        let cfg = ExperimentConfig {
            grid: Some(FamilyConfig { n_random: 4, ..FamilyConfig::default() }),
            ..ExperimentConfig::for_experiment("lattice-duality")
        };
        let out = run_experiment(&cfg).unwrap();
        let text = &out.artifacts[0].contents;
        assert!(text.starts_with("# config: {"));
        assert!(out.passed());
    }
}
