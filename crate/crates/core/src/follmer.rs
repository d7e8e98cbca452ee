//! Simulation under the reference measure and under Föllmer measures, and
//! the two routes to the defect `1 - E[Z_T]`.
//!
//! A [`PathBundle`] keeps, per path, a handful of named series sampled at
//! evenly spaced observation times plus the realised stopping and explosion
//! times. Fine-grid values are never retained.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::processes::{build_examples, PropParams, StopTime};
use crate::sde::{
    calculus::time_integral, substep, Path, RandomSource, ReciprocalBesselStepper, SubStream, TauRule, TimeGrid,
};
use crate::stats::{accumulate, binomial_exact, BinomialEstimate, McEstimate};

pub const SERIES_X: &str = "X";
pub const SERIES_W: &str = "W";
pub const SERIES_L: &str = "L";
pub const SERIES_Z1: &str = "Z1";
pub const SERIES_ZBETA: &str = "Zbeta";
pub const SERIES_S1: &str = "S1";
pub const SERIES_Z2: &str = "Z2";
pub const SERIES_ZSUP: &str = "Zsup";
pub const SERIES_S2: &str = "S2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasureTag {
    Reference,
    Follmer1,
    FollmerBeta,
    /// Föllmer measure of the Example-two supermartingale deflator.
    ExampleTwoTilde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub n_paths: u64,
    /// Observation bins; `n_steps` must be a multiple.
    pub n_bins: usize,
    /// Brownian-bridge crossing correction for the zero barrier.
    pub bridge: bool,
    /// Level of `1 + W^(1)` below which a Föllmer-1 path counts as exploded.
    pub cutoff: f64,
    /// Same for `1/X` under the Föllmer-beta measures. On the way to `tau`
    /// the radius routinely passes far below `cutoff`, so the level here is
    /// much smaller.
    pub beta_cutoff: f64,
    /// Sub-step budget per path; a path that uses it up counts as exploded.
    pub max_substeps: u64,
    /// Restrict a reference bundle to these series (all when `None`).
    pub keep: Option<Vec<String>>,
}

impl BundleConfig {
    pub fn new(n_paths: u64) -> Self {
        Self { n_paths, n_bins: 16, bridge: true, cutoff: 1e-6, beta_cutoff: 1e-100, max_substeps: 10_000_000, keep: None }
    }
}

/// Per-path stopping data on the fine grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    pub tau: StopTime,
    /// Time at which the density exploded, if it did by the horizon.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PathBundle {
    measure: MeasureTag,
    params: PropParams,
    seed: u64,
    obs_grid: Arc<TimeGrid>,
    series: BTreeMap<&'static str, Vec<Path>>,
    meta: Vec<PathMeta>,
}

impl PathBundle {
    pub fn measure(&self) -> MeasureTag {
        self.measure
    }

    pub fn params(&self) -> &PropParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.meta.len()
    }

    pub fn obs_grid(&self) -> &Arc<TimeGrid> {
        &self.obs_grid
    }

    pub fn meta(&self) -> &[PathMeta] {
        &self.meta
    }

    pub fn series_names(&self) -> Vec<&'static str> {
        self.series.keys().copied().collect()
    }

    pub fn series(&self, name: &str) -> Result<&[Path]> {
        self.series
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| LabError::InvalidArgument(format!("bundle has no series {name:?}")))
    }

    /// Bundle of caller-supplied series, e.g. for testing a candidate
    /// process; every series must live on `obs_grid`.
    pub fn from_series(
        measure: MeasureTag,
        params: PropParams,
        obs_grid: Arc<TimeGrid>,
        series: Vec<(&'static str, Vec<Path>)>,
    ) -> Result<Self> {
        let n = series.first().map(|s| s.1.len()).unwrap_or(0);
        for (name, paths) in &series {
            if paths.len() != n {
                return invalid(format!("series {name} has {} paths, expected {n}", paths.len()));
            }
            if paths.iter().any(|p| p.grid() != &obs_grid) {
                return Err(LabError::GridMismatch(format!("series {name} is off the observation grid")));
            }
        }
        Ok(Self {
            measure,
            params,
            seed: 0,
            obs_grid,
            series: series.into_iter().collect(),
            meta: vec![PathMeta { tau: StopTime::Never, sigma: None }; n],
        })
    }

    /// Index of the observation point at time `t`.
    pub fn obs_index(&self, t: f64) -> Result<usize> {
        let k = self.obs_grid.nearest_index(t);
        if (self.obs_grid.time(k) - t).abs() > 1e-9 * (1.0 + t.abs()) {
            return invalid(format!("time {t} is not an observation time"));
        }
        Ok(k)
    }
}

struct Recorder {
    obs: Arc<Vec<usize>>,
    next: usize,
    values: Vec<Vec<f64>>,
    exploded: Vec<bool>,
}

impl Recorder {
    fn new(obs: Arc<Vec<usize>>, n_series: usize) -> Self {
        let cap = obs.len();
        Self { obs, next: 0, values: vec![Vec::with_capacity(cap); n_series], exploded: vec![false; n_series] }
    }

    fn wants(&self, k: usize) -> bool {
        self.obs.get(self.next) == Some(&k)
    }

    /// `None` marks the series as exploded from here on.
    fn record(&mut self, row: &[Option<f64>]) {
        for (i, v) in row.iter().enumerate() {
            match v {
                Some(v) if !self.exploded[i] => self.values[i].push(*v),
                _ => self.exploded[i] = true,
            }
        }
        self.next += 1;
    }

    fn finish(self, grid: &Arc<TimeGrid>) -> Vec<Path> {
        self.values.into_iter().map(|v| Path::with_explosion(grid.clone(), v).expect("observation grid")).collect()
    }
}

fn observation_layout(params: &PropParams, n_bins: usize) -> Result<(Arc<Vec<usize>>, Arc<TimeGrid>)> {
    let fine = params.grid();
    if n_bins == 0 || !params.n_steps.is_multiple_of(n_bins) {
        return invalid(format!("n_bins {n_bins} must divide n_steps {}", params.n_steps));
    }
    let idx = fine.observation_indices(n_bins)?;
    let obs_grid = Arc::new(fine.subgrid(&idx)?);
    Ok((Arc::new(idx), obs_grid))
}

fn check_config(config: &BundleConfig) -> Result<()> {
    if config.n_paths == 0 {
        return invalid("n_paths must be positive");
    }
    for c in [config.cutoff, config.beta_cutoff] {
        if !(1e-150..1.0).contains(&c) {
            return invalid(format!("cutoff must lie in [1e-150, 1), got {c}"));
        }
    }
    Ok(())
}

fn assemble(
    measure: MeasureTag,
    params: &PropParams,
    src: &RandomSource,
    obs_grid: Arc<TimeGrid>,
    names: &[&'static str],
    per_path: Vec<(Vec<Path>, PathMeta)>,
) -> PathBundle {
    let mut series: BTreeMap<&'static str, Vec<Path>> =
        names.iter().map(|&n| (n, Vec::with_capacity(per_path.len()))).collect();
    let mut meta = Vec::with_capacity(per_path.len());
    for (paths, m) in per_path {
        for (name, p) in names.iter().zip(paths) {
            series.get_mut(name).expect("declared").push(p);
        }
        meta.push(m);
    }
    PathBundle { measure, params: params.clone(), seed: src.master_seed, obs_grid, series, meta }
}

/// Reference-measure bundle with both examples: `X, W, L, Z1, Zbeta, S1,
/// Z2, Zsup, S2`.
pub fn simulate_reference(params: &PropParams, config: &BundleConfig, src: &RandomSource) -> Result<PathBundle> {
    check_config(config)?;
    let (idx, obs_grid) = observation_layout(params, config.n_bins)?;
    let all = [SERIES_X, SERIES_W, SERIES_L, SERIES_Z1, SERIES_ZBETA, SERIES_S1, SERIES_Z2, SERIES_ZSUP, SERIES_S2];
    let wanted: Vec<bool> = match &config.keep {
        None => vec![true; all.len()],
        Some(keep) => {
            if let Some(bad) = keep.iter().find(|k| !all.contains(&k.as_str())) {
                return invalid(format!("unknown series {bad:?}"));
            }
            all.iter().map(|n| keep.iter().any(|k| k == n)).collect()
        }
    };
    let names: Vec<&'static str> = all.iter().zip(&wanted).filter(|(_, &w)| w).map(|(n, _)| *n).collect();
    let per_path: Vec<_> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let (one, two) = build_examples(params, src, i);
            let pick = |p: &Path| {
                let v: Vec<f64> = idx.iter().map(|&k| p.get(k).expect("reference paths are finite")).collect();
                Path::new(obs_grid.clone(), v).expect("observation grid")
            };
            let sources = [&one.x, &one.w, &one.l, &one.z_primary, &one.z_secondary, &one.s, &two.z_primary, &two.z_secondary, &two.s];
            let paths: Vec<Path> = sources.iter().zip(&wanted).filter(|(_, &w)| w).map(|(p, _)| pick(p)).collect();
            (paths, PathMeta { tau: one.tau, sigma: None })
        })
        .collect();
    Ok(assemble(MeasureTag::Reference, params, src, obs_grid, &names, per_path))
}

/// Crossing decision for one step of a diffusion approximated by Brownian
/// motion between grid points, distances `a`, `b` to the barrier.
#[inline]
fn crossed(a: f64, b: f64, dt: f64, u: f64, cutoff: f64, bridge: bool) -> bool {
    b <= cutoff || (bridge && u < (-2.0 * a * b / dt).exp())
}

/// Bundle under the Föllmer measure of `Z^(1)`.
///
/// Until `tau`, `1/X = 1 + W^(1)` is a Brownian motion; the density explodes
/// when it reaches zero. After `tau`, `1/X` continues as a Bessel(3)
/// process. Series: `X, L, Z1, S1, W1` (the last is `W^(1)`). Steps follow
/// the same sub-step rule as the reference simulation.
pub fn simulate_under_follmer1(params: &PropParams, config: &BundleConfig, src: &RandomSource) -> Result<PathBundle> {
    check_config(config)?;
    let (idx, obs_grid) = observation_layout(params, config.n_bins)?;
    let grid = params.grid();
    let names = [SERIES_X, SERIES_L, SERIES_Z1, SERIES_S1, "W1"];
    let rule = TauRule { beta: params.beta, threshold: params.threshold };
    let kappa = params.kappa_value();
    let per_path: Vec<_> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = src.stream(i, SubStream::Driver);
            let mut urng = src.stream(i, SubStream::Bridge);
            let mut rec = Recorder::new(idx.clone(), names.len());
            let (mut r, mut w1, mut integral, mut t) = (1.0f64, 0.0f64, 0.0f64, 0.0f64);
            let mut tau = StopTime::Never;
            let mut sigma = None;
            let mut steps = 0u64;
            let mut post: Option<(ReciprocalBesselStepper, f64)> = None;
            rec.record(&[Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(0.0)]);
            for k in 0..grid.n_steps() {
                let t_end = grid.time(k + 1);
                while sigma.is_none() && t < t_end {
                    let remaining = t_end - t;
                    let radius = post.as_ref().map_or(r, |(s, _)| s.radius());
                    let h = substep(radius, remaining, kappa);
                    steps += 1;
                    let t_next = if h == remaining { t_end } else { t + h };
                    match post.as_mut() {
                        None => {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            let dw = z * h.sqrt();
                            w1 += dw;
                            let r_next = r + dw;
                            let u: f64 = urng.random();
                            if crossed(r, r_next, h, u, config.cutoff, config.bridge) || steps >= config.max_substeps {
                                sigma = Some(t_next);
                                break;
                            }
                            integral += 0.5 * h * (1.0 / (r * r) + 1.0 / (r_next * r_next));
                            r = r_next;
                            if rule.fires(-r.ln(), integral) {
                                tau = StopTime::At { index: k + 1, time: t_next };
                                post = Some((ReciprocalBesselStepper::from_radius(src, i, r), r));
                            }
                        }
                        Some((stepper, _)) => {
                            let x_prev = 1.0 / stepper.radius();
                            let (x_next, dw) = stepper.step(h);
                            w1 += dw;
                            integral += 0.5 * h * (x_prev * x_prev + x_next * x_next);
                        }
                    }
                    t = t_next;
                }
                if rec.wants(k + 1) {
                    let row = if sigma.is_some() {
                        [None, None, None, Some(0.0), Some(w1)]
                    } else {
                        let x = post.as_ref().map_or(1.0 / r, |(s, _)| 1.0 / s.radius());
                        let r_stop = post.as_ref().map_or(r, |(_, rt)| *rt);
                        let l = rule.log_l(x.ln(), integral).exp();
                        [Some(x), Some(l), Some(1.0 / r_stop), Some(r_stop), Some(w1)]
                    };
                    rec.record(&row);
                }
            }
            (rec.finish(&obs_grid), PathMeta { tau, sigma })
        })
        .collect();
    Ok(assemble(MeasureTag::Follmer1, params, src, obs_grid, &names, per_path))
}

/// Which deflator's Föllmer measure to simulate in
/// [`simulate_under_follmer_beta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BetaVariant {
    /// `Z^(beta)` of Example one.
    ExampleOne,
    /// `Z^sup` of Example two.
    ExampleTwo,
}

/// Bundle under the Föllmer measure of `Z^(beta)` (or of `Z^sup`).
///
/// Until `tau`, `R = 1/X` solves `dR = dW^(beta) - (beta - 1)/R dt`
/// (Euler on sub-steps, bridge-corrected zero crossing). After `tau`,
/// Example one freezes the density and `1/X` continues as a Bessel(3)
/// process; Example two continues the density as `E(-W)`, whose reciprocal
/// is a geometric Brownian motion under the new measure. Series: `L, Zbeta,
/// Z1, S1`, or `Zsup` alone.
pub fn simulate_under_follmer_beta(
    params: &PropParams,
    config: &BundleConfig,
    src: &RandomSource,
    variant: BetaVariant,
) -> Result<PathBundle> {
    check_config(config)?;
    let (idx, obs_grid) = observation_layout(params, config.n_bins)?;
    let grid = params.grid();
    let (b, c) = (params.beta, params.l_decay());
    let rule = TauRule { beta: b, threshold: params.threshold };
    let kappa = params.kappa_value();
    let names: &[&'static str] = match variant {
        BetaVariant::ExampleOne => &[SERIES_L, SERIES_ZBETA, SERIES_Z1, SERIES_S1],
        BetaVariant::ExampleTwo => &[SERIES_ZSUP],
    };
    let per_path: Vec<_> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = src.stream(i, SubStream::Driver);
            let mut urng = src.stream(i, SubStream::Bridge);
            let mut rec = Recorder::new(idx.clone(), names.len());
            let (mut r, mut integral, mut t) = (1.0f64, 0.0f64, 0.0f64);
            let mut zb = 1.0;
            let mut tau = StopTime::Never;
            let mut sigma = None;
            let mut steps = 0u64;
            // after tau: Example one continues X, Example two the log of 1/Zsup
            let mut post_x: Option<ReciprocalBesselStepper> = None;
            let mut post_integral = 0.0;
            let mut log_inv_post = 0.0;
            let first: Vec<Option<f64>> = names.iter().map(|_| Some(1.0)).collect();
            rec.record(&first);
            for k in 0..grid.n_steps() {
                let t_end = grid.time(k + 1);
                while sigma.is_none() && t < t_end {
                    let remaining = t_end - t;
                    let radius = match (&tau, &post_x) {
                        (StopTime::Never, _) => r,
                        (_, Some(s)) => s.radius(),
                        _ => f64::INFINITY,
                    };
                    let h = substep(radius, remaining, kappa);
                    steps += 1;
                    let t_next = if h == remaining { t_end } else { t + h };
                    if tau == StopTime::Never {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let dw = z * h.sqrt();
                        let r_next = r + dw - (b - 1.0) * h / r;
                        let u: f64 = urng.random();
                        if crossed(r, r_next, h, u, config.beta_cutoff, config.bridge) || steps >= config.max_substeps {
                            sigma = Some(t_next);
                            break;
                        }
                        integral += 0.5 * h * (1.0 / (r * r) + 1.0 / (r_next * r_next));
                        r = r_next;
                        zb = (-b * r.ln() - c * integral).exp();
                        if rule.fires(-r.ln(), integral) {
                            tau = StopTime::At { index: k + 1, time: t_next };
                            post_integral = integral;
                            if variant == BetaVariant::ExampleOne {
                                post_x = Some(ReciprocalBesselStepper::from_radius(src, i, r));
                            }
                        }
                    } else if let Some(stepper) = post_x.as_mut() {
                        let x_prev = 1.0 / stepper.radius();
                        let (x_next, _) = stepper.step(h);
                        post_integral += 0.5 * h * (x_prev * x_prev + x_next * x_next);
                    } else {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        log_inv_post += z * h.sqrt() - 0.5 * h;
                    }
                    t = t_next;
                }
                if rec.wants(k + 1) {
                    let row: Vec<Option<f64>> = match (variant, sigma.is_some()) {
                        (BetaVariant::ExampleOne, true) => vec![None, None, None, Some(0.0)],
                        (BetaVariant::ExampleTwo, true) => vec![None],
                        (BetaVariant::ExampleOne, false) => {
                            let l = match &post_x {
                                Some(s) => rule.log_l(-s.radius().ln(), post_integral).exp(),
                                None => rule.log_l(-r.ln(), integral).exp(),
                            };
                            vec![Some(l), Some(zb), Some(1.0 / r), Some(r)]
                        }
                        (BetaVariant::ExampleTwo, false) => vec![Some(zb * (-log_inv_post).exp())],
                    };
                    rec.record(&row);
                }
            }
            (rec.finish(&obs_grid), PathMeta { tau, sigma })
        })
        .collect();
    let tag = match variant {
        BetaVariant::ExampleOne => MeasureTag::FollmerBeta,
        BetaVariant::ExampleTwo => MeasureTag::ExampleTwoTilde,
    };
    Ok(assemble(tag, params, src, obs_grid, names, per_path))
}

/// `W - int theta ds`: the driver seen from a measure with density
/// `E(theta . W)`.
pub fn girsanov_shift(w: &Path, theta: &Path) -> Result<Path> {
    w.sub(&time_integral(theta))
}

/// `1 - E[Z_t]` from a reference-measure bundle, at observation time `t`
/// (default: the horizon).
pub fn defect_direct(bundle: &PathBundle, series: &str, t: Option<f64>) -> Result<McEstimate> {
    if bundle.measure() != MeasureTag::Reference {
        return invalid(format!("direct defect needs a reference bundle, got {:?}", bundle.measure()));
    }
    let k = match t {
        Some(t) => bundle.obs_index(t)?,
        None => bundle.obs_grid().n_steps(),
    };
    let paths = bundle.series(series)?;
    if paths.is_empty() {
        return Err(LabError::Empty);
    }
    let mut values = Vec::with_capacity(paths.len());
    for p in paths {
        match p.get(k) {
            Some(v) => values.push(1.0 - v),
            None => return Err(LabError::ContractViolation("reference density exploded".into())),
        }
    }
    Ok(accumulate(values))
}

/// Explosion frequency `Q(sigma <= t)` from a Föllmer-measure bundle.
pub fn defect_via_explosion(bundle: &PathBundle, t: Option<f64>) -> Result<McEstimate> {
    let hits = explosion_indicators(bundle, t)?;
    Ok(accumulate(hits.into_iter().map(|h| if h { 1.0 } else { 0.0 })))
}

/// Exact binomial interval for the explosion frequency.
pub fn explosion_binomial(bundle: &PathBundle, t: Option<f64>, confidence: f64) -> Result<BinomialEstimate> {
    let hits = explosion_indicators(bundle, t)?;
    let k = hits.iter().filter(|&&h| h).count() as u64;
    Ok(binomial_exact(k, hits.len() as u64, confidence))
}

fn explosion_indicators(bundle: &PathBundle, t: Option<f64>) -> Result<Vec<bool>> {
    if bundle.measure() == MeasureTag::Reference {
        return invalid("explosion frequency needs a Föllmer-measure bundle");
    }
    if bundle.n_paths() == 0 {
        return Err(LabError::Empty);
    }
    let t = t.unwrap_or(bundle.params().horizon);
    Ok(bundle.meta().iter().map(|m| m.sigma.is_some_and(|s| s <= t + 1e-12)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::hitting_prob_p;

    fn params() -> PropParams {
        PropParams::new(1.0, 2.0, 256).unwrap()
    }

    #[test]
    fn reference_bundle_shape() {
        let b = simulate_reference(&params(), &BundleConfig::new(50), &RandomSource::new(1)).unwrap();
        assert_eq!(b.n_paths(), 50);
        assert_eq!(b.obs_grid().len(), 17);
        for name in [SERIES_X, SERIES_Z1, SERIES_S2] {
            let s = b.series(name).unwrap();
            assert!(s.iter().all(|p| p.initial() == Some(1.0) && p.exploded_at().is_none()));
        }
        assert!(b.series("nope").is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = BundleConfig::new(20);
        let a = simulate_under_follmer1(&params(), &cfg, &RandomSource::new(3)).unwrap();
        let b = simulate_under_follmer1(&params(), &cfg, &RandomSource::new(3)).unwrap();
        assert_eq!(a.series(SERIES_Z1).unwrap(), b.series(SERIES_Z1).unwrap());
        assert_eq!(a.meta(), b.meta());
    }

    #[test]
    fn unit_density_has_zero_defect() {
        let p = params();
        let b = simulate_reference(&p, &BundleConfig::new(10), &RandomSource::new(1)).unwrap();
        let ones = vec![Path::constant(b.obs_grid().clone(), 1.0); 10];
        let b = PathBundle::from_series(MeasureTag::Reference, p, b.obs_grid().clone(), vec![("one", ones)]).unwrap();
        let d = defect_direct(&b, "one", None).unwrap();
        assert_eq!(d.mean, 0.0);
        assert_eq!(d.stderr, Some(0.0));
    }

    #[test]
    fn explosion_timing_consistent() {
        let b = simulate_under_follmer1(&params(), &BundleConfig::new(400), &RandomSource::new(4)).unwrap();
        let z = b.series(SERIES_Z1).unwrap();
        let mut exploded = 0;
        for (p, m) in z.iter().zip(b.meta()) {
            match m.sigma {
                Some(s) => {
                    exploded += 1;
                    assert!(m.tau.time() > s);
                    let k = b.obs_grid().times().iter().position(|&t| t >= s - 1e-12).unwrap();
                    assert_eq!(p.exploded_at(), Some(k));
                }
                None => assert!(p.exploded_at().is_none()),
            }
        }
        assert!(exploded > 0);
    }

    #[test]
    fn unstopped_explosion_matches_hitting_probability() {
        // With an unreachable threshold the Föllmer-1 explosion law is the
        // Brownian hitting law of -1.
        let p = PropParams::with_threshold(1.0, 2.0, 256, 1e300).unwrap();
        let b = simulate_under_follmer1(&p, &BundleConfig::new(4000), &RandomSource::new(5)).unwrap();
        let est = explosion_binomial(&b, None, 0.999).unwrap();
        let truth = hitting_prob_p(1.0).unwrap();
        assert!(est.lower <= truth && truth <= est.upper, "{est:?}");
    }

    #[test]
    fn girsanov_shift_removes_drift() {
        let g = crate::sde::make_grid(1.0, 4).unwrap();
        let w = Path::new(g.clone(), vec![0.0, 0.5, 1.0, 1.5, 2.0]).unwrap();
        let shifted = girsanov_shift(&w, &Path::constant(g, 2.0)).unwrap();
        assert!(shifted.finite_values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn defect_routes_refuse_wrong_measure() {
        let p = params();
        let cfg = BundleConfig::new(5);
        let r = simulate_reference(&p, &cfg, &RandomSource::new(1)).unwrap();
        let f = simulate_under_follmer1(&p, &cfg, &RandomSource::new(1)).unwrap();
        assert!(defect_via_explosion(&r, None).is_err());
        assert!(defect_direct(&f, SERIES_Z1, None).is_err());
    }

    #[test]
    fn example_two_tilde_never_explodes_after_tau() {
        let b = simulate_under_follmer_beta(&params(), &BundleConfig::new(300), &RandomSource::new(7), BetaVariant::ExampleTwo)
            .unwrap();
        assert_eq!(b.measure(), MeasureTag::ExampleTwoTilde);
        for m in b.meta() {
            if let Some(s) = m.sigma {
                assert!(s < m.tau.time());
            }
        }
    }
}
