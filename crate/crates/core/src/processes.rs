//! Closed-form helpers and the named processes of the construction:
//! `p(T)`, the likelihood ratio `L`, the stopping time `tau`, the stopped
//! densities `Z^(1)`, `Z^(beta)` and the two example price processes.
//!
//! Everything here is a pathwise functional of one exact sample of `X`
//! (and its driver `W`) under the reference measure.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{invalid, Result};
use crate::sde::{
    calculus::time_integral, exact::integral_x_dw, simulate_x_stopped, Path, RandomSource, SubStream, TauHit,
    TauRule, TimeGrid, DEFAULT_KAPPA,
};
use crate::stats::{binomial_exact, BinomialEstimate};

/// `P(inf_{t <= T} W_t <= -1) = 2 Phi(-1/sqrt(T))`.
pub fn hitting_prob_p(horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return invalid(format!("horizon must be positive, got {horizon}"));
    }
    if horizon.is_infinite() {
        return Ok(1.0);
    }
    Ok(erfc(1.0 / (2.0 * horizon).sqrt()))
}

/// Parameters of the stopped construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropParams {
    pub horizon: f64,
    pub beta: f64,
    /// Level `1 + 1/p(T)` at which `tau` fires.
    pub threshold: f64,
    pub n_steps: usize,
    /// Sub-step scale of the simulators (see [`crate::sde::substep`]).
    /// `None` checks `tau` on the grid only; `Some(kappa)` also checks it
    /// between grid points, resolving dips of `1/X` toward zero.
    #[serde(default)]
    pub kappa: Option<f64>,
}

impl PropParams {
    pub fn new(horizon: f64, beta: f64, n_steps: usize) -> Result<Self> {
        let p = hitting_prob_p(horizon)?;
        Self::with_threshold(horizon, beta, n_steps, 1.0 + 1.0 / p)
    }

    /// Same construction with an explicit threshold, e.g. to observe one
    /// fixed stopping rule over several horizons.
    pub fn with_threshold(horizon: f64, beta: f64, n_steps: usize, threshold: f64) -> Result<Self> {
        if !(beta > 1.0) {
            return invalid(format!("beta must exceed 1, got {beta}"));
        }
        if !(threshold > 1.0) {
            return invalid(format!("threshold must exceed 1, got {threshold}"));
        }
        TimeGrid::uniform(horizon, n_steps)?;
        Ok(Self { horizon, beta, threshold, n_steps, kappa: None })
    }

    /// Resolve `tau` between grid points with sub-step scale `kappa`.
    pub fn refined(mut self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return invalid(format!("kappa must lie in (0, 1], got {kappa}"));
        }
        self.kappa = Some(kappa);
        Ok(self)
    }

    pub fn refined_default(self) -> Self {
        self.refined(DEFAULT_KAPPA).expect("default kappa is valid")
    }

    pub fn kappa_value(&self) -> f64 {
        self.kappa.unwrap_or(f64::INFINITY)
    }

    pub fn grid(&self) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(self.horizon, self.n_steps).expect("validated on construction"))
    }

    /// `beta (beta - 1) / 2`, the coefficient of `int X^2 ds` in `log L`.
    pub fn l_decay(&self) -> f64 {
        0.5 * self.beta * (self.beta - 1.0)
    }
}

/// `L = E(-beta X . W) / E(-X . W)`, with `int X dW` taken from Itô's
/// formula for `log X`.
pub fn likelihood_ratio_l(x: &Path, beta: f64) -> Result<Path> {
    if !(beta > 1.0) {
        return invalid(format!("beta must exceed 1, got {beta}"));
    }
    let ixdw = integral_x_dw(x);
    let ix2 = time_integral(&x.map(|v| v * v));
    ixdw.zip_with(&ix2, |a, b| (-(beta - 1.0) * a - 0.5 * (beta * beta - 1.0) * b).exp())
}

/// Reduced form `L_t = X_t^(beta-1) exp(-beta (beta-1)/2 int_0^t X^2 ds)`.
pub fn likelihood_ratio_closed_form(x: &Path, beta: f64) -> Result<Path> {
    if !(beta > 1.0) {
        return invalid(format!("beta must exceed 1, got {beta}"));
    }
    let ix2 = time_integral(&x.map(|v| v * v));
    let c = 0.5 * beta * (beta - 1.0);
    x.zip_with(&ix2, |xv, iv| ((beta - 1.0) * xv.ln() - c * iv).exp())
}

/// A stopping time: `time` may fall between grid points, `index` is the
/// first grid index at or after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopTime {
    At { index: usize, time: f64 },
    Never,
}

impl StopTime {
    pub fn index(&self) -> Option<usize> {
        match *self {
            StopTime::At { index, .. } => Some(index),
            StopTime::Never => None,
        }
    }

    /// `+inf` when the time never fires.
    pub fn time(&self) -> f64 {
        match *self {
            StopTime::At { time, .. } => time,
            StopTime::Never => f64::INFINITY,
        }
    }

    pub fn fired_by(&self, t: f64) -> bool {
        self.time() <= t
    }
}

/// First grid time with `L >= threshold`.
pub fn stopping_tau(l: &Path, threshold: f64) -> Result<StopTime> {
    if !(threshold > 1.0) {
        return invalid(format!("threshold must exceed 1, got {threshold}"));
    }
    Ok(match l.finite_values().iter().position(|&v| v >= threshold) {
        Some(index) => StopTime::At { index, time: l.grid().time(index) },
        None => StopTime::Never,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExampleVariant {
    ExampleOne,
    ExampleTwo,
}

/// One realisation of an example economy.
///
/// Example one: `z_primary = Z^(1)`, `z_secondary = Z^(beta)`, `s = 1/Z^(1)`.
/// Example two: `z_primary = Z`, `z_secondary = Z^sup`, `s = 1/Z`.
#[derive(Debug, Clone)]
pub struct ExampleRealization {
    pub variant: ExampleVariant,
    pub x: Path,
    pub w: Path,
    pub l: Path,
    pub tau: StopTime,
    pub z_primary: Path,
    pub z_secondary: Path,
    pub s: Path,
}

#[derive(Clone)]
struct Core {
    x: Path,
    w: Path,
    l: Path,
    tau: StopTime,
    hit: Option<TauHit>,
    z1: Path,
    zbeta: Path,
}

fn core_processes(params: &PropParams, src: &RandomSource, path_index: u64) -> Core {
    let grid = params.grid();
    let rule = TauRule { beta: params.beta, threshold: params.threshold };
    let sample = simulate_x_stopped(&grid, src, path_index, Some(rule), params.kappa_value());
    let (b, c) = (params.beta, params.l_decay());
    let l = sample
        .x
        .zip_with(&sample.integral, |xv, iv| ((b - 1.0) * xv.ln() - c * iv).exp())
        .expect("shared grid");
    let zb = |xv: f64, iv: f64| (b * xv.ln() - c * iv).exp();
    let (tau, z1, zbeta) = match sample.tau {
        None => {
            let zbeta = sample.x.zip_with(&sample.integral, zb).expect("shared grid");
            (StopTime::Never, sample.x.clone(), zbeta)
        }
        Some(hit) => {
            let k = hit.grid_index;
            let xs = sample.x.finite_values();
            let is = sample.integral.finite_values();
            let z1: Vec<f64> = (0..grid.len()).map(|j| if j < k { xs[j] } else { hit.x }).collect();
            let zbeta: Vec<f64> =
                (0..grid.len()).map(|j| if j < k { zb(xs[j], is[j]) } else { zb(hit.x, hit.integral) }).collect();
            (
                StopTime::At { index: k, time: hit.time },
                Path::new(grid.clone(), z1).expect("grid length"),
                Path::new(grid.clone(), zbeta).expect("grid length"),
            )
        }
    };
    Core { x: sample.x, w: sample.w, l, tau, hit: sample.tau, z1, zbeta }
}

/// `Z^(1) = X_{. ^ tau}`, `Z^(beta) = E(-beta X 1_(0,tau] . W)`, `S = 1/Z^(1)`.
pub fn build_example_one(params: &PropParams, src: &RandomSource, path_index: u64) -> ExampleRealization {
    example_one_from(core_processes(params, src, path_index))
}

/// Both examples from one shared sample of `X`.
pub fn build_examples(
    params: &PropParams,
    src: &RandomSource,
    path_index: u64,
) -> (ExampleRealization, ExampleRealization) {
    let core = core_processes(params, src, path_index);
    (example_one_from(core.clone()), example_two_from(core))
}

fn example_one_from(core: Core) -> ExampleRealization {
    let s = core.z1.map(|z| 1.0 / z);
    ExampleRealization {
        variant: ExampleVariant::ExampleOne,
        x: core.x,
        w: core.w,
        l: core.l,
        tau: core.tau,
        z_primary: core.z1,
        z_secondary: core.zbeta,
        s,
    }
}

/// Example two: after `tau` both densities continue with unit integrand,
/// `dZ/Z = -dW`, so `S = 1/Z` has drift `+1` on `(tau, T]`.
pub fn build_example_two(params: &PropParams, src: &RandomSource, path_index: u64) -> ExampleRealization {
    example_two_from(core_processes(params, src, path_index))
}

fn example_two_from(core: Core) -> ExampleRealization {
    let (z, zsup) = match core.hit {
        None => (core.z1.clone(), core.zbeta.clone()),
        Some(hit) => {
            let grid = core.w.grid();
            let w = core.w.finite_values();
            let factor: Vec<f64> = (0..grid.len())
                .map(|j| {
                    if j < hit.grid_index {
                        1.0
                    } else {
                        (-(w[j] - hit.w) - 0.5 * (grid.time(j) - hit.time)).exp()
                    }
                })
                .collect();
            let factor = Path::new(grid.clone(), factor).expect("grid length");
            (
                core.z1.mul(&factor).expect("shared grid"),
                core.zbeta.mul(&factor).expect("shared grid"),
            )
        }
    };
    let s = z.map(|v| 1.0 / v);
    ExampleRealization {
        variant: ExampleVariant::ExampleTwo,
        x: core.x,
        w: core.w,
        l: core.l,
        tau: core.tau,
        z_primary: z,
        z_secondary: zsup,
        s,
    }
}

impl ExampleRealization {
    /// Scenario dump, header `t,X,L,Z_primary,Z_secondary,S,tau_fired`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,X,L,Z_primary,Z_secondary,S,tau_fired")?;
        let grid = self.x.grid();
        let cell = |p: &Path, k: usize| p.get(k).map(|v| v.to_string()).unwrap_or_default();
        for k in 0..grid.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                grid.time(k),
                cell(&self.x, k),
                cell(&self.l, k),
                cell(&self.z_primary, k),
                cell(&self.z_secondary, k),
                cell(&self.s, k),
                self.tau.fired_by(grid.time(k))
            )?;
        }
        Ok(())
    }

    /// Sum over the grid of `dS - S (X dW + X^2 dt)` before `tau`; the
    /// Example-one price SDE holds when this is small relative to `S_T - S_0`.
    pub fn example_one_sde_residual(&self) -> f64 {
        let grid = self.x.grid();
        let (s, x, w) = (self.s.finite_values(), self.x.finite_values(), self.w.finite_values());
        let stop = self.tau.index().map_or(grid.n_steps(), |k| k - 1);
        (0..stop)
            .map(|k| {
                let ds = s[k + 1] - s[k];
                ds - s[k] * (x[k] * (w[k + 1] - w[k]) + x[k] * x[k] * grid.dt(k))
            })
            .sum()
    }
}

/// Monte Carlo oracle for `p(T)`: Brownian motion monitored on a grid for
/// crossing `-1`, optionally with the Brownian-bridge crossing correction.
pub fn barrier_hitting_probability(
    horizon: f64,
    n_paths: u64,
    n_steps: usize,
    src: &RandomSource,
    bridge: bool,
    confidence: f64,
) -> Result<BinomialEstimate> {
    let grid = TimeGrid::uniform(horizon, n_steps)?;
    let dt = grid.dt(0);
    let sd = dt.sqrt();
    let hits: u64 = (0..n_paths)
        .map(|i| {
            let mut rng = src.stream(i, SubStream::Driver);
            let mut urng = src.stream(i, SubStream::Bridge);
            // distance to the barrier
            let mut a = 1.0;
            for _ in 0..n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                let b = a + z * sd;
                let u: f64 = urng.random();
                if b <= 0.0 || (bridge && u < (-2.0 * a * b / dt).exp()) {
                    return 1;
                }
                a = b;
            }
            0
        })
        .sum();
    Ok(binomial_exact(hits, n_paths, confidence))
}
