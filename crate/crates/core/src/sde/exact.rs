//! Exact grid simulation of `dX = -X^2 dW`, `X_0 = 1`.
//!
//! `X = 1/R` with `R = |(1 + B1, B2, B3)|` the norm of a shifted
//! three-dimensional Brownian motion (a Bessel(3) process from 1). The scalar
//! driver is the radial projection `dW = (Y/R) . dB`, which is the Brownian
//! motion driving `R` and hence `X`; on the grid its increments are exactly
//! `N(0, dt)` conditionally on the past.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::sde::grid::TimeGrid;
use crate::sde::path::Path;
use crate::sde::rng::{RandomSource, SubStream};

/// Step-by-step generator of `(X_k, dW_k)` for one path.
pub struct ReciprocalBesselStepper {
    rngs: [ChaCha8Rng; 3],
    y: [f64; 3],
}

impl ReciprocalBesselStepper {
    pub fn new(src: &RandomSource, path_index: u64) -> Self {
        Self {
            rngs: [
                src.stream(path_index, SubStream::BesselFirst),
                src.stream(path_index, SubStream::BesselSecond),
                src.stream(path_index, SubStream::BesselThird),
            ],
            y: [1.0, 0.0, 0.0],
        }
    }

    /// Stepper for `1/X` started at radius `r0` instead of 1.
    pub fn from_radius(src: &RandomSource, path_index: u64, r0: f64) -> Self {
        let mut s = Self::new(src, path_index);
        s.y[0] = r0;
        s
    }

    pub fn radius(&self) -> f64 {
        (self.y[0] * self.y[0] + self.y[1] * self.y[1] + self.y[2] * self.y[2]).sqrt()
    }

    /// Advance by `dt`; returns `(X_{k+1}, dW_k)`.
    #[inline]
    pub fn step(&mut self, dt: f64) -> (f64, f64) {
        let sd = dt.sqrt();
        let r = self.radius();
        let mut dw = 0.0;
        for i in 0..3 {
            let z: f64 = StandardNormal.sample(&mut self.rngs[i]);
            let db = z * sd;
            dw += self.y[i] * db;
            self.y[i] += db;
        }
        (1.0 / self.radius(), dw / r)
    }
}

/// Default sub-step scale: steps never exceed `kappa * R^2` where `R = 1/X`.
pub const DEFAULT_KAPPA: f64 = 0.01;

/// Length of the next sub-step: the remaining time to the grid point, or
/// the intrinsic scale `kappa * r^2` when the radius is small. Sub-stepping
/// keeps the time spent near the singularity resolved at a fixed relative
/// scale, which is what stopping rules on `X` need.
#[inline]
pub fn substep(radius: f64, remaining: f64, kappa: f64) -> f64 {
    let h = kappa * radius * radius;
    if h >= remaining {
        remaining
    } else {
        h
    }
}

/// Stop when `L = X^(beta-1) exp(-beta (beta-1)/2 int X^2) >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauRule {
    pub beta: f64,
    pub threshold: f64,
}

impl TauRule {
    #[inline]
    pub fn log_l(&self, log_x: f64, integral: f64) -> f64 {
        (self.beta - 1.0) * log_x - 0.5 * self.beta * (self.beta - 1.0) * integral
    }

    #[inline]
    pub fn fires(&self, log_x: f64, integral: f64) -> bool {
        self.log_l(log_x, integral) >= self.threshold.ln()
    }
}

/// State at the stopping time, which may fall between grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauHit {
    pub time: f64,
    /// First grid index at or after `time`.
    pub grid_index: usize,
    pub x: f64,
    pub w: f64,
    pub integral: f64,
}

/// Grid samples of `X`, `W` and `int X^2 ds` (trapezoid over sub-steps),
/// plus the stopping data when a rule is given.
#[derive(Debug, Clone)]
pub struct ExactSample {
    pub x: Path,
    pub w: Path,
    pub integral: Path,
    pub tau: Option<TauHit>,
}

/// Exact simulation with sub-steps of length [`substep`]; grid values are
/// exact regardless of `kappa`, `kappa = inf` uses the grid alone.
pub fn simulate_x_stopped(
    grid: &Arc<TimeGrid>,
    src: &RandomSource,
    path_index: u64,
    rule: Option<TauRule>,
    kappa: f64,
) -> ExactSample {
    let mut stepper = ReciprocalBesselStepper::new(src, path_index);
    let n = grid.len();
    let (mut xs, mut ws, mut is) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    xs.push(1.0);
    ws.push(0.0);
    is.push(0.0);
    let (mut x, mut w, mut integral, mut t) = (1.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut tau = None;
    for k in 0..grid.n_steps() {
        let t_end = grid.time(k + 1);
        while t < t_end {
            let remaining = t_end - t;
            let h = substep(1.0 / x, remaining, kappa);
            let (xn, dw) = stepper.step(h);
            integral += 0.5 * h * (x * x + xn * xn);
            x = xn;
            w += dw;
            t = if h == remaining { t_end } else { t + h };
            if let Some(r) = rule {
                if tau.is_none() && r.fires(x.ln(), integral) {
                    tau = Some(TauHit { time: t, grid_index: k + 1, x, w, integral });
                }
            }
        }
        xs.push(x);
        ws.push(w);
        is.push(integral);
    }
    ExactSample {
        x: Path::new(grid.clone(), xs).expect("X matches grid"),
        w: Path::new(grid.clone(), ws).expect("W matches grid"),
        integral: Path::new(grid.clone(), is).expect("I matches grid"),
        tau,
    }
}

/// Exact samples of `X` together with its recovered driver `W`.
pub fn simulate_x(grid: &Arc<TimeGrid>, src: &RandomSource, path_index: u64) -> (Path, Path) {
    let mut stepper = ReciprocalBesselStepper::new(src, path_index);
    let mut x = Vec::with_capacity(grid.len());
    let mut w = Vec::with_capacity(grid.len());
    x.push(1.0);
    w.push(0.0);
    let mut wk = 0.0;
    for k in 0..grid.n_steps() {
        let (xn, dw) = stepper.step(grid.dt(k));
        wk += dw;
        x.push(xn);
        w.push(wk);
    }
    (
        Path::new(grid.clone(), x).expect("X matches grid"),
        Path::new(grid.clone(), w).expect("W matches grid"),
    )
}

/// `int_0^t X dW` through Itô's formula for `log X`:
/// `-log X_t - 1/2 int_0^t X^2 ds`, with the time integral by trapezoid.
pub fn integral_x_dw(x: &Path) -> Path {
    let i2 = crate::sde::calculus::time_integral(&x.map(|v| v * v));
    x.zip_with(&i2, |xv, iv| -xv.ln() - 0.5 * iv)
        .expect("shared grid")
}
