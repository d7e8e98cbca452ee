//! Pathwise stochastic calculus on a fixed grid.
//!
//! All integrals are left-point (predictable) Riemann sums. Explosion
//! propagates: a result is finite only as long as all of its inputs are.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::sde::grid::TimeGrid;
use crate::sde::path::Path;
use crate::sde::rng::{RandomSource, SubStream};

/// Standard Brownian motion sampled on `grid`, `W(0) = 0`.
pub fn sample_brownian(grid: &Arc<TimeGrid>, src: &RandomSource, path_index: u64) -> Path {
    let mut rng = src.stream(path_index, SubStream::Driver);
    let mut values = Vec::with_capacity(grid.len());
    let mut w = 0.0;
    values.push(w);
    for k in 0..grid.n_steps() {
        let z: f64 = StandardNormal.sample(&mut rng);
        w += z * grid.dt(k).sqrt();
        values.push(w);
    }
    Path::new(grid.clone(), values).expect("brownian path matches its grid")
}

fn prefix_len(grid: &TimeGrid, integrand: &Path, integrator: &Path) -> usize {
    (integrand.finite_values().len() + 1)
        .min(integrator.finite_values().len())
        .min(grid.len())
}

/// `(H . Y)_t = sum_i H(t_i) (Y(t_{i+1}) - Y(t_i))`, zero at `t = 0`.
pub fn ito_integral(integrand: &Path, integrator: &Path) -> Result<Path> {
    integrand.check_grid(integrator)?;
    let grid = integrand.grid();
    let h = integrand.finite_values();
    let y = integrator.finite_values();
    let n = prefix_len(grid, integrand, integrator);
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Path::with_explosion(grid.clone(), out);
    }
    let mut acc = 0.0;
    out.push(acc);
    for k in 1..n {
        acc += h[k - 1] * (y[k] - y[k - 1]);
        out.push(acc);
    }
    Path::with_explosion(grid.clone(), out)
}

/// Realised covariation `sum (dX)(dY)`.
pub fn covariation(x: &Path, y: &Path) -> Result<Path> {
    x.check_grid(y)?;
    let n = x.finite_values().len().min(y.finite_values().len());
    let (a, b) = (x.finite_values(), y.finite_values());
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for k in 0..n {
        if k > 0 {
            acc += (a[k] - a[k - 1]) * (b[k] - b[k - 1]);
        }
        out.push(acc);
    }
    Path::with_explosion(x.grid().clone(), out)
}

/// Realised quadratic variation `sum (dX)^2`.
pub fn quadratic_variation(x: &Path) -> Path {
    covariation(x, x).expect("a path shares its own grid")
}

/// Cumulative trapezoidal integral `int_0^t f(s) ds`.
pub fn time_integral(f: &Path) -> Path {
    let grid = f.grid();
    let v = f.finite_values();
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    for k in 0..v.len() {
        if k > 0 {
            acc += 0.5 * (v[k - 1] + v[k]) * grid.dt(k - 1);
        }
        out.push(acc);
    }
    Path::with_explosion(grid.clone(), out).expect("prefix of a valid path")
}

/// Doléans-Dade exponential `exp(m - [m]/2)` of a continuous path with `m(0) = 0`.
pub fn stochastic_exponential(m: &Path) -> Result<Path> {
    match m.initial() {
        Some(m0) if m0.abs() <= 1e-12 => {}
        Some(m0) => return invalid(format!("stochastic exponential needs m(0) = 0, got {m0}")),
        None => return Path::with_explosion(m.grid().clone(), Vec::new()),
    }
    let qv = quadratic_variation(m);
    let values: Vec<f64> = m
        .finite_values()
        .iter()
        .zip(qv.finite_values())
        .map(|(&x, &q)| (x - 0.5 * q).exp())
        .collect();
    // exp underflow to 0 or overflow to inf is still a finite-sample event
    // at grid scale: clamp overflow into an explosion.
    let finite = values.iter().take_while(|v| v.is_finite()).count();
    let mut values = values;
    values.truncate(finite);
    Path::with_explosion(m.grid().clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::grid::make_grid;

    #[test]
    fn brownian_starts_at_zero() {
        let g = make_grid(1.0, 16).unwrap();
        let w = sample_brownian(&g, &RandomSource::new(1), 0);
        assert_eq!(w.initial(), Some(0.0));
    }

    #[test]
    fn zero_integrand_gives_zero() {
        let g = make_grid(1.0, 64).unwrap();
        let w = sample_brownian(&g, &RandomSource::new(3), 0);
        let i = ito_integral(&Path::zeros(g.clone()), &w).unwrap();
        assert!(i.finite_values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_integrand_is_buy_and_hold() {
        let g = make_grid(1.0, 64).unwrap();
        let s = sample_brownian(&g, &RandomSource::new(4), 2).map(|w| (w - 0.5).exp());
        let i = ito_integral(&Path::constant(g.clone(), 1.0), &s).unwrap();
        for k in 0..g.len() {
            let gain = s.get(k).unwrap() - s.get(0).unwrap();
            assert!((i.get(k).unwrap() - gain).abs() < 1e-12);
        }
    }

    #[test]
    fn qv_of_constant_and_scaled() {
        let g = make_grid(1.0, 32).unwrap();
        assert!(quadratic_variation(&Path::constant(g.clone(), 3.0))
            .finite_values()
            .iter()
            .all(|&v| v == 0.0));
        let w = sample_brownian(&g, &RandomSource::new(5), 0);
        let q1 = quadratic_variation(&w).terminal().unwrap();
        let q2 = quadratic_variation(&w.scale(2.0)).terminal().unwrap();
        assert!((q2 - 4.0 * q1).abs() <= 1e-12 * q2);
    }

    #[test]
    fn exponential_of_zero_is_one() {
        let g = make_grid(1.0, 8).unwrap();
        let e = stochastic_exponential(&Path::zeros(g)).unwrap();
        assert!(e.finite_values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn exponential_requires_zero_start() {
        let g = make_grid(1.0, 8).unwrap();
        assert!(stochastic_exponential(&Path::constant(g, 1.0)).is_err());
    }

    #[test]
    fn exponential_propagates_explosion() {
        let g = make_grid(1.0, 4).unwrap();
        let m = Path::with_explosion(g, vec![0.0, 0.1, 0.2]).unwrap();
        let e = stochastic_exponential(&m).unwrap();
        assert_eq!(e.exploded_at(), Some(3));
    }

    #[test]
    fn integral_grid_mismatch() {
        let a = Path::zeros(make_grid(1.0, 4).unwrap());
        let b = Path::zeros(make_grid(2.0, 4).unwrap());
        assert!(ito_integral(&a, &b).is_err());
    }

    #[test]
    fn trapezoid_of_linear() {
        let g = make_grid(2.0, 10).unwrap();
        let f = Path::new(g.clone(), g.times().to_vec()).unwrap();
        assert!((time_integral(&f).terminal().unwrap() - 2.0).abs() < 1e-12);
    }
}
