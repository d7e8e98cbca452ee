use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A time grid `0 = t_0 < t_1 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `n_steps` steps on `[0, horizon]`.
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return invalid(format!("horizon must be positive and finite, got {horizon}"));
        }
        if n_steps == 0 {
            return invalid("n_steps must be at least 1");
        }
        let mut times: Vec<f64> = (0..=n_steps)
            .map(|k| horizon * k as f64 / n_steps as f64)
            .collect();
        times[n_steps] = horizon;
        Ok(Self { times })
    }

    /// Uniform grid whose first `refine_steps` cells are each split into
    /// `factor` sub-cells. Used where the integrand of interest is steep
    /// near the origin.
    pub fn refined_near_zero(
        horizon: f64,
        n_steps: usize,
        refine_steps: usize,
        factor: usize,
    ) -> Result<Self> {
        let base = Self::uniform(horizon, n_steps)?;
        if factor == 0 || refine_steps > n_steps {
            return invalid("refinement factor must be >= 1 and cover at most n_steps cells");
        }
        let mut times = Vec::with_capacity(n_steps + 1 + refine_steps * (factor - 1));
        for k in 0..n_steps {
            let (a, b) = (base.times[k], base.times[k + 1]);
            if k < refine_steps {
                for j in 0..factor {
                    times.push(a + (b - a) * j as f64 / factor as f64);
                }
            } else {
                times.push(a);
            }
        }
        times.push(horizon);
        Self::from_times(times)
    }

    /// Arbitrary strictly increasing grid starting at zero.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return invalid("a grid needs at least two points");
        }
        if times[0] != 0.0 {
            return invalid("grid must start at 0");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || !times[times.len() - 1].is_finite() {
            return invalid("grid times must be strictly increasing and finite");
        }
        Ok(Self { times })
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Number of grid points (`n_steps + 1`).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// Index of the grid point closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) if k >= self.times.len() => self.times.len() - 1,
            Err(k) => {
                if t - self.times[k - 1] <= self.times[k] - t {
                    k - 1
                } else {
                    k
                }
            }
        }
    }

    /// Indices of `n_bins + 1` observation points spread evenly over the grid.
    /// Requires `n_bins` to divide `n_steps` for uniform grids to land exactly.
    pub fn observation_indices(&self, n_bins: usize) -> Result<Vec<usize>> {
        if n_bins == 0 || n_bins > self.n_steps() {
            return invalid(format!(
                "cannot place {n_bins} bins on a grid with {} steps",
                self.n_steps()
            ));
        }
        let horizon = self.horizon();
        let mut idx: Vec<usize> = (0..=n_bins)
            .map(|j| self.nearest_index(horizon * j as f64 / n_bins as f64))
            .collect();
        idx[n_bins] = self.n_steps();
        if idx.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("observation indices collapsed; use a finer grid");
        }
        Ok(idx)
    }

    /// The sub-grid made of the given indices.
    pub fn subgrid(&self, indices: &[usize]) -> Result<Self> {
        Self::from_times(indices.iter().map(|&k| self.times[k]).collect())
    }
}

/// Shorthand for [`TimeGrid::uniform`] returning a shareable handle.
pub fn make_grid(horizon: f64, n_steps: usize) -> Result<Arc<TimeGrid>> {
    TimeGrid::uniform(horizon, n_steps).map(Arc::new)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_quarter_grid() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn two_point_grid() {
        let g = TimeGrid::uniform(1.0, 1).unwrap();
        assert_eq!(g.times(), &[0.0, 1.0]);
    }

    #[test]
    fn endpoint_is_exact() {
        let g = TimeGrid::uniform(4.0, 8).unwrap();
        assert_eq!(g.horizon(), 4.0);
        let g = TimeGrid::uniform(0.1, 3).unwrap();
        assert_eq!(g.horizon(), 0.1);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(TimeGrid::uniform(0.0, 4).is_err());
        assert!(TimeGrid::uniform(-1.0, 4).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_times(vec![0.1, 0.5]).is_err());
    }

    #[test]
    fn refinement_keeps_endpoints() {
        let g = TimeGrid::refined_near_zero(1.0, 4, 1, 4).unwrap();
        assert_eq!(g.n_steps(), 7);
        assert_eq!(g.time(1), 0.0625);
        assert_eq!(g.horizon(), 1.0);
    }

    #[test]
    fn observation_points() {
        let g = TimeGrid::uniform(1.0, 4096).unwrap();
        let idx = g.observation_indices(16).unwrap();
        assert_eq!(idx.len(), 17);
        assert_eq!(idx[1], 256);
        assert_eq!(idx[16], 4096);
    }
}
