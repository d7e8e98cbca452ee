use std::io::Write;
use std::sync::Arc;

use crate::error::{invalid, LabError, Result};
use crate::sde::grid::TimeGrid;

/// A discretely sampled trajectory.
///
/// Only the finite prefix is stored. A path that explodes at grid index `k`
/// holds `k` finite samples and reports every later sample as exploded;
/// there is no sentinel float to leak into arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!(
                "path has {} samples but grid has {} points",
                values.len(),
                grid.len()
            ));
        }
        Self::with_explosion(grid, values)
    }

    /// Path whose samples after `finite.len() - 1` are exploded.
    pub fn with_explosion(grid: Arc<TimeGrid>, finite: Vec<f64>) -> Result<Self> {
        if finite.len() > grid.len() {
            return invalid("more samples than grid points");
        }
        if finite.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite sample; mark explosion through the prefix length");
        }
        Ok(Self { grid, values: finite })
    }

    pub fn constant(grid: Arc<TimeGrid>, value: f64) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<TimeGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `None` once the path has exploded.
    pub fn get(&self, k: usize) -> Option<f64> {
        self.values.get(k).copied()
    }

    pub fn is_exploded(&self, k: usize) -> bool {
        k >= self.values.len()
    }

    /// First exploded grid index, if any.
    pub fn exploded_at(&self) -> Option<usize> {
        (self.values.len() < self.grid.len()).then_some(self.values.len())
    }

    pub fn finite_values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial(&self) -> Option<f64> {
        self.get(0)
    }

    pub fn terminal(&self) -> Option<f64> {
        self.get(self.grid.n_steps())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Path {
        Path {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Path {
        self.map(|v| c * v)
    }

    /// Pointwise combination; the result explodes where either input does.
    pub fn zip_with(&self, other: &Path, f: impl Fn(f64, f64) -> f64) -> Result<Path> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Path { grid: self.grid.clone(), values })
    }

    pub fn add(&self, other: &Path) -> Result<Path> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Path) -> Result<Path> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Path) -> Result<Path> {
        self.zip_with(other, |a, b| a * b)
    }

    /// Path frozen at its value at grid index `k` from `k` on.
    pub fn stopped_at(&self, k: Option<usize>) -> Path {
        let Some(k) = k else { return self.clone() };
        if k >= self.values.len() {
            return self.clone();
        }
        let mut values = self.values.clone();
        let frozen = values[k];
        values.truncate(k + 1);
        values.resize(self.grid.len(), frozen);
        Path { grid: self.grid.clone(), values }
    }

    pub fn check_grid(&self, other: &Path) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(LabError::GridMismatch(format!(
                "grids with {} and {} steps",
                self.grid.n_steps(),
                other.grid.n_steps()
            )))
        }
    }

    /// CSV dump with header `t,value,exploded`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,value,exploded")?;
        for (k, &t) in self.grid.times().iter().enumerate() {
            match self.get(k) {
                Some(v) => writeln!(out, "{t},{v},false")?,
                None => writeln!(out, "{t},,true")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::grid::make_grid;

    #[test]
    fn explosion_is_absorbing() {
        let g = make_grid(1.0, 4).unwrap();
        let p = Path::with_explosion(g, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.exploded_at(), Some(3));
        assert_eq!(p.get(2), Some(3.0));
        assert!(p.is_exploded(3) && p.is_exploded(4));
        assert_eq!(p.terminal(), None);
    }

    #[test]
    fn rejects_infinite_samples() {
        let g = make_grid(1.0, 1).unwrap();
        assert!(Path::new(g, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn grid_mismatch_detected() {
        let a = Path::zeros(make_grid(1.0, 4).unwrap());
        let b = Path::zeros(make_grid(1.0, 8).unwrap());
        assert!(matches!(a.add(&b), Err(LabError::GridMismatch(_))));
    }

    #[test]
    fn stopping_freezes() {
        let g = make_grid(1.0, 4).unwrap();
        let p = Path::new(g, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p.stopped_at(Some(2)).finite_values(), &[0.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(p.stopped_at(None), p);
    }

    #[test]
    fn csv_dump() {
        let g = make_grid(1.0, 2).unwrap();
        let p = Path::with_explosion(g, vec![1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,value,exploded\n0,1,false\n0.5,2,false\n1,,true\n"
        );
    }
}
