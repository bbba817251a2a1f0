//! Uniform time grids shared by the grid-based solvers.

use crate::error::{input, Result};

/// Uniform grid `t_i = i·t_max/steps`, `i = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_max: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, steps: usize) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return input(format!("grid.t_max must be positive and finite, got {t_max}"));
        }
        if steps < 2 {
            return input(format!("grid.steps must be at least 2, got {steps}"));
        }
        Ok(Self { t_max, steps })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t_max
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Index of the grid node at `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let i = x.round();
        if i < 0.0 || i as usize > self.steps || (x - i).abs() > 1e-6 {
            None
        } else {
            Some(i as usize)
        }
    }
}

/// Trapezoid weights on `0..=n` nodes, without the `dt` factor.
pub(crate) fn trapezoid_weight(j: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else if j == 0 || j == n {
        0.5
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
        let err = TimeGrid::new(1.0, 0).unwrap_err().to_string();
        assert!(err.contains("steps"), "{err}");
    }

    #[test]
    fn nodes_and_lookup() {
        let g = TimeGrid::new(2.0, 4).unwrap();
        assert_eq!(g.times(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.index_of(1.5), Some(3));
        assert_eq!(g.index_of(1.2), None);
        assert_eq!(g.index_of(2.5), None);
    }
}
