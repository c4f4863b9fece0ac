use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values on a uniform 1-D grid; `values[i]` sits at `x0 + i·dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidInput(format!("grid spacing must be positive, got {dx}")));
        }
        if values.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 3 points, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at index {i}")));
        }
        if !x0.is_finite() {
            return Err(Error::InvalidInput("non-finite grid origin".into()));
        }
        Ok(Self { x0, dx, values })
    }

    /// Grid covering `[x_min, x_max]` with `f` sampled at every node.
    pub fn sample(x_min: f64, x_max: f64, dx: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(x_max > x_min) {
            return Err(Error::InvalidInput(format!("empty domain [{x_min}, {x_max}]")));
        }
        let n = ((x_max - x_min) / dx).round() as usize + 1;
        let values = (0..n).map(|i| f(x_min + i as f64 * dx)).collect();
        Self::new(x_min, dx, values)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            x0: self.x0,
            dx: self.dx,
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.values.len() - 1)
    }

    /// Nearest node index for `x`, clamped to the grid.
    pub fn index_of(&self, x: f64) -> usize {
        let i = ((x - self.x0) / self.dx).round();
        i.clamp(0.0, (self.values.len() - 1) as f64) as usize
    }

    /// `dx · Σ values`.
    pub fn mass(&self) -> f64 {
        self.dx * self.values.iter().sum::<f64>()
    }

    /// `∫ x·v / ∫ v`.
    pub fn mean(&self) -> f64 {
        let m: f64 = self.values.iter().sum();
        let first: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| self.x(i) * v)
            .sum();
        first / m
    }

    /// Location of the first maximum.
    pub fn argmax(&self) -> f64 {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        self.x(best)
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        self.values.len() == other.values.len()
            && (self.x0 - other.x0).abs() <= 1e-12 * self.dx
            && (self.dx - other.dx).abs() <= 1e-12 * self.dx
    }

    pub fn l1_distance(&self, other: &GridField) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::InvalidInput("fields live on different grids".into()));
        }
        Ok(self.dx
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    pub fn linf_distance(&self, other: &GridField) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::InvalidInput("fields live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Linear interpolation, with the end values held outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let s = (x - self.x0) / self.dx;
        if s <= 0.0 {
            return self.values[0];
        }
        let last = self.values.len() - 1;
        if s >= last as f64 {
            return self.values[last];
        }
        let i = s.floor() as usize;
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridField::new(0.0, 0.1, vec![1.0, 2.0]).is_err());
        assert!(GridField::new(0.0, 0.0, vec![1.0; 3]).is_err());
        assert!(GridField::new(0.0, 0.1, vec![1.0, f64::NAN, 0.0]).is_err());
        assert!(GridField::sample(1.0, 0.0, 0.1, |_| 0.0).is_err());
    }

    #[test]
    fn sample_and_moments() {
        let g = GridField::sample(-1.0, 1.0, 0.5, |x| 1.0 - x.abs()).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.x_max(), 1.0);
        assert_eq!(g.argmax(), 0.0);
        assert!((g.mean()).abs() < 1e-15);
        assert!((g.mass() - 1.0).abs() < 1e-15);
        assert_eq!(g.index_of(0.26), 3);
        assert_eq!(g.interpolate(0.25), 0.75);
        assert_eq!(g.interpolate(-7.0), 0.0);
    }

    #[test]
    fn distances_require_matching_grids() {
        let a = GridField::sample(0.0, 1.0, 0.25, |x| x).unwrap();
        let b = GridField::sample(0.0, 1.0, 0.25, |_| 0.0).unwrap();
        assert!((a.l1_distance(&b).unwrap() - 0.625).abs() < 1e-15);
        assert_eq!(a.linf_distance(&b).unwrap(), 1.0);
        let c = GridField::sample(0.0, 2.0, 0.25, |_| 0.0).unwrap();
        assert!(a.l1_distance(&c).is_err());
    }
}
