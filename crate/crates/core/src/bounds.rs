use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `lo_i < hi_i` in design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds(Vec<(f64, f64)>);

impl Bounds {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::input("bounds need at least one dimension"));
        }
        for (i, (lo, hi)) in pairs.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::input(format!(
                    "dimension {i} has empty or invalid range [{lo}, {hi}]"
                )));
            }
        }
        Ok(Bounds(pairs))
    }

    pub fn unit(dim: usize) -> Self {
        Bounds(vec![(0.0, 1.0); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn lower(&self) -> Vec<f64> {
        self.0.iter().map(|p| p.0).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.0.iter().map(|p| p.1).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.0)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.0)
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    /// Maps a unit-cube point into the box, clamping against rounding.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.0)
            .map(|(v, (lo, hi))| (lo + v * (hi - lo)).clamp(*lo, *hi))
            .collect()
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(&self.0) {
            *v = v.clamp(*lo, *hi);
        }
    }
}
