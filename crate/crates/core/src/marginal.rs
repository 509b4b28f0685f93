//! Finite discrete marginal laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total probability of a marginal.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A probability law on finitely many real support points.
///
/// Support points are strictly increasing and every mass is positive; the
/// masses sum to one within [`MASS_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMarginal {
    support: Vec<f64>,
    masses: Vec<f64>,
}

impl DiscreteMarginal {
    pub fn new(support: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidMarginal("empty support".into()));
        }
        if support.len() != masses.len() {
            return Err(Error::InvalidMarginal(format!(
                "{} support points but {} masses",
                support.len(),
                masses.len()
            )));
        }
        if support.iter().chain(&masses).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some(w) = support.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidMarginal(format!(
                "support must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(p) = masses.iter().find(|&&p| p <= 0.0) {
            return Err(Error::InvalidMarginal(format!("non-positive mass {p}")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMarginal(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { support, masses })
    }

    /// Marginal on the support `1, 2, …, r`.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        let support = (1..=masses.len()).map(|i| i as f64).collect();
        Self::new(support, masses)
    }

    /// Uniform law on `1, …, r`.
    pub fn uniform(r: usize) -> Result<Self> {
        Self::from_masses(vec![1.0 / r as f64; r])
    }

    /// Masses proportional to `weights` on `1, …, r`.
    pub fn proportional(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMarginal("weights must have a positive sum".into()));
        }
        Self::from_masses(weights.iter().map(|w| w / total).collect())
    }

    /// Empirical law of the observed values.
    pub fn from_observations(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidMarginal("no observations".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut support = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for v in sorted {
            if support.last() == Some(&v) {
                *counts.last_mut().unwrap() += 1;
            } else {
                support.push(v);
                counts.push(1);
            }
        }
        let masses = counts.into_iter().map(|c| c as f64 / n).collect();
        Self::new(support, masses)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// `F(u_i)` for each support point.
    pub fn cumulative(&self) -> Vec<f64> {
        self.masses
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.masses.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_masses() {
        assert!(DiscreteMarginal::from_masses(vec![0.7, 0.4]).is_err());
        assert!(DiscreteMarginal::from_masses(vec![1.2, -0.2]).is_err());
        assert!(DiscreteMarginal::from_masses(vec![]).is_err());
        assert!(DiscreteMarginal::new(vec![2.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMarginal::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMarginal::from_masses(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn empirical_frequencies() {
        let m = DiscreteMarginal::from_observations(&[3.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(m.support(), &[1.0, 2.0, 3.0]);
        assert_eq!(m.masses(), &[0.25, 0.25, 0.5]);
        assert_eq!(m.cumulative(), vec![0.25, 0.5, 1.0]);
    }
}
