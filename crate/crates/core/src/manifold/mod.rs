//! The polarized base: the Riemann sphere with its unit-volume Fubini-Study
//! form, a product quadrature rule and holomorphic section bases of split
//! bundles `E(k) = O(a_1 + k) + ... + O(a_r + k)`.

mod quadrature;
mod sections;
pub mod spectral;

pub use quadrature::{binomial, fs_monomial_integral, gauss_legendre, QuadratureGrid};
pub use sections::SectionBasis;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total volume of the base.
pub const VOLUME: f64 = 1.0;

/// Complex dimension of the base.
pub const DIM: i32 = 1;

/// Splitting type of `E` and the twist level `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub degrees: Vec<i64>,
    pub k: u32,
}

impl ModelConfig {
    pub fn new(degrees: Vec<i64>, k: u32) -> Result<Self> {
        let cfg = Self { degrees, k };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() {
            return Err(Error::InvalidModel("at least one summand is required".into()));
        }
        if let Some(a) = self.degrees.iter().find(|&&a| a + (self.k as i64) < 0) {
            return Err(Error::InvalidModel(format!(
                "summand O({a}) twisted by k={} has no sections",
                self.k
            )));
        }
        Ok(())
    }

    pub fn with_k(&self, k: u32) -> Result<Self> {
        Self::new(self.degrees.clone(), k)
    }

    pub fn rank(&self) -> usize {
        self.degrees.len()
    }

    /// Degree `a_i + k` of each twisted summand.
    pub fn twisted_degrees(&self) -> Vec<usize> {
        self.degrees.iter().map(|&a| (a + self.k as i64) as usize).collect()
    }

    pub fn max_twisted_degree(&self) -> usize {
        self.twisted_degrees().into_iter().max().unwrap_or(0)
    }

    /// `N_k = dim H^0(E(k))`.
    pub fn n_sections(&self) -> usize {
        self.twisted_degrees().iter().map(|m| m + 1).sum()
    }

    pub fn degree(&self) -> i64 {
        self.degrees.iter().sum()
    }

    /// Slope `deg(E) / (r V)`.
    pub fn slope(&self) -> f64 {
        self.degree() as f64 / (self.rank() as f64 * VOLUME)
    }

    /// `N_k / (r V)`, the normalization of the L2 pairing.
    pub fn hilb_factor(&self) -> f64 {
        self.n_sections() as f64 / (self.rank() as f64 * VOLUME)
    }

    /// `k^n`.
    pub fn k_pow_n(&self) -> f64 {
        (self.k as f64).powi(DIM)
    }
}

/// Scalar curvature of the unit-volume Fubini-Study form, in the
/// normalization where the Bergman density expands as `k (1 + S / 2k)`.
pub fn scalar_curvature_constant() -> f64 {
    2.0
}
