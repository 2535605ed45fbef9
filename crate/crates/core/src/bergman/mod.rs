//! The Bergman space of inner products on `H^0(E(k))` and the maps between
//! it and bundle metrics.
//!
//! Inner products are matrices in the scaled monomial basis of
//! [`SectionBasis`]. For `H = C^dagger C` (Cholesky, `C` upper triangular) the
//! rows of `S C^{-1}` are the values of an `H`-orthonormal basis; every
//! `N x N` tangent object below is expressed in that orthonormal frame.

mod inner;

pub use inner::{bergman_distance, HermitianInner, MomentValue};

use crate::error::{Error, Result};
use crate::fields::{EndoField, MetricField};
use crate::linalg::{self, CMat};
use crate::manifold::{ModelConfig, QuadratureGrid, SectionBasis};

/// A model `(E, k)` with its grid and section basis.
#[derive(Debug, Clone)]
pub struct BergmanSpace {
    model: ModelConfig,
    grid: QuadratureGrid,
    basis: SectionBasis,
}

impl BergmanSpace {
    pub fn new(model: &ModelConfig, grid: &QuadratureGrid) -> Result<Self> {
        let basis = SectionBasis::new(model, grid)?;
        Ok(Self { model: model.clone(), grid: grid.clone(), basis })
    }

    /// Builds the space on the default grid for its degree.
    pub fn with_default_grid(model: &ModelConfig) -> Result<Self> {
        let grid = QuadratureGrid::default_for(model.max_twisted_degree())?;
        Self::new(model, &grid)
    }

    pub fn model(&self) -> &ModelConfig {
        &self.model
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn basis(&self) -> &SectionBasis {
        &self.basis
    }

    pub fn k(&self) -> u32 {
        self.model.k
    }

    pub fn n_sections(&self) -> usize {
        self.basis.n_sections()
    }

    /// `r V / N_k`.
    pub fn moment_shift(&self) -> f64 {
        1.0 / self.model.hilb_factor()
    }

    fn check_metric(&self, h: &MetricField) -> Result<()> {
        if h.degrees() != self.model.degrees.as_slice() || h.len() != self.grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "metric for degrees {:?} on {} points, space has {:?} on {}",
                h.degrees(),
                h.len(),
                self.model.degrees,
                self.grid.len()
            )));
        }
        Ok(())
    }

    fn check_inner(&self, h: &HermitianInner) -> Result<()> {
        if h.n() != self.n_sections() {
            return Err(Error::ShapeMismatch(format!("inner product of size {} on {} sections", h.n(), self.n_sections())));
        }
        Ok(())
    }

    /// `(N_k / r V) int <s_a, s_b>_{h (x) sigma^k}`.
    pub fn hilb(&self, h: &MetricField) -> Result<HermitianInner> {
        self.check_metric(h)?;
        let g = self.basis.gram(&self.grid, h.values())?;
        HermitianInner::new(g.scale(self.model.hilb_factor()))
            .map_err(|e| Error::NotPositiveDefinite(format!("Hilb image: {e}; grid under-resolved?")))
    }

    /// `S H^{-1} S^dagger` at every point, the unnormalized density of states.
    fn density_matrix(&self, h: &HermitianInner) -> Result<Vec<CMat>> {
        self.check_inner(h)?;
        let ci = linalg::upper_inverse(h.cholesky())?;
        let hinv = &ci * ci.adjoint();
        self.basis.synth(&self.grid, &hinv)
    }

    /// The metric making an `H`-orthonormal basis a pointwise partition of the identity.
    pub fn fs(&self, h: &HermitianInner) -> Result<MetricField> {
        let p = self.density_matrix(h)?;
        let mut out = Vec::with_capacity(p.len());
        for (point, m) in p.iter().enumerate() {
            let c = linalg::cholesky_upper(m).map_err(|_| Error::BasePointFailure { point })?;
            let ci = linalg::upper_inverse(&c).map_err(|_| Error::BasePointFailure { point })?;
            out.push(&ci * ci.adjoint());
        }
        MetricField::new(self.model.degrees.clone(), out)
    }

    /// `FS_k(Hilb_k(h))`.
    pub fn phi_map(&self, h: &MetricField) -> Result<MetricField> {
        self.fs(&self.hilb(h)?)
    }

    /// `B_k(h) = (N_k / r V) sum_i s_i (x) s_i^*` for an `Hilb_k(h)`-orthonormal basis.
    pub fn bergman_density(&self, h: &MetricField) -> Result<EndoField> {
        let p = self.density_matrix(&self.hilb(h)?)?;
        let f = self.model.hilb_factor();
        Ok(EndoField::new(p.iter().zip(h.values()).map(|(p, g)| (p * g).scale(f)).collect()))
    }

    /// `mu_bar(H) = int S_hat^dagger FS(H) S_hat` in the `H`-orthonormal frame.
    pub fn moment_bar(&self, h: &HermitianInner) -> Result<MomentValue> {
        let g = self.fs(h)?;
        let x = self.basis.gram(&self.grid, g.values())?;
        let ci = linalg::upper_inverse(h.cholesky())?;
        Ok(MomentValue::new(linalg::hermitian_part(&(ci.adjoint() * x * &ci)), h.cholesky().clone()))
    }

    /// `mu_bar(H) - (r V / N_k) Id`.
    pub fn moment_bar_zero(&self, h: &HermitianInner) -> Result<MomentValue> {
        let mu = self.moment_bar(h)?;
        Ok(mu.shifted(-self.moment_shift()))
    }

    /// `W = int S_hat^dagger G phi S_hat` in the `Hilb_k(h)`-orthonormal frame.
    fn pair_endo(&self, phi: &EndoField, h: &MetricField, hi: &HermitianInner) -> Result<CMat> {
        let gphi: Vec<CMat> = h.values().iter().zip(phi.values()).map(|(g, f)| g * f).collect();
        let x = self.basis.gram(&self.grid, &gphi)?;
        let ci = linalg::upper_inverse(hi.cholesky())?;
        Ok(ci.adjoint() * x * &ci)
    }

    /// `Q_k(phi)(y) = k^n S_hat(y) W S_hat(y)^dagger G(y)`.
    pub fn q_apply(&self, phi: &EndoField, h: &MetricField) -> Result<EndoField> {
        self.check_metric(h)?;
        if phi.len() != h.len() {
            return Err(Error::ShapeMismatch("endomorphism and metric differ in length".into()));
        }
        let hi = self.hilb(h)?;
        let w = self.pair_endo(phi, h, &hi)?;
        let ci = linalg::upper_inverse(hi.cholesky())?;
        let x = &ci * w * ci.adjoint();
        let p = self.basis.synth(&self.grid, &x)?;
        let kn = self.model.k_pow_n();
        Ok(EndoField::new(p.iter().zip(h.values()).map(|(p, g)| (p * g).scale(kn)).collect()))
    }

    /// Change of `Hilb_k(h)` along `h^{-1} dh = phi`, as `-(N_k / r V) W` in the
    /// `Hilb_k(h)`-orthonormal frame.
    pub fn hilb_tangent(&self, h: &MetricField, phi: &EndoField) -> Result<MomentValue> {
        self.check_metric(h)?;
        let hi = self.hilb(h)?;
        let w = self.pair_endo(phi, h, &hi)?;
        Ok(MomentValue::new(linalg::hermitian_part(&w).scale(-self.model.hilb_factor()), hi.cholesky().clone()))
    }

    /// Inner product in the plain monomial basis `z^j e_i`.
    pub fn to_monomial(&self, h: &HermitianInner) -> CMat {
        self.basis.to_monomial_frame(h.matrix())
    }

    pub fn from_monomial(&self, m: &CMat) -> Result<HermitianInner> {
        HermitianInner::new(self.basis.from_monomial_frame(m))
    }
}

/// Bergman function `sum |s_i|^2` of `(L^k, sigma^k)` for an orthonormal basis of
/// the plain L2 product (no `N_k / r V` factor).
pub fn rho_line(k: u32, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    rho_line_weighted(k, grid, &vec![0.0; grid.len()])
}

/// As [`rho_line`] for the fibre metric `e^{psi} sigma^k`; `psi` is given per point.
pub fn rho_line_weighted(k: u32, grid: &QuadratureGrid, psi: &[f64]) -> Result<Vec<f64>> {
    if psi.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!("{} weights on {} points", psi.len(), grid.len())));
    }
    let model = ModelConfig::new(vec![0], k)?;
    let basis = SectionBasis::new(&model, grid)?;
    let field: Vec<CMat> = psi.iter().map(|v| CMat::from_element(1, 1, v.exp().into())).collect();
    let gi = HermitianInner::new(basis.gram(grid, &field)?)?;
    let ci = linalg::upper_inverse(gi.cholesky())?;
    let p = basis.synth(grid, &(&ci * ci.adjoint()))?;
    Ok(p.iter().zip(psi).map(|(m, v)| m[(0, 0)].re * v.exp()).collect())
}
