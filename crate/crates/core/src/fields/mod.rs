//! Metric and endomorphism fields on the grid, Chern curvature and the
//! coefficient `A_1` of the Bergman density expansion.
//!
//! Fields are stored in the frame `e'_i = (1 + |z|^2)^{m_i / 2} e_i` that is
//! unitary for the Fubini-Study metric of each summand. In this frame the
//! reference split metric is the identity at every point, and the same matrix
//! represents `h` on `E` and `h (x) sigma^k` on `E(k)`.

mod curvature;
mod perturb;

pub use curvature::CurvatureOperator;
pub use perturb::Perturbation;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::manifold::QuadratureGrid;

/// Largest pointwise condition number accepted for a metric.
pub const MAX_CONDITION: f64 = 1e12;

/// Hermitian metric on a split bundle, one positive matrix per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    degrees: Vec<i64>,
    values: Vec<CMat>,
}

impl MetricField {
    /// Validates Hermitian symmetry, positivity and conditioning.
    pub fn new(degrees: Vec<i64>, values: Vec<CMat>) -> Result<Self> {
        let r = degrees.len();
        for (p, g) in values.iter().enumerate() {
            if g.nrows() != r || g.ncols() != r {
                return Err(Error::ShapeMismatch(format!("point {p} carries a {}x{} matrix, rank is {r}", g.nrows(), g.ncols())));
            }
            if g.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::NonFinite(format!("metric at point {p}")));
            }
            let skew = (g - g.adjoint()).norm();
            if skew > 1e-12 * g.norm().max(1e-300) {
                return Err(Error::Format(format!("metric at point {p} is not Hermitian (skew {skew:e})")));
            }
        }
        let field = Self { degrees, values: values.into_iter().map(|g| linalg::hermitian_part(&g)).collect() };
        field.check_condition()?;
        Ok(field)
    }

    fn new_unchecked(degrees: Vec<i64>, values: Vec<CMat>) -> Self {
        Self { degrees, values }
    }

    /// The reference split Fubini-Study metric.
    pub fn fubini_study(degrees: &[i64], grid: &QuadratureGrid) -> Self {
        let r = degrees.len();
        Self::new_unchecked(degrees.to_vec(), vec![CMat::identity(r, r); grid.len()])
    }

    pub fn degrees(&self) -> &[i64] {
        &self.degrees
    }

    pub fn rank(&self) -> usize {
        self.degrees.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }

    pub fn into_values(self) -> Vec<CMat> {
        self.values
    }

    /// Rejects metrics that are not positive or whose condition number exceeds [`MAX_CONDITION`].
    pub fn check_condition(&self) -> Result<f64> {
        let mut worst: f64 = 1.0;
        for (p, g) in self.values.iter().enumerate() {
            let ev = linalg::eigvalsh(g);
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            if !(lo > 0.0) {
                return Err(Error::NotPositiveDefinite(format!("metric at point {p} has eigenvalue {lo:e}")));
            }
            let cond = hi / lo;
            if cond > MAX_CONDITION {
                return Err(Error::Degenerate { point: p, cond });
            }
            worst = worst.max(cond);
        }
        Ok(worst)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new_unchecked(self.degrees.clone(), self.values.iter().map(|g| g.scale(c)).collect())
    }

    /// `G exp(-dt X)` for an endomorphism `X` self-adjoint with respect to `G`.
    ///
    /// With `G = L L^dagger` the product equals `L exp(-dt L^dagger X L^{-dagger}) L^dagger`,
    /// which is Hermitian positive by construction.
    pub fn exp_update(&self, velocity: &EndoField, dt: f64) -> Result<Self> {
        check_len(self.len(), velocity.len())?;
        let mut out = Vec::with_capacity(self.len());
        for (g, x) in self.values.iter().zip(velocity.values()) {
            let c = linalg::cholesky_upper(g)?;
            let ci = linalg::upper_inverse(&c)?;
            // L = C^dagger
            let y = linalg::hermitian_part(&(&c * x * &ci)).scale(-dt);
            out.push(linalg::hermitian_part(&(c.adjoint() * linalg::expm_hermitian(&y) * &c)));
        }
        let field = Self::new_unchecked(self.degrees.clone(), out);
        field.check_condition()?;
        Ok(field)
    }

    /// Pointwise `G_0^{-1} G_1`.
    pub fn relative(&self, other: &MetricField) -> Result<EndoField> {
        check_len(self.len(), other.len())?;
        let mut out = Vec::with_capacity(self.len());
        for (p, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            let inv = a.clone().try_inverse().ok_or(Error::Degenerate { point: p, cond: f64::INFINITY })?;
            out.push(inv * b);
        }
        Ok(EndoField::new(out))
    }
}

/// Endomorphism-valued field.
#[derive(Debug, Clone, PartialEq)]
pub struct EndoField {
    values: Vec<CMat>,
}

impl EndoField {
    pub fn new(values: Vec<CMat>) -> Self {
        Self { values }
    }

    pub fn constant(m: &CMat, len: usize) -> Self {
        Self { values: vec![m.clone(); len] }
    }

    pub fn identity(rank: usize, len: usize) -> Self {
        Self::constant(&CMat::identity(rank, rank), len)
    }

    pub fn zeros(rank: usize, len: usize) -> Self {
        Self::constant(&CMat::zeros(rank, rank), len)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }

    pub fn into_values(self) -> Vec<CMat> {
        self.values
    }

    pub fn map(&self, f: impl Fn(&CMat) -> CMat) -> Self {
        Self { values: self.values.iter().map(f).collect() }
    }

    pub fn zip_map(&self, other: &EndoField, f: impl Fn(&CMat, &CMat) -> CMat) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Ok(Self { values: self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect() })
    }

    pub fn sub(&self, other: &EndoField) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &EndoField) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|a| a.scale(c))
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|a| a + CMat::identity(a.nrows(), a.ncols()).scale(c))
    }

    /// Pointwise trace (real part).
    pub fn trace(&self) -> Vec<f64> {
        self.values.iter().map(|a| linalg::trace(a).re).collect()
    }

    /// `int tr(phi) omega`.
    pub fn integrate_trace(&self, grid: &QuadratureGrid) -> f64 {
        grid.integrate(&self.trace())
    }

    /// Replaces `phi` by its `h`-self-adjoint part `(phi + G^{-1} phi^dagger G) / 2`.
    pub fn self_adjoint_part(&self, h: &MetricField) -> Result<Self> {
        check_len(self.len(), h.len())?;
        let mut out = Vec::with_capacity(self.len());
        for (p, (phi, g)) in self.values.iter().zip(h.values()).enumerate() {
            let gi = g.clone().try_inverse().ok_or(Error::Degenerate { point: p, cond: f64::INFINITY })?;
            out.push((phi + gi * phi.adjoint() * g).scale(0.5));
        }
        Ok(Self::new(out))
    }

    /// Largest pointwise `|G phi - (G phi)^dagger|`.
    pub fn self_adjointness_defect(&self, h: &MetricField) -> f64 {
        self.values
            .iter()
            .zip(h.values())
            .map(|(phi, g)| {
                let gp = g * phi;
                (&gp - gp.adjoint()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Eigenvalues at each point of a field self-adjoint with respect to `h`.
    pub fn eigenvalues(&self, h: &MetricField) -> Result<Vec<Vec<f64>>> {
        check_len(self.len(), h.len())?;
        self.values
            .iter()
            .zip(h.values())
            .map(|(phi, g)| linalg::generalized_eigvals(&linalg::hermitian_part(&(g * phi)), g))
            .collect()
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("fields have {a} and {b} points")));
    }
    Ok(())
}

/// Sup over points of the operator norm of `phi` measured with `h`.
pub fn endo_sup_norm(phi: &EndoField, h: &MetricField) -> Result<f64> {
    check_len(phi.len(), h.len())?;
    let mut worst: f64 = 0.0;
    for (a, g) in phi.values().iter().zip(h.values()) {
        let c = linalg::cholesky_upper(g)?;
        let ci = linalg::upper_inverse(&c)?;
        worst = worst.max(linalg::op_norm(&(&c * a * ci)));
    }
    Ok(worst)
}

/// `c - 1` for the least `c >= 1` with `h0 <= c h1` and `h1 <= c h0` everywhere.
pub fn metric_sup_distance(h0: &MetricField, h1: &MetricField) -> Result<f64> {
    check_len(h0.len(), h1.len())?;
    let mut c: f64 = 1.0;
    for (a, b) in h0.values().iter().zip(h1.values()) {
        let ev = linalg::generalized_eigvals(b, a)?;
        c = c.max(ev[ev.len() - 1]).max(1.0 / ev[0]);
    }
    Ok(c - 1.0)
}

/// Sup over points of the operator norm of `G_0^{-1} G_1 - Id` measured with `h0`.
pub fn metric_relative_error(h: &MetricField, reference: &MetricField) -> Result<f64> {
    let rel = reference.relative(h)?.shift(-1.0);
    endo_sup_norm(&rel, reference)
}

/// Whether `h0 <= h1 + tol Id` pointwise, with `Id` the identity in the stored frame.
pub fn is_below(h0: &MetricField, h1: &MetricField, tol: f64) -> Result<bool> {
    check_len(h0.len(), h1.len())?;
    for (a, b) in h0.values().iter().zip(h1.values()) {
        let d = b - a;
        if linalg::eigvalsh(&d)[0] < -tol {
            return Ok(false);
        }
    }
    Ok(true)
}

pub(crate) fn c64(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}
