use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// A Hermitian positive-definite inner product on the sections, with its
/// Cholesky factor `C` (`H = C^dagger C`, upper triangular).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianInner {
    matrix: CMat,
    chol: CMat,
}

impl HermitianInner {
    pub fn new(matrix: CMat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!("{}x{} inner product", matrix.nrows(), matrix.ncols())));
        }
        if matrix.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("inner product".into()));
        }
        let skew = (&matrix - matrix.adjoint()).norm();
        if skew > 1e-12 * matrix.norm() {
            return Err(Error::Format(format!("inner product is not Hermitian (skew {skew:e})")));
        }
        let matrix = linalg::hermitian_part(&matrix);
        let chol = linalg::cholesky_upper(&matrix)?;
        Ok(Self { matrix, chol })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn cholesky(&self) -> &CMat {
        &self.chol
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.matrix.scale(c))
    }

    /// `C^dagger M C` for a matrix `M` given in the orthonormal frame of `self`.
    pub fn congruence(&self, m: &CMat) -> CMat {
        self.chol.adjoint() * m * &self.chol
    }
}

/// Hermitian `N x N` matrix in the orthonormal frame of an inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentValue {
    matrix: CMat,
    frame: CMat,
}

impl MomentValue {
    pub fn new(matrix: CMat, frame: CMat) -> Self {
        Self { matrix, frame }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Cholesky factor of the inner product defining the frame.
    pub fn frame(&self) -> &CMat {
        &self.frame
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn hs_norm(&self) -> f64 {
        linalg::hs_norm(&self.matrix)
    }

    pub fn shifted(&self, c: f64) -> Self {
        let n = self.matrix.nrows();
        Self { matrix: &self.matrix + CMat::identity(n, n).scale(c), frame: self.frame.clone() }
    }

    /// The same tensor expressed in the orthonormal frame of `target`.
    pub fn reexpress(&self, target: &CMat) -> Result<Self> {
        // T = F^dagger M F as a form; orthonormal frame of `target` gives C^{-dagger} T C^{-1}
        let form = self.frame.adjoint() * &self.matrix * &self.frame;
        let ci = linalg::upper_inverse(target)?;
        Ok(Self { matrix: ci.adjoint() * form * &ci, frame: target.clone() })
    }
}

/// `sqrt(k^{-n} sum (log lambda_i)^2)` over the eigenvalues of `H_0^{-1} H_1`.
pub fn bergman_distance(h0: &HermitianInner, h1: &HermitianInner, k: u32) -> Result<f64> {
    if h0.n() != h1.n() {
        return Err(Error::ShapeMismatch(format!("inner products of size {} and {}", h0.n(), h1.n())));
    }
    let ev = linalg::generalized_eigvals(h1.matrix(), h0.matrix())?;
    if ev.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite("relative eigenvalues".into()));
    }
    let s: f64 = ev.iter().map(|l| l.ln().powi(2)).sum();
    Ok((s / (k as f64).powi(crate::manifold::DIM)).sqrt())
}
