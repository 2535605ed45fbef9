//! Small dense Hermitian helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Upper-triangular `C` with `h = C^† C`.
pub fn cholesky_upper(h: &CMat) -> Result<CMat> {
    let n = h.nrows();
    let mut c = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = h[(j, j)].re;
        for k in 0..j {
            d -= c[(k, j)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite(format!("pivot {j} is {d:e}")));
        }
        let d = d.sqrt();
        c[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            // h_ji = sum_k conj(c_kj) c_ki
            let mut v = h[(j, i)];
            for k in 0..j {
                v -= c[(k, j)].conj() * c[(k, i)];
            }
            c[(j, i)] = v / d;
        }
    }
    Ok(c)
}

pub fn upper_inverse(c: &CMat) -> Result<CMat> {
    let n = c.nrows();
    c.solve_upper_triangular(&CMat::identity(n, n))
        .ok_or_else(|| Error::NotPositiveDefinite("singular triangular factor".into()))
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitian_part(a).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn eigvalsh(a: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = hermitian_part(a).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `f(A)` for Hermitian `A`, applied through the spectral decomposition.
pub fn hermitian_fn(a: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(a);
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|&x| Complex64::new(f(x), 0.0)));
    let scaled = CMat::from_fn(vecs.nrows(), vecs.ncols(), |r, c| vecs[(r, c)] * d[c]);
    scaled * vecs.adjoint()
}

pub fn expm_hermitian(a: &CMat) -> CMat {
    hermitian_fn(a, f64::exp)
}

/// Frobenius (Hilbert-Schmidt) norm.
pub fn hs_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(a: &CMat) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Eigenvalues of the pencil `(b, a)`, i.e. of `a^{-1} b`, for Hermitian PD `a`.
pub fn generalized_eigvals(b: &CMat, a: &CMat) -> Result<Vec<f64>> {
    let c = cholesky_upper(a)?;
    let ci = upper_inverse(&c)?;
    Ok(eigvalsh(&(ci.adjoint() * b * &ci)))
}

/// Largest singular value.
pub fn op_norm(a: &CMat) -> f64 {
    let ata = a.adjoint() * a;
    eigvalsh(&ata).last().copied().unwrap_or(0.0).max(0.0).sqrt()
}
