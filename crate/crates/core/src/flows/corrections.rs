use num_complex::Complex64;

use crate::bergman::rho_line_weighted;
use crate::error::{Error, Result};
use crate::manifold::spectral::ModalDifferentiator;
use crate::manifold::{scalar_curvature_constant, QuadratureGrid, DIM, VOLUME};

/// Mean-zero `x` with `-Delta x = rhs - mean(rhs)`, `Delta` the Laplacian of the
/// round unit sphere.
pub fn poisson_mean_zero(diff: &ModalDifferentiator, grid: &QuadratureGrid, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!("{} values on {} points", rhs.len(), grid.len())));
    }
    let mean = grid.integrate(rhs) / grid.volume();
    let b: Vec<Complex64> = rhs.iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
    let x = diff
        .solve_neg_laplacian(&b, grid.radial_weights())
        .ok_or_else(|| Error::NonFinite("Poisson solve".into()))?;
    let x: Vec<f64> = x.iter().map(|v| v.re).collect();
    let m = grid.integrate(&x) / grid.volume();
    let out: Vec<f64> = x.iter().map(|v| v - m).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Poisson solve".into()));
    }
    Ok(out)
}

/// Conformal factor `theta` turning the modified heat flow into the Donaldson
/// flow: mean-zero solution of `-Delta theta = (S - S_bar) / 2`.
///
/// For the Fubini-Study form `S` is constant and `theta` vanishes.
pub fn conformal_theta(grid: &QuadratureGrid) -> Result<Vec<f64>> {
    let s = vec![scalar_curvature_constant(); grid.len()];
    conformal_theta_with(&ModalDifferentiator::new(grid), grid, &s)
}

/// [`conformal_theta`] for a given scalar curvature field.
pub fn conformal_theta_with(diff: &ModalDifferentiator, grid: &QuadratureGrid, scalar: &[f64]) -> Result<Vec<f64>> {
    let rhs: Vec<f64> = scalar.iter().map(|s| 0.5 * s).collect();
    poisson_mean_zero(diff, grid, &rhs)
}

/// Grid weights multiplied by `1 + (rho_k - h0(L^k)) / (V k^n)`, with `rho_k` the
/// Bergman function of `e^{psi} sigma^k` (`psi = 0` for the Fubini-Study `sigma`).
pub fn omega_prime_weights(grid: &QuadratureGrid, k: u32, psi: Option<&[f64]>) -> Result<QuadratureGrid> {
    if k == 0 {
        return Err(Error::InvalidModel("the corrected volume form needs k >= 1".into()));
    }
    let zeros;
    let psi = match psi {
        Some(p) => p,
        None => {
            zeros = vec![0.0; grid.len()];
            &zeros
        }
    };
    let rho = rho_line_weighted(k, grid, psi)?;
    let h0 = (k + 1) as f64;
    let scale = VOLUME * (k as f64).powi(DIM);
    let density: Vec<f64> = rho.iter().map(|r| 1.0 + (r - h0) / scale).collect();
    if let Some(p) = density.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::InvalidModel(format!("corrected volume form is not positive at point {p}")));
    }
    grid.reweighted(&density)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_vanishes_for_fubini_study() {
        let grid = QuadratureGrid::new(16, 16).unwrap();
        let theta = conformal_theta(&grid).unwrap();
        assert!(theta.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn poisson_harmonic_oracle() {
        let grid = QuadratureGrid::new(24, 24).unwrap();
        let diff = ModalDifferentiator::new(&grid);
        let y: Vec<f64> = (0..grid.len()).map(|p| grid.cartesian(p)[0] * grid.cartesian(p)[2]).collect();
        let x = poisson_mean_zero(&diff, &grid, &y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b / 6.0).abs() < 1e-9);
        }
        assert!(grid.integrate(&x).abs() < 1e-12);
    }

    #[test]
    fn omega_prime_is_omega_for_fubini_study() {
        let grid = QuadratureGrid::default_for(6).unwrap();
        for k in [1, 3, 6] {
            let g = omega_prime_weights(&grid, k, None).unwrap();
            for (a, b) in g.weights().iter().zip(grid.weights()) {
                assert!((a - b).abs() < 1e-12 * b);
            }
        }
    }

    #[test]
    fn omega_prime_keeps_volume_for_perturbed_fibre_metric() {
        let grid = QuadratureGrid::default_for(10).unwrap();
        let psi = |eps: f64| -> Vec<f64> { (0..grid.len()).map(|p| -eps * 4.0 * grid.cartesian(p)[2]).collect() };
        for eps in [0.01, 0.02] {
            let g = omega_prime_weights(&grid, 4, Some(&psi(eps))).unwrap();
            assert!((g.volume() - 1.0).abs() < 1e-12);
        }
        let dev = |eps: f64| {
            let g = omega_prime_weights(&grid, 4, Some(&psi(eps))).unwrap();
            g.weights().iter().zip(grid.weights()).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max)
        };
        let ratio = dev(0.02) / dev(0.01);
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }
}
