use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use super::{c64, EndoField, MetricField};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::manifold::spectral::{Derivatives, ModalDifferentiator};
use crate::manifold::{scalar_curvature_constant, QuadratureGrid, VOLUME};

/// Evaluates `(i / 2 pi) Lambda F_h` and the quantities built from it.
///
/// Derivatives are spectral: FFT in the angle and a pole-parity adapted
/// trigonometric basis in the colatitude. The contraction is evaluated in
/// the chart `z` on the northern hemisphere and in `1 / z` on the southern
/// one so that no formula is used near its coordinate singularity.
#[derive(Debug, Clone)]
pub struct CurvatureOperator {
    grid: QuadratureGrid,
    diff: ModalDifferentiator,
}

impl CurvatureOperator {
    pub fn new(grid: &QuadratureGrid) -> Self {
        Self { grid: grid.clone(), diff: ModalDifferentiator::new(grid) }
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn differentiator(&self) -> &ModalDifferentiator {
        &self.diff
    }

    /// `(i / 2 pi) Lambda F` of `(E, h)`, without the twist.
    pub fn lambda_untwisted(&self, h: &MetricField) -> Result<EndoField> {
        if h.len() != self.grid.len() {
            return Err(Error::ShapeMismatch(format!("metric has {} points, grid {}", h.len(), self.grid.len())));
        }
        h.check_condition()?;
        let r = h.rank();
        let deg: Vec<f64> = h.degrees().iter().map(|&a| a as f64).collect();
        let mut ders: Vec<Derivatives> = Vec::with_capacity(r * r);
        let mut entry = vec![Complex64::new(0.0, 0.0); h.len()];
        for i in 0..r {
            for j in 0..r {
                for (v, g) in entry.iter_mut().zip(h.values()) {
                    *v = g[(i, j)];
                }
                ders.push(self.diff.derivatives(&entry, h.degrees()[j] - h.degrees()[i]));
            }
        }
        let m = CMat::from_diagonal(&nalgebra::DVector::from_iterator(r, deg.iter().map(|&a| c64(a))));
        let np = self.grid.n_phi();
        let mut out = Vec::with_capacity(h.len());
        for p in 0..h.len() {
            let theta = self.grid.theta()[p / np];
            let phi = self.grid.phi()[p % np];
            let pick = |f: fn(&Derivatives) -> &Vec<Complex64>| CMat::from_fn(r, r, |i, j| f(&ders[i * r + j])[p]);
            let g = h.values()[p].clone();
            let (gt, gp, gtt, gpp) = (pick(|d| &d.t), pick(|d| &d.p), pick(|d| &d.tt), pick(|d| &d.pp));
            let north = theta <= FRAC_PI_2;
            let (tc, pc, gc, gtc, gpc, gttc, gppc) = if north {
                (theta, phi, g.clone(), gt, gp, gtt, gpp)
            } else {
                // chart 1/z: frame change by e^{i (a_j - a_i) phi}, coordinates (pi - theta, -phi)
                let s = |i: usize, j: usize| deg[j] - deg[i];
                let e = |i: usize, j: usize| Complex64::from_polar(1.0, s(i, j) * phi);
                let is = |i: usize, j: usize| Complex64::new(0.0, s(i, j));
                let gc = CMat::from_fn(r, r, |i, j| e(i, j) * g[(i, j)]);
                let gpc = CMat::from_fn(r, r, |i, j| -e(i, j) * (gp[(i, j)] + is(i, j) * g[(i, j)]));
                let gppc = CMat::from_fn(r, r, |i, j| {
                    e(i, j) * (gpp[(i, j)] + 2.0 * is(i, j) * gp[(i, j)] - s(i, j) * s(i, j) * g[(i, j)])
                });
                let gtc = CMat::from_fn(r, r, |i, j| -e(i, j) * gt[(i, j)]);
                let gttc = CMat::from_fn(r, r, |i, j| e(i, j) * gtt[(i, j)]);
                (std::f64::consts::PI - theta, -phi, gc, gtc, gpc, gttc, gppc)
            };
            let (st, ct) = tc.sin_cos();
            let z = Complex64::from_polar((tc / 2.0).tan(), pc);
            let dg = (&gtc - gpc.scale(1.0 / st) * Complex64::i()) * Complex64::from_polar(1.0, -pc);
            let dbg = dg.adjoint();
            let lap = &gttc + gtc.scale(ct / st) + gppc.scale(1.0 / (st * st));
            let gi = gc.clone().try_inverse().ok_or(Error::Degenerate { point: p, cond: f64::INFINITY })?;
            let gi_dg = &gi * &dg;
            let dbg_gi = &dbg * &gi;
            let mut k = &gi * &dbg * &gi_dg - &gi * lap
                + (&gi * &m * &gc + &m).scale(0.5)
                + &gi * (&m * &dbg_gi - &dbg_gi * &m) * &gc * (z.conj() * 0.5)
                - (&m * &gi_dg - &gi_dg * &m) * (z * 0.5)
                + (&m * &gi * &m * &gc - &gi * &m * &gc * &m).scale(z.norm_sqr() / 4.0);
            if !north {
                let ph = CMat::from_fn(r, r, |i, j| {
                    if i == j {
                        Complex64::from_polar(1.0, deg[i] * phi)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                k = &ph * k * ph.adjoint();
            }
            if k.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::NonFinite(format!("curvature at point {p}")));
            }
            out.push(k);
        }
        EndoField::new(out).self_adjoint_part(h)
    }

    /// `(i / 2 pi) Lambda F` of `E(k)` with the metric `h (x) sigma^k`.
    pub fn lambda_twisted(&self, h: &MetricField, k: u32) -> Result<EndoField> {
        Ok(self.lambda_untwisted(h)?.shift(k as f64))
    }

    /// `A_1(h) = (i / 2 pi) Lambda F_h + S / 2`.
    pub fn a1(&self, h: &MetricField) -> Result<EndoField> {
        Ok(self.lambda_untwisted(h)?.shift(0.5 * scalar_curvature_constant()))
    }

    /// `A_1(h)` minus its trace average `(1 / r V) int tr A_1`.
    pub fn a1_reduced(&self, h: &MetricField) -> Result<EndoField> {
        let a1 = self.a1(h)?;
        let mean = a1.integrate_trace(&self.grid) / (h.rank() as f64 * VOLUME);
        Ok(a1.shift(-mean))
    }

    /// `(i / 2 pi) Lambda F_h - mu(E)`.
    pub fn donaldson_velocity(&self, h: &MetricField) -> Result<EndoField> {
        let slope = h.degrees().iter().sum::<i64>() as f64 / (h.rank() as f64 * VOLUME);
        Ok(self.lambda_untwisted(h)?.shift(-slope))
    }

    /// Extreme eigenvalues over the grid of the untwisted curvature.
    pub fn curvature_extremes(&self, h: &MetricField) -> Result<(f64, f64)> {
        let lam = self.lambda_untwisted(h)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for ev in lam.eigenvalues(h)? {
            lo = lo.min(ev[0]);
            hi = hi.max(ev[ev.len() - 1]);
        }
        Ok((lo, hi))
    }

    /// Spectral radius of the discrete Laplacian on the spins present in a rank-`r` split field.
    pub fn laplacian_radius(&self, degrees: &[i64]) -> f64 {
        let mut spins: Vec<i64> = degrees.iter().flat_map(|a| degrees.iter().map(move |b| b - a)).collect();
        spins.sort_unstable();
        spins.dedup();
        self.diff.laplacian_spectral_radius(&spins)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Perturbation;

    fn max_dev(phi: &EndoField, want: &CMat) -> f64 {
        phi.values().iter().map(|a| (a - want).norm()).fold(0.0, f64::max)
    }

    fn diag(v: &[f64]) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(v.len(), v.iter().map(|&x| c64(x))))
    }

    #[test]
    fn fubini_study_line_bundles() {
        let grid = QuadratureGrid::new(16, 16).unwrap();
        let op = CurvatureOperator::new(&grid);
        for d in [-2i64, 0, 3] {
            let h = MetricField::fubini_study(&[d], &grid);
            let lam = op.lambda_twisted(&h, 5).unwrap();
            assert!(max_dev(&lam, &diag(&[(d + 5) as f64])) < 1e-9);
            assert!(max_dev(&op.a1(&h).unwrap(), &diag(&[(d + 1) as f64])) < 1e-9);
        }
    }

    #[test]
    fn split_bundle_values() {
        let grid = QuadratureGrid::new(16, 16).unwrap();
        let op = CurvatureOperator::new(&grid);
        let h = MetricField::fubini_study(&[1, -1], &grid);
        assert!(max_dev(&op.lambda_twisted(&h, 4).unwrap(), &diag(&[5.0, 3.0])) < 1e-9);
        assert!(max_dev(&op.a1(&h).unwrap(), &diag(&[2.0, 0.0])) < 1e-9);
        assert!(max_dev(&op.a1_reduced(&h).unwrap(), &diag(&[1.0, -1.0])) < 1e-9);
        let h = MetricField::fubini_study(&[2, 2], &grid);
        assert!(max_dev(&op.a1_reduced(&h).unwrap(), &diag(&[0.0, 0.0])) < 1e-9);
    }

    #[test]
    fn degree_is_topological() {
        let grid = QuadratureGrid::new(28, 28).unwrap();
        let op = CurvatureOperator::new(&grid);
        for degrees in [vec![0], vec![1, -1], vec![2, 0, -1]] {
            let h = Perturbation::new(&degrees, 11, 0.3).metric(&grid).unwrap();
            let lam = op.lambda_untwisted(&h).unwrap();
            let deg: i64 = degrees.iter().sum();
            assert!((lam.integrate_trace(&grid) - deg as f64).abs() < 1e-8, "{degrees:?}");
            assert!(lam.self_adjointness_defect(&h) < 1e-10);
            assert!(op.a1_reduced(&h).unwrap().integrate_trace(&grid).abs() < 1e-10);
        }
    }

    #[test]
    fn curvature_is_scale_invariant() {
        let grid = QuadratureGrid::new(20, 20).unwrap();
        let op = CurvatureOperator::new(&grid);
        let h = Perturbation::new(&[1, 0], 2, 0.4).metric(&grid).unwrap();
        let a = op.a1_reduced(&h).unwrap();
        let b = op.a1_reduced(&h.scaled(3.7)).unwrap();
        assert!(a.sub(&b).unwrap().values().iter().all(|m| m.norm() < 1e-10));
    }

    #[test]
    fn conformal_factor_shifts_by_laplacian() {
        // K(e^f G) = K(G) - Delta f, and x3 has eigenvalue 2 under -Delta
        let grid = QuadratureGrid::new(20, 20).unwrap();
        let op = CurvatureOperator::new(&grid);
        let base = MetricField::fubini_study(&[1], &grid);
        let values: Vec<CMat> = (0..grid.len()).map(|p| diag(&[(0.3 * grid.cartesian(p)[2]).exp()])).collect();
        let h = MetricField::new(vec![1], values).unwrap();
        let k0 = op.lambda_untwisted(&base).unwrap();
        let k1 = op.lambda_untwisted(&h).unwrap();
        for p in 0..grid.len() {
            let want = k0.values()[p][(0, 0)].re + 0.3 * 2.0 * grid.cartesian(p)[2];
            assert!((k1.values()[p][(0, 0)].re - want).abs() < 1e-9);
        }
    }
}
