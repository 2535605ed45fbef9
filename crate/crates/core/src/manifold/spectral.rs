//! Spectral machinery on the structured sphere grid.
//!
//! Angular dependence is handled by FFT on the half-step offset angle grid.
//! In the polar direction each Fourier mode is expanded in a trigonometric
//! basis whose parities at the two poles match the regularity of the mode:
//! mode `n` of a field of spin `s` is even/odd about `theta = 0` according to
//! `n` and about `theta = pi` according to `n + s`. Collocating that basis on
//! the Gauss-Legendre colatitudes gives spectrally accurate derivatives
//! without any node on a pole.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::QuadratureGrid;

/// FFT over the angle direction with the half-step offset folded in.
#[derive(Clone)]
pub struct AngularFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AngularFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AngularFft").field("n", &self.n).finish()
    }
}

impl AngularFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Raw (unnormalized, unshifted) DFT of one ring, in place.
    pub fn forward_raw(&self, ring: &mut [Complex64]) {
        self.forward.process(ring);
    }

    /// `(1/n) sum_l f_l e^{-i q phi_l}` from the raw DFT bins, any integer `q`.
    pub fn coefficient(&self, raw: &[Complex64], q: i64) -> Complex64 {
        let n = self.n as i64;
        let bin = q.rem_euclid(n) as usize;
        let shift = Complex64::from_polar(1.0 / self.n as f64, -std::f64::consts::PI * q as f64 / self.n as f64);
        raw[bin] * shift
    }

    /// Adds `c e^{i q phi}` to the bin buffer that `synthesize` turns into ring values.
    pub fn deposit(&self, bins: &mut [Complex64], q: i64, c: Complex64) {
        let n = self.n as i64;
        let bin = q.rem_euclid(n) as usize;
        bins[bin] += c * Complex64::from_polar(1.0, std::f64::consts::PI * q as f64 / self.n as f64);
    }

    /// Ring values from deposited bins, in place.
    pub fn synthesize(&self, bins: &mut [Complex64]) {
        self.inverse.process(bins);
    }

    /// Signed mode carried by bin `b`; the Nyquist bin maps to `None`.
    pub fn mode_of_bin(&self, b: usize) -> Option<i64> {
        let n = self.n;
        if n.is_multiple_of(2) && b == n / 2 {
            None
        } else if b <= n / 2 {
            Some(b as i64)
        } else {
            Some(b as i64 - n as i64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn of(n: i64) -> Self {
        if n.rem_euclid(2) == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Values and first/second derivatives of a complex field in `(theta, phi)`.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub f: Vec<Complex64>,
    pub t: Vec<Complex64>,
    pub p: Vec<Complex64>,
    pub tt: Vec<Complex64>,
    pub tp: Vec<Complex64>,
    pub pp: Vec<Complex64>,
}

#[derive(Debug, Clone)]
struct ParityBasis {
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
}

/// Spectral differentiation on a [`QuadratureGrid`].
#[derive(Debug, Clone)]
pub struct ModalDifferentiator {
    n_theta: usize,
    n_phi: usize,
    theta: Vec<f64>,
    fft: AngularFft,
    // indexed by (parity at north pole, parity at south pole)
    bases: [ParityBasis; 4],
}

fn basis_index(north: Parity, south: Parity) -> usize {
    match (north, south) {
        (Parity::Even, Parity::Even) => 0,
        (Parity::Odd, Parity::Odd) => 1,
        (Parity::Even, Parity::Odd) => 2,
        (Parity::Odd, Parity::Even) => 3,
    }
}

impl ModalDifferentiator {
    pub fn new(grid: &QuadratureGrid) -> Self {
        let theta = grid.theta().to_vec();
        let nt = theta.len();
        let build = |kind: usize| {
            // cos(l t), sin((l+1) t), cos((l+1/2) t), sin((l+1/2) t)
            let freq = |l: usize| match kind {
                0 => l as f64,
                1 => l as f64 + 1.0,
                _ => l as f64 + 0.5,
            };
            let cosine = kind == 0 || kind == 2;
            let b = DMatrix::from_fn(nt, nt, |j, l| {
                let a = freq(l) * theta[j];
                if cosine { a.cos() } else { a.sin() }
            });
            let b1 = DMatrix::from_fn(nt, nt, |j, l| {
                let a = freq(l) * theta[j];
                if cosine { -freq(l) * a.sin() } else { freq(l) * a.cos() }
            });
            let b2 = DMatrix::from_fn(nt, nt, |j, l| -freq(l) * freq(l) * b[(j, l)]);
            let inv = b.clone().try_inverse().expect("parity collocation matrix is invertible");
            ParityBasis { d1: b1 * &inv, d2: b2 * inv }
        };
        let bases = [build(0), build(1), build(2), build(3)];
        Self { n_theta: nt, n_phi: grid.n_phi(), theta, fft: AngularFft::new(grid.n_phi()), bases }
    }

    pub fn fft(&self) -> &AngularFft {
        &self.fft
    }

    fn basis_for(&self, mode: i64, spin: i64) -> &ParityBasis {
        &self.bases[basis_index(Parity::of(mode), Parity::of(mode + spin))]
    }

    /// Raw DFT of every ring of a theta-major field.
    fn rings_forward(&self, field: &[Complex64]) -> Vec<Complex64> {
        let mut out = field.to_vec();
        for ring in out.chunks_mut(self.n_phi) {
            self.fft.forward_raw(ring);
        }
        out
    }

    fn rings_inverse(&self, mut bins: Vec<Complex64>) -> Vec<Complex64> {
        let scale = 1.0 / self.n_phi as f64;
        for ring in bins.chunks_mut(self.n_phi) {
            self.fft.synthesize(ring);
            for v in ring.iter_mut() {
                *v *= scale;
            }
        }
        bins
    }

    /// Derivatives of a field whose Fourier modes have pole parities set by `spin`.
    pub fn derivatives(&self, field: &[Complex64], spin: i64) -> Derivatives {
        let nt = self.n_theta;
        let np = self.n_phi;
        let raw = self.rings_forward(field);
        let zero = Complex64::new(0.0, 0.0);
        let mut t = vec![zero; nt * np];
        let mut tt = vec![zero; nt * np];
        let mut p = vec![zero; nt * np];
        let mut tp = vec![zero; nt * np];
        let mut pp = vec![zero; nt * np];
        let mut column = vec![zero; nt];
        for b in 0..np {
            let Some(n) = self.fft.mode_of_bin(b) else { continue };
            for j in 0..nt {
                column[j] = raw[j * np + b];
            }
            let basis = self.basis_for(n, spin);
            let nn = Complex64::new(0.0, n as f64);
            for j in 0..nt {
                let mut a1 = zero;
                let mut a2 = zero;
                for (l, c) in column.iter().enumerate() {
                    a1 += c * basis.d1[(j, l)];
                    a2 += c * basis.d2[(j, l)];
                }
                let idx = j * np + b;
                t[idx] = a1;
                tt[idx] = a2;
                p[idx] = nn * column[j];
                tp[idx] = nn * a1;
                pp[idx] = -(n * n) as f64 * column[j];
            }
        }
        Derivatives {
            f: field.to_vec(),
            t: self.rings_inverse(t),
            p: self.rings_inverse(p),
            tt: self.rings_inverse(tt),
            tp: self.rings_inverse(tp),
            pp: self.rings_inverse(pp),
        }
    }

    /// Positive Laplacian `-Delta` of the unit round sphere applied to a spin-0 field.
    pub fn neg_laplacian(&self, field: &[Complex64]) -> Vec<Complex64> {
        let d = self.derivatives(field, 0);
        let np = self.n_phi;
        (0..field.len())
            .map(|idx| {
                let th = self.theta[idx / np];
                -(d.tt[idx] + d.t[idx] / th.tan() + d.pp[idx] / th.sin().powi(2))
            })
            .collect()
    }

    fn mode_laplacian(&self, n: i64) -> DMatrix<f64> {
        let basis = self.basis_for(n, 0);
        let nt = self.n_theta;
        DMatrix::from_fn(nt, nt, |j, l| {
            let th = self.theta[j];
            let mut v = -basis.d2[(j, l)] - basis.d1[(j, l)] / th.tan();
            if j == l {
                v += (n * n) as f64 / th.sin().powi(2);
            }
            v
        })
    }

    /// Mean-zero solution of `-Delta x = rhs` for a spin-0 right-hand side.
    /// `radial_weights` fixes the mean of the axisymmetric mode.
    pub fn solve_neg_laplacian(&self, rhs: &[Complex64], radial_weights: &[f64]) -> Option<Vec<Complex64>> {
        let nt = self.n_theta;
        let np = self.n_phi;
        let raw = self.rings_forward(rhs);
        let mut out = vec![Complex64::new(0.0, 0.0); nt * np];
        for b in 0..np {
            let Some(n) = self.fft.mode_of_bin(b) else { continue };
            let mut op = self.mode_laplacian(n);
            if n == 0 {
                // constants span the kernel; pin the weighted mean instead
                for j in 0..nt {
                    for l in 0..nt {
                        op[(j, l)] += radial_weights[l];
                    }
                }
            }
            let lu = op.lu();
            for part in 0..2 {
                let col = nalgebra::DVector::from_fn(nt, |j, _| {
                    let v = raw[j * np + b];
                    if part == 0 { v.re } else { v.im }
                });
                let sol = lu.solve(&col)?;
                for j in 0..nt {
                    if part == 0 {
                        out[j * np + b].re = sol[j];
                    } else {
                        out[j * np + b].im = sol[j];
                    }
                }
            }
        }
        Some(self.rings_inverse(out))
    }

    /// Largest eigenvalue magnitude of the discrete `-Delta` over all modes and the
    /// given spins; sets the explicit time-step bound for the heat flows.
    pub fn laplacian_spectral_radius(&self, spins: &[i64]) -> f64 {
        let mut worst: f64 = 0.0;
        for b in 0..self.n_phi {
            let Some(n) = self.fft.mode_of_bin(b) else { continue };
            for &s in spins {
                let basis = self.basis_for(n, s);
                let nt = self.n_theta;
                let op = DMatrix::from_fn(nt, nt, |j, l| {
                    let th = self.theta[j];
                    let mut v = -basis.d2[(j, l)] - basis.d1[(j, l)] / th.tan();
                    if j == l {
                        v += (n * n) as f64 / th.sin().powi(2);
                    }
                    v
                });
                for ev in op.complex_eigenvalues().iter() {
                    worst = worst.max(ev.norm());
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(grid: &QuadratureGrid, f: impl Fn([f64; 3]) -> f64) -> Vec<Complex64> {
        (0..grid.len()).map(|p| Complex64::new(f(grid.cartesian(p)), 0.0)).collect()
    }

    #[test]
    fn fft_coefficients_match_direct_sums() {
        let grid = QuadratureGrid::new(8, 12).unwrap();
        let fft = AngularFft::new(12);
        let ring: Vec<Complex64> =
            grid.phi().iter().map(|&p| Complex64::new((3.0 * p).cos() + 0.2, (p).sin())).collect();
        let mut raw = ring.clone();
        fft.forward_raw(&mut raw);
        for q in [-15i64, -3, 0, 1, 5, 13] {
            let direct: Complex64 = grid
                .phi()
                .iter()
                .zip(&ring)
                .map(|(&p, v)| v * Complex64::from_polar(1.0, -(q as f64) * p))
                .sum::<Complex64>()
                / 12.0;
            assert!((fft.coefficient(&raw, q) - direct).norm() < 1e-13, "q={q}");
        }
        let mut bins = vec![Complex64::new(0.0, 0.0); 12];
        fft.deposit(&mut bins, 17, Complex64::new(0.5, -1.0));
        fft.synthesize(&mut bins);
        for (l, &p) in grid.phi().iter().enumerate() {
            let want = Complex64::new(0.5, -1.0) * Complex64::from_polar(1.0, 17.0 * p);
            assert!((bins[l] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn harmonic_is_an_eigenfunction() {
        let grid = QuadratureGrid::new(24, 24).unwrap();
        let diff = ModalDifferentiator::new(&grid);
        let y = sample(&grid, |x| x[0] * x[2]);
        let ly = diff.neg_laplacian(&y);
        for (a, b) in ly.iter().zip(&y) {
            assert!((a - 6.0 * b).norm() < 1e-9);
        }
    }

    #[test]
    fn poisson_solve_recovers_harmonic() {
        let grid = QuadratureGrid::new(24, 24).unwrap();
        let diff = ModalDifferentiator::new(&grid);
        let y = sample(&grid, |x| 3.0 * x[2] * x[2] - 1.0 + x[1]);
        let want = sample(&grid, |x| (3.0 * x[2] * x[2] - 1.0) / 6.0 + x[1] / 2.0);
        let sol = diff.solve_neg_laplacian(&y, grid.radial_weights()).unwrap();
        for (a, b) in sol.iter().zip(&want) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn theta_derivative_of_smooth_field() {
        let grid = QuadratureGrid::new(20, 20).unwrap();
        let diff = ModalDifferentiator::new(&grid);
        let f = sample(&grid, |x| (0.3 * x[0] + 0.2 * x[1] * x[2]).exp());
        let d = diff.derivatives(&f, 0);
        for p in 0..grid.len() {
            let (it, ip) = grid.split_index(p);
            let (th, ph) = (grid.theta()[it], grid.phi()[ip]);
            let x = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
            let dx = [th.cos() * ph.cos(), th.cos() * ph.sin(), -th.sin()];
            let g = 0.3 * x[0] + 0.2 * x[1] * x[2];
            let dg = 0.3 * dx[0] + 0.2 * (dx[1] * x[2] + x[1] * dx[2]);
            assert!((d.t[p].re - g.exp() * dg).abs() < 1e-9);
        }
    }
}
