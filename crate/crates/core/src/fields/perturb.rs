use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EndoField, MetricField};
use crate::error::Result;
use crate::linalg::{self, CMat};
use crate::manifold::QuadratureGrid;

/// Seeded smooth Hermitian-matrix valued function `A` on the sphere, used to
/// build perturbed metrics `exp(A) h_FS`.
///
/// Diagonal entries are real combinations of spherical harmonics of degree at
/// most two. The off-diagonal entry `(i, j)` has to be a smooth section of
/// `O(a_j - a_i)` tensored with its conjugate, so it is a combination of
/// `z^p (1 + |z|^2)^{-d/2}` (or the conjugates) with `0 <= p <= d`,
/// `d = |a_i - a_j|`. The coefficients are rescaled so that the operator norm
/// of `A` never exceeds the amplitude.
#[derive(Debug, Clone)]
pub struct Perturbation {
    degrees: Vec<i64>,
    diag: Vec<[f64; 8]>,
    // (i, j, coefficients) with i < j
    off: Vec<(usize, usize, Vec<Complex64>)>,
}

fn diag_basis(x: [f64; 3]) -> [f64; 8] {
    [
        x[0],
        x[1],
        x[2],
        x[0] * x[2],
        x[1] * x[2],
        x[0] * x[1],
        x[0] * x[0] - x[1] * x[1],
        0.5 * (3.0 * x[2] * x[2] - 1.0),
    ]
}

impl Perturbation {
    pub fn new(degrees: &[i64], seed: u64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = degrees.len();
        let mut diag: Vec<[f64; 8]> = (0..r)
            .map(|_| {
                let mut c = [0.0; 8];
                c.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
                c
            })
            .collect();
        let mut off = Vec::new();
        for i in 0..r {
            for j in i + 1..r {
                let d = (degrees[i] - degrees[j]).unsigned_abs() as usize;
                let n = if d == 0 { 3 } else { d + 1 };
                let c: Vec<Complex64> =
                    (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                off.push((i, j, c));
            }
        }
        // every basis function is bounded by one in modulus
        let mut rows = vec![0.0; r];
        for (i, c) in diag.iter().enumerate() {
            rows[i] += c.iter().map(|v| v.abs()).sum::<f64>();
        }
        for (i, j, c) in &off {
            let s: f64 = c.iter().map(|v| v.norm()).sum();
            rows[*i] += s;
            rows[*j] += s;
        }
        let bound = rows.iter().cloned().fold(0.0, f64::max);
        let scale = if bound > 0.0 { amplitude / bound } else { 0.0 };
        for c in &mut diag {
            c.iter_mut().for_each(|v| *v *= scale);
        }
        for (_, _, c) in &mut off {
            c.iter_mut().for_each(|v| *v *= scale);
        }
        Self { degrees: degrees.to_vec(), diag, off }
    }

    /// `A` at colatitude `theta` and angle `phi`, in the unitary reference frame.
    pub fn eval(&self, theta: f64, phi: f64) -> CMat {
        let r = self.degrees.len();
        let (st, ct) = theta.sin_cos();
        let x = [st * phi.cos(), st * phi.sin(), ct];
        let b = diag_basis(x);
        let mut a = CMat::zeros(r, r);
        for (i, c) in self.diag.iter().enumerate() {
            a[(i, i)] = Complex64::new(c.iter().zip(&b).map(|(c, b)| c * b).sum(), 0.0);
        }
        let (sh, ch) = (0.5 * theta).sin_cos();
        for (i, j, c) in &self.off {
            let d = self.degrees[*i] - self.degrees[*j];
            let v = if d == 0 {
                c[0] + c[1] * x[2] + c[2] * Complex64::new(x[0], x[1])
            } else {
                let n = d.unsigned_abs() as i32;
                let mut v = Complex64::new(0.0, 0.0);
                for (p, cp) in c.iter().enumerate() {
                    let p = p as i32;
                    let sign = if d > 0 { 1.0 } else { -1.0 };
                    v += cp * Complex64::from_polar(sh.powi(p) * ch.powi(n - p), sign * p as f64 * phi);
                }
                v
            };
            a[(*i, *j)] = v;
            a[(*j, *i)] = v.conj();
        }
        a
    }

    /// The field `A` on a grid.
    pub fn field(&self, grid: &QuadratureGrid) -> EndoField {
        EndoField::new(
            (0..grid.len())
                .map(|p| {
                    let (it, ip) = grid.split_index(p);
                    self.eval(grid.theta()[it], grid.phi()[ip])
                })
                .collect(),
        )
    }

    /// The metric `exp(A)` relative to the split Fubini-Study metric.
    pub fn metric(&self, grid: &QuadratureGrid) -> Result<MetricField> {
        let values = self.field(grid).values().iter().map(linalg::expm_hermitian).collect();
        MetricField::new(self.degrees.clone(), values)
    }
}
