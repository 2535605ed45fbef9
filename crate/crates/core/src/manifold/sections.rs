use std::ops::Range;

use num_complex::Complex64;

use super::spectral::AngularFft;
use super::{binomial, ModelConfig, QuadratureGrid};
use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Monomial sections of `E(k)` evaluated on a grid.
///
/// Section `alpha` of summand `i` is `z^j e_i` with `0 <= j <= m_i = a_i + k`.
/// Values are stored in the frame that is unitary for the reference
/// Fubini-Study metric of each summand and are scaled by `sqrt(C(m_i, j))`,
/// so that the stored section is
///
/// ```text
/// sqrt(C(m, j) u^j (1 - u)^(m - j)) e^{i j phi}
/// ```
///
/// in row `i`. The scaling keeps Gram matrices well conditioned at large
/// `k`; [`SectionBasis::monomial_scale`] converts to the plain monomials.
#[derive(Debug, Clone)]
pub struct SectionBasis {
    model: ModelConfig,
    blocks: Vec<Range<usize>>,
    block_of: Vec<usize>,
    power: Vec<usize>,
    n_theta: usize,
    n_phi: usize,
    // radial[alpha * n_theta + i_theta]
    radial: Vec<f64>,
    fft: AngularFft,
}

impl SectionBasis {
    pub fn new(model: &ModelConfig, grid: &QuadratureGrid) -> Result<Self> {
        model.validate()?;
        let degrees = model.twisted_degrees();
        let max_m = model.max_twisted_degree();
        grid.check_exactness(2 * max_m)?;
        if grid.n_phi() <= 2 * max_m {
            return Err(Error::ResolutionTooLow(format!(
                "{} angle nodes cannot resolve products of degree-{max_m} sections",
                grid.n_phi()
            )));
        }
        let mut blocks = Vec::with_capacity(degrees.len());
        let mut block_of = Vec::new();
        let mut power = Vec::new();
        for (i, &m) in degrees.iter().enumerate() {
            let start = block_of.len();
            for j in 0..=m {
                block_of.push(i);
                power.push(j);
            }
            blocks.push(start..block_of.len());
        }
        let nt = grid.n_theta();
        let mut radial = vec![0.0; block_of.len() * nt];
        for (alpha, (&i, &j)) in block_of.iter().zip(&power).enumerate() {
            let m = degrees[i];
            let log_c = binomial(m, j).ln();
            for (it, &u) in grid.u().iter().enumerate() {
                let l = 0.5 * (log_c + j as f64 * u.ln() + (m - j) as f64 * (1.0 - u).ln());
                radial[alpha * nt + it] = l.exp();
            }
        }
        Ok(Self {
            model: model.clone(),
            blocks,
            block_of,
            power,
            n_theta: nt,
            n_phi: grid.n_phi(),
            radial,
            fft: AngularFft::new(grid.n_phi()),
        })
    }

    pub fn model(&self) -> &ModelConfig {
        &self.model
    }

    pub fn rank(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_sections(&self) -> usize {
        self.block_of.len()
    }

    pub fn block_index(&self, alpha: usize) -> usize {
        self.block_of[alpha]
    }

    pub fn block(&self, i: usize) -> Range<usize> {
        self.blocks[i].clone()
    }

    /// Exponent `j` of the monomial `z^j` carried by section `alpha`.
    pub fn power(&self, alpha: usize) -> usize {
        self.power[alpha]
    }

    /// `sqrt(C(m, j))`: stored section = plain monomial times this factor.
    pub fn monomial_scale(&self, alpha: usize) -> f64 {
        let m = self.model.twisted_degrees()[self.block_of[alpha]];
        binomial(m, self.power[alpha]).sqrt()
    }

    /// Fibre weight `(1 + |z|^2)^{-(a_i + k)}` of the reference metric on summand `i`.
    pub fn sigma_k_weight(&self, grid: &QuadratureGrid, p: usize, i: usize) -> f64 {
        let (it, _) = grid.split_index(p);
        let m = self.model.twisted_degrees()[i] as i32;
        (1.0 - grid.u()[it]).powi(m)
    }

    pub fn radial(&self, alpha: usize, i_theta: usize) -> f64 {
        self.radial[alpha * self.n_theta + i_theta]
    }

    /// The `r x N` matrix of section values at point `p`.
    pub fn eval_point(&self, grid: &QuadratureGrid, p: usize) -> CMat {
        let (it, ip) = grid.split_index(p);
        let phi = grid.phi()[ip];
        let mut s = CMat::zeros(self.rank(), self.n_sections());
        for alpha in 0..self.n_sections() {
            s[(self.block_of[alpha], alpha)] =
                Complex64::from_polar(self.radial(alpha, it), self.power[alpha] as f64 * phi);
        }
        s
    }

    /// Converts a matrix on sections from this basis to the plain monomial basis.
    pub fn to_monomial_frame(&self, h: &CMat) -> CMat {
        let n = self.n_sections();
        CMat::from_fn(n, n, |a, b| h[(a, b)] / (self.monomial_scale(a) * self.monomial_scale(b)))
    }

    pub fn from_monomial_frame(&self, h: &CMat) -> CMat {
        let n = self.n_sections();
        CMat::from_fn(n, n, |a, b| h[(a, b)] * (self.monomial_scale(a) * self.monomial_scale(b)))
    }

    fn check_grid(&self, grid: &QuadratureGrid, len: usize) -> Result<()> {
        if grid.n_theta() != self.n_theta || grid.n_phi() != self.n_phi || len != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "field of {len} points on a {}x{} basis",
                self.n_theta, self.n_phi
            )));
        }
        Ok(())
    }

    /// `sum_p w_p S(p)^dagger F(p) S(p)` for an `r x r` matrix field `F`.
    pub fn gram(&self, grid: &QuadratureGrid, field: &[CMat]) -> Result<CMat> {
        self.check_grid(grid, field.len())?;
        let r = self.rank();
        let n = self.n_sections();
        let np = self.n_phi;
        let mut out = CMat::zeros(n, n);
        let mut ring = vec![Complex64::new(0.0, 0.0); np];
        // the FFT coefficient carries 1/n_phi, so rings are weighted by n_phi w_p
        let scale = np as f64;
        for it in 0..self.n_theta {
            for i in 0..r {
                for i2 in 0..r {
                    for (l, v) in ring.iter_mut().enumerate() {
                        let p = it * np + l;
                        *v = field[p][(i, i2)] * (scale * grid.weights()[p]);
                    }
                    if ring.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
                        continue;
                    }
                    self.fft.forward_raw(&mut ring);
                    for a in self.block(i) {
                        let ca = self.radial(a, it);
                        for b in self.block(i2) {
                            let q = self.power[a] as i64 - self.power[b] as i64;
                            out[(a, b)] += self.fft.coefficient(&ring, q) * (ca * self.radial(b, it));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `S(p) X S(p)^dagger` at every grid point.
    pub fn synth(&self, grid: &QuadratureGrid, x: &CMat) -> Result<Vec<CMat>> {
        self.check_grid(grid, grid.len())?;
        let n = self.n_sections();
        if x.nrows() != n || x.ncols() != n {
            return Err(Error::ShapeMismatch(format!("{}x{} matrix on {n} sections", x.nrows(), x.ncols())));
        }
        let r = self.rank();
        let np = self.n_phi;
        let zero = Complex64::new(0.0, 0.0);
        let mut out = vec![CMat::zeros(r, r); grid.len()];
        let mut bins = vec![zero; np];
        for it in 0..self.n_theta {
            for i in 0..r {
                for i2 in 0..r {
                    bins.iter_mut().for_each(|b| *b = zero);
                    for a in self.block(i) {
                        let ca = self.radial(a, it);
                        for b in self.block(i2) {
                            let q = self.power[a] as i64 - self.power[b] as i64;
                            self.fft.deposit(&mut bins, q, x[(a, b)] * (ca * self.radial(b, it)));
                        }
                    }
                    self.fft.synthesize(&mut bins);
                    for (l, v) in bins.iter().enumerate() {
                        out[it * np + l][(i, i2)] = *v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Point-by-point version of [`SectionBasis::gram`].
    pub fn gram_direct(&self, grid: &QuadratureGrid, field: &[CMat]) -> Result<CMat> {
        self.check_grid(grid, field.len())?;
        let n = self.n_sections();
        let mut out = CMat::zeros(n, n);
        for (p, f) in field.iter().enumerate() {
            let s = self.eval_point(grid, p);
            out += (s.adjoint() * f * &s) * Complex64::new(grid.weights()[p], 0.0);
        }
        Ok(out)
    }

    /// Point-by-point version of [`SectionBasis::synth`].
    pub fn synth_direct(&self, grid: &QuadratureGrid, x: &CMat) -> Result<Vec<CMat>> {
        self.check_grid(grid, grid.len())?;
        Ok((0..grid.len())
            .map(|p| {
                let s = self.eval_point(grid, p);
                &s * x * s.adjoint()
            })
            .collect())
    }
}
