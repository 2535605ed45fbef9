use num_complex::Complex64;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `j! (m-j)! / (m+1)!`, the exact Fubini-Study integral of `|z|^{2j} / (1+|z|^2)^m`.
pub fn fs_monomial_integral(j: usize, m: usize) -> f64 {
    1.0 / ((m as f64 + 1.0) * binomial(m, j))
}

pub fn binomial(m: usize, j: usize) -> f64 {
    let j = j.min(m - j);
    let mut acc = 1.0;
    for i in 0..j {
        acc = acc * (m - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Product grid on the Riemann sphere.
///
/// The radial variable is `u = |z|^2 / (1 + |z|^2)`, in which the normalized
/// Fubini-Study area form becomes `du dphi / 2 pi`; Gauss-Legendre nodes in `u`
/// and a half-step offset trapezoid rule in the angle make the rule exact for
/// `u^j (1-u)^{m-j} e^{i q phi}` whenever `m < 2 n_theta` and `|q| < n_phi`.
///
/// Points are stored theta-major: `p = i_theta * n_phi + i_phi`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    n_theta: usize,
    n_phi: usize,
    u: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    radial_weights: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 8 || n_phi < 8 {
            return Err(Error::ResolutionTooLow(format!(
                "grid {n_theta}x{n_phi} is below the 8x8 minimum"
            )));
        }
        let (x, w) = gauss_legendre(n_theta);
        let u: Vec<f64> = x.iter().map(|&x| 0.5 * (1.0 + x)).collect();
        let radial_weights: Vec<f64> = w.iter().map(|&w| 0.5 * w).collect();
        let theta = u.iter().map(|&u| (1.0 - 2.0 * u).acos()).collect();
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let phi = (0..n_phi).map(|l| (l as f64 + 0.5) * dphi).collect();
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for &wr in &radial_weights {
            for _ in 0..n_phi {
                weights.push(wr / n_phi as f64);
            }
        }
        Ok(Self { n_theta, n_phi, u, theta, phi, radial_weights, weights })
    }

    /// Builds a grid and checks that it integrates every FS-weighted monomial
    /// of total degree `degree` exactly, and resolves angular modes up to
    /// `degree / 2`.
    pub fn for_degree(n_theta: usize, n_phi: usize, degree: usize) -> Result<Self> {
        let grid = Self::new(n_theta, n_phi)?;
        grid.check_exactness(degree)?;
        Ok(grid)
    }

    /// Smallest comfortable grid for sections of degree up to `max_degree`.
    pub fn default_for(max_degree: usize) -> Result<Self> {
        let nt = (max_degree + 12).max(16).next_multiple_of(2);
        let np = (2 * max_degree + 24).max(16).next_multiple_of(2);
        Self::for_degree(nt, np, 2 * max_degree)
    }

    pub fn check_exactness(&self, degree: usize) -> Result<()> {
        for m in 0..=degree {
            for j in 0..=m {
                let exact = fs_monomial_integral(j, m);
                let approx: f64 = self
                    .u
                    .iter()
                    .zip(&self.radial_weights)
                    .map(|(&u, &w)| w * u.powi(j as i32) * (1.0 - u).powi((m - j) as i32))
                    .sum();
                if ((approx - exact) / exact).abs() > 1e-10 {
                    return Err(Error::ResolutionTooLow(format!(
                        "radial rule with {} nodes misses |z|^{}/(1+|z|^2)^{} (rel err {:e})",
                        self.n_theta,
                        2 * j,
                        m,
                        ((approx - exact) / exact).abs()
                    )));
                }
            }
        }
        for q in 1..=(degree / 2) {
            let s: Complex64 = self.phi.iter().map(|&p| Complex64::from_polar(1.0, q as f64 * p)).sum();
            if s.norm() / self.n_phi as f64 > 1e-12 {
                return Err(Error::ResolutionTooLow(format!(
                    "angular rule with {} nodes aliases mode {q}",
                    self.n_phi
                )));
            }
        }
        Ok(())
    }

    /// Same nodes, weights multiplied pointwise by `density`.
    pub fn reweighted(&self, density: &[f64]) -> Result<Self> {
        if density.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "density has {} entries for {} points",
                density.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        for (w, &d) in out.weights.iter_mut().zip(density) {
            *w *= d;
        }
        Ok(out)
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn index(&self, i_theta: usize, i_phi: usize) -> usize {
        i_theta * self.n_phi + i_phi
    }

    pub fn split_index(&self, p: usize) -> (usize, usize) {
        (p / self.n_phi, p % self.n_phi)
    }

    /// Affine chart coordinate of point `p`.
    pub fn z(&self, p: usize) -> Complex64 {
        let (it, ip) = self.split_index(p);
        let u = self.u[it];
        Complex64::from_polar((u / (1.0 - u)).sqrt(), self.phi[ip])
    }

    /// Unit-sphere embedding `(x1, x2, x3)` of point `p`.
    pub fn cartesian(&self, p: usize) -> [f64; 3] {
        let (it, ip) = self.split_index(p);
        let u = self.u[it];
        let s = 2.0 * (u * (1.0 - u)).sqrt();
        [s * self.phi[ip].cos(), s * self.phi[ip].sin(), 1.0 - 2.0 * u]
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        let g = QuadratureGrid::new(64, 64).unwrap();
        assert!((g.volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_small_cases() {
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert_eq!(x[1], 0.0);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn constant_and_beta_integrals() {
        let g = QuadratureGrid::new(16, 16).unwrap();
        let ones = vec![1.0; g.len()];
        assert!((g.integrate(&ones) - 1.0).abs() < 1e-14);
        // |z|^2/(1+|z|^2)^2 = u(1-u); exact value 1/6
        let f: Vec<f64> = (0..g.len())
            .map(|p| {
                let r2 = g.z(p).norm_sqr();
                r2 / (1.0 + r2).powi(2)
            })
            .collect();
        assert!((g.integrate(&f) - 1.0 / 6.0).abs() < 1e-10);
    }

    #[test]
    fn too_small_grid_is_rejected() {
        assert!(matches!(QuadratureGrid::new(4, 16), Err(Error::ResolutionTooLow(_))));
        assert!(QuadratureGrid::for_degree(8, 8, 40).is_err());
        assert!(QuadratureGrid::for_degree(24, 48, 40).is_ok());
    }

    #[test]
    fn no_node_on_the_poles() {
        let g = QuadratureGrid::new(9, 8).unwrap();
        assert!(g.theta().iter().all(|&t| t > 0.0 && t < std::f64::consts::PI));
    }
}
