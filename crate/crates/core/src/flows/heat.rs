use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Integrator;
use crate::error::{Error, Result};
use crate::fields::{CurvatureOperator, EndoField, MetricField};
use crate::linalg::CMat;
use crate::manifold::QuadratureGrid;

/// Right-hand side of the metric heat flow `h^{-1} dh/dt = -v(h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeatMode {
    /// `v = A_1(h) - mean`, the trace-average-free CTYZ coefficient.
    #[default]
    Modified,
    /// `v = (i / 2 pi) Lambda F_h - mu(E)`.
    Donaldson,
}

/// RK4 stability interval on the negative real axis is about 2.785.
const RK4_REAL_STABILITY: f64 = 2.78;

const DEFAULT_FRACTION: f64 = 0.8;

/// Method-of-lines integrator for the heat flows on a fixed grid.
#[derive(Debug, Clone)]
pub struct HeatFlow {
    op: CurvatureOperator,
    mode: HeatMode,
    integrator: Integrator,
    bound: f64,
}

impl HeatFlow {
    /// Sets the explicit step bound from the spectral radius of the velocity's
    /// Jacobian at the split Fubini-Study metric, found by power iteration.
    pub fn new(grid: &QuadratureGrid, degrees: &[i64], mode: HeatMode, integrator: Integrator) -> Self {
        let op = CurvatureOperator::new(grid);
        let interval = match integrator {
            Integrator::Rk4 => RK4_REAL_STABILITY,
            Integrator::Euler | Integrator::ExpEuler => 2.0,
        };
        let mut flow = Self { op, mode, integrator, bound: f64::INFINITY };
        let fs = MetricField::fubini_study(degrees, grid);
        let radius = flow.jacobian_radius(&fs).max(flow.op.laplacian_radius(degrees));
        flow.bound = interval / radius;
        flow
    }

    /// Power-iteration estimate of the largest `|lambda|` of `x -> dv(h exp(t x))/dt`
    /// on `h`-self-adjoint fields.
    pub fn jacobian_radius(&self, h: &MetricField) -> f64 {
        const ITERATIONS: usize = 60;
        const EPS: f64 = 1e-6;
        let Ok(v0) = self.velocity(h) else { return 0.0 };
        let r = h.rank();
        let start = (0..h.len())
            .map(|p| CMat::from_fn(r, r, |i, j| Complex64::new(((p * 7 + i * 3 + j) % 5) as f64 - 2.0, 0.0)))
            .collect();
        let Ok(mut x) = EndoField::new(start).self_adjoint_part(h) else { return 0.0 };
        let norm = |x: &EndoField| x.values().iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        let mut lambda = 0.0;
        for _ in 0..ITERATIONS {
            let n = norm(&x);
            if !(n > 0.0) {
                break;
            }
            x = x.scale(1.0 / n);
            let jx = h
                .exp_update(&x, -EPS)
                .and_then(|hp| self.velocity(&hp))
                .and_then(|v| v.sub(&v0))
                .and_then(|d| d.scale(1.0 / EPS).self_adjoint_part(h));
            match jx {
                Ok(jx) => {
                    lambda = norm(&jx);
                    x = jx;
                }
                Err(_) => break,
            }
        }
        lambda
    }

    pub fn operator(&self) -> &CurvatureOperator {
        &self.op
    }

    pub fn mode(&self) -> HeatMode {
        self.mode
    }

    /// Largest stable step for this grid.
    pub fn dt_bound(&self) -> f64 {
        self.bound
    }

    /// Default step, with a margin for the drift of the spectrum along the flow.
    pub fn default_dt(&self) -> f64 {
        DEFAULT_FRACTION * self.bound
    }

    pub fn velocity(&self, h: &MetricField) -> Result<EndoField> {
        match self.mode {
            HeatMode::Modified => self.op.a1_reduced(h),
            HeatMode::Donaldson => self.op.donaldson_velocity(h),
        }
    }

    /// One step; every stage is a multiplicative update `h exp(-c dt v)`.
    pub fn step(&self, h: &MetricField, dt: f64) -> Result<MetricField> {
        if dt > self.bound {
            return Err(Error::StabilityBound { dt, bound: self.bound });
        }
        let k1 = self.velocity(h)?;
        let v = match self.integrator {
            Integrator::Euler | Integrator::ExpEuler => k1,
            Integrator::Rk4 => {
                let k2 = self.velocity(&h.exp_update(&k1, 0.5 * dt)?)?;
                let k3 = self.velocity(&h.exp_update(&k2, 0.5 * dt)?)?;
                let k4 = self.velocity(&h.exp_update(&k3, dt)?)?;
                let sum = k1.add(&k2.scale(2.0))?.add(&k3.scale(2.0))?.add(&k4)?;
                sum.scale(1.0 / 6.0).self_adjoint_part(h)?
            }
        };
        let next = h.exp_update(&v, dt)?;
        let growth = v.values().iter().map(|m| m.norm()).fold(0.0, f64::max) * dt;
        if !growth.is_finite() || growth > 1.0 {
            return Err(Error::StepRejected(format!("relative update {growth:e} in one step of {dt:e}; the flow is unstable")));
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{metric_relative_error, metric_sup_distance, Perturbation};

    #[test]
    fn einstein_metric_is_stationary() {
        let grid = QuadratureGrid::new(12, 12).unwrap();
        let flow = HeatFlow::new(&grid, &[2, 2], HeatMode::Modified, Integrator::Rk4);
        let h = MetricField::fubini_study(&[2, 2], &grid);
        let next = flow.step(&h, flow.default_dt()).unwrap();
        assert!(metric_sup_distance(&h, &next).unwrap() < 1e-10);
    }

    #[test]
    fn split_bundle_exponential_solution() {
        let grid = QuadratureGrid::new(12, 12).unwrap();
        for mode in [HeatMode::Modified, HeatMode::Donaldson] {
            let flow = HeatFlow::new(&grid, &[1, -1], mode, Integrator::Rk4);
            let mut h = MetricField::fubini_study(&[1, -1], &grid);
            let dt = 1e-3;
            for _ in 0..500 {
                h = flow.step(&h, dt).unwrap();
            }
            let d = |t: f64| {
                CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
                    Complex64::new((-t).exp(), 0.0),
                    Complex64::new(t.exp(), 0.0),
                ]))
            };
            let exact = MetricField::new(vec![1, -1], vec![d(0.5); grid.len()]).unwrap();
            assert!(metric_relative_error(&h, &exact).unwrap() < 1e-6);
        }
    }

    #[test]
    fn rk4_self_convergence() {
        // successive halvings of dt: differences must shrink by well over 3.5
        let grid = QuadratureGrid::new(12, 12).unwrap();
        let flow = HeatFlow::new(&grid, &[1, -1], HeatMode::Donaldson, Integrator::Rk4);
        let h0 = Perturbation::new(&[1, -1], 8, 0.3).metric(&grid).unwrap();
        let t_end = 0.02;
        let run = |n: usize| {
            let mut h = h0.clone();
            for _ in 0..n {
                h = flow.step(&h, t_end / n as f64).unwrap();
            }
            h
        };
        let n = (t_end / flow.default_dt()).ceil() as usize;
        let (a, b, c) = (run(n), run(2 * n), run(4 * n));
        let e1 = metric_relative_error(&a, &b).unwrap();
        let e2 = metric_relative_error(&b, &c).unwrap();
        assert!(e1 / e2 > 3.5, "ratio {} ({e1:e} -> {e2:e})", e1 / e2);
    }

    #[test]
    fn modified_flow_conserves_log_volume() {
        let grid = QuadratureGrid::new(14, 14).unwrap();
        let flow = HeatFlow::new(&grid, &[1, 0], HeatMode::Modified, Integrator::Rk4);
        let mut h = Perturbation::new(&[1, 0], 4, 0.3).metric(&grid).unwrap();
        let logdet = |h: &MetricField| {
            let v: Vec<f64> = h.values().iter().map(|g| g.determinant().re.ln()).collect();
            grid.integrate(&v)
        };
        let before = logdet(&h);
        let dt = flow.default_dt();
        let steps = (0.2 / dt).ceil() as usize;
        for _ in 0..steps {
            h = flow.step(&h, 0.2 / steps as f64).unwrap();
        }
        assert!((logdet(&h) - before).abs() < 1e-8);
    }

    #[test]
    fn oversized_step_is_refused() {
        let grid = QuadratureGrid::new(12, 12).unwrap();
        let flow = HeatFlow::new(&grid, &[0], HeatMode::Modified, Integrator::Rk4);
        let h = MetricField::fubini_study(&[0], &grid);
        assert!(matches!(flow.step(&h, 2.0 * flow.dt_bound()), Err(Error::StabilityBound { .. })));
    }
}
