use num_complex::Complex64;

use super::balancing::{advance, balancing_step_guard, default_balancing_dt};
use super::heat::HeatFlow;
use super::FlowConfig;
use crate::bergman::{bergman_distance, BergmanSpace, HermitianInner};
use crate::error::{Error, Result};
use crate::fields::{endo_sup_norm, metric_relative_error, CurvatureOperator, EndoField, MetricField};
use crate::linalg::{self, CMat};
use crate::manifold::{QuadratureGrid, DIM, VOLUME};

/// Convergence threshold on the Hilbert-Schmidt norm of `mu0`.
pub const BALANCED_TOL: f64 = 1e-10;

/// `Phi_k` applied `m` times.
pub fn phi_iterate(space: &BergmanSpace, h0: &MetricField, m: usize) -> Result<MetricField> {
    let mut h = h0.clone();
    for _ in 0..m {
        h = space.phi_map(&h)?;
    }
    Ok(h)
}

/// `k^{-n} tr (U - V)^2` for the Bergman-space image `U` of the heat-flow velocity
/// `-A_1~(h)` and the balancing velocity `V = -k^{n+1} mu0(Hilb_k(h))`.
pub fn tangent_gap(space: &BergmanSpace, op: &CurvatureOperator, h: &MetricField) -> Result<f64> {
    let phi = op.a1_reduced(h)?.scale(-1.0);
    let u = space.hilb_tangent(h, &phi)?;
    let hi = space.hilb(h)?;
    let mu0 = space.moment_bar_zero(&hi)?;
    let k = space.k() as f64;
    let v = mu0.matrix().scale(-k.powi(DIM + 1));
    let d = u.matrix() - v;
    Ok(linalg::trace(&(&d * &d)).re / k.powi(DIM))
}

/// Exponents `a_i - mu(E)` of the exact split solution started at the
/// Fubini-Study metric.
pub fn split_reference_rates(degrees: &[i64]) -> Vec<f64> {
    let slope = degrees.iter().sum::<i64>() as f64 / (degrees.len() as f64 * VOLUME);
    degrees.iter().map(|&a| a as f64 - slope).collect()
}

/// `h(t) = diag(e^{-(a_i - mu) t}) h_FS`, the heat flow from the split Fubini-Study metric.
pub fn split_reference(degrees: &[i64], grid: &QuadratureGrid, t: f64) -> MetricField {
    let d: Vec<Complex64> = split_reference_rates(degrees).iter().map(|c| Complex64::new((-c * t).exp(), 0.0)).collect();
    let m = CMat::from_diagonal(&nalgebra::DVector::from_vec(d));
    let values = MetricField::fubini_study(degrees, grid).values().iter().map(|g| g * &m).collect();
    MetricField::new(degrees.to_vec(), values).expect("diagonal exponential of the reference metric is positive")
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Config(format!("slope fit needs at least two points, got {}", x.len().min(y.len()))));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::NonFinite("slope fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    Converged,
    ReachedTMax,
    Aborted(String),
}

/// One sampled row of a flow trace; unavailable diagnostics are `NaN`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub mu0_norm: f64,
    pub mu0_trace: f64,
    pub dk_ref: f64,
    pub sup_err: f64,
    pub lam_min: f64,
    pub lam_max: f64,
    pub cond_max: f64,
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
    pub steps: usize,
    pub stop: StopReason,
    /// Largest one-step increase of `|mu0|_HS` over accepted steps.
    pub max_mu0_increase: f64,
    pub final_inner: Option<HermitianInner>,
    pub final_metric: Option<MetricField>,
}

impl FlowTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

pub type Reference<'a> = &'a dyn Fn(f64) -> Result<MetricField>;

fn metric_diagnostics(
    h: &MetricField,
    op: Option<&CurvatureOperator>,
    reference: Option<&MetricField>,
) -> Result<(f64, f64, f64, f64)> {
    let cond = h.check_condition()?;
    let sup = match reference {
        Some(r) => metric_relative_error(h, r)?,
        None => f64::NAN,
    };
    let (lo, hi) = match op {
        Some(op) => op.curvature_extremes(h)?,
        None => (f64::NAN, f64::NAN),
    };
    Ok((sup, lo, hi, cond))
}

fn balancing_row(
    space: &BergmanSpace,
    h: &HermitianInner,
    t: f64,
    op: Option<&CurvatureOperator>,
    reference: Option<Reference>,
) -> Result<TraceRow> {
    let mu0 = space.moment_bar_zero(h)?;
    let g = space.fs(h)?;
    let r = reference.map(|f| f(t)).transpose()?;
    let dk = match &r {
        Some(r) => bergman_distance(h, &space.hilb(r)?, space.k())?,
        None => f64::NAN,
    };
    let (sup, lo, hi, cond) = metric_diagnostics(&g, op, r.as_ref())?;
    Ok(TraceRow {
        t,
        mu0_norm: mu0.hs_norm(),
        mu0_trace: mu0.trace(),
        dk_ref: dk,
        sup_err: sup,
        lam_min: lo,
        lam_max: hi,
        cond_max: cond,
    })
}

/// Integrates the normalized balancing flow to `t_max`, sampling diagnostics.
///
/// Stops early once `|mu0|_HS <= 1e-10`. Numerical failures end the run with
/// [`StopReason::Aborted`] and keep the rows recorded so far.
pub fn run_balancing(
    space: &BergmanSpace,
    h0: &HermitianInner,
    cfg: &FlowConfig,
    op: Option<&CurvatureOperator>,
    reference: Option<Reference>,
) -> Result<FlowTrace> {
    cfg.validate()?;
    let power = cfg.normalization_power();
    let mut trace = FlowTrace {
        rows: vec![balancing_row(space, h0, 0.0, op, reference)?],
        steps: 0,
        stop: StopReason::ReachedTMax,
        max_mu0_increase: f64::NEG_INFINITY,
        final_inner: None,
        final_metric: None,
    };
    let mut h = h0.clone();
    let mut t = 0.0;
    let mut mu0 = space.moment_bar_zero(&h)?;
    if mu0.hs_norm() <= BALANCED_TOL {
        trace.stop = StopReason::Converged;
    }
    let samples: Vec<f64> = (1..=cfg.samples).map(|j| cfg.t_max * j as f64 / cfg.samples as f64).collect();
    'outer: for &ts in &samples {
        if trace.stop == StopReason::Converged {
            break;
        }
        while t < ts * (1.0 - 1e-14) {
            let dt = match cfg.dt {
                Some(d) => d.min(balancing_step_guard(space.k(), power, &mu0)),
                None => default_balancing_dt(space.k(), power, &mu0),
            }
            .min(ts - t);
            let next = match advance(space, &h, &mu0, dt, cfg.integrator, power)
                .and_then(|n| space.moment_bar_zero(&n).map(|m| (n, m)))
            {
                Ok(v) => v,
                Err(e) => {
                    trace.stop = StopReason::Aborted(e.to_string());
                    break 'outer;
                }
            };
            trace.max_mu0_increase = trace.max_mu0_increase.max(next.1.hs_norm() - mu0.hs_norm());
            (h, mu0) = next;
            t += dt;
            trace.steps += 1;
            if mu0.hs_norm() <= BALANCED_TOL {
                trace.stop = StopReason::Converged;
                break;
            }
        }
        match balancing_row(space, &h, t, op, reference) {
            Ok(row) => trace.rows.push(row),
            Err(e) => {
                trace.stop = StopReason::Aborted(e.to_string());
                break;
            }
        }
    }
    trace.final_metric = space.fs(&h).ok();
    trace.final_inner = Some(h);
    Ok(trace)
}

fn heat_row(
    flow: &HeatFlow,
    h: &MetricField,
    t: f64,
    space: Option<&BergmanSpace>,
    reference: Option<Reference>,
) -> Result<TraceRow> {
    let r = reference.map(|f| f(t)).transpose()?;
    let (mu0_norm, mu0_trace, dk) = match space {
        Some(s) => {
            let hi = s.hilb(h)?;
            let mu0 = s.moment_bar_zero(&hi)?;
            let dk = match &r {
                Some(r) => bergman_distance(&hi, &s.hilb(r)?, s.k())?,
                None => f64::NAN,
            };
            (mu0.hs_norm(), mu0.trace(), dk)
        }
        None => (f64::NAN, f64::NAN, f64::NAN),
    };
    let (sup, lo, hi, cond) = metric_diagnostics(h, Some(flow.operator()), r.as_ref())?;
    Ok(TraceRow { t, mu0_norm, mu0_trace, dk_ref: dk, sup_err: sup, lam_min: lo, lam_max: hi, cond_max: cond })
}

/// Integrates a heat flow to `t_max`, sampling diagnostics.
pub fn run_heat(
    flow: &HeatFlow,
    h0: &MetricField,
    cfg: &FlowConfig,
    space: Option<&BergmanSpace>,
    reference: Option<Reference>,
) -> Result<FlowTrace> {
    cfg.validate()?;
    let dt_nominal = cfg.dt.unwrap_or_else(|| flow.default_dt());
    if dt_nominal > flow.dt_bound() {
        return Err(Error::StabilityBound { dt: dt_nominal, bound: flow.dt_bound() });
    }
    let mut trace = FlowTrace {
        rows: vec![heat_row(flow, h0, 0.0, space, reference)?],
        steps: 0,
        stop: StopReason::ReachedTMax,
        max_mu0_increase: f64::NAN,
        final_inner: None,
        final_metric: None,
    };
    let mut h = h0.clone();
    let mut t_prev = 0.0;
    'outer: for j in 1..=cfg.samples {
        let ts = cfg.t_max * j as f64 / cfg.samples as f64;
        let n = ((ts - t_prev) / dt_nominal).ceil().max(1.0) as usize;
        let dt = (ts - t_prev) / n as f64;
        for _ in 0..n {
            match flow.step(&h, dt) {
                Ok(next) => h = next,
                Err(e) => {
                    trace.stop = StopReason::Aborted(e.to_string());
                    break 'outer;
                }
            }
            trace.steps += 1;
        }
        t_prev = ts;
        match heat_row(flow, &h, ts, space, reference) {
            Ok(row) => trace.rows.push(row),
            Err(e) => {
                trace.stop = StopReason::Aborted(e.to_string());
                break;
            }
        }
    }
    trace.final_inner = space.and_then(|s| s.hilb(&h).ok());
    trace.final_metric = Some(h);
    Ok(trace)
}

/// Finite-difference check of the time derivative along the balancing flow:
/// `sup |h_k^{-1} dh_k/dt + A_1~(h(t))|` at time `t`, measured with `h(t)`.
pub fn c1_proxy(
    space: &BergmanSpace,
    op: &CurvatureOperator,
    h0: &HermitianInner,
    t: f64,
    delta: f64,
    dt: f64,
    reference: &MetricField,
) -> Result<f64> {
    let power = DIM + 1;
    let march = |h: &HermitianInner, span: f64| -> Result<HermitianInner> {
        let n = (span / dt).ceil().max(1.0) as usize;
        let step = span / n as f64;
        let mut h = h.clone();
        for _ in 0..n {
            let mu0 = space.moment_bar_zero(&h)?;
            h = advance(space, &h, &mu0, step, super::Integrator::ExpEuler, power)?;
        }
        Ok(h)
    };
    let before = march(h0, t - delta)?;
    let mid = march(&before, delta)?;
    let after = march(&mid, delta)?;
    let (g0, g1, g2) = (space.fs(&before)?, space.fs(&mid)?, space.fs(&after)?);
    let velocity: Vec<CMat> = g0
        .values()
        .iter()
        .zip(g1.values())
        .zip(g2.values())
        .map(|((a, b), c)| b.clone().try_inverse().unwrap_or_else(|| CMat::zeros(b.nrows(), b.ncols())) * (c - a).scale(0.5 / delta))
        .collect();
    let target = op.a1_reduced(reference)?;
    let defect = EndoField::new(velocity).add(&target)?;
    endo_sup_norm(&defect, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Perturbation;
    use crate::flows::Integrator;
    use crate::manifold::ModelConfig;

    #[test]
    fn slope_of_a_power_law() {
        let x = [8.0, 16.0, 32.0, 64.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((fit_slope(&x, &y).unwrap() + 1.5).abs() < 1e-12);
        assert!(fit_slope(&[8.0], &[1.0]).is_err());
    }

    #[test]
    fn phi_iterate_zero_and_fixed_point() {
        let s = BergmanSpace::with_default_grid(&ModelConfig::new(vec![1, 1], 3).unwrap()).unwrap();
        let h = Perturbation::new(&[1, 1], 1, 0.2).metric(s.grid()).unwrap();
        assert_eq!(phi_iterate(&s, &h, 0).unwrap(), h);
        let fs = MetricField::fubini_study(&[1, 1], s.grid());
        let out = phi_iterate(&s, &fs, 5).unwrap();
        assert!(crate::fields::metric_sup_distance(&out, &fs).unwrap() < 1e-10);
    }

    #[test]
    fn tangent_gap_vanishes_at_einstein_metric() {
        let s = BergmanSpace::with_default_grid(&ModelConfig::new(vec![0, 0], 4).unwrap()).unwrap();
        let op = CurvatureOperator::new(s.grid());
        let fs = MetricField::fubini_study(&[0, 0], s.grid());
        assert!(tangent_gap(&s, &op, &fs).unwrap().abs() < 1e-12);
    }

    #[test]
    fn balanced_start_converges_immediately() {
        let s = BergmanSpace::with_default_grid(&ModelConfig::new(vec![2], 3).unwrap()).unwrap();
        let h = s.hilb(&MetricField::fubini_study(&[2], s.grid())).unwrap();
        let trace = run_balancing(&s, &h, &FlowConfig::new(1.0), None, None).unwrap();
        assert_eq!(trace.steps, 0);
        assert_eq!(trace.stop, StopReason::Converged);
    }

    #[test]
    fn split_flow_tracks_closed_form_rate() {
        let k = 6;
        let s = BergmanSpace::with_default_grid(&ModelConfig::new(vec![1, -1], k).unwrap()).unwrap();
        let h = s.hilb(&MetricField::fubini_study(&[1, -1], s.grid())).unwrap();
        let cfg = FlowConfig::new(0.5).with_dt(0.01).with_integrator(Integrator::ExpEuler).with_samples(1);
        let grid = s.grid().clone();
        let reference = move |t: f64| Ok(split_reference(&[1, -1], &grid, t));
        let trace = run_balancing(&s, &h, &cfg, None, Some(&reference)).unwrap();
        let g = trace.final_metric.unwrap();
        let rate = (k * k) as f64 / ((k + 1) * (k + 2)) as f64;
        // FS_k(Hilb_k(h_FS)) already rescales the first summand by (k+1)/(k+2)
        let want = (k + 1) as f64 / (k + 2) as f64 * (-rate * 0.5f64).exp();
        assert!((g.values()[0][(0, 0)].re - want).abs() < 1e-10, "{} vs {want}, {:?}", g.values()[0][(0, 0)].re, trace.stop);
        assert!(trace.max_mu0_increase <= 1e-12);
    }
}
