use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, FileFormat, InitialSpec, OutputFormat};
use crate::bergman::{bergman_distance, BergmanSpace, HermitianInner};
use crate::error::{Error, Result};
use crate::fields::{endo_sup_norm, metric_relative_error, CurvatureOperator, EndoField, MetricField, Perturbation};
use crate::flows::{
    c1_proxy, fit_slope, omega_prime_weights, phi_iterate, run_balancing, run_heat, split_reference, tangent_gap,
    FlowConfig, FlowTrace, HeatFlow, HeatMode, Integrator, StopReason, VolumeMode,
};
use crate::io;
use crate::linalg::{self, CMat};
use crate::manifold::{QuadratureGrid, DIM};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CRITERION_FAILED: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_SOFTWARE: i32 = 70;
pub const EXIT_IO: i32 = 74;

pub const THM1_SLOPE: f64 = -0.8;
pub const THM2_SLOPE: f64 = -0.8;
pub const CTYZ_SLOPE: f64 = -1.8;
pub const QK_SLOPE: f64 = -0.9;
pub const TANGENT_SLOPE: f64 = -1.8;

/// Half-width of the centred difference in the time-derivative check.
const C1_DELTA: f64 = 0.01;
const C1_DT: f64 = 2.5e-3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidModel(_) | Error::ResolutionTooLow(_) => EXIT_USAGE,
        Error::Format(_) | Error::ShapeMismatch(_) => EXIT_DATA,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_SOFTWARE,
    }
}

/// Exit status and the JSON summary of one command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub summary: Value,
}

pub fn grid_for(cfg: &ExperimentConfig, k: u32) -> Result<QuadratureGrid> {
    match cfg.grid {
        Some(g) => QuadratureGrid::new(g.n_theta, g.n_phi),
        None => QuadratureGrid::default_for(cfg.model.with_k(k)?.max_twisted_degree()),
    }
}

pub fn space_for(cfg: &ExperimentConfig, k: u32) -> Result<BergmanSpace> {
    let model = cfg.model.with_k(k)?;
    let mut grid = grid_for(cfg, k)?;
    if cfg.flow.volume_mode == VolumeMode::OmegaPrime {
        grid = omega_prime_weights(&grid, k, None)?;
    }
    BergmanSpace::new(&model, &grid)
}

pub enum Initial {
    Metric(MetricField),
    /// Inner product in the plain monomial basis.
    Inner(CMat),
}

pub fn initial_state(cfg: &ExperimentConfig, grid: &QuadratureGrid) -> Result<Initial> {
    let degrees = &cfg.model.degrees;
    match &cfg.initial {
        InitialSpec::Fs {} => Ok(Initial::Metric(MetricField::fubini_study(degrees, grid))),
        InitialSpec::FsPerturbed { seed, amplitude } => {
            Ok(Initial::Metric(Perturbation::new(degrees, *seed, *amplitude).metric(grid)?))
        }
        InitialSpec::File { path, format } => {
            let format = format.unwrap_or_else(|| FileFormat::infer(path));
            let bytes = std::fs::read(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let data = match format {
                FileFormat::Inner => return Ok(Initial::Inner(io::decode_matrix(&bytes)?)),
                FileFormat::FieldBinary => io::decode_field_binary(&bytes)?,
                FileFormat::FieldCsv => io::decode_field_csv(
                    std::str::from_utf8(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
                )?,
            };
            if data.values.len() != grid.len() || data.rank != degrees.len() {
                return Err(Error::Format(format!(
                    "{} holds {} points of rank {}, expected {} of rank {}",
                    path.display(),
                    data.values.len(),
                    data.rank,
                    grid.len(),
                    degrees.len()
                )));
            }
            Ok(Initial::Metric(MetricField::new(degrees.clone(), data.values)?))
        }
    }
}

pub fn initial_metric(cfg: &ExperimentConfig, grid: &QuadratureGrid) -> Result<MetricField> {
    match initial_state(cfg, grid)? {
        Initial::Metric(h) => Ok(h),
        Initial::Inner(_) => Err(Error::Config("this command needs a metric field as initial data".into())),
    }
}

fn base_seed(cfg: &ExperimentConfig) -> u64 {
    match cfg.initial {
        InitialSpec::FsPerturbed { seed, .. } => seed,
        _ => 0,
    }
}

/// Heat-flow solution at time `t` from `h0` on the grid of `space`: closed form
/// for the split Fubini-Study start, otherwise the RK4 solver.
pub fn reference_at(cfg: &ExperimentConfig, grid: &QuadratureGrid, h0: &MetricField, t: f64) -> Result<MetricField> {
    if matches!(cfg.initial, InitialSpec::Fs {}) {
        return Ok(split_reference(&cfg.model.degrees, grid, t));
    }
    let flow = HeatFlow::new(grid, &cfg.model.degrees, HeatMode::Modified, Integrator::Rk4);
    let run = run_heat(&flow, h0, &FlowConfig::new(t).with_samples(1), None, None)?;
    match run.stop {
        StopReason::Aborted(msg) => Err(Error::StepRejected(format!("reference solve failed: {msg}"))),
        _ => run.final_metric.ok_or_else(|| Error::NonFinite("reference solve".into())),
    }
}

struct Output<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
}

impl Output<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn trace(&self, trace: &FlowTrace, extra: Value) -> Result<()> {
        if self.cfg.output.wants(OutputFormat::Csv) {
            io::atomic_write(&self.path("trace.csv"), io::encode_trace_csv(&trace.rows)?.as_bytes())?;
        }
        if self.cfg.output.wants(OutputFormat::Json) {
            let sidecar = json!({
                "config": self.cfg,
                "steps": trace.steps,
                "stop": stop_label(&trace.stop),
                "extra": extra,
            });
            self.json("trace.json", &sidecar)?;
        }
        Ok(())
    }

    fn json(&self, name: &str, v: &Value) -> Result<()> {
        let text = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
        io::atomic_write(&self.path(name), format!("{text}\n").as_bytes())
    }

    fn inner(&self, space: &BergmanSpace, h: &HermitianInner) -> Result<()> {
        if !self.cfg.output.wants(OutputFormat::Binary) {
            return Ok(());
        }
        io::atomic_write(&self.path("final_inner.herm"), &io::encode_matrix(&space.to_monomial(h)))?;
        let meta = io::InnerMeta { degrees: space.model().degrees.clone(), k: space.k(), frame: "monomial".into() };
        self.json("final_inner.json", &serde_json::to_value(meta).map_err(|e| Error::Format(e.to_string()))?)
    }

    fn metric(&self, h: &MetricField) -> Result<()> {
        if self.cfg.output.wants(OutputFormat::Binary) {
            io::atomic_write(&self.path("final_metric.bin"), &io::encode_field_binary(h.values()))?;
        }
        if self.cfg.output.wants(OutputFormat::Csv) {
            io::atomic_write(&self.path("final_metric.csv"), io::encode_field_csv(h.values()).as_bytes())?;
        }
        Ok(())
    }
}

fn stop_label(s: &StopReason) -> Value {
    match s {
        StopReason::Converged => json!("converged"),
        StopReason::ReachedTMax => json!("reached_t_max"),
        StopReason::Aborted(m) => json!({ "aborted": m }),
    }
}

/// Runs the normalized balancing flow at `model.k`.
pub fn balance(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let k = cfg.model.k;
    let space = space_for(cfg, k)?;
    let h0 = match initial_state(cfg, space.grid())? {
        Initial::Metric(h) => space.hilb(&h)?,
        Initial::Inner(m) => {
            if m.nrows() != space.n_sections() {
                return Err(Error::Format(format!(
                    "inner product has size {}, the model has {} sections",
                    m.nrows(),
                    space.n_sections()
                )));
            }
            space.from_monomial(&m)?
        }
    };
    let op = CurvatureOperator::new(space.grid());
    let trace = run_balancing(&space, &h0, &cfg.flow, Some(&op), None)?;
    let output = Output { cfg, dir: out.to_path_buf() };
    let last = trace.last().cloned();
    let summary = json!({
        "command": "balance",
        "degrees": cfg.model.degrees,
        "k": k,
        "steps": trace.steps,
        "stop": stop_label(&trace.stop),
        "t_final": last.as_ref().map(|r| r.t),
        "mu0_norm": last.as_ref().map(|r| r.mu0_norm),
        "max_mu0_increase": if trace.steps > 0 { Some(trace.max_mu0_increase) } else { None },
    });
    output.trace(&trace, summary.clone())?;
    if let Some(h) = &trace.final_inner {
        output.inner(&space, h)?;
    }
    let code = match trace.stop {
        StopReason::Converged => EXIT_OK,
        StopReason::ReachedTMax => EXIT_NOT_CONVERGED,
        StopReason::Aborted(_) => EXIT_SOFTWARE,
    };
    Ok(Outcome { code, summary })
}

/// Runs the heat flow selected by `flow.mode` on the configured grid.
pub fn heatflow(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let grid = grid_for(cfg, cfg.model.k)?;
    let h0 = initial_metric(cfg, &grid)?;
    let flow = HeatFlow::new(&grid, &cfg.model.degrees, cfg.flow.mode, cfg.flow.integrator);
    let space = BergmanSpace::new(&cfg.model, &grid).ok();
    let degrees = cfg.model.degrees.clone();
    let closed = |t: f64| Ok(split_reference(&degrees, &grid, t));
    let reference: Option<crate::flows::Reference> = if matches!(cfg.initial, InitialSpec::Fs {}) { Some(&closed) } else { None };
    let trace = run_heat(&flow, &h0, &cfg.flow, space.as_ref(), reference)?;
    let output = Output { cfg, dir: out.to_path_buf() };
    let last = trace.last().cloned();
    let summary = json!({
        "command": "heatflow",
        "degrees": cfg.model.degrees,
        "mode": cfg.flow.mode,
        "dt_bound": flow.dt_bound(),
        "steps": trace.steps,
        "stop": stop_label(&trace.stop),
        "t_final": last.as_ref().map(|r| r.t),
        "lam_min": last.as_ref().map(|r| r.lam_min),
        "lam_max": last.as_ref().map(|r| r.lam_max),
    });
    output.trace(&trace, summary.clone())?;
    if let Some(h) = &trace.final_metric {
        output.metric(h)?;
    }
    let code = match trace.stop {
        StopReason::Aborted(_) => EXIT_SOFTWARE,
        _ => EXIT_OK,
    };
    Ok(Outcome { code, summary })
}

/// Per-`k` results of a sweep.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub ks: Vec<u32>,
    pub errors: Vec<f64>,
    pub slope: f64,
}

fn run_sweep<T: Send>(
    cfg: &ExperimentConfig,
    per_k: impl Fn(&BergmanSpace) -> Result<(f64, T)> + Sync,
) -> Result<(Sweep, Vec<T>)> {
    let ks = cfg.sweep()?;
    let results: Vec<Result<(f64, T)>> = ks.par_iter().map(|&k| per_k(&space_for(cfg, k)?)).collect();
    let mut errors = Vec::with_capacity(ks.len());
    let mut extra = Vec::with_capacity(ks.len());
    for r in results {
        let (e, x) = r?;
        errors.push(e);
        extra.push(x);
    }
    let x: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let slope = fit_slope(&x, &errors)?;
    Ok((Sweep { ks, errors, slope }, extra))
}

fn sweep_outcome(cfg: &ExperimentConfig, out: &Path, name: &str, sweep: &Sweep, threshold: f64, pass: bool, extra: Value) -> Result<Outcome> {
    let summary = json!({
        "command": name,
        "degrees": cfg.model.degrees,
        "ks": sweep.ks,
        "errors": sweep.errors,
        "slope": sweep.slope,
        "threshold": threshold,
        "pass": pass,
        "extra": extra,
    });
    let output = Output { cfg, dir: out.to_path_buf() };
    if cfg.output.wants(OutputFormat::Csv) {
        let mut csv = String::from("k,error\n");
        for (k, e) in sweep.ks.iter().zip(&sweep.errors) {
            csv.push_str(&format!("{k},{}\n", io::fmt_f64(*e)));
        }
        io::atomic_write(&output.path(&format!("{name}_sweep.csv")), csv.as_bytes())?;
    }
    if cfg.output.wants(OutputFormat::Json) {
        output.json(&format!("{name}_summary.json"), &summary)?;
    }
    Ok(Outcome { code: if pass { EXIT_OK } else { EXIT_CRITERION_FAILED }, summary })
}

/// Balancing flow against the heat flow at time `t`: sup relative error of
/// `FS_k(H_k(t))`, plus the time-derivative check.
pub fn bflow_sweep(cfg: &ExperimentConfig) -> Result<(Sweep, Vec<f64>)> {
    let t = cfg.t;
    run_sweep(cfg, |space| {
        let h0 = initial_metric(cfg, space.grid())?;
        let target = reference_at(cfg, space.grid(), &h0, t)?;
        let hi = space.hilb(&h0)?;
        let mut flow = cfg.flow.clone();
        flow.t_max = t;
        flow.samples = 1;
        let run = run_balancing(space, &hi, &flow, None, None)?;
        if let StopReason::Aborted(msg) = &run.stop {
            return Err(Error::StepRejected(msg.clone()));
        }
        let g = run.final_metric.ok_or_else(|| Error::NonFinite("balancing flow".into()))?;
        let err = metric_relative_error(&g, &target)?;
        let op = CurvatureOperator::new(space.grid());
        let c1 = c1_proxy(space, &op, &hi, t, C1_DELTA, C1_DT, &target)?;
        Ok((err, c1))
    })
}

pub fn bflow(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let (sweep, c1) = bflow_sweep(cfg)?;
    let c1_decreasing = c1.windows(2).all(|w| w[1] < w[0]);
    let pass = sweep.slope <= THM1_SLOPE && c1_decreasing;
    sweep_outcome(cfg, out, "bflow", &sweep, THM1_SLOPE, pass, json!({ "t": cfg.t, "c1_proxy": c1, "c1_decreasing": c1_decreasing }))
}

/// `Phi_k` iterated `floor(t k)` times against the heat flow at time `t`.
pub fn iterate_sweep(cfg: &ExperimentConfig) -> Result<Sweep> {
    let t = cfg.t;
    Ok(run_sweep(cfg, |space| {
        let h0 = initial_metric(cfg, space.grid())?;
        let target = reference_at(cfg, space.grid(), &h0, t)?;
        let m = (t * space.k() as f64).floor() as usize;
        let h = phi_iterate(space, &h0, m)?;
        Ok((metric_relative_error(&h, &target)?, ()))
    })?
    .0)
}

pub fn iterate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let sweep = iterate_sweep(cfg)?;
    let pass = sweep.slope <= THM2_SLOPE;
    sweep_outcome(cfg, out, "iterate", &sweep, THM2_SLOPE, pass, json!({ "t": cfg.t }))
}

/// `sup |h^{-1} Phi_k(h) - Id + A_1~(h) / k|`.
pub fn ctyz_remainder(space: &BergmanSpace, h: &MetricField) -> Result<f64> {
    let op = CurvatureOperator::new(space.grid());
    let a1 = op.a1_reduced(h)?;
    let ratio = h.relative(&space.phi_map(h)?)?;
    let k = space.k() as f64;
    let rem = ratio.shift(-1.0).add(&a1.scale(1.0 / k))?;
    endo_sup_norm(&rem, h)
}

pub fn ctyz_sweep(cfg: &ExperimentConfig) -> Result<Sweep> {
    Ok(run_sweep(cfg, |space| Ok((ctyz_remainder(space, &initial_metric(cfg, space.grid())?)?, ())))?.0)
}

pub fn ctyz(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let sweep = ctyz_sweep(cfg)?;
    let pass = sweep.slope <= CTYZ_SLOPE;
    sweep_outcome(cfg, out, "ctyz", &sweep, CTYZ_SLOPE, pass, Value::Null)
}

/// The test endomorphism `h^{-1} B`, self-adjoint for `h`, with `B` drawn like
/// the initial perturbations from `seed`.
pub fn qk_test_field(degrees: &[i64], seed: u64, grid: &QuadratureGrid, h: &MetricField) -> Result<EndoField> {
    let b = Perturbation::new(degrees, seed, 0.5).field(grid);
    let mut out = Vec::with_capacity(h.len());
    for (p, (g, b)) in h.values().iter().zip(b.values()).enumerate() {
        let gi = g.clone().try_inverse().ok_or(Error::Degenerate { point: p, cond: f64::INFINITY })?;
        out.push(gi * b);
    }
    Ok(EndoField::new(out))
}

/// `sup |Q_k(f) - f|` measured with `h`.
pub fn qk_defect(space: &BergmanSpace, f: &EndoField, h: &MetricField) -> Result<f64> {
    endo_sup_norm(&space.q_apply(f, h)?.sub(f)?, h)
}

pub fn qk_sweep(cfg: &ExperimentConfig) -> Result<Sweep> {
    let seed = base_seed(cfg).wrapping_add(1);
    Ok(run_sweep(cfg, |space| {
        let h = initial_metric(cfg, space.grid())?;
        let f = qk_test_field(&cfg.model.degrees, seed, space.grid(), &h)?;
        Ok((qk_defect(space, &f, &h)?, ()))
    })?
    .0)
}

pub fn qk(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let sweep = qk_sweep(cfg)?;
    let pass = sweep.slope <= QK_SLOPE;
    sweep_outcome(cfg, out, "qk", &sweep, QK_SLOPE, pass, json!({ "field_seed": base_seed(cfg).wrapping_add(1) }))
}

pub fn tangent_gap_sweep(cfg: &ExperimentConfig) -> Result<Sweep> {
    Ok(run_sweep(cfg, |space| {
        let h = initial_metric(cfg, space.grid())?;
        let op = CurvatureOperator::new(space.grid());
        Ok((tangent_gap(space, &op, &h)?, ()))
    })?
    .0)
}

pub fn tangent_gap_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let sweep = tangent_gap_sweep(cfg)?;
    let pass = sweep.slope <= TANGENT_SLOPE;
    sweep_outcome(cfg, out, "tangent-gap", &sweep, TANGENT_SLOPE, pass, Value::Null)
}

/// Reads an inner-product file and its JSON sidecar, if present.
pub fn read_inner(path: &Path) -> Result<(CMat, Option<io::InnerMeta>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let m = io::decode_matrix(&bytes)?;
    let meta_path = path.with_extension("json");
    let meta = match std::fs::read_to_string(&meta_path) {
        Ok(text) => Some(
            serde_json::from_str::<io::InnerMeta>(&text)
                .map_err(|e| Error::Format(format!("{}: {e}", meta_path.display())))?,
        ),
        Err(_) => None,
    };
    Ok((m, meta))
}

/// `d_k` between two stored inner products. The distance is invariant under a
/// common change of basis, so the stored frame does not matter.
pub fn distance(a: &Path, b: &Path, k: Option<u32>) -> Result<Outcome> {
    let (ma, meta_a) = read_inner(a)?;
    let (mb, meta_b) = read_inner(b)?;
    if ma.nrows() != mb.nrows() {
        return Err(Error::ShapeMismatch(format!("sizes {} and {}", ma.nrows(), mb.nrows())));
    }
    let k = k
        .or(meta_a.as_ref().map(|m| m.k))
        .or(meta_b.as_ref().map(|m| m.k))
        .ok_or_else(|| Error::Config("k is neither given nor recorded next to the inputs".into()))?;
    if let (Some(x), Some(y)) = (&meta_a, &meta_b) {
        if x.k != y.k || x.degrees != y.degrees {
            return Err(Error::Config("inputs belong to different models".into()));
        }
    }
    let ha = HermitianInner::new(linalg::hermitian_part(&ma))?;
    let hb = HermitianInner::new(linalg::hermitian_part(&mb))?;
    let d = bergman_distance(&ha, &hb, k)?;
    Ok(Outcome { code: EXIT_OK, summary: json!({ "command": "distance", "k": k, "n": DIM, "distance": d }) })
}
