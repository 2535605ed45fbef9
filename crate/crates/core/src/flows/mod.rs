//! Time integrators: the normalized balancing flow on the Bergman space, the
//! (modified) Donaldson heat flow, the iteration of `Phi_k`, and the
//! diagnostics that compare them.

mod balancing;
mod corrections;
mod harness;
mod heat;

pub use balancing::{balancing_step, balancing_step_guard, default_balancing_dt};
pub use corrections::{conformal_theta, omega_prime_weights, poisson_mean_zero};
pub use harness::{
    c1_proxy, fit_slope, phi_iterate, run_balancing, run_heat, split_reference, split_reference_rates,
    tangent_gap, FlowTrace, Reference, StopReason, TraceRow,
};
pub use heat::{HeatFlow, HeatMode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Euler,
    #[default]
    ExpEuler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMode {
    #[default]
    Standard,
    OmegaPrime,
}

/// Step size, horizon and integrator of a flow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// Step size; `None` picks the documented default for the flow.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_max: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub volume_mode: VolumeMode,
    /// Power of `k` multiplying the balancing velocity; `None` means `n + 1`.
    #[serde(default)]
    pub normalization: Option<i32>,
    /// Number of equally spaced sample times after `t = 0`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub mode: HeatMode,
}

fn default_samples() -> usize {
    10
}

impl FlowConfig {
    pub fn new(t_max: f64) -> Self {
        Self {
            dt: None,
            t_max,
            integrator: Integrator::default(),
            volume_mode: VolumeMode::default(),
            normalization: None,
            samples: default_samples(),
            mode: HeatMode::default(),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_mode(mut self, mode: HeatMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn normalization_power(&self) -> i32 {
        self.normalization.unwrap_or(crate::manifold::DIM + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(Error::Config(format!("t_max must be a finite non-negative number, got {}", self.t_max)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        Ok(())
    }
}
