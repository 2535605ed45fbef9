use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::FlowConfig;
use crate::manifold::{ModelConfig, QuadratureGrid};

pub const MAX_AMPLITUDE: f64 = 0.5;

/// One experiment, read from a single JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Grid used for every run; `None` picks the default grid for each `k`.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default = "default_flow")]
    pub flow: FlowConfig,
    #[serde(default)]
    pub k_sweep: Option<Vec<u32>>,
    /// Comparison time for the convergence sweeps.
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_flow() -> FlowConfig {
    FlowConfig::new(1.0)
}

fn default_t() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_theta: usize,
    pub n_phi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    // braces so that stray fields are rejected
    Fs {},
    FsPerturbed { seed: u64, amplitude: f64 },
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<FileFormat>,
    },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Fs {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    FieldBinary,
    FieldCsv,
    Inner,
}

impl FileFormat {
    /// `.csv` is a field CSV, `.herm` an inner product, anything else a binary field.
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => FileFormat::FieldCsv,
            Some("herm") => FileFormat::Inner,
            _ => FileFormat::FieldBinary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: PathBuf,
    #[serde(default = "all_formats")]
    pub formats: Vec<OutputFormat>,
}

fn all_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json, OutputFormat::Binary]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: all_formats() }
    }
}

impl OutputSpec {
    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }
}

impl ExperimentConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            grid: None,
            initial: InitialSpec::Fs {},
            flow: default_flow(),
            k_sweep: None,
            t: default_t(),
            output: OutputSpec::default(),
        }
    }

    /// Parses and validates; syntax errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.flow.validate()?;
        if let InitialSpec::FsPerturbed { amplitude, .. } = self.initial {
            if !(0.0..=MAX_AMPLITUDE).contains(&amplitude) {
                return Err(Error::Config(format!("amplitude must lie in [0, {MAX_AMPLITUDE}], got {amplitude}")));
            }
        }
        if let Some(g) = self.grid {
            QuadratureGrid::new(g.n_theta, g.n_phi).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(ks) = &self.k_sweep {
            if ks.contains(&0) {
                return Err(Error::Config("k_sweep values must be positive".into()));
            }
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::Config(format!("t must be positive, got {}", self.t)));
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        if let InitialSpec::FsPerturbed { seed: s, .. } = &mut self.initial {
            *s = seed;
        }
    }

    /// The sweep values, sorted and deduplicated; fewer than three is an error.
    pub fn sweep(&self) -> Result<Vec<u32>> {
        let mut ks = self.k_sweep.clone().unwrap_or_default();
        ks.sort_unstable();
        ks.dedup();
        if ks.len() < 3 {
            return Err(Error::Config(format!("k_sweep needs at least 3 distinct values, got {}", ks.len())));
        }
        Ok(ks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let cfg = ExperimentConfig::from_json(r#"{"model": {"degrees": [1, -1], "k": 4}}"#).unwrap();
        assert_eq!(cfg.initial, InitialSpec::Fs {});
        assert_eq!(cfg.t, 0.5);
        assert_eq!(cfg.output.formats.len(), 3);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"{
            "model": {"degrees": [1, 1], "k": 4},
            "grid": {"n_theta": 16, "n_phi": 24},
            "initial": {"kind": "fs_perturbed", "seed": 7, "amplitude": 0.2},
            "flow": {"t_max": 20.0, "integrator": "rk4", "volume_mode": "omega_prime", "mode": "donaldson"},
            "k_sweep": [8, 16, 32],
            "t": 0.25,
            "output": {"directory": "runs", "formats": ["csv"]}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = ExperimentConfig::from_json("{\n  \"model\": {\"degrees\": [1,]}\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("column"), "{msg}");
    }

    #[test]
    fn rejects_unknown_fields_and_bad_amplitude() {
        assert!(ExperimentConfig::from_json(r#"{"model": {"degrees": [1], "k": 4}, "extra": 1}"#).is_err());
        let bad = r#"{"model": {"degrees": [1], "k": 4}, "initial": {"kind": "fs_perturbed", "seed": 1, "amplitude": 0.7}}"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
        let bad = r#"{"model": {"degrees": [1], "k": 4}, "initial": {"kind": "fs", "seed": 1}}"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
    }

    #[test]
    fn short_sweep_rejected() {
        let mut cfg = ExperimentConfig::new(ModelConfig::new(vec![1, -1], 4).unwrap());
        cfg.k_sweep = Some(vec![8, 8, 16]);
        assert!(cfg.sweep().is_err());
        cfg.k_sweep = Some(vec![32, 8, 16]);
        assert_eq!(cfg.sweep().unwrap(), vec![8, 16, 32]);
    }
}
