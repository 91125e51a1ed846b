//! JSON run configuration shared by every CLI subcommand.

use crate::error::{ChiError, Result};
use crate::model::SystemParams;
use crate::protocol::{Engine, ErrorModel};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn default_engine() -> Engine {
    Engine::Analytic
}

fn default_error_model() -> ErrorModel {
    ErrorModel::BetaOnly
}

fn default_g_si() -> f64 {
    2.0 * std::f64::consts::PI * 200e6
}

fn default_tau() -> f64 {
    1.5e-6
}

fn default_regime_threshold() -> f64 {
    5.0
}

fn default_steps_per_period() -> usize {
    200
}

/// Sweep axis: `count` evenly spaced values over [min, max].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for SweepAxis {
    fn default() -> Self {
        Self { min: -0.05, max: 0.05, count: 41 }
    }
}

impl SweepAxis {
    pub fn values(&self) -> Result<Vec<f64>> {
        crate::analysis::linspace(self.min, self.max, self.count)
    }
}

/// Everything a CLI run needs. All frequencies are in units of g; the SI
/// constants (`g_si`, `tau_r`, `tau_d`) only enter the feasibility and
/// decoherence reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: SystemParams,
    #[serde(default = "default_engine")]
    pub engine: Engine,
    #[serde(default = "default_error_model")]
    pub error_model: ErrorModel,
    #[serde(default)]
    pub sweep_n1: SweepAxis,
    #[serde(default)]
    pub sweep_n2: SweepAxis,
    /// Coupling constant in rad/s, for SI conversion only.
    #[serde(default = "default_g_si")]
    pub g_si: f64,
    /// Relaxation time in seconds.
    #[serde(default = "default_tau")]
    pub tau_r: f64,
    /// Dephasing time in seconds.
    #[serde(default = "default_tau")]
    pub tau_d: f64,
    /// Output directory for CSV/JSON artifacts.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Duration of the single-segment model-hierarchy comparison, in units
    /// of 1/g. Defaults to the protocol's step-1 duration.
    #[serde(default)]
    pub ladder_duration: Option<f64>,
    /// Minimum ratio for separation-of-scales checks.
    #[serde(default = "default_regime_threshold")]
    pub regime_threshold: f64,
    /// RK4 steps per shortest period for the numeric engines.
    #[serde(default = "default_steps_per_period")]
    pub steps_per_period: usize,
    /// Reserved for randomized property exploration; recorded in outputs
    /// so that artifacts are self-describing.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// The published reference parameter set: all four atoms driven, pair
    /// couplings near 4.56e-3 g, Omega_S targeted at 10 g, and the quoted
    /// SI constants (g = 2 pi x 200 MHz, tau_r = tau_d = 1.5 us).
    pub fn paper_defaults() -> Self {
        Self {
            params: SystemParams::reference(),
            engine: default_engine(),
            error_model: default_error_model(),
            sweep_n1: SweepAxis::default(),
            sweep_n2: SweepAxis::default(),
            g_si: default_g_si(),
            tau_r: default_tau(),
            tau_d: default_tau(),
            out_dir: None,
            ladder_duration: None,
            regime_threshold: default_regime_threshold(),
            steps_per_period: default_steps_per_period(),
            seed: 0,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ChiError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ChiError::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.g_si <= 0.0 {
            return Err(ChiError::Config(format!("g_si {} must be > 0", self.g_si)));
        }
        if self.tau_r <= 0.0 || self.tau_d <= 0.0 {
            return Err(ChiError::Config("tau_r and tau_d must be > 0".into()));
        }
        if self.steps_per_period < 20 {
            return Err(ChiError::Config(format!(
                "steps_per_period {} below the integrator minimum of 20",
                self.steps_per_period
            )));
        }
        self.sweep_n1.values()?;
        self.sweep_n2.values()?;
        if let Some(t) = self.ladder_duration {
            if t <= 0.0 {
                return Err(ChiError::Config(format!("ladder_duration {t} must be > 0")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_defaults_validate() {
        let cfg = RunConfig::paper_defaults();
        cfg.validate().unwrap();
        assert_eq!(cfg.sweep_n1.values().unwrap().len(), 41);
        assert!((cfg.g_si - 1.2566e9).abs() < 1e6);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::paper_defaults();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let json = r#"{ "params": {
            "drives": [
                {"rabi": 1.0, "detuning1": 10.0},
                {"rabi": 1.0, "detuning1": 10.0},
                {"rabi": 0.725, "detuning1": 10.5},
                {"rabi": 0.725, "detuning1": 10.5}
            ],
            "detuning2": 11.0,
            "omega_s": 10.0,
            "fock_dim": 5
        }}"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.engine, Engine::Analytic);
        assert_eq!(cfg.error_model, ErrorModel::BetaOnly);
        assert_eq!(cfg.sweep_n1, SweepAxis::default());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        let json = r#"{ "params": {
            "drives": [
                {"rabi": 1.0, "detuning1": 10.0},
                {"rabi": 1.0, "detuning1": 10.0},
                {"rabi": 1.0, "detuning1": 10.0},
                {"rabi": 1.0, "detuning1": 10.0}
            ],
            "detuning2": 11.0, "omega_s": 10.0, "fock_dim": 5
        }, "not_a_field": 3 }"#;
        assert!(serde_json::from_str::<RunConfig>(json).is_err());

        let mut cfg = RunConfig::paper_defaults();
        cfg.steps_per_period = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::paper_defaults();
        cfg.params.fock_dim = 1;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
