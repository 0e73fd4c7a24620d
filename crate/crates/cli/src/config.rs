//! Experiment configuration files.

use std::path::{Path, PathBuf};

use hwlab::dist::{DistSpec, Family, HWScaling};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA: &str = "hwlab/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    BoundUpper,
    BoundLower,
    Lindley,
    Gaussian,
    FitExponent,
    CheckMoments,
    Dominance,
    Sandwich,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::BoundUpper => "bound-upper",
            Experiment::BoundLower => "bound-lower",
            Experiment::Lindley => "lindley",
            Experiment::Gaussian => "gaussian",
            Experiment::FitExponent => "fit-exponent",
            Experiment::CheckMoments => "check-moments",
            Experiment::Dominance => "dominance",
            Experiment::Sandwich => "sandwich",
        }
    }

    /// Experiments set in the heavy-traffic regime, where the arrival and
    /// service means must agree before scaling.
    pub fn is_regime(self) -> bool {
        !matches!(self, Experiment::CheckMoments)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub n: usize,
    #[serde(rename = "B")]
    pub b: f64,
}

/// Steady-state sampling of the simulated queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Burn-in; defaults to `20 n / mu`.
    pub t0: Option<f64>,
    /// Sampling stride; defaults to `n / mu`.
    pub stride: Option<f64>,
    /// Batches for the batch-means error.
    pub batches: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentConfig {
    pub r: u32,
    pub n: Vec<usize>,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub experiment: Experiment,
    pub arrival: Family,
    pub service: Family,
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    pub reps: u64,
    pub seed: u64,
    /// Truncation safety factor for the upper bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Explicit horizon, overriding the truncation rule where one applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Lindley step count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    /// Gaussian grid spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    /// Replications for the service variance function.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_reps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(f64, f64)>,
    /// Points of the lower-bound time grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// A config whose distributions and scaling have been checked.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub arrival: DistSpec,
    pub service: DistSpec,
    pub scaling: HWScaling,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::validation("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            context: format!("reading {}", path.display()),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<Validated> {
        if self.schema != SCHEMA {
            return Err(CliError::validation(
                "schema",
                format!("expected \"{SCHEMA}\", got \"{}\"", self.schema),
            ));
        }
        let arrival = DistSpec::new(self.arrival).map_err(|e| hwlab::Error::within(e, "arrival"))?;
        let service = DistSpec::new(self.service).map_err(|e| hwlab::Error::within(e, "service"))?;
        let scaling = HWScaling::new(self.scaling.n, self.scaling.b).map_err(|e| e.within("scaling"))?;
        if self.experiment.is_regime() {
            let (ma, ms) = (arrival.mean(), service.mean());
            if (ma - ms).abs() > 1e-9 * ma.max(ms) {
                return Err(CliError::validation(
                    "arrival",
                    format!("mean {ma} must equal the service mean {ms} (common rate before scaling)"),
                ));
            }
        }
        if self.reps == 0 {
            return Err(CliError::validation("reps", "must be positive"));
        }
        if !self.thresholds.is_empty() {
            hwlab::stats::check_thresholds(&self.thresholds)?;
        }
        positive_opt("kappa", self.kappa)?;
        positive_opt("horizon", self.horizon)?;
        positive_opt("spacing", self.spacing)?;
        if let Some((lo, hi)) = self.fit_window {
            if !(lo < hi) {
                return Err(CliError::validation("fit_window", "lower end must be below upper end"));
            }
        }
        if let Some(sim) = &self.sim {
            positive_opt("sim.t0", sim.t0.filter(|&t| t != 0.0))?;
            positive_opt("sim.stride", sim.stride)?;
            if sim.batches == Some(0) {
                return Err(CliError::validation("sim.batches", "must be positive"));
            }
        }
        let needs_thresholds = !matches!(
            self.experiment,
            Experiment::Dominance | Experiment::CheckMoments
        );
        if needs_thresholds && self.thresholds.is_empty() {
            return Err(CliError::validation("thresholds", "must not be empty"));
        }
        if self.experiment == Experiment::CheckMoments {
            let m = self
                .moments
                .as_ref()
                .ok_or_else(|| CliError::validation("moments", "required for check-moments"))?;
            if m.r < 2 {
                return Err(CliError::validation("moments.r", "must be at least 2"));
            }
            if m.n.is_empty() || m.t.is_empty() {
                return Err(CliError::validation("moments", "n and t grids must be non-empty"));
            }
        }
        Ok(Validated {
            config: self.clone(),
            arrival,
            service,
            scaling,
        })
    }
}

fn positive_opt(field: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::validation(field, format!("must be positive, got {x}"))),
        _ => Ok(()),
    }
}
