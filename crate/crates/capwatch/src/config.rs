//! Scenario JSON schema.
//!
//! A config file is a manifest:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "builtins": ["two-block-s2"],
//!   "scenarios": [
//!     {
//!       "name": "my-suite",
//!       "rates": {"y0": 0.0, "endpoints": [6.0, 10.0], "rates": [2.0, 0.1]},
//!       "y_star": 5.0
//!     }
//!   ]
//! }
//! ```
//!
//! `builtins` pulls in named scenarios; `scenarios` holds inline ones. Every
//! optional field has a default, listed on the field.

use capwatch_core::allocation::{
    AllocationPolicy, BudgetKind, BudgetSchedule, EvolveConfig, Forecast, PolicyKind, ProductionFunction,
};
use capwatch_core::dynamics::{CapabilityTrajectory, Jump, TrajectoryKind, UpdateMode};
use capwatch_core::RateFunction;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub builtins: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<Scenario>,
}

/// One experiment. With an `allocation` block the rate function is the
/// initial suite and tests are built step by step; without one it is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub rates: RateSpec,
    /// Default 5.
    #[serde(default = "default_y_star")]
    pub y_star: f64,
    /// Spacing of the `y_t` grid for static series. Default 0.05.
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    /// Default: linear, one danger unit per step from `y0` up to `y_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectorySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<AllocationSpec>,
    /// Used when no seed is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_y_star() -> f64 {
    5.0
}

fn default_grid_step() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    #[serde(default)]
    pub y0: f64,
    pub endpoints: Vec<f64>,
    pub rates: Vec<f64>,
    /// Default: the last endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_max: Option<f64>,
}

impl RateSpec {
    pub fn y_max(&self) -> f64 {
        self.y_max.or_else(|| self.endpoints.last().copied()).unwrap_or(self.y0)
    }

    pub fn build(&self) -> capwatch_core::Result<RateFunction> {
        RateFunction::new(self.y0, self.endpoints.clone(), self.rates.clone(), self.y_max())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    Linear {
        start: f64,
        increment: f64,
        horizon: usize,
    },
    SCurve {
        floor: f64,
        ceiling: f64,
        midpoint: f64,
        steepness: f64,
        horizon: usize,
    },
    Jumps {
        start: f64,
        increment: f64,
        jumps: Vec<JumpSpec>,
        horizon: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub step: usize,
    pub size: f64,
}

impl TrajectorySpec {
    pub fn build(&self) -> capwatch_core::Result<CapabilityTrajectory> {
        match self {
            TrajectorySpec::Linear {
                start,
                increment,
                horizon,
            } => CapabilityTrajectory::new(
                TrajectoryKind::Linear {
                    start: *start,
                    increment: *increment,
                },
                *horizon,
            ),
            TrajectorySpec::SCurve {
                floor,
                ceiling,
                midpoint,
                steepness,
                horizon,
            } => CapabilityTrajectory::new(
                TrajectoryKind::SCurve {
                    floor: *floor,
                    ceiling: *ceiling,
                    midpoint: *midpoint,
                    steepness: *steepness,
                },
                *horizon,
            ),
            TrajectorySpec::Jumps {
                start,
                increment,
                jumps,
                horizon,
            } => CapabilityTrajectory::new(
                TrajectoryKind::Jumps {
                    start: *start,
                    increment: *increment,
                    jumps: jumps
                        .iter()
                        .map(|j| Jump {
                            step: j.step,
                            size: j.size,
                        })
                        .collect(),
                },
                *horizon,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    #[default]
    Main,
    Alternative,
}

impl From<ModeSpec> for UpdateMode {
    fn from(m: ModeSpec) -> Self {
        match m {
            ModeSpec::Main => UpdateMode::Main,
            ModeSpec::Alternative => UpdateMode::Alternative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub paths: usize,
    #[serde(default)]
    pub mode: ModeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationSpec {
    pub budget: BudgetSpec,
    /// Steps before any budget is spent. Default 0.
    #[serde(default)]
    pub start_delay: usize,
    pub policy: PolicySpec,
    /// Default 1.
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    /// Band endpoints snap to multiples of this. Default 0.1.
    #[serde(default = "default_snap")]
    pub snap: f64,
    #[serde(default)]
    pub mode: ModeSpec,
    /// Independent evolutions averaged into the reported series. Default 1.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

fn default_replicates() -> usize {
    1
}

fn default_efficiency() -> f64 {
    1.0
}

fn default_snap() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BudgetSpec {
    Constant { amount: f64 },
    ExponentialDecay { initial: f64, decay: f64 },
    Custom { amounts: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    FrontierTracking,
    ThresholdFocused,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyName,
    /// Share sent to the threshold band; required for `balanced`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_weight: Option<f64>,
    pub lookahead: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<ForecastSpec>,
}

/// Normal forecast of the next-step danger increment; the frontier band
/// covers the given quantiles above the current estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSpec {
    pub mean: f64,
    pub sd: f64,
    #[serde(default = "default_lower_quantile")]
    pub lower_quantile: f64,
    #[serde(default = "default_upper_quantile")]
    pub upper_quantile: f64,
}

fn default_lower_quantile() -> f64 {
    0.1
}

fn default_upper_quantile() -> f64 {
    0.9
}

impl Scenario {
    pub fn is_dynamic(&self) -> bool {
        self.allocation.is_some()
    }

    /// The configured trajectory, or unit growth across the tested range.
    pub fn trajectory_spec(&self) -> TrajectorySpec {
        self.trajectory.clone().unwrap_or_else(|| {
            let y0 = self.rates.y0;
            TrajectorySpec::Linear {
                start: y0,
                increment: 1.0,
                horizon: (self.rates.y_max() - y0).ceil().max(1.0) as usize,
            }
        })
    }

    pub fn evolve_config(
        &self,
        initial: &RateFunction,
        trajectory: &CapabilityTrajectory,
    ) -> capwatch_core::Result<Option<EvolveConfig>> {
        let Some(a) = &self.allocation else {
            return Ok(None);
        };
        let kind = match &a.budget {
            BudgetSpec::Constant { amount } => BudgetKind::Constant { amount: *amount },
            BudgetSpec::ExponentialDecay { initial, decay } => BudgetKind::ExponentialDecay {
                initial: *initial,
                decay: *decay,
            },
            BudgetSpec::Custom { amounts } => BudgetKind::Custom(amounts.clone()),
        };
        let policy_kind = match a.policy.kind {
            PolicyName::FrontierTracking => PolicyKind::FrontierTracking,
            PolicyName::ThresholdFocused => PolicyKind::ThresholdFocused,
            PolicyName::Balanced => PolicyKind::Balanced {
                threshold_weight: a
                    .policy
                    .threshold_weight
                    .ok_or_else(|| capwatch_core::Error::Config("balanced policy needs threshold_weight".into()))?,
            },
        };
        let forecast = a.policy.forecast.map(|f| Forecast {
            mean: f.mean,
            sd: f.sd,
            lower_quantile: f.lower_quantile,
            upper_quantile: f.upper_quantile,
        });
        Ok(Some(EvolveConfig {
            schedule: BudgetSchedule::new(kind, a.start_delay)?,
            policy: AllocationPolicy::new(policy_kind, a.policy.lookahead, forecast)?,
            production: ProductionFunction::new(a.efficiency)?,
            trajectory: trajectory.clone(),
            initial: initial.clone(),
            y_star: self.y_star,
            mode: a.mode.into(),
            snap: a.snap,
        }))
    }
}
