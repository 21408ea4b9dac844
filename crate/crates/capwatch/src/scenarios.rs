//! Built-in scenarios, validation and the scenario runner.

use std::collections::BTreeSet;

use capwatch_core::allocation::{evolve_rate_schedule, Evolution, EvolveConfig};
use capwatch_core::dynamics::{run_chain, CapabilityTrajectory, ChainConfig, ChainEnsemble, RateSchedule};
use capwatch_core::estimator::lag_distribution;
use capwatch_core::rng::derive_seed;
use capwatch_core::{EstimatorDistribution, RateFunction};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{
    AllocationSpec, BudgetSpec, ConfigFile, EnsembleSpec, ModeSpec, PolicyName, PolicySpec, RateSpec, Scenario,
    TrajectorySpec, SCHEMA_VERSION,
};

pub const BUILTIN_NAMES: [&str; 13] = [
    "single-block-s1",
    "single-block-s2",
    "two-block-s1",
    "two-block-s2",
    "reversed-s1",
    "reversed-s2",
    "mid-gap",
    "high-threshold",
    "low-threshold",
    "market-dynamics",
    "policy-frontier",
    "policy-threshold",
    "policy-balanced",
];

pub const TOOL_VERSION: &str = concat!("capwatch ", env!("CARGO_PKG_VERSION"));

/// Paths in the ensemble attached to static built-ins.
const BUILTIN_PATHS: usize = 10_000;

/// Evolutions averaged by dynamic built-ins.
const DYNAMIC_REPLICATES: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("unknown builtin scenario `{0}`")]
    UnknownBuiltin(String),
    #[error("scenario `{name}`: {source}")]
    Model {
        name: String,
        #[source]
        source: capwatch_core::Error,
    },
}

fn rates(endpoints: &[f64], rates: &[f64]) -> RateSpec {
    RateSpec {
        y0: 0.0,
        endpoints: endpoints.to_vec(),
        rates: rates.to_vec(),
        y_max: None,
    }
}

fn static_scenario(name: &str, description: &str, r: RateSpec, y_star: f64) -> Scenario {
    Scenario {
        name: name.into(),
        description: Some(description.into()),
        rates: r,
        y_star,
        grid_step: 0.05,
        trajectory: None,
        ensemble: Some(EnsembleSpec {
            paths: BUILTIN_PATHS,
            mode: ModeSpec::Main,
        }),
        allocation: None,
        seed: None,
    }
}

fn policy_scenario(name: &str, description: &str, policy: PolicySpec) -> Scenario {
    Scenario {
        name: name.into(),
        description: Some(description.into()),
        rates: rates(&[30.0], &[0.0]),
        y_star: 5.0,
        grid_step: 0.05,
        trajectory: Some(TrajectorySpec::Linear {
            start: 0.0,
            increment: 1.0,
            horizon: 30,
        }),
        ensemble: None,
        allocation: Some(AllocationSpec {
            budget: BudgetSpec::Constant { amount: 2.0 },
            start_delay: 0,
            policy,
            efficiency: 1.0,
            snap: 0.1,
            mode: ModeSpec::Main,
            replicates: DYNAMIC_REPLICATES,
        }),
        seed: None,
    }
}

/// Fully specified configuration of a named scenario.
pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let s = match name {
        "single-block-s1" => static_scenario(name, "one block of fast tests", rates(&[10.0], &[2.0]), 5.0),
        "single-block-s2" => static_scenario(name, "one block of slow tests", rates(&[10.0], &[0.5]), 5.0),
        "two-block-s1" => static_scenario(
            name,
            "fast tests up to 6, sparse above",
            rates(&[6.0, 10.0], &[2.0, 0.1]),
            5.0,
        ),
        "two-block-s2" => static_scenario(
            name,
            "slow tests up to 6, sparse above",
            rates(&[6.0, 10.0], &[0.5, 0.1]),
            5.0,
        ),
        "reversed-s1" => static_scenario(
            name,
            "sparse tests up to 6, fast above",
            rates(&[6.0, 10.0], &[0.1, 2.0]),
            5.0,
        ),
        "reversed-s2" => static_scenario(
            name,
            "sparse tests up to 6, slow above",
            rates(&[6.0, 10.0], &[0.1, 0.5]),
            5.0,
        ),
        "mid-gap" => static_scenario(
            name,
            "no tests between 4 and 6",
            rates(&[4.0, 6.0, 10.0], &[2.0, 0.0, 2.0]),
            5.0,
        ),
        "high-threshold" => static_scenario(
            name,
            "two-block fast suite watched at 8",
            rates(&[6.0, 10.0], &[2.0, 0.1]),
            8.0,
        ),
        "low-threshold" => static_scenario(
            name,
            "two-block fast suite watched at 3",
            rates(&[6.0, 10.0], &[2.0, 0.1]),
            3.0,
        ),
        "market-dynamics" => Scenario {
            name: name.into(),
            description: Some("investment decays as capability races ahead; budget chases the frontier".into()),
            rates: rates(&[20.0], &[0.0]),
            y_star: 5.0,
            grid_step: 0.05,
            trajectory: Some(TrajectorySpec::Linear {
                start: 0.0,
                increment: 1.0,
                horizon: 20,
            }),
            ensemble: None,
            allocation: Some(AllocationSpec {
                budget: BudgetSpec::ExponentialDecay {
                    initial: 4.0,
                    decay: 1.0,
                },
                start_delay: 0,
                policy: PolicySpec {
                    kind: PolicyName::FrontierTracking,
                    threshold_weight: None,
                    lookahead: 2.0,
                    forecast: None,
                },
                efficiency: 1.0,
                snap: 0.1,
                mode: ModeSpec::Main,
                replicates: DYNAMIC_REPLICATES,
            }),
            seed: None,
        },
        "policy-frontier" => policy_scenario(
            name,
            "constant budget spent just above the current estimate",
            PolicySpec {
                kind: PolicyName::FrontierTracking,
                threshold_weight: None,
                lookahead: 3.0,
                forecast: None,
            },
        ),
        "policy-threshold" => policy_scenario(
            name,
            "constant budget spent just above the threshold",
            PolicySpec {
                kind: PolicyName::ThresholdFocused,
                threshold_weight: None,
                lookahead: 3.0,
                forecast: None,
            },
        ),
        "policy-balanced" => policy_scenario(
            name,
            "constant budget split between threshold and frontier",
            PolicySpec {
                kind: PolicyName::Balanced,
                threshold_weight: Some(0.5),
                lookahead: 3.0,
                forecast: None,
            },
        ),
        other => return Err(ScenarioError::UnknownBuiltin(other.into())),
    };
    Ok(s)
}

/// Manifest listing every built-in, fully expanded.
pub fn builtin_manifest() -> ConfigFile {
    ConfigFile {
        schema_version: SCHEMA_VERSION,
        builtins: Vec::new(),
        scenarios: BUILTIN_NAMES.iter().map(|n| builtin(n).expect("known name")).collect(),
    }
}

/// One problem found while validating a config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigViolation {
    pub scenario: Option<String>,
    pub field: String,
    pub message: String,
}

impl ConfigViolation {
    fn new(scenario: Option<&str>, field: &str, message: impl Into<String>) -> Self {
        Self {
            scenario: scenario.map(str::to_owned),
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Expands builtins and checks every scenario. Scenarios come back sorted
/// by name.
pub fn resolve(config: &ConfigFile) -> Result<Vec<Scenario>, Vec<ConfigViolation>> {
    let mut violations = Vec::new();
    if config.schema_version != SCHEMA_VERSION {
        violations.push(ConfigViolation::new(
            None,
            "schema_version",
            format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            ),
        ));
    }
    let mut scenarios = Vec::new();
    for name in &config.builtins {
        match builtin(name) {
            Ok(s) => scenarios.push(s),
            Err(e) => violations.push(ConfigViolation::new(Some(name), "builtins", e.to_string())),
        }
    }
    scenarios.extend(config.scenarios.iter().cloned());
    if scenarios.is_empty() {
        violations.push(ConfigViolation::new(None, "scenarios", "config defines no scenarios"));
    }
    let mut seen = BTreeSet::new();
    for s in &scenarios {
        if !seen.insert(s.name.as_str()) {
            violations.push(ConfigViolation::new(Some(&s.name), "name", "duplicate scenario name"));
        }
        violations.extend(validate_scenario(s));
    }
    if violations.is_empty() {
        scenarios.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(scenarios)
    } else {
        Err(violations)
    }
}

/// Semantic checks on one scenario.
pub fn validate_scenario(s: &Scenario) -> Vec<ConfigViolation> {
    let name = Some(s.name.as_str());
    let mut out = Vec::new();
    let mut push = |field: &str, msg: String| out.push(ConfigViolation::new(name, field, msg));

    if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
        push("name", "names must be non-empty and use only [A-Za-z0-9._-]".into());
    }
    let report = RateFunction::validate_parts(s.rates.y0, &s.rates.endpoints, &s.rates.rates, s.rates.y_max());
    for v in &report.violations {
        push("rates", v.to_string());
    }
    let (y0, y_max) = (s.rates.y0, s.rates.y_max());
    if !(s.y_star >= y0 && s.y_star <= y_max) {
        push("y_star", format!("threshold {} outside [{y0}, {y_max}]", s.y_star));
    }
    if !(s.grid_step > 0.0 && s.grid_step.is_finite()) {
        push("grid_step", format!("grid step must be positive, got {}", s.grid_step));
    } else if (y_max - y0) / s.grid_step > 1e7 {
        push("grid_step", "grid step too small for the danger range".into());
    }
    match s.trajectory_spec().build() {
        Ok(t) => {
            let (lo, hi) = (t.level(0), t.level(t.horizon()));
            if lo < y0 || hi > y_max {
                push(
                    "trajectory",
                    format!("trajectory [{lo}, {hi}] leaves the tested range [{y0}, {y_max}]"),
                );
            }
            if t.time_map().is_err() {
                push("trajectory", "trajectory never rises".into());
            }
        }
        Err(e) => push("trajectory", e.to_string()),
    }
    if let Some(e) = &s.ensemble {
        if e.paths == 0 {
            push("ensemble.paths", "ensemble needs at least one path".into());
        }
    }
    if s.allocation.is_some() && report.is_valid() {
        let built = s
            .rates
            .build()
            .and_then(|r| s.trajectory_spec().build().map(|t| (r, t)));
        if let Ok((r, t)) = built {
            if let Err(e) = s.evolve_config(&r, &t) {
                push("allocation", e.to_string());
            }
        }
        if let Some(a) = &s.allocation {
            if !(a.snap > 0.0 && a.snap.is_finite()) {
                push("allocation.snap", format!("snap must be positive, got {}", a.snap));
            }
            if a.replicates == 0 {
                push("allocation.replicates", "need at least one replicate".into());
            }
        }
    }
    out
}

/// Command-line overrides applied before a scenario is hashed and run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub paths: Option<usize>,
    pub grid: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, s: &Scenario) -> Scenario {
        let mut s = s.clone();
        if let Some(paths) = self.paths {
            let mode = s.ensemble.as_ref().map(|e| e.mode).unwrap_or_default();
            s.ensemble = Some(EnsembleSpec { paths, mode });
        }
        if let Some(grid) = self.grid {
            s.grid_step = grid;
        }
        s
    }
}

/// SHA-256 of the scenario's canonical JSON.
pub fn config_hash(s: &Scenario) -> String {
    let bytes = serde_json::to_vec(s).expect("scenario serialises");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub schema_version: u32,
}

/// Tabular series, one row per `y_t` grid point (static scenarios) or per
/// step (dynamic scenarios).
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramOut {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

/// Summary of a Monte Carlo ensemble of estimate paths. Per-step vectors are
/// indexed by trajectory step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleMetrics {
    pub paths: usize,
    pub mode: ModeSpec,
    pub levels: Vec<f64>,
    pub mean_estimate: Vec<f64>,
    pub bias_magnitude: Vec<f64>,
    pub detection_likelihood: Vec<f64>,
    pub miss_rate: f64,
    pub conditional_lag: Option<f64>,
    pub conditional_lag_se: Option<f64>,
    pub lag_histogram: HistogramOut,
    /// The first few paths, verbatim.
    pub sample_paths: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsMetrics {
    pub replicates: usize,
    /// Fraction of replicates whose estimate crossed the threshold.
    pub detected_fraction: f64,
    pub total_budget: f64,
    pub min_bias_magnitude: f64,
    /// Rate in force at each level when the latent danger reached it, in the
    /// first replicate.
    pub example_effective_rates: RateSpec,
}

struct LagSummary {
    miss: f64,
    time: Option<f64>,
    danger: Option<f64>,
}

/// Averages replicate evolutions step by step. Miss probability is the mean
/// of the replicates' effective miss probabilities; lags are pooled
/// conditional means.
fn summarise_evolutions(
    evolutions: &[Evolution],
    cfg: &EvolveConfig,
    trajectory: &CapabilityTrajectory,
    y_star: f64,
) -> capwatch_core::Result<(Series, LagSummary, DynamicsMetrics)> {
    let n = evolutions.len() as f64;
    let first = &evolutions[0];
    let steps = first.levels.len();
    let mean = |f: &dyn Fn(&Evolution) -> f64| evolutions.iter().map(f).sum::<f64>() / n;
    let rows: Vec<Vec<f64>> = (0..steps)
        .map(|t| {
            vec![
                first.levels[t],
                mean(&|e| e.bias_magnitude[t]),
                mean(&|e| e.detection_likelihood[t]),
                t as f64,
                mean(&|e| e.estimates[t]),
                cfg.schedule.budget_at(t),
                mean(&|e| e.sensitivity_near_frontier[t]),
            ]
        })
        .collect();
    let series = Series {
        columns: vec![
            "y_t",
            "bias_magnitude",
            "detection_likelihood",
            "step",
            "estimate",
            "budget",
            "sensitivity_near_frontier",
        ],
        rows,
    };

    let (mut miss, mut detect, mut time, mut danger) = (0.0, 0.0, 0.0, 0.0);
    for e in evolutions {
        let law = lag_distribution(&e.effective, y_star, trajectory)?;
        let c = law.miss_probability();
        miss += c;
        detect += 1.0 - c;
        time += law.unconditional_moment();
        danger += law.conditional_mean_danger().value().map_or(0.0, |l| l * (1.0 - c));
    }
    let pooled = |moment: f64| (detect > 0.0).then(|| moment / detect);
    let lags = LagSummary {
        miss: miss / n,
        time: pooled(time),
        danger: pooled(danger),
    };
    let dynamics = DynamicsMetrics {
        replicates: evolutions.len(),
        detected_fraction: evolutions.iter().filter(|e| e.detected_at.is_some()).count() as f64 / n,
        total_budget: first.budgets.iter().sum(),
        min_bias_magnitude: series.rows.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min),
        example_effective_rates: rate_spec(&first.effective),
    };
    Ok((series, lags, dynamics))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub name: String,
    pub provenance: Provenance,
    pub kind: &'static str,
    pub y_star: f64,
    pub miss_probability: f64,
    /// Expected time lag given detection, `null` if never detected.
    pub conditional_lag: Option<f64>,
    /// The same in danger units.
    pub conditional_lag_danger: Option<f64>,
    pub final_bias_magnitude: f64,
    pub series_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub provenance: Provenance,
    pub series: Series,
    pub metrics: Metrics,
}

const SAMPLE_PATHS: usize = 8;

/// Seed for a scenario: the command-line seed if given, else the config's,
/// else zero.
pub fn effective_seed(s: &Scenario, cli_seed: Option<u64>) -> u64 {
    cli_seed.or(s.seed).unwrap_or(0)
}

/// `y0, y0 + h, …` up to and including `y_max`.
fn y_grid(y0: f64, y_max: f64, h: f64) -> Vec<f64> {
    let n = ((y_max - y0) / h + 1e-9).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|i| (y0 + i as f64 * h).min(y_max)).collect();
    if y_max - g[n] > 1e-9 * (1.0 + y_max.abs()) {
        g.push(y_max);
    } else {
        g[n] = y_max;
    }
    g
}

fn model(name: &str) -> impl Fn(capwatch_core::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Model {
        name: name.to_owned(),
        source,
    }
}

fn summarise_ensemble(e: &ChainEnsemble, mode: ModeSpec) -> EnsembleMetrics {
    let h = e.lag_histogram(0.1);
    EnsembleMetrics {
        paths: e.n_paths(),
        mode,
        levels: e.levels().to_vec(),
        mean_estimate: e.mean_estimate(),
        bias_magnitude: e.bias_magnitude(),
        detection_likelihood: e.detection_likelihood(),
        miss_rate: e.miss_rate(),
        conditional_lag: e.conditional_lag(),
        conditional_lag_se: e.conditional_lag_se(),
        lag_histogram: HistogramOut {
            bin_width: h.bin_width,
            counts: h.counts,
        },
        sample_paths: (0..e.n_paths().min(SAMPLE_PATHS)).map(|i| e.path(i)).collect(),
    }
}

fn rate_spec(r: &RateFunction) -> RateSpec {
    RateSpec {
        y0: r.y0(),
        endpoints: r.endpoints().to_vec(),
        rates: r.rates().to_vec(),
        y_max: Some(r.y_max()),
    }
}

/// Evaluates a validated scenario. The output depends only on the scenario
/// and `seed`.
pub fn run(s: &Scenario, seed: u64) -> Result<ScenarioResult, ScenarioError> {
    let err = model(&s.name);
    let rate = s.rates.build().map_err(&err)?;
    let trajectory = s.trajectory_spec().build().map_err(&err)?;
    let provenance = Provenance {
        config_hash: config_hash(s),
        seed,
        tool_version: TOOL_VERSION.into(),
        schema_version: SCHEMA_VERSION,
    };

    let (series, lags, dynamics, evolution) = match s.evolve_config(&rate, &trajectory).map_err(&err)? {
        None => {
            let mut rows = Vec::new();
            for y in y_grid(rate.y0(), rate.y_max(), s.grid_step) {
                let d = EstimatorDistribution::new(&rate, y).map_err(&err)?;
                rows.push(vec![y, d.bias().magnitude, d.detection_likelihood(s.y_star)]);
            }
            let series = Series {
                columns: vec!["y_t", "bias_magnitude", "detection_likelihood"],
                rows,
            };
            let law = lag_distribution(&rate, s.y_star, &trajectory).map_err(&err)?;
            let lags = LagSummary {
                miss: law.miss_probability(),
                time: law.conditional_mean().value(),
                danger: law.conditional_mean_danger().value(),
            };
            (series, lags, None, None)
        }
        Some(cfg) => {
            let replicates = s.allocation.as_ref().map_or(1, |a| a.replicates);
            let base = derive_seed(seed, 2);
            let evolutions: Vec<Evolution> = {
                use rayon::prelude::*;
                (0..replicates)
                    .into_par_iter()
                    .map(|i| evolve_rate_schedule(&cfg, derive_seed(base, i as u64)))
                    .collect::<Result<_, _>>()
                    .map_err(&err)?
            };
            let (series, lags, dynamics) =
                summarise_evolutions(&evolutions, &cfg, &trajectory, s.y_star).map_err(&err)?;
            (series, lags, Some(dynamics), evolutions.into_iter().next())
        }
    };

    let ensemble = match &s.ensemble {
        None => None,
        Some(spec) => {
            let schedule = match &evolution {
                Some(evo) => RateSchedule::PerStep(&evo.rates),
                None => RateSchedule::Static(&rate),
            };
            let e = run_chain(&ChainConfig {
                trajectory: &trajectory,
                schedule,
                y_star: s.y_star,
                mode: spec.mode.into(),
                n_paths: spec.paths,
                seed: derive_seed(seed, 1),
            })
            .map_err(&err)?;
            Some(summarise_ensemble(&e, spec.mode))
        }
    };

    let final_bias_magnitude = series.rows.last().map_or(0.0, |r| r[1]);
    let metrics = Metrics {
        name: s.name.clone(),
        provenance: provenance.clone(),
        kind: if s.is_dynamic() { "dynamic" } else { "static" },
        y_star: s.y_star,
        miss_probability: lags.miss,
        conditional_lag: lags.time,
        conditional_lag_danger: lags.danger,
        final_bias_magnitude,
        series_rows: series.rows.len(),
        dynamics,
        ensemble,
    };
    Ok(ScenarioResult {
        name: s.name.clone(),
        provenance,
        series,
        metrics,
    })
}

/// Runs scenarios in parallel; results keep the input order.
pub fn run_all(
    scenarios: &[Scenario],
    seed: impl Fn(&Scenario) -> u64 + Sync,
) -> Vec<Result<ScenarioResult, ScenarioError>> {
    use rayon::prelude::*;
    scenarios.par_iter().map(|s| run(s, seed(s))).collect()
}
