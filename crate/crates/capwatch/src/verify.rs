//! Closed forms against the Bernoulli-grid oracle.

use std::fmt::Write as _;

use capwatch_core::dynamics::{CapabilityTrajectory, TrajectoryKind};
use capwatch_core::estimator::{lag_distribution, miss_probability};
use capwatch_core::oracle::{oracle_metrics, GridTestModel};
use capwatch_core::rng::derive_seed;
use capwatch_core::EstimatorDistribution;
use serde::Serialize;

use crate::config::Scenario;
use crate::report::format_sig;
use crate::scenarios::ScenarioError;

/// Rows with `|z|` at or above this fail.
pub const Z_LIMIT: f64 = 4.0;

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub draws: usize,
    pub grid_step: f64,
    pub seed: u64,
    /// Added to the analytic mean before comparison. Exists so the harness
    /// can check that it notices a wrong closed form.
    pub perturb_analytic: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            draws: 100_000,
            grid_step: 1e-3,
            seed: 0,
            perturb_analytic: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    pub scenario: String,
    pub quantity: String,
    pub analytic: Option<f64>,
    pub oracle: Option<f64>,
    pub standard_error: f64,
    /// `None` when both sides are undefined.
    pub z: Option<f64>,
    pub pass: bool,
}

fn row(scenario: &str, quantity: String, analytic: Option<f64>, oracle: Option<f64>, se: f64) -> VerifyRow {
    let z = match (analytic, oracle) {
        (Some(a), Some(o)) if se > 0.0 => Some((o - a) / se),
        (Some(a), Some(o)) if (o - a).abs() <= 1e-12 * (1.0 + a.abs()) => Some(0.0),
        (Some(_), Some(_)) => Some(f64::INFINITY),
        (None, None) => None,
        _ => Some(f64::INFINITY),
    };
    VerifyRow {
        scenario: scenario.into(),
        quantity,
        analytic,
        oracle,
        standard_error: se,
        pass: z.is_none_or(|z| z.abs() < Z_LIMIT),
        z,
    }
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Compares cdf at five grid points, the mean, the miss probability and the
/// conditional lag at `y_t = y_max`. `None` for scenarios whose rates are
/// built during the run.
pub fn verify_scenario(s: &Scenario, opts: &VerifyOptions) -> Result<Option<Vec<VerifyRow>>, ScenarioError> {
    if s.is_dynamic() {
        return Ok(None);
    }
    let err = |source| ScenarioError::Model {
        name: s.name.clone(),
        source,
    };
    let rate = s.rates.build().map_err(err)?;
    let (y0, y_t) = (rate.y0(), rate.y_max());
    let d = EstimatorDistribution::new(&rate, y_t).map_err(err)?;
    let model = GridTestModel::new(&rate, y_t, opts.grid_step).map_err(err)?;
    let m = oracle_metrics(&model, s.y_star, opts.draws, derive_seed(opts.seed, 3));
    let n = m.n_draws;

    let mut rows = Vec::new();
    for i in 1..=5 {
        // Points on the oracle grid so that cells do not straddle them.
        let raw = y0 + (y_t - y0) * i as f64 / 6.0;
        let y = y0 + ((raw - y0) / opts.grid_step).round() * opts.grid_step;
        let p = d.cdf(y).map_err(err)?;
        rows.push(row(
            &s.name,
            format!("cdf({})", format_sig(y)),
            Some(p),
            Some(m.empirical_cdf(y)),
            binomial_se(p, n),
        ));
    }
    rows.push(row(
        &s.name,
        "mean".into(),
        Some(d.mean() + opts.perturb_analytic),
        Some(m.mean),
        m.mean_se,
    ));
    let c = miss_probability(&rate, s.y_star).map_err(err)?;
    rows.push(row(
        &s.name,
        "miss_probability".into(),
        Some(c),
        Some(m.miss_rate),
        binomial_se(c, n),
    ));
    let unit = CapabilityTrajectory::new(
        TrajectoryKind::Linear {
            start: y0,
            increment: 1.0,
        },
        (y_t - y0).ceil().max(1.0) as usize,
    )
    .map_err(err)?;
    let law = lag_distribution(&rate, s.y_star, &unit).map_err(err)?;
    rows.push(row(
        &s.name,
        "conditional_lag".into(),
        law.conditional_mean_danger().value(),
        m.conditional_lag,
        m.lag_se.unwrap_or(0.0),
    ));
    Ok(Some(rows))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), format_sig)
}

/// Fixed-width comparison table.
pub fn render_table(rows: &[VerifyRow]) -> String {
    let mut s = format!(
        "{:<20} {:<18} {:>18} {:>18} {:>14} {:>9}  result\n",
        "scenario", "quantity", "analytic", "oracle", "std_err", "z"
    );
    for r in rows {
        let z = match r.z {
            None => "-".to_string(),
            Some(z) if z.is_infinite() => "inf".to_string(),
            Some(z) => format!("{z:.3}"),
        };
        let _ = writeln!(
            s,
            "{:<20} {:<18} {:>18} {:>18} {:>14} {:>9}  {}",
            r.scenario,
            r.quantity,
            cell(r.analytic),
            cell(r.oracle),
            format_sig(r.standard_error),
            z,
            if r.pass { "ok" } else { "FAIL" }
        );
    }
    s
}
