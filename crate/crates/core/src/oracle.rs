//! Brute-force Bernoulli grid model of the testing process.
//!
//! The danger axis is cut into cells of width `h`; each cell holds one test
//! that passes independently with probability `1 - exp(-k·h)`, where `k` is
//! the sensitivity at the cell midpoint. The estimate is the level (right
//! edge) of the highest passing cell, or `y0` when nothing passes. None of
//! this uses the closed forms in [`crate::estimator`]; it exists to check
//! them.

use alloc::vec::Vec;

use rand::Rng;

use crate::dynamics::LagHistogram;
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::math::{exp, floor, sqrt};
use crate::rng::{stream, StreamRng};
use crate::sensitivity::RateFunction;

#[derive(Debug, Clone)]
pub struct GridTestModel {
    y0: f64,
    step: f64,
    levels: Vec<f64>,
    pass: Vec<f64>,
    // indices with pass > 0, ascending
    active: Vec<usize>,
}

impl GridTestModel {
    /// Grid for `rate` truncated at `y_t` with cell width `step`. A final
    /// partial cell ends exactly at `y_t`.
    pub fn new(rate: &RateFunction, y_t: f64, step: f64) -> Result<Self> {
        let y0 = rate.y0();
        if !(step > 0.0) {
            return Err(Error::Config(alloc::format!("grid step must be positive, got {step}")));
        }
        if !(y_t >= y0 && y_t <= rate.y_max()) {
            return Err(Error::OutOfRange {
                value: y_t,
                lo: y0,
                hi: rate.y_max(),
            });
        }
        let span = (y_t - y0) / step;
        let full = floor(span + 1e-9) as usize;
        let mut levels = Vec::with_capacity(full + 1);
        let mut pass = Vec::with_capacity(full + 1);
        let mut lo = y0;
        for i in 0..=full {
            let hi = if i < full { y0 + (i + 1) as f64 * step } else { y_t };
            if hi - lo <= 1e-9 * step {
                break;
            }
            let k = rate.rate_at(0.5 * (lo + hi))?;
            levels.push(hi);
            pass.push(1.0 - exp(-k * (hi - lo)));
            lo = hi;
        }
        Ok(Self::assemble(y0, step, levels, pass))
    }

    /// Grid with explicit per-cell pass probabilities; cell `i` ends at
    /// `y0 + (i + 1)·step`.
    pub fn from_probabilities(y0: f64, step: f64, pass: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || pass.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(
                "grid needs a positive step and probabilities in [0, 1]".into(),
            ));
        }
        let levels = (0..pass.len()).map(|i| y0 + (i + 1) as f64 * step).collect();
        Ok(Self::assemble(y0, step, levels, pass))
    }

    fn assemble(y0: f64, step: f64, levels: Vec<f64>, pass: Vec<f64>) -> Self {
        let active = pass
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, _)| i)
            .collect();
        Self {
            y0,
            step,
            levels,
            pass,
            active,
        }
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn y_t(&self) -> f64 {
        self.levels.last().copied().unwrap_or(self.y0)
    }

    pub fn n_cells(&self) -> usize {
        self.levels.len()
    }

    pub fn pass_probabilities(&self) -> &[f64] {
        &self.pass
    }

    /// Reported level of a draw.
    pub fn level(&self, cell: Option<usize>) -> f64 {
        cell.map_or(self.y0, |i| self.levels[i])
    }

    /// Highest passing cell. Cells are tried from the top; those below the
    /// first pass cannot change the supremum and are not drawn.
    pub fn sample_sup_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        self.active
            .iter()
            .rev()
            .copied()
            .find(|&i| rng.random::<f64>() < self.pass[i])
    }

    pub fn sample_sup<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.level(self.sample_sup_index(rng))
    }

    /// First cell lying entirely above `y_star`.
    fn first_cell_above(&self, y_star: f64) -> usize {
        self.levels
            .partition_point(|&hi| hi - self.step < y_star - 1e-9 * self.step)
    }

    /// One realisation: the supremum and the lowest passing cell above
    /// `y_star`. Cells between the threshold and the supremum are drawn only
    /// after the downward scan, so both come from the same realisation.
    fn draw(&self, rng: &mut StreamRng, above: usize) -> (Option<usize>, Option<usize>) {
        let sup = self.sample_sup_index(rng);
        let first = match sup {
            Some(s) if s >= above => {
                let start = self.active.partition_point(|&i| i < above);
                let lower = self.active[start..]
                    .iter()
                    .copied()
                    .take_while(|&i| i < s)
                    .find(|&i| rng.random::<f64>() < self.pass[i]);
                Some(lower.unwrap_or(s))
            }
            _ => None,
        };
        (sup, first)
    }
}

/// Empirical metrics from independent grid realisations.
#[derive(Debug, Clone)]
pub struct OracleMetrics {
    pub n_draws: usize,
    pub y_t: f64,
    pub y_star: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub bias_magnitude: f64,
    /// Fraction of draws with estimate above `y_star`.
    pub detection_likelihood: f64,
    /// Fraction of draws with no passing test above `y_star`.
    pub miss_rate: f64,
    /// Mean lag in danger units over detected draws.
    pub conditional_lag: Option<f64>,
    pub lag_se: Option<f64>,
    pub lag_histogram: LagHistogram,
    estimates: Vec<f64>,
}

impl OracleMetrics {
    /// Fraction of draws with estimate at or below `y`.
    pub fn empirical_cdf(&self, y: f64) -> f64 {
        let tol = 1e-9 * (1.0 + y.abs());
        self.estimates.partition_point(|&e| e <= y + tol) as f64 / self.n_draws as f64
    }

    /// Estimates in ascending order.
    pub fn sorted_estimates(&self) -> &[f64] {
        &self.estimates
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, sqrt(var / n))
}

/// Runs `n_draws` realisations; draw `i` uses stream `(seed, i)`.
pub fn oracle_metrics(model: &GridTestModel, y_star: f64, n_draws: usize, seed: u64) -> OracleMetrics {
    let above = model.first_cell_above(y_star);
    let draws = map_indexed(n_draws, |i| {
        let mut rng = stream(seed, i as u64);
        model.draw(&mut rng, above)
    });

    let mut estimates: Vec<f64> = draws.iter().map(|d| model.level(d.0)).collect();
    let lags: Vec<f64> = draws
        .iter()
        .filter_map(|d| d.1)
        .map(|j| model.levels[j] - y_star)
        .collect();
    let (mean, mean_se) = mean_and_se(&estimates);
    let detected = estimates.iter().filter(|&&e| e > y_star).count();
    let (conditional_lag, lag_se) = if lags.is_empty() {
        (None, None)
    } else {
        let (m, se) = mean_and_se(&lags);
        (Some(m), Some(se))
    };
    let bin = 0.1;
    let max = lags.iter().copied().fold(0.0, f64::max);
    let bins = (max / bin) as usize + 1;
    let mut counts = alloc::vec![0u64; bins];
    for &l in &lags {
        counts[((l / bin) as usize).min(bins - 1)] += 1;
    }
    estimates.sort_by(f64::total_cmp);

    OracleMetrics {
        n_draws,
        y_t: model.y_t(),
        y_star,
        mean,
        mean_se,
        bias_magnitude: model.y_t() - mean,
        detection_likelihood: detected as f64 / n_draws as f64,
        miss_rate: (n_draws - lags.len()) as f64 / n_draws as f64,
        conditional_lag,
        lag_se,
        lag_histogram: LagHistogram { bin_width: bin, counts },
        estimates,
    }
}

/// Oracle estimates at a ladder of grid widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementRow {
    pub step: f64,
    pub mean: f64,
    pub conditional_lag: Option<f64>,
}

/// Draws once on the finest grid and reads off coarser grids by merging
/// `factor` neighbouring cells (a merged cell passes iff one of its parts
/// does). All widths therefore share the same realisations.
pub fn refinement(
    rate: &RateFunction,
    y_t: f64,
    y_star: f64,
    finest_step: f64,
    factors: &[usize],
    n_draws: usize,
    seed: u64,
) -> Result<Vec<RefinementRow>> {
    let model = GridTestModel::new(rate, y_t, finest_step)?;
    let above = model.first_cell_above(y_star);
    let draws = map_indexed(n_draws, |i| {
        let mut rng = stream(seed, i as u64);
        model.draw(&mut rng, above)
    });
    let y0 = model.y0();
    let coarse_level = |i: usize, f: usize| {
        let cell = i / f;
        (y0 + (cell + 1) as f64 * finest_step * f as f64).min(model.y_t())
    };
    Ok(factors
        .iter()
        .map(|&f| {
            let f = f.max(1);
            let mean = draws
                .iter()
                .map(|d| d.0.map_or(y0, |i| coarse_level(i, f)))
                .sum::<f64>()
                / n_draws as f64;
            let lags: Vec<f64> = draws
                .iter()
                .filter_map(|d| d.1)
                .map(|j| coarse_level(j, f) - y_star)
                .collect();
            let conditional_lag = (!lags.is_empty()).then(|| lags.iter().sum::<f64>() / lags.len() as f64);
            RefinementRow {
                step: finest_step * f as f64,
                mean,
                conditional_lag,
            }
        })
        .collect())
}
