use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::trajectory::{CapabilityTrajectory, TimeMap};
use crate::error::{Error, Result};
use crate::estimator::EstimatorDistribution;
use crate::exec::map_indexed;
use crate::math::{ln, sqrt};
use crate::rng::stream;
use crate::sensitivity::RateFunction;

/// Which tests are re-run when capability advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Results below the previous latent level persist; only the newly
    /// reachable interval (or newly added tests) is sampled.
    #[default]
    Main,
    /// Only the current estimate is trusted; everything above it is
    /// re-sampled.
    Alternative,
}

/// One path of the estimate chain.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateChainState {
    pub t: usize,
    pub y_t: f64,
    pub y_hat: f64,
    pub y_star: Option<f64>,
    /// First step with `y_hat > y_star`.
    pub detected_at: Option<usize>,
    /// Level of the lowest passing test above `y_star` at detection.
    pub first_passage_level: Option<f64>,
}

impl EstimateChainState {
    /// Chain at the origin: nothing reachable, estimate at `y0`.
    pub fn new(y0: f64, y_star: Option<f64>) -> Self {
        Self {
            t: 0,
            y_t: y0,
            y_hat: y0,
            y_star,
            detected_at: None,
            first_passage_level: None,
        }
    }

    /// Advances one step to latent level `y_next` under `rate_next`.
    ///
    /// `new_test_floor` is the lowest level at or above the current estimate
    /// where tests changed for this step, if any.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        rate_next: &RateFunction,
        y_next: f64,
        new_test_floor: Option<f64>,
        mode: UpdateMode,
        rng: &mut R,
    ) -> Result<Self> {
        let u = rng.random::<f64>();
        let v = rng.random::<f64>();
        self.advance_with(rate_next, y_next, new_test_floor, mode, u, v)
    }

    /// [`Self::advance`] with explicit uniforms: `u` drives the estimate and
    /// `v` the first-passage level on a detecting step.
    pub fn advance_with(
        &self,
        rate_next: &RateFunction,
        y_next: f64,
        new_test_floor: Option<f64>,
        mode: UpdateMode,
        u: f64,
        v: f64,
    ) -> Result<Self> {
        if y_next < self.y_t {
            return Err(Error::Shrinking {
                from: self.y_t,
                to: y_next,
            });
        }
        if let Some(floor) = new_test_floor {
            if floor < self.y_hat {
                return Err(Error::OutOfRange {
                    value: floor,
                    lo: self.y_hat,
                    hi: y_next,
                });
            }
        }
        let dist = EstimatorDistribution::new(rate_next, y_next)?;
        let floor = match mode {
            UpdateMode::Main => new_test_floor.map_or(self.y_t, |f| f.min(self.y_t)),
            UpdateMode::Alternative => self.y_hat,
        };
        let y_hat = if ln(u) <= dist.log_cdf(floor)? {
            self.y_hat
        } else {
            dist.quantile(u).max(self.y_hat)
        };

        let mut next = Self {
            t: self.t + 1,
            y_t: y_next,
            y_hat,
            ..self.clone()
        };
        if let (Some(y_star), None) = (self.y_star, self.detected_at) {
            if y_hat > y_star {
                next.detected_at = Some(next.t);
                // Passing tests in (lo, y_hat) form a Poisson process, so the
                // lowest one is the first arrival, capped at y_hat.
                let lo = y_star.max(floor);
                let first = rate_next
                    .level_reaching(lo, -ln(v), y_hat)
                    .map_or(y_hat, |x| x.min(y_hat));
                next.first_passage_level = Some(first);
            }
        }
        Ok(next)
    }
}

/// Sensitivity in force at each step.
#[derive(Debug, Clone, Copy)]
pub enum RateSchedule<'a> {
    Static(&'a RateFunction),
    /// Entry `t` is used to probe level `t`; needs `horizon + 1` entries.
    PerStep(&'a [RateFunction]),
}

impl<'a> RateSchedule<'a> {
    fn at(&self, t: usize) -> &'a RateFunction {
        match self {
            RateSchedule::Static(r) => r,
            RateSchedule::PerStep(rs) => &rs[t],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainConfig<'a> {
    pub trajectory: &'a CapabilityTrajectory,
    pub schedule: RateSchedule<'a>,
    pub y_star: f64,
    pub mode: UpdateMode,
    pub n_paths: usize,
    pub seed: u64,
}

struct PathRecord {
    estimates: Vec<f64>,
    detected_at: Option<usize>,
    lag: Option<f64>,
}

/// Equal-width histogram of detection lags.
#[derive(Debug, Clone, PartialEq)]
pub struct LagHistogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

/// Independent chain paths and their empirical metrics.
#[derive(Debug, Clone)]
pub struct ChainEnsemble {
    levels: Vec<f64>,
    y_star: f64,
    n_paths: usize,
    // step-major: estimates[step * n_paths + path]
    estimates: Vec<f64>,
    detected_at: Vec<Option<usize>>,
    lags: Vec<f64>,
}

impl ChainEnsemble {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Estimates of every path at `step`, in path order.
    pub fn estimates_at(&self, step: usize) -> &[f64] {
        &self.estimates[step * self.n_paths..(step + 1) * self.n_paths]
    }

    /// Full trajectory of one path.
    pub fn path(&self, index: usize) -> Vec<f64> {
        (0..self.levels.len())
            .map(|s| self.estimates[s * self.n_paths + index])
            .collect()
    }

    pub fn detected_at(&self) -> &[Option<usize>] {
        &self.detected_at
    }

    pub fn mean_estimate(&self) -> Vec<f64> {
        (0..self.levels.len())
            .map(|s| self.estimates_at(s).iter().sum::<f64>() / self.n_paths as f64)
            .collect()
    }

    pub fn bias_magnitude(&self) -> Vec<f64> {
        self.mean_estimate()
            .into_iter()
            .zip(&self.levels)
            .map(|(m, y)| y - m)
            .collect()
    }

    /// Fraction of paths whose estimate exceeds `y*` at each step.
    pub fn detection_likelihood(&self) -> Vec<f64> {
        (0..self.levels.len())
            .map(|s| {
                let hits = self.estimates_at(s).iter().filter(|&&y| y > self.y_star).count();
                hits as f64 / self.n_paths as f64
            })
            .collect()
    }

    pub fn miss_rate(&self) -> f64 {
        let missed = self.detected_at.iter().filter(|d| d.is_none()).count();
        missed as f64 / self.n_paths as f64
    }

    /// Time lags of detected paths, in path order.
    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn conditional_lag(&self) -> Option<f64> {
        if self.lags.is_empty() {
            None
        } else {
            Some(self.lags.iter().sum::<f64>() / self.lags.len() as f64)
        }
    }

    pub fn conditional_lag_se(&self) -> Option<f64> {
        let n = self.lags.len();
        if n < 2 {
            return None;
        }
        let mean = self.conditional_lag()?;
        let var = self.lags.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1) as f64;
        Some(sqrt(var / n as f64))
    }

    pub fn lag_histogram(&self, bin_width: f64) -> LagHistogram {
        let max = self.lags.iter().copied().fold(0.0, f64::max);
        let bins = (max / bin_width) as usize + 1;
        let mut counts = alloc::vec![0u64; bins];
        for &l in &self.lags {
            counts[((l / bin_width) as usize).min(bins - 1)] += 1;
        }
        LagHistogram { bin_width, counts }
    }
}

/// Runs `n_paths` independent chains along the trajectory. Path `i` uses the
/// stream `(seed, i)`, so the ensemble is identical whether or not the paths
/// run in parallel.
pub fn run_chain(config: &ChainConfig<'_>) -> Result<ChainEnsemble> {
    let trajectory = config.trajectory;
    let horizon = trajectory.horizon();
    if let RateSchedule::PerStep(rs) = config.schedule {
        if rs.len() < horizon + 1 {
            return Err(Error::Config(format!(
                "rate schedule has {} entries, trajectory needs {}",
                rs.len(),
                horizon + 1
            )));
        }
    }
    let origin = config.schedule.at(0).y0();
    if trajectory.level(0) < origin {
        return Err(Error::OutOfRange {
            value: trajectory.level(0),
            lo: origin,
            hi: config.schedule.at(0).y_max(),
        });
    }
    // A flat trajectory has no time map; lags are then left unrecorded.
    let time_map = trajectory.time_map().ok();

    let records = map_indexed(config.n_paths, |i| run_path(config, time_map.as_ref(), i));
    let records: Vec<PathRecord> = records.into_iter().collect::<Result<_>>()?;

    let steps = horizon + 1;
    let n = config.n_paths;
    let mut estimates = alloc::vec![0.0; steps * n];
    let mut detected_at = Vec::with_capacity(n);
    let mut lags = Vec::new();
    for (p, rec) in records.into_iter().enumerate() {
        for (s, y) in rec.estimates.into_iter().enumerate() {
            estimates[s * n + p] = y;
        }
        detected_at.push(rec.detected_at);
        lags.extend(rec.lag);
    }
    Ok(ChainEnsemble {
        levels: trajectory.levels().to_vec(),
        y_star: config.y_star,
        n_paths: n,
        estimates,
        detected_at,
        lags,
    })
}

fn run_path(config: &ChainConfig<'_>, time_map: Option<&TimeMap>, index: usize) -> Result<PathRecord> {
    let mut rng = stream(config.seed, index as u64);
    let traj = config.trajectory;
    let first = config.schedule.at(0);
    let mut state = EstimateChainState::new(first.y0(), Some(config.y_star)).advance(
        first,
        traj.level(0),
        None,
        config.mode,
        &mut rng,
    )?;
    state.t = 0;
    if state.detected_at.is_some() {
        state.detected_at = Some(0);
    }
    let mut estimates = Vec::with_capacity(traj.horizon() + 1);
    estimates.push(state.y_hat);
    for t in 0..traj.horizon() {
        let current = config.schedule.at(t);
        let next = config.schedule.at(t + 1);
        let floor = match config.schedule {
            RateSchedule::Static(_) => None,
            RateSchedule::PerStep(_) => current.lowest_difference(next, state.y_hat, traj.level(t + 1)),
        };
        state = state.advance(next, traj.level(t + 1), floor, config.mode, &mut rng)?;
        estimates.push(state.y_hat);
    }
    let lag = match (time_map, state.first_passage_level) {
        (Some(map), Some(level)) => Some(map.time_at(level) - map.time_at(config.y_star)),
        _ => None,
    };
    Ok(PathRecord {
        estimates,
        detected_at: state.detected_at,
        lag,
    })
}
