use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::exp;

/// A one-off capability jump applied from `step` onwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub step: usize,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryKind {
    /// `start + increment · t`.
    Linear { start: f64, increment: f64 },
    /// Logistic in `t` between `floor` and `ceiling`.
    SCurve {
        floor: f64,
        ceiling: f64,
        midpoint: f64,
        steepness: f64,
    },
    /// Linear growth plus discrete jumps.
    Jumps {
        start: f64,
        increment: f64,
        jumps: Vec<Jump>,
    },
}

/// Latent danger `y_t` for `t = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityTrajectory {
    kind: TrajectoryKind,
    levels: Vec<f64>,
}

impl CapabilityTrajectory {
    pub fn new(kind: TrajectoryKind, horizon: usize) -> Result<Self> {
        let levels: Vec<f64> = match &kind {
            TrajectoryKind::Linear { start, increment } => {
                if *increment < 0.0 {
                    return Err(Error::Config(format!("negative increment {increment}")));
                }
                (0..=horizon).map(|t| start + increment * t as f64).collect()
            }
            TrajectoryKind::SCurve {
                floor,
                ceiling,
                midpoint,
                steepness,
            } => {
                if !(*ceiling >= *floor && *steepness > 0.0) {
                    return Err(Error::Config(format!(
                        "s-curve needs ceiling >= floor and positive steepness (got {floor}, {ceiling}, {steepness})"
                    )));
                }
                (0..=horizon)
                    .map(|t| floor + (ceiling - floor) / (1.0 + exp(-steepness * (t as f64 - midpoint))))
                    .collect()
            }
            TrajectoryKind::Jumps {
                start,
                increment,
                jumps,
            } => {
                if *increment < 0.0 || jumps.iter().any(|j| j.size < 0.0) {
                    return Err(Error::Config("jump trajectories must not decrease".into()));
                }
                (0..=horizon)
                    .map(|t| {
                        let jumped: f64 = jumps.iter().filter(|j| j.step <= t).map(|j| j.size).sum();
                        start + increment * t as f64 + jumped
                    })
                    .collect()
            }
        };
        if levels.iter().any(|y| !y.is_finite()) {
            return Err(Error::Config("trajectory has non-finite levels".into()));
        }
        if let Some(w) = levels.windows(2).find(|w| w[1] < w[0]) {
            return Err(Error::Shrinking { from: w[0], to: w[1] });
        }
        Ok(Self { kind, levels })
    }

    pub fn kind(&self) -> &TrajectoryKind {
        &self.kind
    }

    pub fn horizon(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, t: usize) -> f64 {
        self.levels[t]
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Inverse of the piecewise-linear interpolation between steps.
    pub fn time_map(&self) -> Result<TimeMap> {
        let pieces: Vec<TimePiece> = self
            .levels
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0])
            .map(|(t, w)| TimePiece {
                lo: w[0],
                hi: w[1],
                t_lo: t as f64,
                slope: 1.0 / (w[1] - w[0]),
            })
            .collect();
        let last = *pieces
            .last()
            .ok_or_else(|| Error::Config("trajectory never rises".into()))?;
        Ok(TimeMap {
            start: self.levels[0],
            end: last.hi,
            end_time: self.horizon() as f64,
            tail_slope: last.slope,
            pieces,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct TimePiece {
    lo: f64,
    hi: f64,
    t_lo: f64,
    slope: f64,
}

/// First-passage time `inf{t : y(t) ≥ level}` of an interpolated
/// trajectory. Past the horizon the last rising slope is extended.
#[derive(Debug, Clone)]
pub struct TimeMap {
    start: f64,
    end: f64,
    end_time: f64,
    tail_slope: f64,
    pieces: Vec<TimePiece>,
}

impl TimeMap {
    pub fn time_at(&self, level: f64) -> f64 {
        let (lo, t_lo, slope) = self.piece(level);
        t_lo + (level - lo) * slope
    }

    /// Time at `left` (taken from the right) and `dt/dy` on the piece that
    /// contains `inside`.
    pub(crate) fn local(&self, left: f64, inside: f64) -> (f64, f64) {
        let (lo, t_lo, slope) = self.piece(inside);
        (t_lo + (left - lo) * slope, slope)
    }

    fn piece(&self, level: f64) -> (f64, f64, f64) {
        if level <= self.start {
            return (level, 0.0, 0.0);
        }
        if level > self.end {
            // The trajectory may plateau after its last rise; extrapolation
            // starts at the horizon.
            return (self.end, self.end_time, self.tail_slope);
        }
        let i = self.pieces.partition_point(|p| p.hi < level);
        let p = self.pieces[i];
        (p.lo, p.t_lo, p.slope)
    }

    /// Levels where `dt/dy` changes.
    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        self.pieces.iter().flat_map(|p| [p.lo, p.hi])
    }
}
