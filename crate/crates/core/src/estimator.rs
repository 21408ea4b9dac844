//! The supremum-estimator law and its outcome metrics.
//!
//! With sensitivity `r` and latent danger `y_t`, the estimate `ŷ` (highest
//! passing test) has CDF `F(y) = exp(-∫_y^{y_t} r)` on `[y0, y_t]`, an atom
//! of size `F(y0)` at the origin and density `F·r` above it. Every quantity
//! here is evaluated segment by segment in closed form; nothing in this
//! module integrates numerically.

use rand::Rng;

use crate::dynamics::CapabilityTrajectory;
use crate::error::{Error, Result};
use crate::math::{exp, exp_first_moment, exp_integral, expm1, ln};
use crate::sensitivity::RateFunction;

/// Law of `ŷ` given a sensitivity function and the latent danger `y_t`.
///
/// Tests above `y_t` always fail, so the effective rate is `r` below `y_t`
/// and zero above it.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorDistribution<'a> {
    rate: &'a RateFunction,
    y_t: f64,
}

/// Signed bias `E[ŷ] - y_t` (never positive here) and its magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bias {
    pub signed: f64,
    pub magnitude: f64,
}

impl<'a> EstimatorDistribution<'a> {
    pub fn new(rate: &'a RateFunction, y_t: f64) -> Result<Self> {
        if !(y_t >= rate.y0() && y_t <= rate.y_max()) {
            return Err(Error::OutOfRange {
                value: y_t,
                lo: rate.y0(),
                hi: rate.y_max(),
            });
        }
        Ok(Self { rate, y_t })
    }

    pub fn rate(&self) -> &'a RateFunction {
        self.rate
    }

    pub fn y_t(&self) -> f64 {
        self.y_t
    }

    pub fn y0(&self) -> f64 {
        self.rate.y0()
    }

    /// `ln F(y)`; zero at and above `y_t`.
    pub fn log_cdf(&self, y: f64) -> Result<f64> {
        if y < self.y0() {
            return Err(Error::OutOfRange {
                value: y,
                lo: self.y0(),
                hi: self.y_t,
            });
        }
        if y >= self.y_t {
            return Ok(0.0);
        }
        Ok(-self.rate.integrate_unchecked(y, self.y_t))
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        Ok(exp(self.log_cdf(y)?))
    }

    /// Density of the continuous part, valid on the open interval
    /// `(y0, y_t)`. The atom at `y0` is [`Self::point_mass`].
    pub fn pdf(&self, y: f64) -> Result<f64> {
        if !(y > self.y0() && y < self.y_t) {
            return Err(Error::OutOfRange {
                value: y,
                lo: self.y0(),
                hi: self.y_t,
            });
        }
        Ok(self.cdf(y)? * self.rate.rate_at(y)?)
    }

    /// Probability that no test passes, `F(y0)`.
    pub fn point_mass(&self) -> f64 {
        exp(-self.rate.integrate_unchecked(self.y0(), self.y_t))
    }

    /// `∫_{y0}^{y_t} F(u) du`, which is also the bias magnitude.
    fn cdf_area(&self) -> f64 {
        let mut log_f = 0.0;
        let mut area = 0.0;
        for seg in self.rate.segments().rev() {
            if seg.lo >= self.y_t {
                continue;
            }
            let hi = seg.hi.min(self.y_t);
            let width = hi - seg.lo;
            area += exp(log_f) * exp_integral(seg.rate, width);
            log_f -= seg.rate * width;
        }
        area
    }

    pub fn mean(&self) -> f64 {
        self.y_t - self.cdf_area()
    }

    pub fn bias(&self) -> Bias {
        let magnitude = self.cdf_area();
        Bias {
            signed: -magnitude,
            magnitude,
        }
    }

    /// `Pr(ŷ > y*)`: zero until the latent danger reaches the threshold.
    pub fn detection_likelihood(&self, y_star: f64) -> f64 {
        if self.y_t <= y_star {
            return 0.0;
        }
        if y_star < self.y0() {
            return 1.0;
        }
        -expm1(-self.rate.integrate_unchecked(y_star, self.y_t))
    }

    /// Generalised inverse `inf{y : F(y) ≥ u}`.
    pub fn quantile(&self, u: f64) -> f64 {
        if u >= 1.0 {
            return self.y_t;
        }
        let lu = ln(u);
        let mut log_f = 0.0;
        for seg in self.rate.segments().rev() {
            if seg.lo >= self.y_t {
                continue;
            }
            let hi = seg.hi.min(self.y_t);
            let log_f_lo = log_f - seg.rate * (hi - seg.lo);
            if lu > log_f_lo {
                return (hi + (lu - log_f) / seg.rate).max(seg.lo);
            }
            log_f = log_f_lo;
        }
        self.y0()
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Probability that a crossing of `y_star` is never detected before `y_max`:
/// `exp(-∫_{y*}^{y_max} r)`.
pub fn miss_probability(rate: &RateFunction, y_star: f64) -> Result<f64> {
    Ok(exp(-rate.integrate(y_star, rate.y_max())?))
}

/// Conditional expected lag, or the marker for a threshold that is never
/// detected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LagMean {
    Mean(f64),
    NeverDetected,
}

impl LagMean {
    pub fn value(self) -> Option<f64> {
        match self {
            LagMean::Mean(v) => Some(v),
            LagMean::NeverDetected => None,
        }
    }
}

/// First-detection law after a threshold crossing.
///
/// The lag `Δ` is the height above `y*` of the lowest passing test among
/// those that become applicable after the crossing. Its survival function is
/// `S(Δ) = exp(-∫_{y*}^{y*+Δ} r)` on `[0, y_max - y*]`, and the mass left at
/// the end of the range is the miss probability. Lags in time are obtained
/// by pushing `y* + Δ` through the trajectory's first-passage time.
#[derive(Debug, Clone)]
pub struct LagLaw {
    rate: RateFunction,
    y_star: f64,
    miss_probability: f64,
    // E[lag; detected] in time units and in danger units.
    time_moment: f64,
    danger_moment: f64,
}

impl LagLaw {
    pub fn y_star(&self) -> f64 {
        self.y_star
    }

    /// Largest possible lag in danger units.
    pub fn span(&self) -> f64 {
        self.rate.y_max() - self.y_star
    }

    pub fn miss_probability(&self) -> f64 {
        self.miss_probability
    }

    /// `S(Δ)` for `Δ ∈ [0, span]`.
    pub fn survival(&self, delta: f64) -> Result<f64> {
        let y = self.y_star + delta;
        Ok(exp(-self.rate.integrate(self.y_star, y)?))
    }

    /// `s(Δ) = r(y*+Δ) S(Δ)`.
    pub fn density(&self, delta: f64) -> Result<f64> {
        let y = self.y_star + delta;
        Ok(self.rate.rate_at(y)? * self.survival(delta)?)
    }

    /// Expected time lag given detection.
    pub fn conditional_mean(&self) -> LagMean {
        self.conditional(self.time_moment)
    }

    /// Expected lag in danger units given detection.
    pub fn conditional_mean_danger(&self) -> LagMean {
        self.conditional(self.danger_moment)
    }

    /// `E[lag · 1{detected}]` in time units; the unconditional variant.
    pub fn unconditional_moment(&self) -> f64 {
        self.time_moment
    }

    fn conditional(&self, moment: f64) -> LagMean {
        let detect = 1.0 - self.miss_probability;
        if self.miss_probability >= 1.0 || detect <= 0.0 {
            LagMean::NeverDetected
        } else {
            LagMean::Mean(moment / detect)
        }
    }
}

/// Builds the lag law of `rate` at threshold `y_star` under `growth`.
pub fn lag_distribution(rate: &RateFunction, y_star: f64, growth: &CapabilityTrajectory) -> Result<LagLaw> {
    if !(y_star >= rate.y0() && y_star < rate.y_max()) {
        return Err(Error::OutOfRange {
            value: y_star,
            lo: rate.y0(),
            hi: rate.y_max(),
        });
    }
    let time_map = growth.time_map()?;
    let t_star = time_map.time_at(y_star);

    // Breakpoints: rate endpoints and trajectory knots above y*.
    let mut cuts: alloc::vec::Vec<f64> = rate
        .endpoints()
        .iter()
        .copied()
        .chain(time_map.knots())
        .filter(|&c| c > y_star && c < rate.y_max())
        .collect();
    cuts.push(rate.y_max());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut log_s = 0.0;
    let mut time_moment = 0.0;
    let mut danger_moment = 0.0;
    let mut left = y_star;
    for right in cuts {
        let len = right - left;
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (left + right);
        let k = rate.rate_at(mid)?;
        if k > 0.0 {
            let s = exp(log_s);
            let hit = -expm1(-k * len);
            let moment = exp_first_moment(k, len);
            let (tau, slope) = time_map.local(left, mid);
            time_moment += s * ((tau - t_star) * hit + slope * moment);
            danger_moment += s * ((left - y_star) * hit + moment);
        }
        log_s -= k * len;
        left = right;
    }
    Ok(LagLaw {
        rate: rate.clone(),
        y_star,
        // Same route as `survival(span)` so the two agree bit for bit.
        miss_probability: miss_probability(rate, y_star)?,
        time_moment,
        danger_moment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{CapabilityTrajectory, TrajectoryKind};
    use alloc::vec;

    fn single(k: f64) -> RateFunction {
        RateFunction::constant(0.0, 10.0, k).unwrap()
    }

    fn two_block(k: f64) -> RateFunction {
        RateFunction::new(0.0, vec![6.0, 10.0], vec![k, 0.1], 10.0).unwrap()
    }

    fn unit_growth() -> CapabilityTrajectory {
        CapabilityTrajectory::new(
            TrajectoryKind::Linear {
                start: 0.0,
                increment: 1.0,
            },
            10,
        )
        .unwrap()
    }

    #[test]
    fn cdf_examples() {
        let r = single(2.0);
        let d = EstimatorDistribution::new(&r, 10.0).unwrap();
        assert!((d.cdf(0.0).unwrap() - (-20.0f64).exp()).abs() < 1e-20);
        assert_eq!(d.cdf(10.0).unwrap(), 1.0);
        assert_eq!(d.cdf(12.0).unwrap(), 1.0);
        assert!(d.cdf(-1.0).is_err());
        let r = two_block(2.0);
        let d = EstimatorDistribution::new(&r, 10.0).unwrap();
        assert!((d.cdf(5.0).unwrap() - (-2.4f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn pdf_examples() {
        let r = single(2.0);
        let d = EstimatorDistribution::new(&r, 10.0).unwrap();
        assert!((d.pdf(10.0 - 1e-12).unwrap() - 2.0).abs() < 1e-9);
        assert!((d.pdf(5.0).unwrap() - 2.0 * (-10.0f64).exp()).abs() < 1e-15);
        assert!(d.pdf(0.0).is_err());
        assert!(d.pdf(10.0).is_err());
        let gap = RateFunction::new(0.0, vec![4.0, 6.0, 10.0], vec![2.0, 0.0, 2.0], 10.0).unwrap();
        let d = EstimatorDistribution::new(&gap, 10.0).unwrap();
        assert_eq!(d.pdf(5.0).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_examples() {
        let r = RateFunction::constant(0.0, 1.0, 2.0).unwrap();
        let d = EstimatorDistribution::new(&r, 1.0).unwrap();
        assert!((d.point_mass() - (-2.0f64).exp()).abs() < 1e-15);
        let z = RateFunction::zero(0.0, 10.0).unwrap();
        assert_eq!(EstimatorDistribution::new(&z, 7.0).unwrap().point_mass(), 1.0);
        let r = single(2.0);
        let d = EstimatorDistribution::new(&r, 10.0).unwrap();
        assert_eq!(d.point_mass(), d.cdf(0.0).unwrap());
    }

    #[test]
    fn mean_and_bias() {
        let r = single(2.0);
        let d = EstimatorDistribution::new(&r, 10.0).unwrap();
        let expected = 10.0 - (1.0 - (-20.0f64).exp()) / 2.0;
        assert!((d.mean() - expected).abs() < 1e-12);
        assert!((d.bias().magnitude - 0.5).abs() < 1e-6);
        assert!(d.bias().signed <= 0.0);
        let r = single(0.5);
        let d = EstimatorDistribution::new(&r, 10.0).unwrap();
        assert!((d.bias().magnitude - (1.0 - (-5.0f64).exp()) / 0.5).abs() < 1e-12);
        let z = RateFunction::zero(0.0, 10.0).unwrap();
        assert_eq!(EstimatorDistribution::new(&z, 6.0).unwrap().mean(), 0.0);
        let d = EstimatorDistribution::new(&r, 0.0).unwrap();
        assert_eq!(d.mean(), 0.0);
        assert_eq!(d.bias().magnitude, 0.0);
    }

    #[test]
    fn detection_examples() {
        let r = single(2.0);
        let at = |y_t: f64| EstimatorDistribution::new(&r, y_t).unwrap().detection_likelihood(5.0);
        assert_eq!(at(5.0), 0.0);
        assert_eq!(at(3.0), 0.0);
        assert!((at(6.0) - (1.0 - (-2.0f64).exp())).abs() < 1e-15);
        let r = two_block(2.0);
        let d = EstimatorDistribution::new(&r, 10.0).unwrap();
        assert!((d.detection_likelihood(8.0) - (1.0 - (-0.2f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn miss_probability_examples() {
        assert!((miss_probability(&two_block(2.0), 5.0).unwrap() - (-2.4f64).exp()).abs() < 1e-15);
        assert!((miss_probability(&two_block(0.5), 5.0).unwrap() - (-0.9f64).exp()).abs() < 1e-15);
        assert!((miss_probability(&two_block(7.0), 8.0).unwrap() - (-0.2f64).exp()).abs() < 1e-15);
        assert!(miss_probability(&two_block(2.0), 11.0).is_err());
    }

    #[test]
    fn lag_examples() {
        let g = unit_growth();
        let lag = |r: &RateFunction, y: f64| lag_distribution(r, y, &g).unwrap().conditional_mean().value().unwrap();
        assert!((lag(&single(2.0), 5.0) - 0.5).abs() < 1e-3);
        assert!((lag(&single(0.5), 5.0) - 1.5529).abs() < 1e-3);
        assert!((lag(&two_block(0.5), 5.0) - 1.2701).abs() < 1e-3);
        let zero_above = RateFunction::new(0.0, vec![5.0, 10.0], vec![1.0, 0.0], 10.0).unwrap();
        let law = lag_distribution(&zero_above, 5.0, &g).unwrap();
        assert_eq!(law.miss_probability(), 1.0);
        assert_eq!(law.conditional_mean(), LagMean::NeverDetected);
    }

    #[test]
    fn lag_survival_ends_at_miss_probability() {
        let r = two_block(0.5);
        let law = lag_distribution(&r, 5.0, &unit_growth()).unwrap();
        assert_eq!(law.survival(law.span()).unwrap(), law.miss_probability());
        assert!((law.density(0.5).unwrap() - 0.5 * (-0.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn lag_time_scales_with_growth_speed() {
        let r = two_block(0.5);
        let slow = CapabilityTrajectory::new(
            TrajectoryKind::Linear {
                start: 0.0,
                increment: 0.5,
            },
            20,
        )
        .unwrap();
        let fast = lag_distribution(&r, 5.0, &unit_growth()).unwrap();
        let slow = lag_distribution(&r, 5.0, &slow).unwrap();
        let (a, b) = (
            fast.conditional_mean().value().unwrap(),
            slow.conditional_mean().value().unwrap(),
        );
        assert!((b - 2.0 * a).abs() < 1e-12);
        let (a, b) = (
            fast.conditional_mean_danger().value().unwrap(),
            slow.conditional_mean_danger().value().unwrap(),
        );
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let r = two_block(0.5);
        let d = EstimatorDistribution::new(&r, 9.0).unwrap();
        for &y in &[0.5, 3.0, 5.9, 6.0, 7.5, 8.99] {
            let u = d.cdf(y).unwrap();
            assert!((d.quantile(u) - y).abs() < 1e-9, "y={y}");
        }
        assert_eq!(d.quantile(0.0), 0.0);
        assert_eq!(d.quantile(d.point_mass() * 0.5), 0.0);
        let z = RateFunction::zero(0.0, 10.0).unwrap();
        let dz = EstimatorDistribution::new(&z, 10.0).unwrap();
        assert_eq!(dz.quantile(0.9999), 0.0);
    }
}
