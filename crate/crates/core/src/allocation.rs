//! Turning evaluation budget into test sensitivity.
//!
//! Budget arrives per step ([`BudgetSchedule`]), an [`AllocationPolicy`]
//! splits it across danger bands, and a linear [`ProductionFunction`] turns
//! each share into a rate increment on its band. [`evolve_rate_schedule`]
//! couples this to the estimate chain: each step's allocation sees the
//! estimates produced so far.

use alloc::format;
use alloc::vec::Vec;

use crate::dynamics::{CapabilityTrajectory, EstimateChainState, UpdateMode};
use crate::error::{Error, Result};
use crate::estimator::{miss_probability, EstimatorDistribution};
use crate::math::{exp, normal_quantile, round};
use crate::rng::stream;
use crate::sensitivity::RateFunction;

#[derive(Debug, Clone, PartialEq)]
pub enum BudgetKind {
    Constant {
        amount: f64,
    },
    /// `initial · exp(-decay · t)`.
    ExponentialDecay {
        initial: f64,
        decay: f64,
    },
    /// Explicit amounts; steps past the end get nothing.
    Custom(Vec<f64>),
}

/// Budget per step; nothing is spent before `start_delay`.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSchedule {
    kind: BudgetKind,
    start_delay: usize,
    scale: f64,
}

impl BudgetSchedule {
    pub fn new(kind: BudgetKind, start_delay: usize) -> Result<Self> {
        let ok = match &kind {
            BudgetKind::Constant { amount } => amount.is_finite() && *amount >= 0.0,
            BudgetKind::ExponentialDecay { initial, decay } => {
                initial.is_finite() && *initial >= 0.0 && decay.is_finite() && *decay >= 0.0
            }
            BudgetKind::Custom(v) => v.iter().all(|b| b.is_finite() && *b >= 0.0),
        };
        if !ok {
            return Err(Error::Config(format!(
                "budgets must be finite and non-negative: {kind:?}"
            )));
        }
        Ok(Self {
            kind,
            start_delay,
            scale: 1.0,
        })
    }

    pub fn kind(&self) -> &BudgetKind {
        &self.kind
    }

    pub fn start_delay(&self) -> usize {
        self.start_delay
    }

    /// Same shape, every amount multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            scale: self.scale * factor,
            ..self.clone()
        }
    }

    pub fn with_delay(&self, start_delay: usize) -> Self {
        Self {
            start_delay,
            ..self.clone()
        }
    }

    pub fn budget_at(&self, t: usize) -> f64 {
        if t < self.start_delay {
            return 0.0;
        }
        let s = t - self.start_delay;
        let raw = match &self.kind {
            BudgetKind::Constant { amount } => *amount,
            BudgetKind::ExponentialDecay { initial, decay } => initial * exp(-decay * s as f64),
            BudgetKind::Custom(v) => v.get(s).copied().unwrap_or(0.0),
        };
        raw * self.scale
    }
}

/// Normal forecast of the next-step danger increment; the frontier band is
/// placed between two of its quantiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    pub mean: f64,
    pub sd: f64,
    pub lower_quantile: f64,
    pub upper_quantile: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    /// Everything just above the current estimate.
    FrontierTracking,
    /// Everything just above the threshold.
    ThresholdFocused,
    /// `threshold_weight` of the budget to the threshold band, the rest to
    /// the frontier band.
    Balanced { threshold_weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationPolicy {
    kind: PolicyKind,
    lookahead: f64,
    forecast: Option<Forecast>,
}

impl AllocationPolicy {
    pub fn new(kind: PolicyKind, lookahead: f64, forecast: Option<Forecast>) -> Result<Self> {
        if !(lookahead > 0.0 && lookahead.is_finite()) {
            return Err(Error::Config(format!("lookahead must be positive, got {lookahead}")));
        }
        if let PolicyKind::Balanced { threshold_weight } = kind {
            if !(0.0..=1.0).contains(&threshold_weight) {
                return Err(Error::Config(format!(
                    "threshold weight {threshold_weight} not in [0, 1]"
                )));
            }
        }
        if let Some(f) = forecast {
            let probs_ok = 0.0 < f.lower_quantile && f.lower_quantile < f.upper_quantile && f.upper_quantile < 1.0;
            if !(probs_ok && f.sd > 0.0 && f.mean.is_finite()) {
                return Err(Error::Config(format!("invalid forecast {f:?}")));
            }
        }
        Ok(Self {
            kind,
            lookahead,
            forecast,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn lookahead(&self) -> f64 {
        self.lookahead
    }

    pub fn forecast(&self) -> Option<Forecast> {
        self.forecast
    }

    /// Band just above `estimate`.
    pub fn frontier_band(&self, estimate: f64) -> (f64, f64) {
        match self.forecast {
            None => (estimate, estimate + self.lookahead),
            Some(f) => {
                let lo = estimate + (f.mean + f.sd * normal_quantile(f.lower_quantile)).max(0.0);
                let hi = estimate + f.mean + f.sd * normal_quantile(f.upper_quantile);
                if hi > lo {
                    (lo, hi)
                } else {
                    (lo, lo + self.lookahead)
                }
            }
        }
    }

    pub fn threshold_band(&self, y_star: f64) -> (f64, f64) {
        (y_star, y_star + self.lookahead)
    }
}

/// A budget share assigned to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub lo: f64,
    pub hi: f64,
    pub budget: f64,
}

/// Splits `budget` across bands. Shares always sum to `budget`; zero shares
/// are dropped.
pub fn allocate(policy: &AllocationPolicy, budget: f64, estimate_history: &[f64], y_star: f64) -> Vec<Allocation> {
    let estimate = estimate_history.last().copied().unwrap_or(0.0);
    let (threshold_share, frontier_share) = match policy.kind {
        PolicyKind::FrontierTracking => (0.0, budget),
        PolicyKind::ThresholdFocused => (budget, 0.0),
        PolicyKind::Balanced { threshold_weight } => {
            // Round the larger share and recover the smaller one by an exact
            // subtraction, so the two add back to `budget` bit for bit.
            let small = threshold_weight.min(1.0 - threshold_weight) * budget;
            let large = budget - small;
            let small = budget - large;
            if threshold_weight <= 0.5 {
                (small, large)
            } else {
                (large, small)
            }
        }
    };
    let mut out = Vec::with_capacity(2);
    if threshold_share > 0.0 {
        let (lo, hi) = policy.threshold_band(y_star);
        out.push(Allocation {
            lo,
            hi,
            budget: threshold_share,
        });
    }
    if frontier_share > 0.0 {
        let (lo, hi) = policy.frontier_band(estimate);
        out.push(Allocation {
            lo,
            hi,
            budget: frontier_share,
        });
    }
    out
}

/// Linear test production: the same resources per unit of danger width buy
/// the same detection rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductionFunction {
    efficiency: f64,
}

impl ProductionFunction {
    pub fn new(efficiency: f64) -> Result<Self> {
        if !(efficiency > 0.0 && efficiency.is_finite()) {
            return Err(Error::Config(format!("efficiency must be positive, got {efficiency}")));
        }
        Ok(Self { efficiency })
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Rate increment bought by `budget` spread over `[lo, hi]`.
    pub fn produce(&self, budget: f64, lo: f64, hi: f64) -> Result<f64> {
        if !(hi > lo) {
            return Err(Error::EmptyInterval { lo, hi });
        }
        if !(budget >= 0.0) {
            return Err(Error::Config(format!("negative budget {budget}")));
        }
        Ok(self.efficiency * budget / (hi - lo))
    }
}

/// Everything needed to simulate investment-driven test building.
#[derive(Debug, Clone)]
pub struct EvolveConfig {
    pub schedule: BudgetSchedule,
    pub policy: AllocationPolicy,
    pub production: ProductionFunction,
    pub trajectory: CapabilityTrajectory,
    /// Tests that exist before any budget is spent.
    pub initial: RateFunction,
    pub y_star: f64,
    pub mode: UpdateMode,
    /// Band endpoints snap to multiples of this (danger units).
    pub snap: f64,
}

/// Step-by-step record of an allocation run. Index `t` refers to the moment
/// the latent danger is `trajectory.level(t)`.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub levels: Vec<f64>,
    /// `rates[t]` is the suite used to probe level `t`.
    pub rates: Vec<RateFunction>,
    pub estimates: Vec<f64>,
    /// `budgets[t]` is spent between steps `t` and `t + 1`.
    pub budgets: Vec<f64>,
    pub allocations: Vec<Vec<Allocation>>,
    pub bias_magnitude: Vec<f64>,
    pub detection_likelihood: Vec<f64>,
    /// Mean rate over the interval that became reachable at each step.
    pub sensitivity_near_frontier: Vec<f64>,
    /// Rate in force at each level when the latent danger first reached it.
    pub effective: RateFunction,
    pub detected_at: Option<usize>,
}

impl Evolution {
    /// Miss probability of the effective suite.
    pub fn effective_miss_probability(&self, y_star: f64) -> Result<f64> {
        miss_probability(&self.effective, y_star)
    }
}

fn snap_value(y: f64, snap: f64) -> f64 {
    let per_unit = 1.0 / snap;
    let n = round(y * per_unit);
    if (per_unit - round(per_unit)).abs() < 1e-9 {
        n / round(per_unit)
    } else {
        n * snap
    }
}

/// Snaps a band to the grid and keeps it inside the domain without
/// changing its width where possible.
fn place_band(lo: f64, hi: f64, snap: f64, y0: f64, y_max: f64) -> (f64, f64) {
    let mut lo = snap_value(lo, snap);
    let mut hi = snap_value(hi, snap);
    if hi <= lo {
        hi = lo + snap;
    }
    let width = (hi - lo).min(y_max - y0);
    if hi > y_max {
        hi = y_max;
        lo = (hi - width).max(y0);
    }
    if lo < y0 {
        lo = y0;
        hi = (lo + width).min(y_max);
    }
    (lo, hi)
}

/// Runs the coupled allocate → produce → advance loop.
pub fn evolve_rate_schedule(config: &EvolveConfig, seed: u64) -> Result<Evolution> {
    let traj = &config.trajectory;
    let initial = &config.initial;
    let (y0, y_max) = (initial.y0(), initial.y_max());
    if !(config.snap > 0.0) {
        return Err(Error::Config(format!("snap must be positive, got {}", config.snap)));
    }
    if traj.level(0) < y0 || traj.level(traj.horizon()) > y_max {
        return Err(Error::Config(format!(
            "trajectory [{}, {}] leaves the tested range [{y0}, {y_max}]",
            traj.level(0),
            traj.level(traj.horizon())
        )));
    }
    let mut rng = stream(seed, 0);
    let mut state = EstimateChainState::new(y0, Some(config.y_star)).advance(
        initial,
        traj.level(0),
        None,
        config.mode,
        &mut rng,
    )?;
    state.t = 0;

    let mut rates = Vec::with_capacity(traj.horizon() + 1);
    rates.push(initial.clone());
    let mut estimates = alloc::vec![state.y_hat];
    let mut budgets = Vec::with_capacity(traj.horizon());
    let mut allocations = Vec::with_capacity(traj.horizon());

    for t in 0..traj.horizon() {
        let budget = config.schedule.budget_at(t);
        let placed: Vec<Allocation> = allocate(&config.policy, budget, &estimates, config.y_star)
            .into_iter()
            .map(|a| {
                let (lo, hi) = place_band(a.lo, a.hi, config.snap, y0, y_max);
                Allocation { lo, hi, ..a }
            })
            .collect();
        let current = &rates[t];
        let mut next = current.clone();
        for a in &placed {
            let dk = config.production.produce(a.budget, a.lo, a.hi)?;
            if dk > 0.0 {
                next = next.with_added_rate(a.lo, a.hi, dk)?;
            }
        }
        let y_next = traj.level(t + 1);
        let floor = current.lowest_difference(&next, state.y_hat, y_next);
        state = state.advance(&next, y_next, floor, config.mode, &mut rng)?;
        estimates.push(state.y_hat);
        budgets.push(budget);
        allocations.push(placed);
        rates.push(next);
    }

    let levels = traj.levels().to_vec();
    let mut bias_magnitude = Vec::with_capacity(levels.len());
    let mut detection_likelihood = Vec::with_capacity(levels.len());
    let mut sensitivity_near_frontier = Vec::with_capacity(levels.len());
    for (t, (&y, r)) in levels.iter().zip(&rates).enumerate() {
        let d = EstimatorDistribution::new(r, y)?;
        bias_magnitude.push(d.bias().magnitude);
        detection_likelihood.push(d.detection_likelihood(config.y_star));
        let from = if t == 0 { y } else { levels[t - 1] };
        sensitivity_near_frontier.push(r.mean_rate(from, y)?);
    }
    let effective = effective_rates(&levels, &rates)?;

    Ok(Evolution {
        levels,
        rates,
        estimates,
        budgets,
        allocations,
        bias_magnitude,
        detection_likelihood,
        sensitivity_near_frontier,
        effective,
        detected_at: state.detected_at,
    })
}

/// Stitches together, level by level, the suite that was in force when the
/// latent danger first reached that level.
fn effective_rates(levels: &[f64], rates: &[RateFunction]) -> Result<RateFunction> {
    let first = &rates[0];
    let (y0, y_max) = (first.y0(), first.y_max());
    let mut windows: Vec<(f64, f64, &RateFunction)> = Vec::with_capacity(levels.len() + 1);
    windows.push((y0, levels[0], first));
    for t in 1..levels.len() {
        windows.push((levels[t - 1], levels[t], &rates[t]));
    }
    windows.push((
        *levels.last().expect("non-empty"),
        y_max,
        rates.last().expect("non-empty"),
    ));

    let mut pieces: Vec<(f64, f64)> = Vec::new();
    for (a, b, r) in windows {
        if b <= a {
            continue;
        }
        for seg in r.segments() {
            let hi = seg.hi.min(b);
            if hi > seg.lo.max(a) {
                pieces.push((hi, seg.rate));
            }
        }
    }
    RateFunction::from_pieces(y0, &pieces)
}

/// Smallest multiple of the budget schedule that brings the effective miss
/// probability at `y_star` down to `target_miss`, found by bisection to
/// relative precision `tolerance`. `None` if no scale up to `max_scale`
/// suffices.
pub fn required_budget_scale(
    config: &EvolveConfig,
    seed: u64,
    target_miss: f64,
    tolerance: f64,
    max_scale: f64,
) -> Result<Option<f64>> {
    let miss_at = |scale: f64| -> Result<f64> {
        let cfg = EvolveConfig {
            schedule: config.schedule.scaled(scale),
            ..config.clone()
        };
        evolve_rate_schedule(&cfg, seed)?.effective_miss_probability(config.y_star)
    };
    if miss_at(0.0)? <= target_miss {
        return Ok(Some(0.0));
    }
    let mut hi = 1.0;
    while miss_at(hi)? > target_miss {
        hi *= 2.0;
        if hi > max_scale {
            return Ok(None);
        }
    }
    let mut lo = 0.0;
    while hi - lo > tolerance * hi {
        let mid = 0.5 * (lo + hi);
        if miss_at(mid)? <= target_miss {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TrajectoryKind;
    use alloc::vec;

    fn policy(kind: PolicyKind) -> AllocationPolicy {
        AllocationPolicy::new(kind, 1.0, None).unwrap()
    }

    #[test]
    fn produce_examples() {
        let p = ProductionFunction::new(1.0).unwrap();
        assert_eq!(p.produce(2.0, 5.0, 6.0).unwrap(), 2.0);
        assert_eq!(p.produce(0.0, 5.0, 6.0).unwrap(), 0.0);
        assert_eq!(p.produce(2.0, 5.0, 7.0).unwrap(), 1.0);
        assert!(matches!(p.produce(1.0, 5.0, 5.0), Err(Error::EmptyInterval { .. })));
        assert!(ProductionFunction::new(0.0).is_err());
    }

    #[test]
    fn allocate_examples() {
        let a = allocate(
            &policy(PolicyKind::Balanced { threshold_weight: 0.5 }),
            2.0,
            &[3.0],
            5.0,
        );
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|x| x.budget == 1.0));
        let a = allocate(&policy(PolicyKind::FrontierTracking), 2.0, &[1.0, 3.0], 5.0);
        assert_eq!(
            a,
            vec![Allocation {
                lo: 3.0,
                hi: 4.0,
                budget: 2.0
            }]
        );
        let a = allocate(&policy(PolicyKind::ThresholdFocused), 2.0, &[3.0], 5.0);
        assert_eq!(a[0].lo, 5.0);
    }

    #[test]
    fn policy_validation() {
        assert!(AllocationPolicy::new(PolicyKind::FrontierTracking, 0.0, None).is_err());
        assert!(AllocationPolicy::new(PolicyKind::Balanced { threshold_weight: 1.5 }, 1.0, None).is_err());
        let bad = Forecast {
            mean: 1.0,
            sd: 0.5,
            lower_quantile: 0.9,
            upper_quantile: 0.1,
        };
        assert!(AllocationPolicy::new(PolicyKind::FrontierTracking, 1.0, Some(bad)).is_err());
    }

    #[test]
    fn forecast_band_uses_quantiles() {
        let f = Forecast {
            mean: 1.0,
            sd: 0.5,
            lower_quantile: 0.1,
            upper_quantile: 0.9,
        };
        let p = AllocationPolicy::new(PolicyKind::FrontierTracking, 1.0, Some(f)).unwrap();
        let (lo, hi) = p.frontier_band(3.0);
        assert!((lo - (3.0 + 1.0 - 0.5 * 1.2815515655446004)).abs() < 1e-9);
        assert!((hi - (3.0 + 1.0 + 0.5 * 1.2815515655446004)).abs() < 1e-9);
    }

    #[test]
    fn budget_schedules() {
        let c = BudgetSchedule::new(BudgetKind::Constant { amount: 2.0 }, 2).unwrap();
        assert_eq!(c.budget_at(1), 0.0);
        assert_eq!(c.budget_at(2), 2.0);
        assert_eq!(c.scaled(1.5).budget_at(9), 3.0);
        let e = BudgetSchedule::new(
            BudgetKind::ExponentialDecay {
                initial: 4.0,
                decay: 1.0,
            },
            0,
        )
        .unwrap();
        assert!((e.budget_at(2) - 4.0 * (-2.0f64).exp()).abs() < 1e-15);
        let l = BudgetSchedule::new(BudgetKind::Custom(vec![1.0, 2.0]), 0).unwrap();
        assert_eq!(l.budget_at(1), 2.0);
        assert_eq!(l.budget_at(5), 0.0);
        assert!(BudgetSchedule::new(BudgetKind::Constant { amount: -1.0 }, 0).is_err());
    }

    #[test]
    fn band_placement() {
        assert_eq!(place_band(3.04, 4.06, 0.1, 0.0, 10.0), (3.0, 4.1));
        assert_eq!(place_band(9.5, 11.5, 0.1, 0.0, 10.0), (8.0, 10.0));
        assert_eq!(place_band(2.0, 2.01, 0.1, 0.0, 10.0), (2.0, 2.1));
    }

    fn base_config(schedule: BudgetSchedule, kind: PolicyKind) -> EvolveConfig {
        EvolveConfig {
            schedule,
            policy: AllocationPolicy::new(kind, 2.0, None).unwrap(),
            production: ProductionFunction::new(1.0).unwrap(),
            trajectory: CapabilityTrajectory::new(
                TrajectoryKind::Linear {
                    start: 0.0,
                    increment: 1.0,
                },
                12,
            )
            .unwrap(),
            initial: RateFunction::zero(0.0, 12.0).unwrap(),
            y_star: 5.0,
            mode: UpdateMode::Main,
            snap: 0.1,
        }
    }

    #[test]
    fn zero_budget_leaves_estimate_at_origin() {
        let cfg = base_config(
            BudgetSchedule::new(BudgetKind::Constant { amount: 0.0 }, 0).unwrap(),
            PolicyKind::FrontierTracking,
        );
        let evo = evolve_rate_schedule(&cfg, 1).unwrap();
        assert!(evo.estimates.iter().all(|&y| y == 0.0));
        assert!(evo.rates.iter().all(|r| r.is_identically_zero()));
        assert_eq!(evo.detected_at, None);
    }

    #[test]
    fn threshold_policy_never_funds_below_threshold() {
        let cfg = base_config(
            BudgetSchedule::new(BudgetKind::Constant { amount: 2.0 }, 0).unwrap(),
            PolicyKind::ThresholdFocused,
        );
        let evo = evolve_rate_schedule(&cfg, 4).unwrap();
        let last = evo.rates.last().unwrap();
        assert_eq!(last.integrate(0.0, 5.0).unwrap(), 0.0);
        assert!(last.integrate(5.0, 7.0).unwrap() > 0.0);
    }

    #[test]
    fn evolution_conserves_budget() {
        let cfg = base_config(
            BudgetSchedule::new(
                BudgetKind::ExponentialDecay {
                    initial: 3.0,
                    decay: 0.3,
                },
                0,
            )
            .unwrap(),
            PolicyKind::Balanced { threshold_weight: 0.3 },
        );
        let evo = evolve_rate_schedule(&cfg, 9).unwrap();
        for (b, allocs) in evo.budgets.iter().zip(&evo.allocations) {
            let spent: f64 = allocs.iter().map(|a| a.budget).sum();
            assert_eq!(spent, *b);
        }
        // Total added rate mass equals efficiency × total budget.
        let mass = evo.rates.last().unwrap().integrate(0.0, 12.0).unwrap();
        let total: f64 = evo.budgets.iter().sum();
        assert!((mass - total).abs() < 1e-9);
    }

    #[test]
    fn effective_rates_follow_the_frontier() {
        let levels = [0.0, 1.0, 2.0];
        let r0 = RateFunction::zero(0.0, 3.0).unwrap();
        let r1 = RateFunction::constant(0.0, 3.0, 1.0).unwrap();
        let r2 = RateFunction::constant(0.0, 3.0, 2.0).unwrap();
        let eff = effective_rates(&levels, &[r0, r1, r2]).unwrap();
        assert_eq!(eff.rate_at(0.5).unwrap(), 1.0);
        assert_eq!(eff.rate_at(1.5).unwrap(), 2.0);
        assert_eq!(eff.rate_at(2.5).unwrap(), 2.0);
    }
}
