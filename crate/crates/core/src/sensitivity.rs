//! Step-function test sensitivity over the danger axis.
//!
//! A [`RateFunction`] partitions `[y0, y_max]` into segments
//! `[y0, e_1], (e_1, e_2], …, (e_{n-1}, e_n]`, each with a constant,
//! non-negative detection rate. The first segment is closed on the left;
//! every other segment owns its right endpoint. If the last supplied
//! endpoint is below `y_max`, the remainder `(e_n, y_max]` is an implicit
//! zero-rate segment and is materialised at construction.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// One constant-rate piece of a [`RateFunction`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub rate: f64,
}

impl Segment {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Overlap length with `[a, b]`.
    fn overlap(&self, a: f64, b: f64) -> f64 {
        (self.hi.min(b) - self.lo.max(a)).max(0.0)
    }
}

/// A problem found by [`RateFunction::validate_parts`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoSegments,
    LengthMismatch { endpoints: usize, rates: usize },
    NonFiniteBound,
    EmptyRange { y0: f64, y_max: f64 },
    NegativeRate { segment: usize, rate: f64 },
    NonFiniteRate { segment: usize },
    NonIncreasingEndpoints { segment: usize },
    EndpointBeyondMax { segment: usize, endpoint: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSegments => write!(f, "no segments"),
            Violation::LengthMismatch { endpoints, rates } => {
                write!(f, "length mismatch ({endpoints} endpoints, {rates} rates)")
            }
            Violation::NonFiniteBound => write!(f, "non-finite bound"),
            Violation::EmptyRange { y0, y_max } => write!(f, "empty range [{y0}, {y_max}]"),
            Violation::NegativeRate { segment, rate } => {
                write!(f, "negative rate (segment {segment}: {rate})")
            }
            Violation::NonFiniteRate { segment } => write!(f, "non-finite rate (segment {segment})"),
            Violation::NonIncreasingEndpoints { segment } => {
                write!(f, "non-increasing endpoints (segment {segment})")
            }
            Violation::EndpointBeyondMax { segment, endpoint } => {
                write!(f, "endpoint beyond y_max (segment {segment}: {endpoint})")
            }
        }
    }
}

/// Outcome of a validation pass; empty means valid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Piecewise-constant reverse hazard rate `r(y)` on `[y0, y_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    y0: f64,
    // Always ends at y_max.
    endpoints: Vec<f64>,
    rates: Vec<f64>,
}

impl RateFunction {
    /// Builds a rate function, rejecting anything [`Self::validate_parts`]
    /// complains about.
    pub fn new(y0: f64, endpoints: Vec<f64>, rates: Vec<f64>, y_max: f64) -> Result<Self> {
        let report = Self::validate_parts(y0, &endpoints, &rates, y_max);
        if !report.is_valid() {
            return Err(Error::InvalidRate(report));
        }
        let mut endpoints = endpoints;
        let mut rates = rates;
        if *endpoints.last().expect("validated non-empty") < y_max {
            endpoints.push(y_max);
            rates.push(0.0);
        }
        Ok(Self { y0, endpoints, rates })
    }

    /// Single block with rate `rate` on `[y0, y_max]`.
    pub fn constant(y0: f64, y_max: f64, rate: f64) -> Result<Self> {
        Self::new(y0, alloc::vec![y_max], alloc::vec![rate], y_max)
    }

    /// No tests anywhere.
    pub fn zero(y0: f64, y_max: f64) -> Result<Self> {
        Self::constant(y0, y_max, 0.0)
    }

    /// Builds from consecutive `(right endpoint, rate)` pieces.
    pub fn from_pieces(y0: f64, pieces: &[(f64, f64)]) -> Result<Self> {
        let endpoints: Vec<f64> = pieces.iter().map(|p| p.0).collect();
        let rates: Vec<f64> = pieces.iter().map(|p| p.1).collect();
        let y_max = endpoints.last().copied().unwrap_or(y0);
        Self::new(y0, endpoints, rates, y_max)
    }

    /// Checks raw parts: lengths agree, bounds finite, endpoints strictly
    /// increasing above `y0` and not past `y_max`, rates finite and
    /// non-negative. With finite rates on a bounded range every integral of
    /// the rate is finite, so the resulting CDF is proper.
    pub fn validate_parts(y0: f64, endpoints: &[f64], rates: &[f64], y_max: f64) -> ValidationReport {
        let mut violations = Vec::new();
        if !(y0.is_finite() && y_max.is_finite()) {
            violations.push(Violation::NonFiniteBound);
        } else if y_max <= y0 {
            violations.push(Violation::EmptyRange { y0, y_max });
        }
        if endpoints.is_empty() {
            violations.push(Violation::NoSegments);
        }
        if endpoints.len() != rates.len() {
            violations.push(Violation::LengthMismatch {
                endpoints: endpoints.len(),
                rates: rates.len(),
            });
        }
        let mut prev = y0;
        for (i, &e) in endpoints.iter().enumerate() {
            if !e.is_finite() {
                violations.push(Violation::NonFiniteBound);
            } else if e <= prev {
                violations.push(Violation::NonIncreasingEndpoints { segment: i });
            } else if e > y_max {
                violations.push(Violation::EndpointBeyondMax {
                    segment: i,
                    endpoint: e,
                });
            }
            if e.is_finite() {
                prev = e;
            }
        }
        for (i, &k) in rates.iter().enumerate() {
            if !k.is_finite() {
                violations.push(Violation::NonFiniteRate { segment: i });
            } else if k < 0.0 {
                violations.push(Violation::NegativeRate { segment: i, rate: k });
            }
        }
        ValidationReport { violations }
    }

    /// Re-checks a constructed function. Always valid unless the invariants
    /// were broken from inside this module.
    pub fn validate(&self) -> ValidationReport {
        Self::validate_parts(self.y0, &self.endpoints, &self.rates, self.y_max())
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn y_max(&self) -> f64 {
        *self.endpoints.last().expect("non-empty")
    }

    pub fn endpoints(&self) -> &[f64] {
        &self.endpoints
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn is_identically_zero(&self) -> bool {
        self.rates.iter().all(|&k| k == 0.0)
    }

    pub fn segment(&self, index: usize) -> Segment {
        let lo = if index == 0 { self.y0 } else { self.endpoints[index - 1] };
        Segment {
            lo,
            hi: self.endpoints[index],
            rate: self.rates[index],
        }
    }

    pub fn segments(&self) -> impl DoubleEndedIterator<Item = Segment> + '_ {
        (0..self.rates.len()).map(move |i| self.segment(i))
    }

    fn check(&self, y: f64) -> Result<()> {
        if y >= self.y0 && y <= self.y_max() {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                value: y,
                lo: self.y0,
                hi: self.y_max(),
            })
        }
    }

    /// Index of the segment owning `y` (right endpoints belong to their
    /// segment).
    pub fn segment_index(&self, y: f64) -> Result<usize> {
        self.check(y)?;
        Ok(self.endpoints.partition_point(|&e| e < y))
    }

    pub fn rate_at(&self, y: f64) -> Result<f64> {
        Ok(self.rates[self.segment_index(y)?])
    }

    /// Exact `∫_a^b r(u) du`.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        if a > b {
            return Err(Error::ReversedInterval { lo: a, hi: b });
        }
        Ok(self.integrate_unchecked(a, b))
    }

    pub(crate) fn integrate_unchecked(&self, a: f64, b: f64) -> f64 {
        if a >= b {
            return 0.0;
        }
        let first = self.endpoints.partition_point(|&e| e <= a);
        let mut total = 0.0;
        for i in first..self.rates.len() {
            let seg = self.segment(i);
            if seg.lo >= b {
                break;
            }
            if seg.rate > 0.0 {
                total += seg.rate * seg.overlap(a, b);
            }
        }
        total
    }

    /// Average rate over `[a, b]`; the point rate when the interval is empty.
    pub fn mean_rate(&self, a: f64, b: f64) -> Result<f64> {
        if b > a {
            Ok(self.integrate(a, b)? / (b - a))
        } else {
            self.rate_at(a)
        }
    }

    /// Smallest `x ∈ [from, cap]` with `∫_from^x r = mass`, or `None` when the
    /// rate mass on `[from, cap]` falls short.
    pub fn level_reaching(&self, from: f64, mass: f64, cap: f64) -> Option<f64> {
        if mass <= 0.0 {
            return Some(from);
        }
        let cap = cap.min(self.y_max());
        let first = self.endpoints.partition_point(|&e| e <= from);
        let mut remaining = mass;
        for i in first..self.rates.len() {
            let seg = self.segment(i);
            let lo = seg.lo.max(from);
            if lo >= cap {
                break;
            }
            let hi = seg.hi.min(cap);
            let available = seg.rate * (hi - lo);
            if available >= remaining && seg.rate > 0.0 {
                return Some((lo + remaining / seg.rate).min(hi));
            }
            remaining -= available;
        }
        None
    }

    /// Returns a copy with `delta` added to the rate on `[lo, hi]`
    /// (clipped to the domain). Neighbouring segments that end up with equal
    /// rates are merged.
    pub fn with_added_rate(&self, lo: f64, hi: f64, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::Config(alloc::format!(
                "rate increment {delta} is not a finite non-negative number"
            )));
        }
        let lo = lo.max(self.y0);
        let hi = hi.min(self.y_max());
        if !(hi > lo) {
            return Err(Error::EmptyInterval { lo, hi });
        }
        let mut cuts: Vec<f64> = self.endpoints.clone();
        for c in [lo, hi] {
            if c > self.y0 && !cuts.contains(&c) {
                cuts.push(c);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut endpoints = Vec::with_capacity(cuts.len());
        let mut rates = Vec::with_capacity(cuts.len());
        let mut left = self.y0;
        for &right in &cuts {
            let base = self.rates[self.endpoints.partition_point(|&e| e < right)];
            let inside = left >= lo && right <= hi;
            endpoints.push(right);
            rates.push(if inside { base + delta } else { base });
            left = right;
        }
        Ok(Self::merged(self.y0, endpoints, rates))
    }

    fn merged(y0: f64, endpoints: Vec<f64>, rates: Vec<f64>) -> Self {
        let mut out_e: Vec<f64> = Vec::with_capacity(endpoints.len());
        let mut out_r: Vec<f64> = Vec::with_capacity(rates.len());
        for (e, k) in endpoints.into_iter().zip(rates) {
            match out_r.last() {
                Some(&last) if last == k => *out_e.last_mut().expect("paired") = e,
                _ => {
                    out_e.push(e);
                    out_r.push(k);
                }
            }
        }
        Self {
            y0,
            endpoints: out_e,
            rates: out_r,
        }
    }

    /// Lowest level in `[from, to]` where `self` and `other` disagree, taken
    /// as step functions. Both must share the same domain.
    pub fn lowest_difference(&self, other: &RateFunction, from: f64, to: f64) -> Option<f64> {
        let mut cuts: Vec<f64> = self.endpoints.iter().chain(other.endpoints.iter()).copied().collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut left = self.y0;
        for right in cuts {
            if right > self.y_max() || right > other.y_max() {
                break;
            }
            if right > from && left < to {
                let a = self.rates[self.endpoints.partition_point(|&e| e < right)];
                let b = other.rates[other.endpoints.partition_point(|&e| e < right)];
                if a != b {
                    return Some(left.max(from));
                }
            }
            if left >= to {
                break;
            }
            left = right;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn two_block() -> RateFunction {
        RateFunction::new(0.0, vec![6.0, 10.0], vec![2.0, 0.1], 10.0).unwrap()
    }

    #[test]
    fn rate_lookup() {
        let single = RateFunction::constant(0.0, 10.0, 2.0).unwrap();
        assert_eq!(single.rate_at(3.0).unwrap(), 2.0);
        let f = two_block();
        assert_eq!(f.rate_at(7.0).unwrap(), 0.1);
        assert_eq!(f.rate_at(6.0).unwrap(), 2.0);
        assert_eq!(f.rate_at(0.0).unwrap(), 2.0);
        assert_eq!(f.rate_at(10.0).unwrap(), 0.1);
        assert!(matches!(f.rate_at(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(f.rate_at(10.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn integrals() {
        let single = RateFunction::constant(0.0, 10.0, 2.0).unwrap();
        assert_eq!(single.integrate(0.0, 10.0).unwrap(), 20.0);
        let f = two_block();
        assert!((f.integrate(5.0, 10.0).unwrap() - 2.4).abs() < 1e-12);
        assert_eq!(f.integrate(4.0, 4.0).unwrap(), 0.0);
        assert!(matches!(f.integrate(6.0, 5.0), Err(Error::ReversedInterval { .. })));
    }

    #[test]
    fn validation_messages() {
        assert!(RateFunction::validate_parts(0.0, &[6.0, 10.0], &[2.0, 0.1], 10.0).is_valid());
        let neg = RateFunction::validate_parts(0.0, &[10.0], &[-1.0], 10.0);
        assert_eq!(neg.violations.len(), 1);
        assert!(neg.to_string().contains("negative rate"));
        let flat = RateFunction::validate_parts(0.0, &[6.0, 6.0], &[1.0, 1.0], 10.0);
        assert!(flat.to_string().contains("non-increasing endpoints"));
        let nan = RateFunction::validate_parts(0.0, &[10.0], &[f64::NAN], 10.0);
        assert!(!nan.is_valid());
        let beyond = RateFunction::validate_parts(0.0, &[12.0], &[1.0], 10.0);
        assert!(!beyond.is_valid());
        assert!(matches!(
            RateFunction::new(0.0, vec![10.0], vec![-1.0], 10.0),
            Err(Error::InvalidRate(_))
        ));
    }

    #[test]
    fn implicit_zero_tail() {
        let f = RateFunction::new(0.0, vec![4.0], vec![1.0], 10.0).unwrap();
        assert_eq!(f.y_max(), 10.0);
        assert_eq!(f.rate_at(7.0).unwrap(), 0.0);
        assert_eq!(f.integrate(0.0, 10.0).unwrap(), 4.0);
    }

    #[test]
    fn added_rate_splits_and_merges() {
        let f = RateFunction::zero(0.0, 10.0).unwrap();
        let g = f.with_added_rate(2.0, 4.0, 1.5).unwrap();
        assert_eq!(g.endpoints(), &[2.0, 4.0, 10.0]);
        assert_eq!(g.rates(), &[0.0, 1.5, 0.0]);
        let h = g.with_added_rate(4.0, 10.0, 1.5).unwrap();
        assert_eq!(h.endpoints(), &[2.0, 10.0]);
        assert_eq!(h.rates(), &[0.0, 1.5]);
        assert!(f.with_added_rate(3.0, 3.0, 1.0).is_err());
        assert!(f.with_added_rate(3.0, 4.0, -1.0).is_err());
    }

    #[test]
    fn level_reaching_inverts_the_integral() {
        let f = two_block();
        let x = f.level_reaching(5.0, 2.2, 10.0).unwrap();
        assert!((x - 8.0).abs() < 1e-12);
        assert!((f.integrate(5.0, x).unwrap() - 2.2).abs() < 1e-12);
        assert_eq!(f.level_reaching(5.0, 2.5, 10.0), None);
        assert_eq!(f.level_reaching(5.0, 1.0, 5.4), None);
    }

    #[test]
    fn lowest_difference_finds_first_change() {
        let f = two_block();
        let g = f.with_added_rate(7.0, 8.0, 1.0).unwrap();
        assert_eq!(f.lowest_difference(&g, 0.0, 10.0), Some(7.0));
        assert_eq!(f.lowest_difference(&g, 7.5, 10.0), Some(7.5));
        assert_eq!(f.lowest_difference(&g, 8.5, 10.0), None);
        assert_eq!(f.lowest_difference(&f, 0.0, 10.0), None);
    }
}
