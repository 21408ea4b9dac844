//! Scalar helpers for the closed forms. Everything goes through `libm` so the
//! crate builds without `std`.

pub(crate) use libm::{exp, expm1, floor, log as ln, round, sqrt};

/// `∫_0^len exp(-k x) dx`.
pub(crate) fn exp_integral(k: f64, len: f64) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    let z = k * len;
    if z == 0.0 {
        len
    } else {
        -expm1(-z) / k
    }
}

/// `∫_0^len x · k exp(-k x) dx`, the partial first moment of an exponential
/// first-passage with rate `k`.
pub(crate) fn exp_first_moment(k: f64, len: f64) -> f64 {
    if len <= 0.0 || k == 0.0 {
        return 0.0;
    }
    let z = k * len;
    // (1 - e^{-z}(1 + z)) / k, with a series where the difference cancels.
    let g = if z < 0.05 {
        let mut term = z * z / 2.0;
        let mut sum = 0.0_f64;
        let mut n = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
            // term_n = (-1)^n z^n (n-1)/n!
            sum += term * (n - 1.0);
            n += 1.0;
            term *= -z / n;
        }
        sum
    } else {
        -expm1(-z) - z * exp(-z)
    };
    g / k
}

/// Standard normal quantile by bisection on `erfc`.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    let cdf = |x: f64| 0.5 * libm::erfc(-x / core::f64::consts::SQRT_2);
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}
