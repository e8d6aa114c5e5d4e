//! Exact privacy profile of the Gaussian mechanism.

use super::AccountingError;
use crate::math::log_norm_cdf;

/// Tightest δ at `epsilon` for a sensitivity-1 Gaussian with the given
/// noise multiplier:
/// `δ = Φ(1/(2σ) - εσ) - e^ε · Φ(-1/(2σ) - εσ)`.
pub fn analytic_gaussian_delta(noise_multiplier: f64, epsilon: f64) -> Result<f64, AccountingError> {
    if !(noise_multiplier > 0.0) || noise_multiplier.is_nan() {
        return Err(AccountingError::InvalidParameter {
            name: "noise_multiplier",
            reason: "must be positive",
        });
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(AccountingError::InvalidParameter {
            name: "epsilon",
            reason: "must be finite and nonnegative",
        });
    }
    if noise_multiplier == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(gaussian_delta(noise_multiplier, epsilon))
}

pub(crate) fn gaussian_delta(sigma: f64, epsilon: f64) -> f64 {
    let a = 0.5 / sigma - epsilon * sigma;
    let b = -0.5 / sigma - epsilon * sigma;
    let log_first = log_norm_cdf(a);
    // Φ(a) · (1 - exp(ε + lnΦ(b) - lnΦ(a)))
    let ratio = epsilon + log_norm_cdf(b) - log_first;
    let delta = libm::exp(log_first) * -libm::expm1(ratio);
    delta.clamp(0.0, 1.0)
}

/// Smallest ε with `δ(σ, ε) ≤ delta`; zero when δ(σ, 0) already satisfies it.
///
/// The returned value is the upper end of a bisection bracket, so it never
/// understates ε.
pub(crate) fn gaussian_epsilon(sigma: f64, delta: f64) -> f64 {
    if gaussian_delta(sigma, 0.0) <= delta {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while gaussian_delta(sigma, hi) > delta {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gaussian_delta(sigma, mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    hi
}
