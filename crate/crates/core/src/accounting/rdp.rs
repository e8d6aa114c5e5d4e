//! Rényi-DP curves for the (Poisson-subsampled) Gaussian mechanism.

use alloc::vec::Vec;

use super::AccountingError;
use crate::math::{log_add, log_norm_cdf, LN_2};

/// Integer orders used by the accountant, `2..=256`.
pub const INTEGER_ORDERS: core::ops::RangeInclusive<u32> = 2..=256;

/// Fractional orders `1.1, 1.2, ..., 10.9`, skipping integers.
pub fn fractional_orders() -> impl Iterator<Item = f64> {
    (11u32..110).filter(|k| k % 10 != 0).map(|k| f64::from(k) / 10.0)
}

/// Default order grid, ascending: the fractional orders merged with
/// [`INTEGER_ORDERS`]. Integer entries carry their integer value.
fn order_grid() -> Vec<(f64, Option<u32>)> {
    let mut grid: Vec<(f64, Option<u32>)> = fractional_orders().map(|a| (a, None)).collect();
    grid.extend(INTEGER_ORDERS.map(|a| (f64::from(a), Some(a))));
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    grid
}

/// Largest number of series terms tried for a fractional order.
const MAX_SERIES_TERMS: u32 = 2000;

/// Rényi divergence bounds indexed by order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RdpCurve {
    orders: Vec<f64>,
    values: Vec<f64>,
}

impl RdpCurve {
    pub fn new(orders: Vec<f64>, values: Vec<f64>) -> Result<Self, AccountingError> {
        if orders.len() != values.len() {
            return Err(AccountingError::InvalidCurve("orders and values differ in length"));
        }
        if orders.iter().any(|&a| !(a > 1.0) || !a.is_finite()) {
            return Err(AccountingError::InvalidCurve("orders must be finite and exceed 1"));
        }
        if orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AccountingError::InvalidCurve("orders must be strictly increasing"));
        }
        if values.iter().any(|&v| !(v >= 0.0)) {
            return Err(AccountingError::InvalidCurve("values must be nonnegative"));
        }
        Ok(Self { orders, values })
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    /// Curve of the Poisson-subsampled Gaussian over the default order grid.
    pub fn subsampled_gaussian(noise_multiplier: f64, q: f64) -> Result<Self, AccountingError> {
        let grid = order_grid();
        let mut orders = Vec::with_capacity(grid.len());
        let mut values = Vec::with_capacity(grid.len());
        for (a, int) in grid {
            orders.push(a);
            values.push(subsampled_at(noise_multiplier, q, a, int)?);
        }
        Ok(Self { orders, values })
    }
}

/// Divergence at one grid order. Fractional orders use the series when it
/// converges and direct integration otherwise; the unsampled Gaussian
/// bound is the last resort.
fn subsampled_at(sigma: f64, q: f64, order: f64, int: Option<u32>) -> Result<f64, AccountingError> {
    if let Some(a) = int {
        return rdp_subsampled_gaussian(sigma, q, a);
    }
    check_noise(sigma)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(AccountingError::InvalidParameter { name: "q", reason: "must lie in (0, 1]" });
    }
    if q < 1.0 {
        if let Some(log_a) = log_moment_frac(sigma, q, order).or_else(|| log_moment_quadrature(sigma, q, order)) {
            return Ok((log_a / (order - 1.0)).max(0.0));
        }
    }
    rdp_gaussian(sigma, order)
}

fn check_noise(noise_multiplier: f64) -> Result<(), AccountingError> {
    if !(noise_multiplier > 0.0) || !noise_multiplier.is_finite() {
        return Err(AccountingError::InvalidParameter {
            name: "noise_multiplier",
            reason: "must be positive and finite",
        });
    }
    Ok(())
}

/// RDP of the Gaussian mechanism with sensitivity 1: `order / (2σ²)`.
pub fn rdp_gaussian(noise_multiplier: f64, order: f64) -> Result<f64, AccountingError> {
    check_noise(noise_multiplier)?;
    if !(order > 1.0) || !order.is_finite() {
        return Err(AccountingError::InvalidParameter { name: "order", reason: "must exceed 1" });
    }
    Ok(order / (2.0 * noise_multiplier * noise_multiplier))
}

/// RDP at integer `order` of the Gaussian mechanism under Poisson sampling
/// with probability `q`, via the binomial expansion of
/// `E_{μ0}[(μ/μ0)^α]` with `μ = (1-q)·N(0,σ²) + q·N(1,σ²)`.
pub fn rdp_subsampled_gaussian(
    noise_multiplier: f64,
    q: f64,
    order: u32,
) -> Result<f64, AccountingError> {
    check_noise(noise_multiplier)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(AccountingError::InvalidParameter { name: "q", reason: "must lie in (0, 1]" });
    }
    if order < 2 {
        return Err(AccountingError::InvalidParameter { name: "order", reason: "must be at least 2" });
    }
    if q == 1.0 {
        return rdp_gaussian(noise_multiplier, f64::from(order));
    }
    let log_a = log_moment(noise_multiplier, q, order);
    Ok((log_a / f64::from(order - 1)).max(0.0))
}

/// `ln A_α` for `0 < q < 1`.
///
/// `A_α = 1 + Σ_{i≥2} C(α,i) q^i (1-q)^{α-i} (e^{(i²-i)/2σ²} - 1)`; the
/// excess over one is accumulated in log space so tiny divergences keep
/// their relative precision.
fn log_moment(sigma: f64, q: f64, order: u32) -> f64 {
    let alpha = f64::from(order);
    let log_q = libm::log(q);
    let log_1mq = libm::log1p(-q);
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);

    // ln C(α, i), built incrementally
    let mut log_binom = 0.0;
    let mut log_excess = f64::NEG_INFINITY;
    for i in 1..=order {
        let fi = f64::from(i);
        log_binom += libm::log(alpha - fi + 1.0) - libm::log(fi);
        if i < 2 {
            continue;
        }
        let exponent = (fi * fi - fi) * inv_two_var;
        // ln(e^x - 1) = x + ln(1 - e^{-x})
        let log_expm1 = exponent + libm::log(-libm::expm1(-exponent));
        let term = log_binom + fi * log_q + (alpha - fi) * log_1mq + log_expm1;
        log_excess = log_add(log_excess, term);
        // successive terms shrink by at most (α-j)/(j-1) · q/(1-q) · e^{α/σ²}
        // for j ≥ i; below 1/2 the whole tail is smaller than this term
        if term < log_excess - 40.0 && i < order {
            let log_ratio = libm::log((alpha - fi) / (fi - 1.0)) + log_q - log_1mq + 2.0 * alpha * inv_two_var;
            if log_ratio < -LN_2 {
                break;
            }
        }
    }
    if log_excess < 30.0 {
        libm::log1p(libm::exp(log_excess))
    } else {
        log_excess + libm::log1p(libm::exp(-log_excess))
    }
}

/// `ln A_α` for fractional `α` and `0 < q < 1`, from the two-sided series
/// split at `z0 = σ² ln(1/q - 1) + 1/2`, where the likelihood ratio crosses one.
///
/// Returns `None` if the alternating tail has not died out after
/// [`MAX_SERIES_TERMS`] terms or the partial sums cancel.
fn log_moment_frac(sigma: f64, q: f64, alpha: f64) -> Option<f64> {
    let log_q = libm::log(q);
    let log_1mq = libm::log1p(-q);
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let z0 = sigma * sigma * (log_1mq - log_q) + 0.5;

    let mut log_binom = 0.0;
    let mut positive = true;
    let (mut pos, mut neg) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..MAX_SERIES_TERMS {
        let fi = f64::from(i);
        if i > 0 {
            let factor = (alpha - fi + 1.0) / fi;
            if factor == 0.0 {
                break;
            }
            if factor < 0.0 {
                positive = !positive;
            }
            log_binom += libm::log(libm::fabs(factor));
        }
        let j = alpha - fi;
        let s0 = log_binom + fi * log_q + j * log_1mq + (fi * fi - fi) * inv_two_var
            + log_norm_cdf((z0 - fi) / sigma);
        let s1 = log_binom + j * log_q + fi * log_1mq + (j * j - j) * inv_two_var
            + log_norm_cdf((j - z0) / sigma);
        let term = log_add(s0, s1);
        if positive {
            pos = log_add(pos, term);
        } else {
            neg = log_add(neg, term);
        }
        if fi > alpha + 1.0 && term < pos - 36.0 {
            if neg >= pos {
                return None;
            }
            return Some(pos + libm::log1p(-libm::exp(neg - pos)));
        }
    }
    None
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, positive half.
const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_3),
];

/// `ln A_α` by integrating `E_{z~N(0,σ²)}[(1 + y)^α]` with
/// `y = q(e^{(2z-1)/(2σ²)} - 1)`, on 8-point panels of width σ/2.
///
/// Since `E[y] = 0` the integrand is taken as `(1 + y)^α - 1 - αy`, which is
/// nonnegative, so small moments do not cancel. Used where the series is
/// too slow to converge, which happens for small `q`.
fn log_moment_quadrature(sigma: f64, q: f64, alpha: f64) -> Option<f64> {
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let log_norm = -libm::log(sigma) - 0.5 * libm::log(2.0 * core::f64::consts::PI);
    let lo = -12.0 * sigma - 1.0;
    let hi = alpha + 12.0 * sigma + 1.0;
    let width = 0.5 * sigma;
    let panels = libm::ceil((hi - lo) / width) as u32;
    if panels > 200_000 {
        return None;
    }
    // excess terms above e^30 are summed in log space to avoid overflow
    let (mut small, mut log_big) = (0.0, f64::NEG_INFINITY);
    for p in 0..panels {
        let mid = lo + (f64::from(p) + 0.5) * width;
        for &(x, w) in &GL8 {
            for z in [mid - 0.5 * width * x, mid + 0.5 * width * x] {
                let log_phi = log_norm - z * z * inv_two_var;
                let y = q * libm::expm1((2.0 * z - 1.0) * inv_two_var);
                let t = alpha * libm::log1p(y);
                let weight = 0.5 * width * w;
                if t > 30.0 {
                    log_big = log_add(log_big, log_phi + t + libm::log(weight));
                    small -= weight * libm::exp(log_phi) * (1.0 + alpha * y);
                } else {
                    small += weight * libm::exp(log_phi) * (libm::expm1(t) - alpha * y);
                }
            }
        }
    }
    let log_a = if log_big == f64::NEG_INFINITY {
        libm::log1p(small.max(0.0))
    } else {
        log_add(log_big, libm::log1p(small.max(-1.0 + 1e-300)))
    };
    log_a.is_finite().then_some(log_a)
}

/// Multiply every value by `steps` (RDP composes additively).
pub fn compose(curve: &RdpCurve, steps: u64) -> Result<RdpCurve, AccountingError> {
    if steps == 0 {
        return Err(AccountingError::InvalidParameter { name: "steps", reason: "must be at least 1" });
    }
    let t = steps as f64;
    Ok(RdpCurve {
        orders: curve.orders.clone(),
        values: curve.values.iter().map(|v| v * t).collect(),
    })
}

/// Additive term of the RDP → (ε, δ) conversion at `order`:
/// `ln((α-1)/α) - (ln δ + ln α)/(α-1)`.
pub(crate) fn conversion_offset(order: f64, log_delta: f64) -> f64 {
    libm::log((order - 1.0) / order) - (log_delta + libm::log(order)) / (order - 1.0)
}

/// Smallest ε over the curve's orders, together with the order achieving it.
///
/// The result may be negative for near-zero curves; callers clip at zero.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64) -> Result<(f64, f64), AccountingError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountingError::InvalidParameter { name: "delta", reason: "must lie in (0, 1)" });
    }
    if curve.is_empty() {
        return Err(AccountingError::InvalidCurve("curve is empty"));
    }
    let log_delta = libm::log(delta);
    let mut best = (f64::INFINITY, curve.orders[0]);
    for (&a, &rho) in curve.orders.iter().zip(&curve.values) {
        let eps = rho + conversion_offset(a, log_delta);
        if eps < best.0 {
            best = (eps, a);
        }
    }
    Ok(best)
}

/// Upper bound on δ(ε) from an RDP curve:
/// `min_α exp((α-1)(ρ(α) - ε)) · (1 - 1/α)^{α-1} / α`, capped at 1.
pub fn rdp_delta_bound(curve: &RdpCurve, epsilon: f64) -> f64 {
    let mut best = 0.0f64;
    let mut first = true;
    for (&a, &rho) in curve.orders.iter().zip(&curve.values) {
        let log_d = (a - 1.0) * (rho - epsilon) + (a - 1.0) * libm::log1p(-1.0 / a) - libm::log(a);
        if first || log_d < best {
            best = log_d;
            first = false;
        }
    }
    if first {
        return 1.0;
    }
    libm::exp(best).min(1.0)
}

/// ε of `steps`-fold Poisson-subsampled Gaussian at `delta`, identical to
/// `rdp_to_dp(compose(subsampled_gaussian(..)))` but skipping orders that
/// provably cannot improve the minimum.
///
/// Integer orders are exact and cheap, so they go first; divergences are
/// nondecreasing in the order, so once `T·ρ(k) + min_{α>k} offset(α)`
/// reaches the best ε no larger order can win. A fractional order is then
/// only expanded if a lower bound on its ε could still beat the best. The
/// bound comes from convexity of `ln A_α = (α-1)ρ(α)` in `α`: secants through
/// neighbouring integer orders (and `ln A_1 = 0`) extended past their
/// endpoints lie below the curve.
pub(crate) fn poisson_epsilon(
    noise_multiplier: f64,
    q: f64,
    steps: u64,
    delta: f64,
) -> Result<f64, AccountingError> {
    let log_delta = libm::log(delta);
    let t = steps as f64;
    let grid = order_grid();
    let mut suffix_min = alloc::vec![f64::INFINITY; grid.len() + 1];
    for idx in (0..grid.len()).rev() {
        suffix_min[idx] = conversion_offset(grid[idx].0, log_delta).min(suffix_min[idx + 1]);
    }

    let mut best = f64::INFINITY;
    // ln A_k per step at k = 1, 2, ... for every integer order reached
    let mut log_a: Vec<f64> = alloc::vec![0.0];
    for (idx, &(a, int)) in grid.iter().enumerate() {
        let Some(k) = int else { continue };
        let rho = rdp_subsampled_gaussian(noise_multiplier, q, k)?;
        log_a.push(rho * (a - 1.0));
        best = best.min(t * rho + conversion_offset(a, log_delta));
        if t * rho + suffix_min[idx + 1] >= best {
            break;
        }
    }
    let last_order = log_a.len() as f64;
    for a in fractional_orders() {
        if a > last_order {
            break;
        }
        let offset = conversion_offset(a, log_delta);
        let lower = convex_lower_bound(&log_a, a) / (a - 1.0);
        if t * lower + offset >= best {
            continue;
        }
        let rho = subsampled_at(noise_multiplier, q, a, None)?;
        best = best.min(t * rho + offset);
    }
    Ok(best)
}

/// Lower bound on a convex function at `x` from its values `f[i]` at
/// `x = i + 1`, using the secants on either side of `x` extended to it.
fn convex_lower_bound(f: &[f64], x: f64) -> f64 {
    // f[i] sits at order i + 1; k is the integer just below x
    let k = libm::floor(x) as usize;
    let at = |order: usize| f[order - 1];
    let mut lb = at(k);
    if k >= 2 {
        lb = lb.max(at(k) + (x - k as f64) * (at(k) - at(k - 1)));
    }
    if k + 2 <= f.len() {
        let up = k + 1;
        lb = lb.max(at(up) - (up as f64 - x) * (at(up + 1) - at(up)));
    }
    lb.max(0.0)
}
