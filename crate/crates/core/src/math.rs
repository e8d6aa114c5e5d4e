//! Small numerical helpers shared by the other modules.
//!
//! Everything routes through `libm` so results are bit-identical between
//! `std` and `no_std` builds.

use alloc::vec::Vec;

pub(crate) const LN_2: f64 = core::f64::consts::LN_2;
const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, accurate deep into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        if x > 5.0 {
            // Φ(x) = 1 - Φ(-x), use log1p for the tiny complement
            libm::log1p(-norm_cdf(-x))
        } else {
            libm::log(norm_cdf(x))
        }
    } else {
        // asymptotic expansion of the Mills ratio
        let z2 = 1.0 / (x * x);
        let series = 1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2)));
        -0.5 * x * x - LN_SQRT_2PI - libm::log(-x) + libm::log(series)
    }
}

/// `ln(e^a + e^b)`.
pub fn log_add(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + libm::log1p(libm::exp(lo - hi))
}

/// `ln Σ e^{x_i}`; `-∞` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| libm::exp(x - max)).sum();
    max + libm::log(sum)
}

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `density` points per decade starting at `lo`, up to and including `hi`.
///
/// Point `k` is `lo · 10^(k/density)`, so a lattice with twice the density
/// contains every point of the coarser one bit-for-bit.
pub fn log_lattice(lo: f64, hi: f64, density: u32) -> Vec<f64> {
    let mut out = Vec::new();
    if !(lo > 0.0) || !(hi >= lo) || density == 0 {
        return out;
    }
    let d = f64::from(density);
    let mut k = 0u32;
    loop {
        let v = lo * libm::pow(10.0, f64::from(k) / d);
        if v > hi * (1.0 + 1e-12) {
            break;
        }
        out.push(v.min(hi));
        k += 1;
    }
    out
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => {
            let (a, b) = (libm::log(lo), libm::log(hi));
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else if i == 0 {
                        lo
                    } else {
                        libm::exp(a + (b - a) * i as f64 / (n - 1) as f64)
                    }
                })
                .collect()
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if libm::fabs(self.sum) >= libm::fabs(x) {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_points() {
        // Φ(0.5) - Φ(-0.5) = erf(0.5/√2)
        let v = norm_cdf(0.5) - norm_cdf(-0.5);
        assert!((v - 0.382_924_922_548_026_2).abs() < 1e-15);
        assert_eq!(norm_cdf(0.0), 0.5);
    }

    #[test]
    fn log_norm_cdf_matches_direct_and_tail() {
        for &x in &[-29.0, -10.0, -1.0, 0.0, 2.0] {
            let direct = libm::log(norm_cdf(x));
            assert!((log_norm_cdf(x) - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
        }
        // continuity across the asymptotic switch
        let a = log_norm_cdf(-30.0 + 1e-9);
        let b = log_norm_cdf(-30.0 - 1e-9);
        assert!((a - b).abs() / a.abs() < 1e-9);
        assert!(log_norm_cdf(-200.0).is_finite());
    }

    #[test]
    fn lattice_doubling_is_superset() {
        let coarse = log_lattice(4.5e6, 7.84e8, 8);
        let fine = log_lattice(4.5e6, 7.84e8, 16);
        for v in &coarse {
            assert!(fine.contains(v));
        }
        assert_eq!(coarse[0], 4.5e6);
    }

    #[test]
    fn log_sum_exp_basics() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[0.0, 0.0]);
        assert!((v - LN_2).abs() < 1e-15);
        assert!((log_add(1000.0, 1000.0) - (1000.0 + LN_2)).abs() < 1e-12);
    }
}
