//! Privacy accounting for generalized DP-SGD.
//!
//! The mechanism is parameterized by the noise-batch ratio σ̄ (noise std on the
//! *mean* clipped gradient); its noise multiplier is `B·σ̄`. Two batching
//! analyses are supported:
//!
//! * **Poisson**: sampling probability `q = B/N`, composed subsampled-Gaussian
//!   RDP converted to (ε, δ).
//! * **Deterministic**: every individual is assumed to take part in all `T`
//!   steps, which is one Gaussian with multiplier `B·σ̄/√T`; its profile is
//!   evaluated exactly.
//!
//! Calibration computes σ̄ under both and keeps the smaller one.

mod analytic;
mod rdp;
mod vector_field;

use alloc::vec::Vec;

use crate::math::LN_2;

pub use analytic::analytic_gaussian_delta;
pub use rdp::{
    compose, rdp_delta_bound, rdp_gaussian, rdp_subsampled_gaussian, rdp_to_dp, RdpCurve,
    fractional_orders, INTEGER_ORDERS,
};
pub use vector_field::{component as arrow_component, vector_field, BudgetAxis, FieldPoint, VectorField, VectorFieldSpec};

/// Lower end of the σ̄ search bracket.
pub const NBR_BRACKET_LO: f64 = 1e-10;
/// Upper end of the σ̄ search bracket.
pub const NBR_BRACKET_HI: f64 = 1e4;
/// Default relative width at which σ̄ bisection stops.
pub const NBR_REL_TOL: f64 = 1e-4;
const MAX_CALIBRATION_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AccountingError {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },
    #[error("invalid RDP curve: {0}")]
    InvalidCurve(&'static str),
    #[error("non-private; epsilon undefined")]
    NonPrivate,
    #[error(
        "privacy budget unattainable within noise-batch ratio bracket [{lo:e}, {hi:e}] \
         (epsilon ranges from {eps_at_hi} to {eps_at_lo})"
    )]
    Unattainable { lo: f64, hi: f64, eps_at_lo: f64, eps_at_hi: f64 },
}

/// Target (ε, δ) budget.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrivacySpec {
    epsilon: f64,
    delta: f64,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, AccountingError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(AccountingError::InvalidParameter {
                name: "epsilon",
                reason: "must be positive and finite",
            });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(AccountingError::InvalidParameter { name: "delta", reason: "must lie in (0, 1)" });
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// How minibatches are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Batching {
    Poisson,
    Deterministic,
}

impl Batching {
    pub fn as_str(self) -> &'static str {
        match self {
            Batching::Poisson => "poisson",
            Batching::Deterministic => "deterministic",
        }
    }
}

/// Mechanism parameters besides the noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccountingSetup {
    data: u64,
    batch: f64,
    steps: u64,
    batching: Batching,
}

impl AccountingSetup {
    /// `data` individuals, expected `batch` examples per step, `steps` steps.
    pub fn new(data: u64, batch: f64, steps: u64, batching: Batching) -> Result<Self, AccountingError> {
        if data == 0 {
            return Err(AccountingError::InvalidParameter { name: "data", reason: "must be positive" });
        }
        if steps == 0 {
            return Err(AccountingError::InvalidParameter { name: "steps", reason: "must be positive" });
        }
        if !(batch > 0.0) || !batch.is_finite() {
            return Err(AccountingError::InvalidParameter { name: "batch", reason: "must be positive" });
        }
        if batch > data as f64 {
            return Err(AccountingError::InvalidParameter {
                name: "batch",
                reason: "must not exceed the data budget",
            });
        }
        if batching == Batching::Deterministic && batch < 1.0 {
            return Err(AccountingError::InvalidParameter {
                name: "batch",
                reason: "deterministic batches hold at least one example",
            });
        }
        Ok(Self { data, batch, steps, batching })
    }

    pub fn data(&self) -> u64 {
        self.data
    }

    pub fn batch(&self) -> f64 {
        self.batch
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn batching(&self) -> Batching {
        self.batching
    }

    /// Poisson sampling probability `B/N`.
    pub fn sampling_probability(&self) -> f64 {
        self.batch / self.data as f64
    }

    pub fn with_batching(self, batching: Batching) -> Result<Self, AccountingError> {
        Self::new(self.data, self.batch, self.steps, batching)
    }
}

/// Std of the noise on the mean clipped gradient, per unit clip norm.
/// Zero denotes non-private training.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct NoiseBatchRatio(f64);

impl NoiseBatchRatio {
    pub const NON_PRIVATE: Self = Self(0.0);

    pub fn new(value: f64) -> Result<Self, AccountingError> {
        if !(value >= 0.0) || value.is_nan() {
            return Err(AccountingError::InvalidParameter {
                name: "noise_batch_ratio",
                reason: "must be nonnegative",
            });
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_private(self) -> bool {
        self.0 > 0.0
    }

    /// Noise multiplier on the summed gradient, `B·σ̄`.
    pub fn noise_multiplier(self, batch: f64) -> f64 {
        batch * self.0
    }
}

/// Whether a reported δ is the exact profile or an upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Bound {
    Exact,
    Upper,
}

/// One `(ε, δ(ε))` point of a privacy profile.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProfilePoint {
    pub epsilon: f64,
    pub delta: f64,
    pub bound: Bound,
}

/// Sampled privacy profile; δ is nonincreasing in ε.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct PrivacyProfile {
    pub points: Vec<ProfilePoint>,
}

fn check_delta(delta: f64) -> Result<(), AccountingError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountingError::InvalidParameter { name: "delta", reason: "must lie in (0, 1)" });
    }
    Ok(())
}

/// Noise multiplier of the single Gaussian equivalent to `T` deterministic steps.
fn deterministic_sigma(setup: &AccountingSetup, nbr: NoiseBatchRatio) -> f64 {
    nbr.noise_multiplier(setup.batch) / libm::sqrt(setup.steps as f64)
}

/// ε at `delta` of the mechanism run with noise-batch ratio `nbr`, using the
/// setup's batching analysis. Clipped at zero.
pub fn epsilon_of(setup: &AccountingSetup, nbr: NoiseBatchRatio, delta: f64) -> Result<f64, AccountingError> {
    check_delta(delta)?;
    if !nbr.is_private() {
        return Err(AccountingError::NonPrivate);
    }
    let eps = match setup.batching {
        Batching::Poisson => rdp::poisson_epsilon(
            nbr.noise_multiplier(setup.batch),
            setup.sampling_probability(),
            setup.steps,
            delta,
        )?,
        Batching::Deterministic => analytic::gaussian_epsilon(deterministic_sigma(setup, nbr), delta),
    };
    Ok(eps.max(0.0))
}

/// Result of noise calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Calibration {
    pub nbr: NoiseBatchRatio,
    /// Analysis that produced `nbr`.
    pub batching: Batching,
    /// ε actually achieved by `nbr` under `batching`; never above the target.
    pub epsilon: f64,
}

impl Calibration {
    pub fn noise_multiplier(&self, batch: f64) -> f64 {
        self.nbr.noise_multiplier(batch)
    }
}

/// Smallest σ̄ meeting `spec` under the setup's own batching analysis.
pub fn calibrate_branch(spec: &PrivacySpec, setup: &AccountingSetup) -> Result<Calibration, AccountingError> {
    calibrate_branch_with_tol(spec, setup, NBR_REL_TOL)
}

/// As [`calibrate_branch`] with an explicit relative bracket width.
pub fn calibrate_branch_with_tol(
    spec: &PrivacySpec,
    setup: &AccountingSetup,
    rel_tol: f64,
) -> Result<Calibration, AccountingError> {
    let target = spec.epsilon;
    let eps_at = |x: f64| epsilon_of(setup, NoiseBatchRatio(libm::exp(x)), spec.delta);

    // search in x = ln σ̄, where ε is nonincreasing; bracket outward from a
    // closed-form guess so evaluations stay near the answer
    let x_min = libm::log(NBR_BRACKET_LO);
    let x_max = libm::log(NBR_BRACKET_HI);
    let x0 = libm::log(initial_guess(spec, setup)).clamp(x_min, x_max);
    let f0 = eps_at(x0)?;
    let (mut lo, mut f_lo, mut hi, mut f_hi) = (x0, f0, x0, f0);
    let mut step = 2.0 * LN_2;
    if f0 > target {
        while f_hi > target {
            lo = hi;
            f_lo = f_hi;
            if hi >= x_max {
                return Err(unattainable(eps_at(x_min)?, f_hi));
            }
            hi = (hi + step).min(x_max);
            f_hi = eps_at(hi)?;
            step *= 2.0;
        }
    } else {
        while f_lo <= target {
            hi = lo;
            f_hi = f_lo;
            if lo <= x_min {
                return Err(unattainable(f_lo, eps_at(x_max)?));
            }
            lo = (lo - step).max(x_min);
            f_lo = eps_at(lo)?;
            step *= 2.0;
        }
    }
    let x_tol = libm::log1p(rel_tol.max(1e-15));
    // Illinois regula falsi on ln ε, falling back to bisection
    let mut side = 0i8;
    let (mut g_lo, mut g_hi) = (libm::log(f_lo / target), log_ratio(f_hi, target));
    for iter in 0..MAX_CALIBRATION_ITERS {
        let converged = hi - lo <= x_tol && f_hi >= 0.999 * target;
        if converged {
            break;
        }
        let mut x = 0.5 * (lo + hi);
        if iter % 8 != 7 && g_hi.is_finite() && g_lo.is_finite() && g_lo > g_hi {
            let cand = hi - g_hi * (hi - lo) / (g_hi - g_lo);
            let margin = 1e-3 * (hi - lo);
            if cand > lo + margin && cand < hi - margin {
                x = cand;
            }
        }
        if x <= lo || x >= hi {
            break;
        }
        let f = eps_at(x)?;
        if f > target {
            lo = x;
            f_lo = f;
            g_lo = libm::log(f / target);
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = f;
            g_hi = log_ratio(f, target);
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
    }
    let _ = f_lo;
    Ok(Calibration { nbr: NoiseBatchRatio(libm::exp(hi)), batching: setup.batching, epsilon: f_hi })
}

fn unattainable(eps_at_lo: f64, eps_at_hi: f64) -> AccountingError {
    AccountingError::Unattainable { lo: NBR_BRACKET_LO, hi: NBR_BRACKET_HI, eps_at_lo, eps_at_hi }
}

/// Rough σ̄ from the Gaussian tail bound `σ ≈ √(2T ln(1.25/δ)) / ε` on the
/// summed noise, with the sampling rate folded in for Poisson batching.
fn initial_guess(spec: &PrivacySpec, setup: &AccountingSetup) -> f64 {
    let scale = libm::sqrt(2.0 * setup.steps as f64 * libm::log(1.25 / spec.delta)) / spec.epsilon;
    match setup.batching {
        Batching::Poisson => scale / setup.data as f64,
        Batching::Deterministic => scale / setup.batch,
    }
}

fn log_ratio(f: f64, target: f64) -> f64 {
    if f > 0.0 {
        libm::log(f / target)
    } else {
        f64::NEG_INFINITY
    }
}

/// Smallest σ̄ meeting `spec`, taking the lower of the Poisson and
/// deterministic analyses (ties go to deterministic). The setup's own
/// batching field is ignored.
pub fn calibrate_nbr(spec: &PrivacySpec, setup: &AccountingSetup) -> Result<Calibration, AccountingError> {
    calibrate_nbr_with_tol(spec, setup, NBR_REL_TOL)
}

pub fn calibrate_nbr_with_tol(
    spec: &PrivacySpec,
    setup: &AccountingSetup,
    rel_tol: f64,
) -> Result<Calibration, AccountingError> {
    let poisson = calibrate_branch_with_tol(spec, &setup.with_batching(Batching::Poisson)?, rel_tol);
    let deterministic = if setup.batch >= 1.0 {
        calibrate_branch_with_tol(spec, &setup.with_batching(Batching::Deterministic)?, rel_tol)
    } else {
        Err(AccountingError::InvalidParameter { name: "batch", reason: "below one example" })
    };
    match (poisson, deterministic) {
        (Ok(p), Ok(d)) => Ok(if d.nbr.0 <= p.nbr.0 { d } else { p }),
        (Ok(p), Err(_)) => Ok(p),
        (Err(_), Ok(d)) => Ok(d),
        (Err(e), Err(_)) => Err(e),
    }
}

/// Membership-inference advantage bound, the profile's δ at ε = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Advantage {
    pub value: f64,
    pub bound: Bound,
}

/// δ(ε) of the mechanism at each requested ε.
pub fn privacy_profile(
    setup: &AccountingSetup,
    nbr: NoiseBatchRatio,
    epsilons: &[f64],
) -> Result<PrivacyProfile, AccountingError> {
    if !nbr.is_private() {
        return Err(AccountingError::NonPrivate);
    }
    if epsilons.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
        return Err(AccountingError::InvalidParameter { name: "epsilon", reason: "must be finite and nonnegative" });
    }
    let points = match setup.batching {
        Batching::Deterministic => {
            let sigma = deterministic_sigma(setup, nbr);
            epsilons
                .iter()
                .map(|&e| ProfilePoint { epsilon: e, delta: analytic::gaussian_delta(sigma, e), bound: Bound::Exact })
                .collect()
        }
        Batching::Poisson => {
            let curve = compose(
                &RdpCurve::subsampled_gaussian(nbr.noise_multiplier(setup.batch), setup.sampling_probability())?,
                setup.steps,
            )?;
            epsilons
                .iter()
                .map(|&e| ProfilePoint { epsilon: e, delta: rdp_delta_bound(&curve, e), bound: Bound::Upper })
                .collect()
        }
    };
    Ok(PrivacyProfile { points })
}

/// Advantage of the best membership-inference attacker, bounded by δ(0).
pub fn mia_advantage(setup: &AccountingSetup, nbr: NoiseBatchRatio) -> Result<Advantage, AccountingError> {
    let p = privacy_profile(setup, nbr, &[0.0])?;
    let point = p.points[0];
    Ok(Advantage { value: point.delta, bound: point.bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: u64, b: f64, t: u64, batching: Batching) -> AccountingSetup {
        AccountingSetup::new(n, b, t, batching).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(PrivacySpec::new(0.0, 1e-8).is_err());
        assert!(PrivacySpec::new(1.0, 0.0).is_err());
        assert!(PrivacySpec::new(1.0, 1.0).is_err());
        assert!(PrivacySpec::new(f64::INFINITY, 1e-8).is_err());
        assert!(AccountingSetup::new(10, 11.0, 1, Batching::Poisson).is_err());
        assert!(AccountingSetup::new(10, 0.5, 1, Batching::Deterministic).is_err());
        assert!(AccountingSetup::new(10, 0.5, 1, Batching::Poisson).is_ok());
        assert!(NoiseBatchRatio::new(-1.0).is_err());
    }

    #[test]
    fn deterministic_full_batch_single_step() {
        // σ_mult = 1 so δ(0) = 0.382925 and ε at that δ is zero
        let s = setup(1000, 1000.0, 1, Batching::Deterministic);
        let eps = epsilon_of(&s, NoiseBatchRatio(1.0 / 1000.0), 0.382_925).unwrap();
        assert!(eps < 1e-5, "{eps}");
    }

    #[test]
    fn non_private_has_no_epsilon() {
        let s = setup(1000, 10.0, 10, Batching::Poisson);
        assert_eq!(epsilon_of(&s, NoiseBatchRatio::NON_PRIVATE, 1e-8), Err(AccountingError::NonPrivate));
    }

    #[test]
    fn doubling_noise_never_increases_epsilon() {
        for batching in [Batching::Poisson, Batching::Deterministic] {
            let s = setup(1_000_000, 4096.0, 2000, batching);
            let mut prev = f64::INFINITY;
            for k in 0..12 {
                let nbr = NoiseBatchRatio(1e-5 * libm::pow(2.0, f64::from(k)));
                let e = epsilon_of(&s, nbr, 1e-8).unwrap();
                assert!(e <= prev);
                prev = e;
            }
        }
    }

    #[test]
    fn calibration_round_trip() {
        let spec = PrivacySpec::new(2.0, 1e-6).unwrap();
        let s = setup(100_000, 512.0, 3000, Batching::Poisson);
        let c = calibrate_nbr(&spec, &s).unwrap();
        let achieved = epsilon_of(&s.with_batching(c.batching).unwrap(), c.nbr, 1e-6).unwrap();
        assert_eq!(achieved, c.epsilon);
        assert!((0.999 * 2.0..=2.0).contains(&achieved), "{achieved}");
    }

    #[test]
    fn deterministic_wins_at_full_batch() {
        let spec = PrivacySpec::new(1.0, 1e-5).unwrap();
        let s = setup(1000, 1000.0, 1, Batching::Poisson);
        let c = calibrate_nbr(&spec, &s).unwrap();
        assert_eq!(c.batching, Batching::Deterministic);
    }

    #[test]
    fn unattainable_budget_is_an_error() {
        let spec = PrivacySpec::new(1e-12, 1e-12).unwrap();
        let s = setup(10, 1.0, 1_000_000, Batching::Poisson);
        assert!(matches!(calibrate_nbr(&spec, &s), Err(AccountingError::Unattainable { .. })));
    }

    #[test]
    fn advantage_matches_gaussian_profile() {
        // effective multiplier B·σ̄/√T = 1
        let s = setup(10_000, 100.0, 4, Batching::Deterministic);
        let a = mia_advantage(&s, NoiseBatchRatio(2.0 / 100.0)).unwrap();
        assert!((a.value - 0.382_924_922_548_026_2).abs() < 1e-12);
        assert_eq!(a.bound, Bound::Exact);
        let p = mia_advantage(&s.with_batching(Batching::Poisson).unwrap(), NoiseBatchRatio(0.02)).unwrap();
        assert_eq!(p.bound, Bound::Upper);
    }

    #[test]
    fn advantage_vanishes_with_noise() {
        let s = setup(10_000, 100.0, 4, Batching::Deterministic);
        let mut prev = 1.0;
        for k in 0..20 {
            let a = mia_advantage(&s, NoiseBatchRatio(0.01 * libm::pow(2.0, f64::from(k)))).unwrap();
            assert!(a.value <= prev);
            prev = a.value;
        }
        assert!(prev < 1e-4);
    }
}
