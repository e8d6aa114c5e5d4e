//! Constant-compute configuration search.
//!
//! For a compute budget `C` and sequence length `S`, every `(M, T)` pair on
//! log lattices over the law's domain fixes the batch size through
//! `C = 6·M·B·S·T`. Each configuration is calibrated against the privacy
//! and data budgets, scored with a [`LossModel`], and the minimum wins.
//! Configurations whose batch exceeds the data budget, whose budget is
//! unattainable, or whose `(M, T, σ̄)` falls outside the law's domain are
//! excluded from the argmin and counted instead.

mod baselines;
mod sweep;

pub use baselines::{
    compare_baselines, default_baselines, Baseline, BaselineComparison, BaselinePoint, BaselineSeries, SavingsGrid,
};
pub use sweep::{critical_compute, sweep, SweepAxis, SweepPoint, SweepSeries};

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, Ordering};

use crate::accounting::{
    calibrate_nbr_with_tol, AccountingError, AccountingSetup, Batching, PrivacySpec, NBR_REL_TOL,
};
use crate::lawfit::{Axis, LawError, LossModel};
use crate::math::log_lattice;
use crate::DEFAULT_SEQ_LEN;

/// Lattice points per decade for `M` and `T`.
pub const DEFAULT_LATTICE_DENSITY: u32 = 16;
/// Relative loss margin of the near-optimal band.
pub const DEFAULT_NEAR_OPTIMAL: f64 = 0.01;
/// Refuse enumerations larger than this.
pub const DEFAULT_MAX_CONFIGS: usize = 1_000_000;

/// A training configuration: `M` parameters, expected batch `B`, `T` steps
/// of `S`-token sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingConfig {
    pub model_params: f64,
    pub batch_size: f64,
    pub iterations: u64,
    pub seq_len: f64,
}

impl TrainingConfig {
    /// `6·M·B·S·T` FLOPs.
    pub fn compute(&self) -> f64 {
        6.0 * self.model_params * self.batch_size * self.seq_len * self.iterations as f64
    }

    /// Training tokens per parameter, `S·B·T / M`.
    pub fn token_model_ratio(&self) -> f64 {
        self.seq_len * self.batch_size * self.iterations as f64 / self.model_params
    }
}

/// Compute, privacy and data budgets. `privacy: None` plans non-private
/// training (σ̄ = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Budgets {
    pub compute: f64,
    pub privacy: Option<PrivacySpec>,
    pub data: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerOptions {
    pub lattice_density: u32,
    pub seq_len: f64,
    pub near_optimal: f64,
    pub rel_tol: f64,
    pub max_configs: usize,
    /// Checked before each configuration; a set flag ends the search
    /// with [`PlanError::Cancelled`].
    pub cancel: Option<CancelFlag>,
}

/// Shared stop signal for long enumerations.
#[derive(Debug, Clone, Default)]
pub struct CancelFlag(Arc<AtomicBool>);

impl CancelFlag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }
}

impl PartialEq for CancelFlag {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            lattice_density: DEFAULT_LATTICE_DENSITY,
            seq_len: DEFAULT_SEQ_LEN,
            near_optimal: DEFAULT_NEAR_OPTIMAL,
            rel_tol: NBR_REL_TOL,
            max_configs: DEFAULT_MAX_CONFIGS,
            cancel: None,
        }
    }
}

/// Why a configuration did or did not get a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind", content = "axis"))]
pub enum Status {
    Ok,
    /// Expected batch larger than the data budget.
    BatchExceedsData,
    /// No σ̄ in the calibration bracket meets the privacy budget.
    Unattainable,
    /// The law cannot be queried here; carries the offending axis.
    OutOfDomain(Axis),
}

/// A configuration with its calibration and predicted loss.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlanResult {
    pub config: TrainingConfig,
    /// Calibrated noise-batch ratio; zero when non-private.
    pub nbr: Option<f64>,
    pub noise_multiplier: Option<f64>,
    /// Analysis that produced `nbr`.
    pub batching: Option<Batching>,
    pub epsilon_achieved: Option<f64>,
    pub predicted_loss: Option<f64>,
    pub token_model_ratio: f64,
    pub in_domain: bool,
    pub status: Status,
}

/// Min and max of each hyperparameter over the near-optimal set.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AllocationBand {
    /// Configurations within `(1 + margin)·best` are included.
    pub margin: f64,
    pub count: usize,
    pub model_params: (f64, f64),
    pub batch_size: (f64, f64),
    pub iterations: (u64, u64),
    pub token_model_ratio: (f64, f64),
}

/// How many enumerated configurations were left out of the argmin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Exclusions {
    pub batch_exceeds_data: usize,
    pub unattainable: usize,
    pub out_of_domain: usize,
}

impl core::fmt::Display for Exclusions {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "{} with batch above data, {} unattainable, {} outside the law's domain",
            self.batch_exceeds_data, self.unattainable, self.out_of_domain
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Allocation {
    pub best: PlanResult,
    pub band: AllocationBand,
    pub evaluated: usize,
    pub excluded: Exclusions,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("invalid {name}: {reason}")]
    InvalidInput { name: &'static str, reason: &'static str },
    #[error("lattice would hold {found} configurations, more than the cap of {cap}")]
    TooManyConfigs { found: usize, cap: usize },
    #[error("no configuration is feasible and inside the law's domain ({excluded})")]
    NoFeasibleConfig { excluded: Exclusions },
    #[error("search cancelled")]
    Cancelled,
    #[error(transparent)]
    Accounting(#[from] AccountingError),
}

fn invalid(name: &'static str, reason: &'static str) -> PlanError {
    PlanError::InvalidInput { name, reason }
}

impl Budgets {
    fn validate(&self) -> Result<(), PlanError> {
        if !(self.compute > 0.0) || !self.compute.is_finite() {
            return Err(invalid("compute", "must be positive and finite"));
        }
        if self.data == 0 {
            return Err(invalid("data", "must be positive"));
        }
        Ok(())
    }
}

impl PlannerOptions {
    fn validate(&self) -> Result<(), PlanError> {
        if self.lattice_density == 0 {
            return Err(invalid("lattice_density", "must be positive"));
        }
        if !(self.seq_len > 0.0) || !self.seq_len.is_finite() {
            return Err(invalid("seq_len", "must be positive and finite"));
        }
        if !(self.near_optimal >= 0.0) || !self.near_optimal.is_finite() {
            return Err(invalid("near_optimal", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Integer iteration counts on a log lattice over `[lo, hi]`, rounded and
/// deduplicated.
pub fn iteration_lattice(lo: f64, hi: f64, density: u32) -> Vec<u64> {
    let (min, max) = (libm::ceil(lo), libm::floor(hi));
    if !(min <= max) {
        return Vec::new();
    }
    let mut out: Vec<u64> = log_lattice(lo, hi, density)
        .into_iter()
        .map(|t| libm::round(t).clamp(min, max))
        .filter(|&t| t >= 1.0)
        .map(|t| t as u64)
        .collect();
    out.dedup();
    out
}

/// Every `(M, T)` pair on the lattices over `m_range` × `t_range` with
/// `B = C / (6·M·S·T) ≥ 1`, sorted by `(M, T)`.
pub fn enumerate_configs(
    compute: f64,
    seq_len: f64,
    density: u32,
    m_range: (f64, f64),
    t_range: (f64, f64),
) -> Vec<TrainingConfig> {
    let ms = log_lattice(m_range.0, m_range.1, density);
    let ts = iteration_lattice(t_range.0, t_range.1, density);
    let mut out = Vec::with_capacity(ms.len() * ts.len());
    for &m in &ms {
        for &t in &ts {
            let batch = compute / (6.0 * m * seq_len * t as f64);
            if batch >= 1.0 {
                out.push(TrainingConfig { model_params: m, batch_size: batch, iterations: t, seq_len });
            }
        }
    }
    out
}

/// Calibrate `config` against the budgets and query the law.
pub fn evaluate<L: LossModel>(
    config: &TrainingConfig,
    budgets: &Budgets,
    law: &L,
    rel_tol: f64,
) -> Result<PlanResult, PlanError> {
    let mut r = PlanResult {
        config: *config,
        nbr: None,
        noise_multiplier: None,
        batching: None,
        epsilon_achieved: None,
        predicted_loss: None,
        token_model_ratio: config.token_model_ratio(),
        in_domain: false,
        status: Status::Ok,
    };
    if config.batch_size > budgets.data as f64 {
        r.status = Status::BatchExceedsData;
        return Ok(r);
    }
    let nbr = match budgets.privacy {
        None => 0.0,
        Some(spec) => {
            let setup = AccountingSetup::new(budgets.data, config.batch_size, config.iterations, Batching::Poisson)?;
            match calibrate_nbr_with_tol(&spec, &setup, rel_tol) {
                Ok(c) => {
                    r.batching = Some(c.batching);
                    r.epsilon_achieved = Some(c.epsilon);
                    c.nbr.value()
                }
                Err(AccountingError::Unattainable { .. }) => {
                    r.status = Status::Unattainable;
                    return Ok(r);
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    r.nbr = Some(nbr);
    r.noise_multiplier = Some(nbr * config.batch_size);
    match law.query(config.model_params, config.iterations as f64, nbr) {
        Ok(loss) => {
            r.predicted_loss = Some(loss);
            r.in_domain = true;
        }
        Err(LawError::OutOfDomain { axis, .. }) => r.status = Status::OutOfDomain(axis),
        Err(LawError::NoNonPrivateSlice) => r.status = Status::OutOfDomain(Axis::NoiseBatchRatio),
        Err(_) => r.status = Status::OutOfDomain(Axis::NoiseBatchRatio),
    }
    Ok(r)
}

/// Best configuration over the lattice at `budgets.compute`, plus the band
/// of configurations within `options.near_optimal` of it.
///
/// Ties in loss go to the smaller model (then fewer iterations).
pub fn optimal_allocation<L: LossModel>(
    budgets: &Budgets,
    law: &L,
    options: &PlannerOptions,
) -> Result<Allocation, PlanError> {
    optimal_allocation_with(budgets, law, options, &[])
}

/// As [`optimal_allocation`] with extra candidate configurations (for
/// example fixed baselines) merged into the lattice. Extras must have the
/// budget's compute; their batch size is taken as given.
pub fn optimal_allocation_with<L: LossModel>(
    budgets: &Budgets,
    law: &L,
    options: &PlannerOptions,
    extra: &[TrainingConfig],
) -> Result<Allocation, PlanError> {
    budgets.validate()?;
    options.validate()?;
    let domain = law.domain();
    let ms = log_lattice(domain.m.0, domain.m.1, options.lattice_density).len();
    let ts = iteration_lattice(domain.t.0, domain.t.1, options.lattice_density).len();
    if ms * ts > options.max_configs {
        return Err(PlanError::TooManyConfigs { found: ms * ts, cap: options.max_configs });
    }
    let mut configs = enumerate_configs(budgets.compute, options.seq_len, options.lattice_density, domain.m, domain.t);
    configs.extend_from_slice(extra);
    configs.sort_by(|a, b| a.model_params.total_cmp(&b.model_params).then(a.iterations.cmp(&b.iterations)));

    let mut results = Vec::with_capacity(configs.len());
    let mut excluded = Exclusions::default();
    let mut best: Option<usize> = None;
    for c in &configs {
        if options.cancel.as_ref().is_some_and(CancelFlag::is_cancelled) {
            return Err(PlanError::Cancelled);
        }
        let r = evaluate(c, budgets, law, options.rel_tol)?;
        match r.status {
            Status::Ok => {}
            Status::BatchExceedsData => excluded.batch_exceeds_data += 1,
            Status::Unattainable => excluded.unattainable += 1,
            Status::OutOfDomain(_) => excluded.out_of_domain += 1,
        }
        if let Some(loss) = r.predicted_loss {
            if best.is_none_or(|b| loss < results_loss(&results, b)) {
                best = Some(results.len());
            }
        }
        results.push(r);
    }
    let Some(best) = best else {
        return Err(PlanError::NoFeasibleConfig { excluded });
    };
    let best = results[best];
    let band = near_optimal_band(&results, best.predicted_loss.expect("best has a loss"), options.near_optimal);
    Ok(Allocation { best, band, evaluated: results.len(), excluded })
}

fn results_loss(results: &[PlanResult], i: usize) -> f64 {
    results[i].predicted_loss.expect("indexed result has a loss")
}

fn near_optimal_band(results: &[PlanResult], best: f64, margin: f64) -> AllocationBand {
    let threshold = best * (1.0 + margin);
    let mut band = AllocationBand {
        margin,
        count: 0,
        model_params: (f64::INFINITY, f64::NEG_INFINITY),
        batch_size: (f64::INFINITY, f64::NEG_INFINITY),
        iterations: (u64::MAX, 0),
        token_model_ratio: (f64::INFINITY, f64::NEG_INFINITY),
    };
    let widen = |r: &mut (f64, f64), v: f64| *r = (r.0.min(v), r.1.max(v));
    for r in results {
        let Some(loss) = r.predicted_loss else { continue };
        if loss > threshold {
            continue;
        }
        band.count += 1;
        widen(&mut band.model_params, r.config.model_params);
        widen(&mut band.batch_size, r.config.batch_size);
        widen(&mut band.token_model_ratio, r.token_model_ratio);
        band.iterations = (band.iterations.0.min(r.config.iterations), band.iterations.1.max(r.config.iterations));
    }
    band
}
