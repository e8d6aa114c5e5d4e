//! Planning and analysis toolkit for differentially private model training.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded
//! anywhere; file formats, the CLI and the HTTP service live in the companion
//! `dpscale-cli` crate.
//!
//! Modules follow the planning workflow:
//!
//! * [`accounting`] turns (ε, δ, N, B, T) into a calibrated noise-batch ratio.
//! * [`grid`] cleans raw loss measurements and extrapolates training curves.
//! * [`lawfit`] builds queryable loss predictors from cleaned grids.
//! * [`planner`] searches constant-compute configurations against a fitted law.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` is used deliberately so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod accounting;
pub mod grid;
pub mod lawfit;
pub mod math;
pub mod planner;

pub use accounting::{
    calibrate_nbr, epsilon_of, mia_advantage, AccountingError, AccountingSetup, Batching,
    Calibration, NoiseBatchRatio, PrivacySpec,
};
pub use grid::{GridState, Measurement, MeasurementGrid};
pub use lawfit::{FittedLaw, InterpolatedLaw, LawDocument, LossModel, ParametricLaw};
pub use planner::{optimal_allocation, Allocation, Budgets, PlanResult, PlannerOptions, TrainingConfig};

/// Default δ used when none is given.
pub const DEFAULT_DELTA: f64 = 1e-8;

/// Default sequence length in tokens.
pub const DEFAULT_SEQ_LEN: f64 = 512.0;
