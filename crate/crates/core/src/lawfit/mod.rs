//! Loss predictors over (model size M, iterations T, noise-batch ratio σ̄).
//!
//! Two families share the [`LossModel`] interface:
//!
//! * [`InterpolatedLaw`], piecewise-linear in `(ln M, ln T, ln σ̄)` over a
//!   cleaned grid, with a separate bilinear slice for non-private training.
//! * [`ParametricLaw`], the closed forms L1 and L2 fitted by robust
//!   regression ([`fit_parametric`]).

mod fit;
mod interp;
mod lbfgs;
mod parametric;

pub use fit::{fit_parametric, FitFilters, FitMetadata, FitObjective, FitOptions, FitRow};
pub use interp::InterpolatedLaw;
pub use parametric::{
    optimal_model_size, Coefficients, LawForm, NbrTransform, ParametricLaw, DEFAULT_EXAMPLES_PER_STEP,
    MODEL_SIZE_BRACKET,
};

use core::fmt;

/// Axes of the loss surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Axis {
    ModelSize,
    Iterations,
    NoiseBatchRatio,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::ModelSize => "model_params",
            Axis::Iterations => "iterations",
            Axis::NoiseBatchRatio => "noise_batch_ratio",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Box on which a law may be queried. `nbr` bounds the positive noise-batch
/// ratios; σ̄ = 0 is allowed separately when `nonprivate` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Domain {
    pub m: (f64, f64),
    pub t: (f64, f64),
    pub nbr: (f64, f64),
    pub nonprivate: bool,
}

impl Domain {
    pub fn check(&self, m: f64, t: f64, nbr: f64) -> Result<(), LawError> {
        check_axis(Axis::ModelSize, m, self.m)?;
        check_axis(Axis::Iterations, t, self.t)?;
        if nbr == 0.0 {
            if self.nonprivate {
                return Ok(());
            }
            return Err(LawError::NoNonPrivateSlice);
        }
        check_axis(Axis::NoiseBatchRatio, nbr, self.nbr)
    }

    pub fn contains(&self, m: f64, t: f64, nbr: f64) -> bool {
        self.check(m, t, nbr).is_ok()
    }

    fn validate(&self) -> Result<(), LawError> {
        for (axis, (lo, hi)) in [(Axis::ModelSize, self.m), (Axis::Iterations, self.t), (Axis::NoiseBatchRatio, self.nbr)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(LawError::InvalidDomain(axis));
            }
        }
        Ok(())
    }
}

fn check_axis(axis: Axis, value: f64, (lo, hi): (f64, f64)) -> Result<(), LawError> {
    if value >= lo && value <= hi {
        Ok(())
    } else {
        Err(LawError::OutOfDomain { axis, value, lo, hi })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LawError {
    #[error("{axis} = {value:e} outside the law's domain [{lo:e}, {hi:e}]")]
    OutOfDomain { axis: Axis, value: f64, lo: f64, hi: f64 },
    #[error("law has no non-private (noise_batch_ratio = 0) slice")]
    NoNonPrivateSlice,
    #[error("need at least 2 distinct positive values on the {0} axis")]
    TooFewPoints(Axis),
    #[error("invalid domain bounds on the {0} axis")]
    InvalidDomain(Axis),
    #[error("grid must be monotone or extrapolated, found {0}")]
    WrongState(&'static str),
    #[error("invalid coefficient {name}: {reason}")]
    InvalidCoefficient { name: &'static str, reason: &'static str },
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("only {found} rows survive the filters, need at least {needed}")]
    TooFewRows { found: usize, needed: usize },
    #[error("all {starts} fitting starts diverged")]
    FitDiverged { starts: usize },
}

/// Anything that predicts training loss at `(M, T, σ̄)`.
pub trait LossModel {
    fn query(&self, m: f64, t: f64, nbr: f64) -> Result<f64, LawError>;
    fn domain(&self) -> Domain;
}

/// A loss law of either family.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum FittedLaw {
    Interp(InterpolatedLaw),
    Parametric(ParametricLaw),
}

impl FittedLaw {
    pub fn kind(&self) -> &'static str {
        match self {
            FittedLaw::Interp(_) => "interp",
            FittedLaw::Parametric(_) => "parametric",
        }
    }
}

impl LossModel for FittedLaw {
    fn query(&self, m: f64, t: f64, nbr: f64) -> Result<f64, LawError> {
        match self {
            FittedLaw::Interp(l) => l.query(m, t, nbr),
            FittedLaw::Parametric(l) => l.query(m, t, nbr),
        }
    }

    fn domain(&self) -> Domain {
        match self {
            FittedLaw::Interp(l) => l.domain(),
            FittedLaw::Parametric(l) => l.domain(),
        }
    }
}

impl<L: LossModel + ?Sized> LossModel for &L {
    fn query(&self, m: f64, t: f64, nbr: f64) -> Result<f64, LawError> {
        (**self).query(m, t, nbr)
    }

    fn domain(&self) -> Domain {
        (**self).domain()
    }
}

/// Current version of the serialized law document.
pub const LAW_SCHEMA_VERSION: u32 = 1;

/// On-disk wrapper: the law plus a schema version.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LawDocument {
    pub schema_version: u32,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub law: FittedLaw,
}

impl LawDocument {
    pub fn new(law: FittedLaw) -> Self {
        Self { schema_version: LAW_SCHEMA_VERSION, law }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_names_the_axis() {
        let d = Domain { m: (4.5e6, 7.84e8), t: (1e3, 1e6), nbr: (1e-7, 1e-2), nonprivate: false };
        match d.check(1e6, 1e4, 1e-4) {
            Err(LawError::OutOfDomain { axis: Axis::ModelSize, lo, .. }) => assert_eq!(lo, 4.5e6),
            other => panic!("{other:?}"),
        }
        assert!(matches!(d.check(1e7, 1e7, 1e-4), Err(LawError::OutOfDomain { axis: Axis::Iterations, .. })));
        assert!(matches!(d.check(1e7, 1e4, 1.0), Err(LawError::OutOfDomain { axis: Axis::NoiseBatchRatio, .. })));
        assert_eq!(d.check(1e7, 1e4, 0.0), Err(LawError::NoNonPrivateSlice));
        assert!(d.contains(4.5e6, 1e3, 1e-2));
        let msg = alloc::format!("{}", d.check(1e6, 1e4, 1e-4).unwrap_err());
        assert!(msg.contains("model_params") && msg.contains("4.5e6"));
    }
}
