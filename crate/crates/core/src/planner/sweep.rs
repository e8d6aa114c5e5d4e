use alloc::vec::Vec;

use super::{optimal_allocation, AllocationBand, Budgets, PlanError, PlanResult, PlannerOptions};
use crate::accounting::PrivacySpec;
use crate::lawfit::LossModel;

/// Budget varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SweepAxis {
    Compute,
    Privacy,
    Data,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Compute => "compute",
            SweepAxis::Privacy => "privacy",
            SweepAxis::Data => "data",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub x: f64,
    /// Optimum when spending exactly this budget; `None` if nothing is
    /// feasible there.
    pub at_budget: Option<PlanResult>,
    pub band: Option<AllocationBand>,
    /// Best over this and every smaller budget on the sweep, since a budget
    /// is a cap that may be left partly unused.
    pub best: Option<PlanResult>,
    /// Loss of `best`.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepSeries {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

impl SweepSeries {
    /// `(x, S·B·T/M)` of the optimum at each budget that has one.
    pub fn token_model_ratios(&self) -> Vec<(f64, f64)> {
        self.points.iter().filter_map(|p| p.at_budget.map(|r| (p.x, r.token_model_ratio))).collect()
    }
}

/// Optimal allocation at each value of `axis`, other budgets from `base`.
///
/// `values` must be strictly increasing. Data values are rounded to whole
/// individuals; privacy values replace ε and keep the base δ.
pub fn sweep<L: LossModel>(
    axis: SweepAxis,
    base: &Budgets,
    values: &[f64],
    law: &L,
    options: &PlannerOptions,
) -> Result<SweepSeries, PlanError> {
    if values.is_empty() || values.windows(2).any(|w| !(w[0] < w[1])) || !values.iter().all(|v| v.is_finite()) {
        return Err(PlanError::InvalidInput { name: "values", reason: "must be finite and strictly increasing" });
    }
    let mut points = Vec::with_capacity(values.len());
    let mut running: Option<PlanResult> = None;
    for &x in values {
        let mut b = *base;
        match axis {
            SweepAxis::Compute => b.compute = x,
            SweepAxis::Privacy => {
                let delta = base.privacy.ok_or(PlanError::InvalidInput {
                    name: "privacy",
                    reason: "a privacy sweep needs a base delta",
                })?;
                b.privacy = Some(PrivacySpec::new(x, delta.delta())?);
            }
            SweepAxis::Data => {
                if !(x >= 1.0) {
                    return Err(PlanError::InvalidInput { name: "data", reason: "must be at least 1" });
                }
                b.data = libm::round(x) as u64;
            }
        }
        let (at_budget, band) = match optimal_allocation(&b, law, options) {
            Ok(a) => (Some(a.best), Some(a.band)),
            Err(PlanError::NoFeasibleConfig { .. }) => (None, None),
            Err(e) => return Err(e),
        };
        if let Some(r) = at_budget {
            let better = running.is_none_or(|cur| r.predicted_loss < cur.predicted_loss);
            if better {
                running = Some(r);
            }
        }
        points.push(SweepPoint { x, at_budget, band, best: running, loss: running.and_then(|r| r.predicted_loss) });
    }
    Ok(SweepSeries { axis, points })
}

/// Smallest `x` whose loss is within `(1 + tolerance)` of the series
/// minimum; `None` if no point has a loss.
pub fn critical_compute(series: &SweepSeries, tolerance: f64) -> Result<Option<f64>, PlanError> {
    if !(tolerance >= 0.0) || !tolerance.is_finite() {
        return Err(PlanError::InvalidInput { name: "tolerance", reason: "must be finite and nonnegative" });
    }
    let losses = series.points.iter().filter_map(|p| p.loss.map(|l| (p.x, l)));
    let Some(min) = losses.clone().map(|(_, l)| l).reduce(f64::min) else {
        return Ok(None);
    };
    Ok(losses.clone().find(|&(_, l)| l <= (1.0 + tolerance) * min).map(|(x, _)| x))
}
