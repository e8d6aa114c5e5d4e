//! Marginal effect of doubling a budget on the calibrated noise-batch ratio.

use alloc::vec::Vec;

use super::{calibrate_nbr_with_tol, AccountingError, AccountingSetup, Batching, PrivacySpec};

/// A budget that can be doubled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BudgetAxis {
    /// ε.
    Privacy,
    /// Compute, varied through the expected batch size B at fixed T.
    Compute,
    /// Data budget N.
    Data,
}

impl BudgetAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            BudgetAxis::Privacy => "privacy",
            BudgetAxis::Compute => "compute",
            BudgetAxis::Data => "data",
        }
    }
}

/// Lattice definition. Axis values are `2^k` for integer `k` in the given
/// inclusive exponent ranges; the third budget is taken from `fixed_*`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VectorFieldSpec {
    pub x: BudgetAxis,
    pub y: BudgetAxis,
    pub x_exponents: (i32, i32),
    pub y_exponents: (i32, i32),
    pub epsilon: f64,
    pub batch: f64,
    pub data: f64,
    pub steps: u64,
    pub delta: f64,
    /// Relative σ̄ bisection width.
    pub rel_tol: f64,
}

impl VectorFieldSpec {
    /// Lattice point `(x, y)` applied on top of the fixed budgets.
    fn budgets_at(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let mut b = (self.epsilon, self.batch, self.data);
        for (axis, v) in [(self.x, x), (self.y, y)] {
            match axis {
                BudgetAxis::Privacy => b.0 = v,
                BudgetAxis::Compute => b.1 = v,
                BudgetAxis::Data => b.2 = v,
            }
        }
        b
    }
}

/// One arrow; components are `None` where the doubled budget is infeasible
/// (for example `B > N`).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FieldPoint {
    pub x: f64,
    pub y: f64,
    pub nbr: Option<f64>,
    pub dx: Option<f64>,
    pub dy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VectorField {
    pub x_axis: BudgetAxis,
    pub y_axis: BudgetAxis,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// Row-major over `(y, x)`.
    pub points: Vec<FieldPoint>,
}

impl VectorField {
    pub fn at(&self, xi: usize, yi: usize) -> &FieldPoint {
        &self.points[yi * self.x_values.len() + xi]
    }
}

fn exponents(range: (i32, i32)) -> Vec<f64> {
    (range.0..=range.1).map(|k| libm::ldexp(1.0, k)).collect()
}

/// Arrow components `σ̄(p) / σ̄(p with that budget doubled) - 1` on the lattice.
pub fn vector_field(spec: &VectorFieldSpec) -> Result<VectorField, AccountingError> {
    if spec.x == spec.y {
        return Err(AccountingError::InvalidParameter { name: "axes", reason: "must be distinct" });
    }
    if spec.x_exponents.0 > spec.x_exponents.1 || spec.y_exponents.0 > spec.y_exponents.1 {
        return Err(AccountingError::InvalidParameter { name: "exponents", reason: "empty range" });
    }
    let xs = exponents(spec.x_exponents);
    let ys = exponents(spec.y_exponents);
    // σ̄ at (x, y) with the budgets' doubled-exponent neighbours cached by index
    let nx = xs.len() + 1;
    let ny = ys.len() + 1;
    let mut cache: Vec<Option<Option<f64>>> = alloc::vec![None; nx * ny];
    let mut nbr_at = |xi: usize, yi: usize| -> Result<Option<f64>, AccountingError> {
        if let Some(v) = cache[yi * nx + xi] {
            return Ok(v);
        }
        let x = libm::ldexp(1.0, spec.x_exponents.0 + xi as i32);
        let y = libm::ldexp(1.0, spec.y_exponents.0 + yi as i32);
        let (eps, batch, data) = spec.budgets_at(x, y);
        let v = calibrated(eps, batch, data, spec)?;
        cache[yi * nx + xi] = Some(v);
        Ok(v)
    };

    let mut points = Vec::with_capacity(xs.len() * ys.len());
    for yi in 0..ys.len() {
        for xi in 0..xs.len() {
            let here = nbr_at(xi, yi)?;
            let right = nbr_at(xi + 1, yi)?;
            let up = nbr_at(xi, yi + 1)?;
            let ratio = |other: Option<f64>| match (here, other) {
                (Some(a), Some(b)) => Some(component(a, b)),
                _ => None,
            };
            points.push(FieldPoint { x: xs[xi], y: ys[yi], nbr: here, dx: ratio(right), dy: ratio(up) });
        }
    }
    Ok(VectorField { x_axis: spec.x, y_axis: spec.y, x_values: xs, y_values: ys, points })
}

/// Arrow length for σ̄ moving from `here` to `doubled`.
pub fn component(here: f64, doubled: f64) -> f64 {
    here / doubled - 1.0
}

fn calibrated(epsilon: f64, batch: f64, data: f64, spec: &VectorFieldSpec) -> Result<Option<f64>, AccountingError> {
    if batch > data {
        return Ok(None);
    }
    let privacy = PrivacySpec::new(epsilon, spec.delta)?;
    let setup = AccountingSetup::new(data as u64, batch, spec.steps, Batching::Poisson)?;
    match calibrate_nbr_with_tol(&privacy, &setup, spec.rel_tol) {
        Ok(c) => Ok(Some(c.nbr.value())),
        Err(AccountingError::Unattainable { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}
