use alloc::vec::Vec;

use super::{Axis, Domain, LawError, LossModel};
use crate::grid::{GridState, MeasurementGrid, Provenance};

/// Piecewise-linear loss surface in `(ln M, ln T, ln σ̄)`.
///
/// Positive noise-batch ratios are interpolated trilinearly; a σ̄ = 0 layer,
/// when the grid has one, is kept as a separate `(ln M, ln T)` slice. Each
/// one-dimensional step is `(1 - w)·a + w·b`, which returns node values
/// exactly.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "InterpRepr", into = "InterpRepr"))]
pub struct InterpolatedLaw {
    m: Vec<f64>,
    t: Vec<f64>,
    nbr: Vec<f64>,
    ln_m: Vec<f64>,
    ln_t: Vec<f64>,
    ln_nbr: Vec<f64>,
    /// `m × t × nbr`, σ̄ fastest.
    loss: Vec<f64>,
    /// `m × t`, T fastest.
    nonprivate: Option<Vec<f64>>,
    provenance: Provenance,
}

impl InterpolatedLaw {
    /// Interpolator over a monotone or extrapolated grid.
    pub fn from_grid(grid: &MeasurementGrid) -> Result<Self, LawError> {
        if grid.state() < GridState::Monotone {
            return Err(LawError::WrongState(grid.state().as_str()));
        }
        let axes = grid.axes();
        let has_zero = axes.nbr.first() == Some(&0.0);
        let first = usize::from(has_zero);
        let nn = axes.nbr.len();
        let mut loss = Vec::with_capacity(axes.m.len() * axes.t.len() * (nn - first));
        let mut zero = Vec::new();
        for i_m in 0..axes.m.len() {
            for i_t in 0..axes.t.len() {
                let k = axes.index(i_m, i_t, 0);
                loss.extend_from_slice(&grid.loss()[k + first..k + nn]);
                if has_zero {
                    zero.push(grid.loss()[k]);
                }
            }
        }
        Self::new(
            axes.m.iter().map(|&v| v as f64).collect(),
            axes.t.iter().map(|&v| v as f64).collect(),
            axes.nbr[first..].to_vec(),
            loss,
            has_zero.then_some(zero),
            *grid.provenance(),
        )
    }

    fn new(
        m: Vec<f64>,
        t: Vec<f64>,
        nbr: Vec<f64>,
        loss: Vec<f64>,
        nonprivate: Option<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self, LawError> {
        for (axis, v) in [(Axis::ModelSize, &m), (Axis::Iterations, &t), (Axis::NoiseBatchRatio, &nbr)] {
            if v.len() < 2 {
                return Err(LawError::TooFewPoints(axis));
            }
            if !(v[0] > 0.0) || v.windows(2).any(|w| !(w[0] < w[1])) || !v[v.len() - 1].is_finite() {
                return Err(LawError::InvalidDomain(axis));
            }
        }
        if loss.len() != m.len() * t.len() * nbr.len() {
            return Err(LawError::InvalidInput("loss tensor does not match the axes"));
        }
        if nonprivate.as_ref().is_some_and(|z| z.len() != m.len() * t.len()) {
            return Err(LawError::InvalidInput("non-private slice does not match the axes"));
        }
        let all_ok = loss.iter().chain(nonprivate.iter().flatten()).all(|v| v.is_finite() && *v > 0.0);
        if !all_ok {
            return Err(LawError::InvalidInput("losses must be finite and positive"));
        }
        let ln = |v: &[f64]| v.iter().map(|&x| libm::log(x)).collect::<Vec<_>>();
        Ok(Self {
            ln_m: ln(&m),
            ln_t: ln(&t),
            ln_nbr: ln(&nbr),
            m,
            t,
            nbr,
            loss,
            nonprivate,
            provenance,
        })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn has_nonprivate_slice(&self) -> bool {
        self.nonprivate.is_some()
    }

    fn value(&self, i_m: usize, i_t: usize, i_n: usize) -> f64 {
        self.loss[(i_m * self.t.len() + i_t) * self.nbr.len() + i_n]
    }
}

/// Lower cell index and weight of `x` on `nodes`; `x` must be inside.
/// Nodes resolve to weight 0 on their own cell, the last node to weight 1.
fn locate(nodes: &[f64], ln_nodes: &[f64], x: f64) -> (usize, f64) {
    let last = nodes.len() - 1;
    match nodes.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) if i == last => (last - 1, 1.0),
        Ok(i) => (i, 0.0),
        Err(i) => {
            let lo = i - 1;
            let w = (libm::log(x) - ln_nodes[lo]) / (ln_nodes[lo + 1] - ln_nodes[lo]);
            (lo, w)
        }
    }
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    (1.0 - w) * a + w * b
}

impl LossModel for InterpolatedLaw {
    fn query(&self, m: f64, t: f64, nbr: f64) -> Result<f64, LawError> {
        self.domain().check(m, t, nbr)?;
        let (im, wm) = locate(&self.m, &self.ln_m, m);
        let (it, wt) = locate(&self.t, &self.ln_t, t);
        if nbr == 0.0 {
            let z = self.nonprivate.as_ref().ok_or(LawError::NoNonPrivateSlice)?;
            let nt = self.t.len();
            let at = |i: usize, j: usize| z[i * nt + j];
            let lo = lerp(at(im, it), at(im, it + 1), wt);
            let hi = lerp(at(im + 1, it), at(im + 1, it + 1), wt);
            return Ok(lerp(lo, hi, wm));
        }
        let (is, ws) = locate(&self.nbr, &self.ln_nbr, nbr);
        let plane = |i: usize| {
            let a = lerp(self.value(i, it, is), self.value(i, it, is + 1), ws);
            let b = lerp(self.value(i, it + 1, is), self.value(i, it + 1, is + 1), ws);
            lerp(a, b, wt)
        };
        Ok(lerp(plane(im), plane(im + 1), wm))
    }

    fn domain(&self) -> Domain {
        let span = |v: &[f64]| (v[0], v[v.len() - 1]);
        Domain { m: span(&self.m), t: span(&self.t), nbr: span(&self.nbr), nonprivate: self.nonprivate.is_some() }
    }
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct InterpAxes {
    m: Vec<f64>,
    t: Vec<f64>,
    nbr: Vec<f64>,
}

/// Serialized layout; `domain` is derived from the axes and checked on
/// the way in.
#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct InterpRepr {
    axes: InterpAxes,
    loss: Vec<f64>,
    nonprivate_loss: Option<Vec<f64>>,
    domain: Domain,
    provenance: Provenance,
}

#[cfg(feature = "serde")]
impl TryFrom<InterpRepr> for InterpolatedLaw {
    type Error = LawError;

    fn try_from(r: InterpRepr) -> Result<Self, LawError> {
        let law = Self::new(r.axes.m, r.axes.t, r.axes.nbr, r.loss, r.nonprivate_loss, r.provenance)?;
        if law.domain() != r.domain {
            return Err(LawError::InvalidInput("domain does not match the axes"));
        }
        Ok(law)
    }
}

#[cfg(feature = "serde")]
impl From<InterpolatedLaw> for InterpRepr {
    fn from(l: InterpolatedLaw) -> Self {
        let domain = l.domain();
        Self {
            axes: InterpAxes { m: l.m, t: l.t, nbr: l.nbr },
            loss: l.loss,
            nonprivate_loss: l.nonprivate,
            domain,
            provenance: l.provenance,
        }
    }
}
