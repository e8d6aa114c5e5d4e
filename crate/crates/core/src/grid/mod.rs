//! Loss-measurement grids and the cleaning pipeline.
//!
//! A [`MeasurementGrid`] moves through four states:
//!
//! * `raw`: per-learning-rate loss series as loaded,
//! * `smoothed`: rolling average over `T`, then the pointwise minimum over
//!   learning rates, giving a dense `M × T × σ̄` tensor,
//! * `monotone`: isotonic along `T` (nonincreasing), then along `σ̄`
//!   (nondecreasing),
//! * `extrapolated`: extra `T` columns predicted by per-cell power laws.
//!
//! Each stage consumes the previous one and rejects grids in any other
//! state. The tensor is row-major with `σ̄` varying fastest.

mod isotonic;
mod powerlaw;
mod synth;

pub use isotonic::{isotonic_fit, rolling_average, Direction};
pub use powerlaw::{fit_power_law, PowerLawFit, MIN_POWER_LAW_POINTS};
pub use synth::synth_grid;

use alloc::vec::Vec;
use core::fmt;

use isotonic::{is_monotone, isotonic_in_place};

/// Rolling window used by [`MeasurementGrid::clean`] unless overridden.
pub const DEFAULT_WINDOW: usize = 10;

/// Default iteration range for the extrapolation fits.
pub const DEFAULT_FIT_RANGE: (f64, f64) = (16_000.0, 128_000.0);

/// No grid is extrapolated past this many iterations.
pub const MAX_ITERATIONS: u64 = 1 << 20;

/// One row of a measurement table.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Measurement {
    pub model_params: u64,
    pub iterations: u64,
    pub noise_batch_ratio: f64,
    pub learning_rate: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GridState {
    Raw,
    Smoothed,
    Monotone,
    Extrapolated,
}

impl GridState {
    pub fn as_str(self) -> &'static str {
        match self {
            GridState::Raw => "raw",
            GridState::Smoothed => "smoothed",
            GridState::Monotone => "monotone",
            GridState::Extrapolated => "extrapolated",
        }
    }
}

impl fmt::Display for GridState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How learning-rate layers are reduced to one value per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LrPolicy {
    #[default]
    Min,
}

/// Parameters of the stages a grid went through.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub window: Option<usize>,
    pub lr_policy: Option<LrPolicy>,
    pub fit_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Axes {
    pub m: Vec<u64>,
    pub t: Vec<u64>,
    pub nbr: Vec<f64>,
}

impl Axes {
    pub fn len(&self) -> usize {
        self.m.len() * self.t.len() * self.nbr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i_m: usize, i_t: usize, i_n: usize) -> usize {
        (i_m * self.t.len() + i_t) * self.nbr.len() + i_n
    }

    fn validate(&self) -> Result<(), GridError> {
        let increasing_u = |v: &[u64]| v.first().is_some_and(|&x| x > 0) && v.windows(2).all(|w| w[0] < w[1]);
        let nbr_ok = self.nbr.first().is_some_and(|&x| x >= 0.0)
            && self.nbr.iter().all(|v| v.is_finite())
            && self.nbr.windows(2).all(|w| w[0] < w[1]);
        if !increasing_u(&self.m) || !increasing_u(&self.t) || !nbr_ok {
            return Err(GridError::InvalidAxes);
        }
        Ok(())
    }
}

/// One learning-rate series of a raw grid: loss over the `T` axis for a
/// fixed `(M, σ̄, learning rate)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LrLayer {
    pub m: u64,
    pub nbr: f64,
    pub learning_rate: f64,
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: &'static str },
    #[error("row {row} duplicates the key of row {first}")]
    DuplicateKey { first: usize, row: usize },
    /// `learning_rate` is `None` when the `(M, σ̄)` pair has no series at all.
    #[error("incomplete grid: no measurement for model_params={m}, noise_batch_ratio={nbr}, iterations={t} (learning_rate {learning_rate:?})")]
    IncompleteGrid { m: u64, nbr: f64, learning_rate: Option<f64>, t: u64 },
    #[error("empty measurement table")]
    Empty,
    #[error("grid is {found}, this step needs {expected}")]
    WrongState { expected: GridState, found: GridState },
    #[error("axes must be nonempty, strictly increasing, positive (noise_batch_ratio nonnegative)")]
    InvalidAxes,
    #[error("loss tensor has {found} values, axes need {expected}")]
    ShapeMismatch { found: usize, expected: usize },
    #[error("loss values must be finite and positive")]
    InvalidLoss,
    #[error("stored grid violates the monotonicity of its state")]
    NotMonotone,
    #[error("rolling window must be at least 1")]
    InvalidWindow,
    #[error("fit range needs at least {needed} points, found {found}")]
    TooFewFitPoints { found: usize, needed: usize },
    #[error("series values must be finite with positive iterations")]
    InvalidSeries,
    #[error("power-law fit diverged (best so far: {best:?})")]
    FitDiverged { best: Option<PowerLawFit> },
    #[error("target iterations {t} beyond the extrapolation cap {cap}")]
    BeyondCap { t: u64, cap: u64 },
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
}

/// Dense loss grid over (model size, iterations, noise-batch ratio).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "GridRepr", into = "GridRepr"))]
pub struct MeasurementGrid {
    axes: Axes,
    /// Empty while raw.
    loss: Vec<f64>,
    /// Only populated while raw.
    layers: Vec<LrLayer>,
    state: GridState,
    provenance: Provenance,
}

/// Result of [`MeasurementGrid::extrapolate`]: the grid and the power law
/// fitted to each `(M, σ̄)` cell, ordered like the grid (σ̄ fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    pub grid: MeasurementGrid,
    pub fits: Vec<PowerLawFit>,
}

impl MeasurementGrid {
    /// Assemble a raw grid from table rows. Rows may come in any order;
    /// errors name 1-based row positions.
    ///
    /// Every `(M, σ̄, learning rate)` series must cover the full `T` axis
    /// (the union of all iterations in the table).
    pub fn load(rows: &[Measurement]) -> Result<Self, GridError> {
        if rows.is_empty() {
            return Err(GridError::Empty);
        }
        for (i, r) in rows.iter().enumerate() {
            let row = i + 1;
            let reason = if r.model_params == 0 {
                "model_params must be positive"
            } else if r.iterations == 0 {
                "iterations must be positive"
            } else if !r.noise_batch_ratio.is_finite() || r.noise_batch_ratio < 0.0 {
                "noise_batch_ratio must be finite and nonnegative"
            } else if !r.learning_rate.is_finite() || !(r.learning_rate > 0.0) {
                "learning_rate must be finite and positive"
            } else if !r.loss.is_finite() {
                "loss must be finite"
            } else if !(r.loss > 0.0) {
                "loss must be positive"
            } else {
                continue;
            };
            return Err(GridError::InvalidRow { row, reason });
        }

        let mut order: Vec<usize> = (0..rows.len()).collect();
        let key = |r: &Measurement| (r.model_params, r.noise_batch_ratio, r.learning_rate, r.iterations);
        order.sort_by(|&a, &b| {
            let (ka, kb) = (key(&rows[a]), key(&rows[b]));
            ka.0.cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
                .then(ka.3.cmp(&kb.3))
                .then(a.cmp(&b))
        });
        for w in order.windows(2) {
            if key(&rows[w[0]]) == key(&rows[w[1]]) {
                return Err(GridError::DuplicateKey { first: w[0] + 1, row: w[1] + 1 });
            }
        }

        let mut axes = Axes {
            m: rows.iter().map(|r| r.model_params).collect(),
            t: rows.iter().map(|r| r.iterations).collect(),
            nbr: rows.iter().map(|r| r.noise_batch_ratio).collect(),
        };
        axes.m.sort_unstable();
        axes.m.dedup();
        axes.t.sort_unstable();
        axes.t.dedup();
        axes.nbr.sort_by(f64::total_cmp);
        axes.nbr.dedup();

        // rows sorted by (m, nbr, lr, t): each series is a contiguous run
        let mut layers: Vec<LrLayer> = Vec::new();
        let mut run = 0;
        while run < order.len() {
            let head = rows[order[run]];
            let mut loss = Vec::with_capacity(axes.t.len());
            let mut j = run;
            while j < order.len() {
                let r = rows[order[j]];
                if (r.model_params, r.noise_batch_ratio, r.learning_rate) != (head.model_params, head.noise_batch_ratio, head.learning_rate) {
                    break;
                }
                loss.push((r.iterations, r.loss));
                j += 1;
            }
            for (k, &t) in axes.t.iter().enumerate() {
                if loss.get(k).is_none_or(|&(tt, _)| tt != t) {
                    return Err(GridError::IncompleteGrid {
                        m: head.model_params,
                        nbr: head.noise_batch_ratio,
                        learning_rate: Some(head.learning_rate),
                        t,
                    });
                }
            }
            layers.push(LrLayer {
                m: head.model_params,
                nbr: head.noise_batch_ratio,
                learning_rate: head.learning_rate,
                loss: loss.into_iter().map(|(_, l)| l).collect(),
            });
            run = j;
        }
        // every (M, σ̄) pair needs at least one series
        for &m in &axes.m {
            for &nbr in &axes.nbr {
                if !layers.iter().any(|l| l.m == m && l.nbr == nbr) {
                    return Err(GridError::IncompleteGrid { m, nbr, learning_rate: None, t: axes.t[0] });
                }
            }
        }
        Ok(Self { axes, loss: Vec::new(), layers, state: GridState::Raw, provenance: Provenance::default() })
    }

    /// Build a grid from a dense tensor (σ̄ fastest), validating shape,
    /// values and, for `monotone`/`extrapolated`, both monotonicities.
    pub fn from_tensor(axes: Axes, loss: Vec<f64>, state: GridState, provenance: Provenance) -> Result<Self, GridError> {
        if state == GridState::Raw {
            return Err(GridError::InvalidInput("raw grids are built from measurements"));
        }
        axes.validate()?;
        if loss.len() != axes.len() {
            return Err(GridError::ShapeMismatch { found: loss.len(), expected: axes.len() });
        }
        if loss.iter().any(|v| !v.is_finite() || !(*v > 0.0)) {
            return Err(GridError::InvalidLoss);
        }
        let grid = Self { axes, loss, layers: Vec::new(), state, provenance };
        if state >= GridState::Monotone && !grid.is_monotone() {
            return Err(GridError::NotMonotone);
        }
        Ok(grid)
    }

    pub fn axes(&self) -> &Axes {
        &self.axes
    }

    pub fn state(&self) -> GridState {
        self.state
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Dense tensor; empty while raw.
    pub fn loss(&self) -> &[f64] {
        &self.loss
    }

    /// Learning-rate series; empty once smoothed.
    pub fn layers(&self) -> &[LrLayer] {
        &self.layers
    }

    pub fn at(&self, i_m: usize, i_t: usize, i_n: usize) -> f64 {
        self.loss[self.axes.index(i_m, i_t, i_n)]
    }

    /// Table rows of a raw grid, ordered by (M, σ̄, learning rate, T).
    pub fn measurements(&self) -> Vec<Measurement> {
        let mut out = Vec::new();
        for l in &self.layers {
            for (&t, &loss) in self.axes.t.iter().zip(&l.loss) {
                out.push(Measurement {
                    model_params: l.m,
                    iterations: t,
                    noise_batch_ratio: l.nbr,
                    learning_rate: l.learning_rate,
                    loss,
                });
            }
        }
        out
    }

    fn expect_state(&self, expected: GridState) -> Result<(), GridError> {
        if self.state == expected {
            Ok(())
        } else {
            Err(GridError::WrongState { expected, found: self.state })
        }
    }

    /// Rolling average of every learning-rate series, then the pointwise
    /// minimum over learning rates.
    pub fn smooth(&self, window: usize) -> Result<Self, GridError> {
        self.expect_state(GridState::Raw)?;
        if window == 0 {
            return Err(GridError::InvalidWindow);
        }
        let mut loss = alloc::vec![f64::INFINITY; self.axes.len()];
        for layer in &self.layers {
            let i_m = self.axes.m.binary_search(&layer.m).expect("layer on axis");
            let i_n = self.axes.nbr.binary_search_by(|v| v.total_cmp(&layer.nbr)).expect("layer on axis");
            for (i_t, v) in rolling_average(&layer.loss, window).into_iter().enumerate() {
                let cell = &mut loss[self.axes.index(i_m, i_t, i_n)];
                *cell = cell.min(v);
            }
        }
        Ok(Self {
            axes: self.axes.clone(),
            loss,
            layers: Vec::new(),
            state: GridState::Smoothed,
            provenance: Provenance { window: Some(window), lr_policy: Some(LrPolicy::Min), fit_range: None },
        })
    }

    /// Isotonic regression along `T` (nonincreasing) for every `(M, σ̄)`,
    /// then along `σ̄` (nondecreasing) for every `(M, T)`.
    ///
    /// The second pass keeps the first pass's order: PAVA is monotone in its
    /// input, so columns ordered along `T` stay ordered.
    pub fn make_monotone(&self) -> Result<Self, GridError> {
        self.expect_state(GridState::Smoothed)?;
        let mut out = self.clone();
        out.project_monotone();
        out.state = GridState::Monotone;
        Ok(out)
    }

    fn project_monotone(&mut self) {
        let (nm, nt, nn) = (self.axes.m.len(), self.axes.t.len(), self.axes.nbr.len());
        let mut scratch = Vec::with_capacity(nt.max(nn));
        for i_m in 0..nm {
            for i_n in 0..nn {
                scratch.clear();
                scratch.extend((0..nt).map(|i_t| self.at(i_m, i_t, i_n)));
                isotonic_in_place(&mut scratch, Direction::Nonincreasing);
                for (i_t, &v) in scratch.iter().enumerate() {
                    let k = self.axes.index(i_m, i_t, i_n);
                    self.loss[k] = v;
                }
            }
            for i_t in 0..nt {
                let k = self.axes.index(i_m, i_t, 0);
                isotonic_in_place(&mut self.loss[k..k + nn], Direction::Nondecreasing);
            }
        }
    }

    /// `smooth(window)` followed by `make_monotone()`.
    pub fn clean(&self, window: usize) -> Result<Self, GridError> {
        self.smooth(window)?.make_monotone()
    }

    /// Nonincreasing along `T` and nondecreasing along `σ̄` everywhere.
    pub fn is_monotone(&self) -> bool {
        let (nm, nt, nn) = (self.axes.m.len(), self.axes.t.len(), self.axes.nbr.len());
        if self.loss.len() != self.axes.len() {
            return false;
        }
        let mut col = Vec::with_capacity(nt);
        for i_m in 0..nm {
            for i_n in 0..nn {
                col.clear();
                col.extend((0..nt).map(|i_t| self.at(i_m, i_t, i_n)));
                if !is_monotone(&col, Direction::Nonincreasing) {
                    return false;
                }
            }
            for i_t in 0..nt {
                let k = self.axes.index(i_m, i_t, 0);
                if !is_monotone(&self.loss[k..k + nn], Direction::Nondecreasing) {
                    return false;
                }
            }
        }
        true
    }

    /// Extend the `T` axis with the targets beyond its current maximum,
    /// predicting each `(M, σ̄)` cell from a power law fitted over
    /// `fit_range`.
    ///
    /// Targets at or below the current maximum are ignored (existing values
    /// are kept as they are), and targets past [`MAX_ITERATIONS`] are
    /// rejected. Each new column is made nondecreasing in `σ̄` and capped by
    /// the column before it, which keeps both monotonicities.
    pub fn extrapolate(&self, targets: &[u64], fit_range: (f64, f64)) -> Result<Extrapolation, GridError> {
        self.expect_state(GridState::Monotone)?;
        if !(fit_range.0 <= fit_range.1) {
            return Err(GridError::InvalidInput("fit range must be increasing"));
        }
        if let Some(&t) = targets.iter().find(|&&t| t > MAX_ITERATIONS) {
            return Err(GridError::BeyondCap { t, cap: MAX_ITERATIONS });
        }
        let t_max = *self.axes.t.last().expect("validated axes");
        let mut extra: Vec<u64> = targets.iter().copied().filter(|&t| t > t_max).collect();
        extra.sort_unstable();
        extra.dedup();

        let (nm, nt, nn) = (self.axes.m.len(), self.axes.t.len(), self.axes.nbr.len());
        let mut fits = Vec::with_capacity(nm * nn);
        let mut series = Vec::with_capacity(nt);
        for i_m in 0..nm {
            for i_n in 0..nn {
                series.clear();
                series.extend(self.axes.t.iter().enumerate().map(|(i_t, &t)| (t as f64, self.at(i_m, i_t, i_n))));
                fits.push(fit_power_law(&series, fit_range)?);
            }
        }

        let mut axes = self.axes.clone();
        axes.t.extend_from_slice(&extra);
        let nt2 = axes.t.len();
        let mut loss = alloc::vec![0.0; nm * nt2 * nn];
        for i_m in 0..nm {
            for i_t in 0..nt {
                let (src, dst) = (self.axes.index(i_m, i_t, 0), axes.index(i_m, i_t, 0));
                loss[dst..dst + nn].copy_from_slice(&self.loss[src..src + nn]);
            }
            for (k, &t) in extra.iter().enumerate() {
                let i_t = nt + k;
                let dst = axes.index(i_m, i_t, 0);
                let prev = axes.index(i_m, i_t - 1, 0);
                for i_n in 0..nn {
                    loss[dst + i_n] = fits[i_m * nn + i_n].predict(t as f64);
                }
                isotonic_in_place(&mut loss[dst..dst + nn], Direction::Nondecreasing);
                for i_n in 0..nn {
                    loss[dst + i_n] = loss[dst + i_n].min(loss[prev + i_n]);
                }
            }
        }
        let provenance = Provenance { fit_range: Some(fit_range), ..self.provenance };
        let grid = Self::from_tensor(axes, loss, GridState::Extrapolated, provenance)?;
        Ok(Extrapolation { grid, fits })
    }
}

/// Serialized layout of [`MeasurementGrid`].
#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct GridRepr {
    axes: Axes,
    loss: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    layers: Vec<LrLayer>,
    state: GridState,
    provenance: Provenance,
}

#[cfg(feature = "serde")]
impl TryFrom<GridRepr> for MeasurementGrid {
    type Error = GridError;

    fn try_from(r: GridRepr) -> Result<Self, GridError> {
        if r.state != GridState::Raw {
            if !r.layers.is_empty() {
                return Err(GridError::InvalidInput("only raw grids carry learning-rate layers"));
            }
            return Self::from_tensor(r.axes, r.loss, r.state, r.provenance);
        }
        if !r.loss.is_empty() {
            return Err(GridError::InvalidInput("raw grids store their values in layers"));
        }
        let rows: Vec<Measurement> = r
            .layers
            .iter()
            .flat_map(|l| {
                r.axes.t.iter().zip(&l.loss).map(move |(&t, &loss)| Measurement {
                    model_params: l.m,
                    iterations: t,
                    noise_batch_ratio: l.nbr,
                    learning_rate: l.learning_rate,
                    loss,
                })
            })
            .collect();
        if r.layers.iter().any(|l| l.loss.len() != r.axes.t.len()) {
            return Err(GridError::InvalidInput("every layer needs one loss per iteration"));
        }
        let grid = Self::load(&rows)?;
        if grid.axes != r.axes {
            return Err(GridError::InvalidAxes);
        }
        Ok(grid)
    }
}

#[cfg(feature = "serde")]
impl From<MeasurementGrid> for GridRepr {
    fn from(g: MeasurementGrid) -> Self {
        Self { axes: g.axes, loss: g.loss, layers: g.layers, state: g.state, provenance: g.provenance }
    }
}
