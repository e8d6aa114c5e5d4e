//! Robust multi-start fitting of the parametric laws.
//!
//! Coefficients are optimized in log space (`ln E`, `ln A`, `ln α`, ...)
//! with `M`, `N` and, for L1, `σ̄` divided by their geometric means so the
//! scaled amplitudes are O(1). `α₂` is the only signed parameter and stays
//! linear.

use alloc::vec::Vec;

use super::lbfgs::{self, LbfgsOptions};
use super::parametric::DEFAULT_EXAMPLES_PER_STEP;
use super::{Coefficients, Domain, LawError, LawForm, NbrTransform, ParametricLaw};
use crate::math::CompensatedSum;

/// One measurement used for fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitRow {
    pub m: f64,
    pub t: f64,
    pub nbr: f64,
    pub loss: f64,
}

/// Rows are kept when `t > min_iterations`, `nbr > min_nbr` and
/// `loss <= max_loss`; `None` disables a filter.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitFilters {
    pub min_iterations: Option<f64>,
    pub min_nbr: Option<f64>,
    pub max_loss: Option<f64>,
}

impl Default for FitFilters {
    fn default() -> Self {
        Self { min_iterations: Some(1e5), min_nbr: Some(5e-7), max_loss: Some(8.0) }
    }
}

impl FitFilters {
    pub const NONE: Self = Self { min_iterations: None, min_nbr: None, max_loss: None };

    pub fn keeps(&self, row: &FitRow) -> bool {
        self.min_iterations.is_none_or(|v| row.t > v)
            && self.min_nbr.is_none_or(|v| row.nbr > v)
            && self.max_loss.is_none_or(|v| row.loss <= v)
    }
}

/// Residual the Huber loss is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FitObjective {
    /// `predicted - observed`
    #[default]
    RawLoss,
    /// `ln predicted - ln observed`
    LogLoss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub form: LawForm,
    pub huber_delta: f64,
    pub objective: FitObjective,
    pub filters: FitFilters,
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub transform: NbrTransform,
    pub examples_per_step: f64,
    /// Domain attached to the fitted law; the span of the surviving rows
    /// when `None`.
    pub domain: Option<Domain>,
}

impl FitOptions {
    pub fn new(form: LawForm) -> Self {
        Self {
            form,
            huber_delta: 1e-3,
            objective: FitObjective::RawLoss,
            filters: FitFilters::default(),
            starts: 32,
            seed: 0,
            max_iterations: 1500,
            transform: NbrTransform::default(),
            examples_per_step: DEFAULT_EXAMPLES_PER_STEP,
            domain: None,
        }
    }
}

/// How a parametric law was obtained.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitMetadata {
    pub huber_delta: f64,
    pub objective: FitObjective,
    pub filters: FitFilters,
    /// Mean Huber loss at the chosen coefficients.
    pub final_loss: f64,
    pub chosen_start: usize,
    pub starts: usize,
    pub rows_used: usize,
}

/// Fewest rows (after filtering) a fit accepts.
pub const MIN_FIT_ROWS: usize = 10;

/// Per-row quantities that do not depend on the coefficients.
struct Prepared {
    x_m: f64,
    x_n: f64,
    /// `ln(σ̄ / σ̄_g)` for L1, `ln s(σ̄)` for L2; `None` when σ̄ = 0.
    x_s: Option<f64>,
    y: f64,
    ln_y: f64,
    weight: f64,
}

struct Problem {
    form: LawForm,
    rows: Vec<Prepared>,
    total_weight: f64,
    delta: f64,
    objective: FitObjective,
}

const E: usize = 0;
const A: usize = 1;
const ALPHA: usize = 2;
const B: usize = 3;
const BETA: usize = 4;
const C: usize = 5;
const GAMMA: usize = 6;
const ALPHA2: usize = 7;

impl Problem {
    fn dim(&self) -> usize {
        match self.form {
            LawForm::L1 => 7,
            LawForm::L2 => 8,
        }
    }

    /// Mean Huber loss and its gradient in the scaled log parameters.
    fn eval(&self, p: &[f64], grad: &mut [f64]) -> f64 {
        let (e, alpha, beta, gamma) = (libm::exp(p[E]), libm::exp(p[ALPHA]), libm::exp(p[BETA]), libm::exp(p[GAMMA]));
        let alpha2 = if self.form == LawForm::L2 { p[ALPHA2] } else { 0.0 };
        let mut f = CompensatedSum::default();
        let mut g = [CompensatedSum::default(); 8];
        let mut d = [0.0; 8];
        for r in &self.rows {
            let ta = libm::exp(p[A] - alpha * r.x_m);
            let tb = libm::exp(p[B] - beta * r.x_n);
            let tc = match r.x_s {
                Some(xs) => libm::exp(p[C] + gamma * xs - alpha2 * r.x_m),
                None => 0.0,
            };
            let pred = e + ta + tb + tc;
            let (resid, dr) = match self.objective {
                FitObjective::RawLoss => (pred - r.y, 1.0),
                FitObjective::LogLoss => (libm::log(pred) - r.ln_y, 1.0 / pred),
            };
            let (h, dh) = huber(resid, self.delta);
            f.add(r.weight * h);
            let w = r.weight * dh * dr;
            d[E] = e;
            d[A] = ta;
            d[ALPHA] = -ta * r.x_m * alpha;
            d[B] = tb;
            d[BETA] = -tb * r.x_n * beta;
            d[C] = tc;
            d[GAMMA] = tc * r.x_s.unwrap_or(0.0) * gamma;
            d[ALPHA2] = -tc * r.x_m;
            for (acc, di) in g.iter_mut().zip(&d).take(self.dim()) {
                acc.add(w * di);
            }
        }
        for (gi, acc) in grad.iter_mut().zip(&g) {
            *gi = acc.value() / self.total_weight;
        }
        f.value() / self.total_weight
    }
}

fn huber(r: f64, delta: f64) -> (f64, f64) {
    let a = libm::fabs(r);
    if a <= delta {
        (0.5 * r * r, r)
    } else {
        (delta * (a - 0.5 * delta), if r > 0.0 { delta } else { -delta })
    }
}

/// `k`-th element of the Halton sequence in `base`.
fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

const HALTON_BASES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn log_uniform(u: f64, lo: f64, hi: f64) -> f64 {
    libm::log(lo) + u * (libm::log(hi) - libm::log(lo))
}

/// Coefficients with `M`, `N`, `σ̄` scaled by their geometric means.
struct Scales {
    ln_m: f64,
    ln_n: f64,
    ln_s: f64,
}

fn geometric_mean_log(values: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut num = CompensatedSum::default();
    let mut den = CompensatedSum::default();
    for (v, w) in values {
        num.add(w * libm::log(v));
        den.add(w);
    }
    num.value() / den.value()
}

/// Fit `options.form` to `rows` by minimizing the mean Huber loss over
/// quasi-random starts.
///
/// Identical rows are merged into weights before fitting, so the result does
/// not depend on row order and duplicating the data leaves it unchanged.
pub fn fit_parametric(rows: &[FitRow], options: &FitOptions) -> Result<ParametricLaw, LawError> {
    if !(options.huber_delta > 0.0) || !options.huber_delta.is_finite() {
        return Err(LawError::InvalidInput("huber delta must be positive"));
    }
    if options.starts == 0 {
        return Err(LawError::InvalidInput("need at least one start"));
    }
    for r in rows {
        let ok = r.m > 0.0 && r.t > 0.0 && r.nbr >= 0.0 && r.loss > 0.0;
        if !ok || !(r.m.is_finite() && r.t.is_finite() && r.nbr.is_finite() && r.loss.is_finite()) {
            return Err(LawError::InvalidInput("rows need positive finite M, T, loss and nonnegative σ̄"));
        }
    }
    let mut kept: Vec<FitRow> = rows.iter().copied().filter(|r| options.filters.keeps(r)).collect();
    kept.sort_by(|a, b| {
        a.m.total_cmp(&b.m)
            .then(a.t.total_cmp(&b.t))
            .then(a.nbr.total_cmp(&b.nbr))
            .then(a.loss.total_cmp(&b.loss))
    });
    let mut grouped: Vec<(FitRow, f64)> = Vec::new();
    for r in kept {
        match grouped.last_mut() {
            Some((last, w)) if *last == r => *w += 1.0,
            _ => grouped.push((r, 1.0)),
        }
    }
    let rows_used: usize = grouped.iter().map(|(_, w)| *w as usize).sum();
    if rows_used < MIN_FIT_ROWS {
        return Err(LawError::TooFewRows { found: rows_used, needed: MIN_FIT_ROWS });
    }

    let eps = options.examples_per_step;
    let scales = Scales {
        ln_m: geometric_mean_log(grouped.iter().map(|(r, w)| (r.m, *w))),
        ln_n: geometric_mean_log(grouped.iter().map(|(r, w)| (eps * r.t, *w))),
        ln_s: {
            let private = grouped.iter().filter(|(r, _)| r.nbr > 0.0).map(|(r, w)| (r.nbr, *w));
            let v = geometric_mean_log(private);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
    };
    let problem = Problem {
        form: options.form,
        rows: grouped
            .iter()
            .map(|(r, w)| Prepared {
                x_m: libm::log(r.m) - scales.ln_m,
                x_n: libm::log(eps * r.t) - scales.ln_n,
                x_s: (r.nbr > 0.0).then(|| match options.form {
                    LawForm::L1 => libm::log(r.nbr) - scales.ln_s,
                    LawForm::L2 => libm::log(options.transform.apply(r.nbr)),
                }),
                y: r.loss,
                ln_y: libm::log(r.loss),
                weight: *w,
            })
            .collect(),
        total_weight: grouped.iter().map(|(_, w)| *w).sum(),
        delta: options.huber_delta,
        objective: options.objective,
    };

    let min_loss = grouped.iter().map(|(r, _)| r.loss).fold(f64::INFINITY, f64::min);
    let max_loss = grouped.iter().map(|(r, _)| r.loss).fold(f64::NEG_INFINITY, f64::max);
    let span = (max_loss - min_loss).max(1e-3 * min_loss);
    let dim = problem.dim();
    let lbfgs_opts = LbfgsOptions { max_iterations: options.max_iterations, ..LbfgsOptions::default() };

    let mut best: Option<(f64, Coefficients, usize)> = None;
    for start in 0..options.starts {
        let k = options.seed.wrapping_add(start as u64).wrapping_add(1);
        let u = |i: usize| radical_inverse(k, HALTON_BASES[i]);
        let mut x0 = alloc::vec![0.0; dim];
        x0[E] = log_uniform(u(E), 0.05 * min_loss, 0.95 * min_loss);
        x0[A] = log_uniform(u(A), 1e-3 * span, span);
        x0[ALPHA] = log_uniform(u(ALPHA), 0.02, 2.0);
        x0[B] = log_uniform(u(B), 1e-3 * span, span);
        x0[BETA] = log_uniform(u(BETA), 0.02, 20.0);
        x0[C] = log_uniform(u(C), 1e-3 * span, span);
        x0[GAMMA] = log_uniform(u(GAMMA), 0.05, 3.0);
        if dim > ALPHA2 {
            x0[ALPHA2] = -0.5 + u(ALPHA2);
        }
        let Some(found) = lbfgs::minimize(|p, g| problem.eval(p, g), &x0, &lbfgs_opts) else {
            continue;
        };
        let f = found.f;
        if !f.is_finite() {
            continue;
        }
        let coeffs = unscale(&found.x, options.form, &scales);
        if !coefficients_finite(&coeffs) {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bf, bc, _)) => f < *bf || (f == *bf && lex_less(&coeffs, bc)),
        };
        if better {
            best = Some((f, coeffs, start));
        }
    }
    let Some((final_loss, coefficients, chosen_start)) = best else {
        return Err(LawError::FitDiverged { starts: options.starts });
    };

    let domain = match options.domain {
        Some(d) => d,
        None => span_domain(&grouped),
    };
    let law = ParametricLaw::new(options.form, coefficients, domain)?
        .with_transform(options.transform)?
        .with_examples_per_step(eps)?;
    Ok(law.with_fit_metadata(FitMetadata {
        huber_delta: options.huber_delta,
        objective: options.objective,
        filters: options.filters,
        final_loss,
        chosen_start,
        starts: options.starts,
        rows_used,
    }))
}

fn unscale(p: &[f64], form: LawForm, s: &Scales) -> Coefficients {
    let alpha = libm::exp(p[ALPHA]);
    let beta = libm::exp(p[BETA]);
    let gamma = libm::exp(p[GAMMA]);
    let alpha2 = if form == LawForm::L2 { p[ALPHA2] } else { 0.0 };
    let c = match form {
        LawForm::L1 => libm::exp(p[C] - gamma * s.ln_s),
        LawForm::L2 => libm::exp(p[C] + alpha2 * s.ln_m),
    };
    Coefficients {
        e: libm::exp(p[E]),
        a: libm::exp(p[A] + alpha * s.ln_m),
        alpha,
        b: libm::exp(p[B] + beta * s.ln_n),
        beta,
        c,
        gamma,
        alpha2,
    }
}

fn coefficients_finite(k: &Coefficients) -> bool {
    [k.e, k.a, k.alpha, k.b, k.beta, k.c, k.gamma, k.alpha2].iter().all(|v| v.is_finite())
}

fn lex_less(a: &Coefficients, b: &Coefficients) -> bool {
    let a = [a.e, a.a, a.alpha, a.b, a.beta, a.c, a.gamma, a.alpha2];
    let b = [b.e, b.a, b.alpha, b.b, b.beta, b.c, b.gamma, b.alpha2];
    for (x, y) in a.iter().zip(&b) {
        match x.total_cmp(y) {
            core::cmp::Ordering::Less => return true,
            core::cmp::Ordering::Greater => return false,
            core::cmp::Ordering::Equal => {}
        }
    }
    false
}

fn span_domain(rows: &[(FitRow, f64)]) -> Domain {
    let fold = |f: fn(&FitRow) -> f64| {
        rows.iter()
            .map(|(r, _)| f(r))
            .filter(|v| *v > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let nbr = fold(|r| r.nbr);
    Domain {
        m: fold(|r| r.m),
        t: fold(|r| r.t),
        nbr: if nbr.0.is_finite() { nbr } else { (f64::MIN_POSITIVE, f64::MIN_POSITIVE) },
        nonprivate: true,
    }
}
