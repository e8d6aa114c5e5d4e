use alloc::vec::Vec;

use super::GridError;

/// `L(T) = E + A / T^α` fitted over `fit_range`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PowerLawFit {
    pub e: f64,
    pub a: f64,
    pub alpha: f64,
    pub fit_range: (f64, f64),
    /// Sum of squared residuals over the fitted points.
    pub residual: f64,
}

impl PowerLawFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.e + self.a * libm::exp(-self.alpha * libm::log(t))
    }
}

/// Fewest points inside the fit range.
pub const MIN_POWER_LAW_POINTS: usize = 4;

const ALPHA_STARTS: [f64; 4] = [0.1, 0.3, 0.5, 1.0];
const E_STARTS: [f64; 2] = [0.5, 0.9];
const MAX_LM_ITERATIONS: usize = 500;

/// Least-squares fit of `E + A/T^α` to the `(T, loss)` pairs with `T` in
/// `fit_range` (inclusive).
///
/// Levenberg-Marquardt runs from eight starts (α ∈ {0.1, 0.3, 0.5, 1},
/// E ∈ {0.5, 0.9} × min loss, A through the first point) plus the constant
/// fit `A = 0`; the smallest residual wins. `T` is divided by its geometric
/// mean internally to keep the Jacobian well scaled.
pub fn fit_power_law(series: &[(f64, f64)], fit_range: (f64, f64)) -> Result<PowerLawFit, GridError> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= fit_range.0 && t <= fit_range.1)
        .collect();
    if pts.len() < MIN_POWER_LAW_POINTS {
        return Err(GridError::TooFewFitPoints { found: pts.len(), needed: MIN_POWER_LAW_POINTS });
    }
    if pts.iter().any(|&(t, y)| !(t > 0.0) || !t.is_finite() || !y.is_finite()) {
        return Err(GridError::InvalidSeries);
    }
    let ln_tg = pts.iter().map(|&(t, _)| libm::log(t)).sum::<f64>() / pts.len() as f64;
    // (ln t', y) with t' = t / geometric mean
    let data: Vec<(f64, f64)> = pts.iter().map(|&(t, y)| (libm::log(t) - ln_tg, y)).collect();

    let mean = data.iter().map(|&(_, y)| y).sum::<f64>() / data.len() as f64;
    let constant = Params { e: mean, ln_a: f64::NEG_INFINITY, alpha: 1.0 };
    let mut best: Option<(f64, Params)> = Some((sse(&data, &constant), constant));

    let min_y = data.iter().map(|&(_, y)| y).fold(f64::INFINITY, f64::min);
    let (x0, y0) = data[0];
    for &alpha in &ALPHA_STARTS {
        for &ef in &E_STARTS {
            let e = ef * min_y;
            let gap = y0 - e;
            if !(gap > 0.0) {
                continue;
            }
            let start = Params { e, ln_a: libm::log(gap) + alpha * x0, alpha };
            let (r, p) = levenberg_marquardt(&data, start);
            if r.is_finite() && best.as_ref().is_none_or(|(br, _)| r < *br) {
                best = Some((r, p));
            }
        }
    }

    let fit = |(r, p): (f64, Params)| PowerLawFit {
        e: p.e,
        a: libm::exp(p.ln_a + p.alpha * ln_tg),
        alpha: p.alpha,
        fit_range,
        residual: r,
    };
    match best {
        Some(b) if b.0.is_finite() && b.1.e.is_finite() && !b.1.ln_a.is_nan() && b.1.alpha.is_finite() => {
            let out = fit(b);
            if out.a.is_finite() {
                Ok(out)
            } else {
                Err(GridError::FitDiverged { best: Some(out) })
            }
        }
        other => Err(GridError::FitDiverged { best: other.map(fit) }),
    }
}

#[derive(Debug, Clone, Copy)]
struct Params {
    e: f64,
    /// ln of the amplitude at t' = 1
    ln_a: f64,
    alpha: f64,
}

fn model(p: &Params, x: f64) -> f64 {
    p.e + libm::exp(p.ln_a - p.alpha * x)
}

fn sse(data: &[(f64, f64)], p: &Params) -> f64 {
    data.iter().map(|&(x, y)| (model(p, x) - y) * (model(p, x) - y)).sum()
}

fn levenberg_marquardt(data: &[(f64, f64)], start: Params) -> (f64, Params) {
    let mut p = start;
    let mut cost = sse(data, &p);
    let mut lambda = 1e-3;
    for _ in 0..MAX_LM_ITERATIONS {
        // normal equations J^T J δ = -J^T r over (e, ln_a, alpha)
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for &(x, y) in data {
            let amp = libm::exp(p.ln_a - p.alpha * x);
            let r = p.e + amp - y;
            let j = [1.0, amp, -amp * x];
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut m = jtj;
            for (k, row) in m.iter_mut().enumerate() {
                row[k] += lambda * jtj[k][k].max(1e-300);
            }
            let Some(step) = solve3(m, [-jtr[0], -jtr[1], -jtr[2]]) else {
                lambda *= 10.0;
                continue;
            };
            let trial = Params { e: p.e + step[0], ln_a: p.ln_a + step[1], alpha: p.alpha + step[2] };
            let c = sse(data, &trial);
            if trial.alpha > 0.0 && c.is_finite() && c <= cost {
                let rel = (cost - c) / cost.max(1e-300);
                let tiny_step = step.iter().map(|s| libm::fabs(*s)).fold(0.0, f64::max) < 1e-15;
                p = trial;
                cost = c;
                lambda = (lambda * 0.3).max(1e-15);
                improved = !(rel < 1e-15 && tiny_step) && cost > 0.0;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (cost, p)
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| libm::fabs(m[i][col]).total_cmp(&libm::fabs(m[j][col])))?;
        if !(libm::fabs(m[pivot][col]) > 1e-300) {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
