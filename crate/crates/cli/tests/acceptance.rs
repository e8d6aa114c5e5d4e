//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Each check recomputes its evidence from scratch against an
//! independent oracle or frozen reference values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod support;

#[path = "../../core/tests/support/brute_planner.rs"]
mod brute_planner;
#[path = "../../core/tests/support/isotonic_oracle.rs"]
mod isotonic_oracle;
#[path = "../../core/tests/support/quadrature.rs"]
mod quadrature;
#[path = "../../core/tests/support/trilinear.rs"]
mod trilinear;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use dpscale_core::accounting::{
    analytic_gaussian_delta, calibrate_branch, calibrate_nbr, epsilon_of, rdp_subsampled_gaussian, vector_field,
    AccountingSetup, Batching, BudgetAxis, NoiseBatchRatio, PrivacySpec, VectorField, VectorFieldSpec, NBR_REL_TOL,
};
use dpscale_core::grid::{
    fit_power_law, isotonic_fit, synth_grid, Direction, DEFAULT_FIT_RANGE,
};
use dpscale_core::lawfit::{
    fit_parametric, Coefficients, Domain, FitOptions, FitRow, InterpolatedLaw, LawForm, LossModel, ParametricLaw,
};
use dpscale_core::math::geomspace;
use dpscale_core::planner::{
    compare_baselines, critical_compute, default_baselines, optimal_allocation, sweep, Budgets, PlannerOptions,
    SavingsGrid, SweepAxis, SweepPoint, SweepSeries,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// ------------------------------------------------------------ accounting

/// `Φ(1/2σ - εσ) - e^ε Φ(-1/2σ - εσ)` evaluated at 50 digits.
const ANALYTIC_DELTA: [(f64, f64, f64); 10] = [
    (1.0, 0.0, 0.382_924_922_548_026_2),
    (0.5, 0.5, 0.599_185_618_533_933_3),
    (0.5, 1.0, 0.509_861_660_054_670_2),
    (0.5, 4.0, 0.084_953_318_671_071_06),
    (1.0, 0.5, 0.238_421_708_134_876_63),
    (1.0, 1.0, 0.126_936_737_506_643_95),
    (1.0, 4.0, 0.000_047_122_412_007_931_2),
    (2.0, 0.5, 0.052_440_323_287_669_66),
    (2.0, 1.0, 0.006_829_594_983_114_575_4),
    (2.0, 4.0, 2.706_033_802_956_907e-16),
];

fn accounting_exactness() -> Outcome {
    let start = Instant::now();
    let d = analytic_gaussian_delta(1.0, 0.0).map_err(|e| e.to_string())?;
    ensure!((d - 0.382925).abs() <= 1e-6, "delta(1, 0) = {d}");
    for (sigma, eps, want) in ANALYTIC_DELTA {
        let got = analytic_gaussian_delta(sigma, eps).map_err(|e| e.to_string())?;
        ensure!((got - want).abs() <= 1e-6 * want + 1e-15, "delta({sigma}, {eps}) = {got}, want {want}");
    }
    let mut worst = 0.0f64;
    for q in [1e-4, 1e-3, 1e-2, 0.1, 0.5] {
        for sigma in [0.5, 1.0, 2.0, 4.0, 16.0] {
            for alpha in [2u32, 3, 5, 8, 16, 32, 64, 128] {
                let got = rdp_subsampled_gaussian(sigma, q, alpha).map_err(|e| e.to_string())?;
                let want = quadrature::oracle_rdp(sigma, q, f64::from(alpha));
                let e = rel(got, want);
                ensure!(e <= 1e-6, "rdp(q={q}, sigma={sigma}, alpha={alpha}) = {got}, quadrature {want}");
                worst = worst.max(e);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1}s");
    Ok(format!("delta(1,0) = {d:.9}; 200 RDP points, worst relative error {worst:.1e}; {secs:.2}s"))
}

// ----------------------------------------------------------- calibration

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

struct Draw {
    epsilon: f64,
    delta: f64,
    data: u64,
    batch: f64,
    steps: u64,
}

fn draw(rng: &mut ChaCha8Rng) -> Draw {
    let epsilon = log_uniform(rng, 0.25, 64.0);
    let delta = log_uniform(rng, 1e-10, 1e-4);
    let data = log_uniform(rng, 1e4, 1e9).round() as u64;
    let batch = log_uniform(rng, 1.0, data as f64).round().clamp(1.0, data as f64);
    let steps = log_uniform(rng, 1.0, 1e5).round() as u64;
    Draw { epsilon, delta, data, batch, steps }
}

fn nbr_of(d: &Draw) -> Result<f64, String> {
    let spec = PrivacySpec::new(d.epsilon, d.delta).map_err(|e| e.to_string())?;
    let setup = AccountingSetup::new(d.data, d.batch, d.steps, Batching::Poisson).map_err(|e| e.to_string())?;
    Ok(calibrate_nbr(&spec, &setup).map_err(|e| e.to_string())?.nbr.value())
}

#[derive(Deserialize)]
struct CalibrationCase {
    epsilon: f64,
    delta: f64,
    data: u64,
    batch: f64,
    steps: u64,
    nbr: f64,
    poisson_nbr: f64,
}

#[derive(Deserialize)]
struct Reference {
    calibration: Vec<CalibrationCase>,
}

fn calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for i in 0..1000 {
        let d = draw(&mut rng);
        let spec = PrivacySpec::new(d.epsilon, d.delta).map_err(|e| e.to_string())?;
        let setup = AccountingSetup::new(d.data, d.batch, d.steps, Batching::Poisson).map_err(|e| e.to_string())?;
        let c = calibrate_nbr(&spec, &setup).map_err(|e| format!("draw {i}: {e}"))?;
        let achieved = epsilon_of(&setup.with_batching(c.batching).unwrap(), c.nbr, d.delta).map_err(|e| e.to_string())?;
        ensure!(
            achieved <= d.epsilon && achieved >= 0.999 * d.epsilon,
            "draw {i}: achieved {achieved} for budget {}",
            d.epsilon
        );
    }
    let reference: Reference =
        serde_json::from_str(include_str!("../../core/tests/fixtures/reference_accountant.json")).map_err(|e| e.to_string())?;
    ensure!(reference.calibration.len() == 20, "expected 20 reference settings");
    let mut worst = 0.0f64;
    for c in &reference.calibration {
        let spec = PrivacySpec::new(c.epsilon, c.delta).map_err(|e| e.to_string())?;
        let setup = AccountingSetup::new(c.data, c.batch, c.steps, Batching::Poisson).map_err(|e| e.to_string())?;
        let both = calibrate_nbr(&spec, &setup).map_err(|e| e.to_string())?.nbr.value();
        let poisson = calibrate_branch(&spec, &setup).map_err(|e| e.to_string())?.nbr.value();
        for (got, want) in [(both, c.nbr), (poisson, c.poisson_nbr)] {
            let e = rel(got, want);
            ensure!(e <= 0.01, "eps={} N={} B={} T={}: {got} vs reference {want}", c.epsilon, c.data, c.batch, c.steps);
            worst = worst.max(e);
        }
    }
    Ok(format!("1000 draws within [0.999e, e]; 20 reference settings, worst relative gap {:.2}%", 100.0 * worst))
}

// ---------------------------------------------------------- monotonicity

const FIELD_SLACK: f64 = 1e-3;

fn field(x: BudgetAxis, y: BudgetAxis, xe: (i32, i32), ye: (i32, i32)) -> Result<VectorField, String> {
    let spec = VectorFieldSpec {
        x,
        y,
        x_exponents: xe,
        y_exponents: ye,
        epsilon: 4.0,
        batch: 65536.0,
        data: f64::from(1u32 << 24),
        steps: 16000,
        delta: 1e-8,
        rel_tol: NBR_REL_TOL,
    };
    vector_field(&spec).map_err(|e| e.to_string())
}

fn eventually_nonincreasing(series: &[f64]) -> bool {
    let peak = (0..series.len()).fold(0, |best, i| if series[i] > series[best] { i } else { best });
    series[peak..].windows(2).all(|w| w[1] <= w[0] + FIELD_SLACK)
}

fn monotonicity() -> Outcome {
    // σ̄ in each budget, within the calibration tolerance
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..150 {
        let d = draw(&mut rng);
        let base = nbr_of(&d)?;
        let f = rng.random_range(1.0..4.0);
        let more_eps = nbr_of(&Draw { epsilon: d.epsilon * f, ..d })?;
        let more_data = nbr_of(&Draw { data: (d.data as f64 * f).round() as u64, ..d })?;
        let more_batch = nbr_of(&Draw { batch: (d.batch * f).min(d.data as f64), ..d })?;
        for (name, v) in [("epsilon", more_eps), ("data", more_data), ("batch", more_batch)] {
            ensure!(v <= base * (1.0 + 1e-4), "draw {i}: more {name} raised the noise-batch ratio {base} -> {v}");
        }
    }
    let lattices = [
        field(BudgetAxis::Privacy, BudgetAxis::Compute, (-2, 4), (10, 20))?,
        field(BudgetAxis::Data, BudgetAxis::Compute, (21, 30), (10, 18))?,
        field(BudgetAxis::Data, BudgetAxis::Privacy, (20, 30), (-2, 4))?,
    ];
    let mut arrows = 0;
    for f in &lattices {
        let (nx, ny) = (f.x_values.len(), f.y_values.len());
        for p in &f.points {
            for c in [p.dx, p.dy].into_iter().flatten() {
                ensure!(c >= -FIELD_SLACK, "{:?}/{:?} at ({}, {}): component {c}", f.x_axis, f.y_axis, p.x, p.y);
                arrows += 1;
            }
        }
        for yi in 0..ny {
            let row: Vec<f64> = (0..nx).filter_map(|xi| f.at(xi, yi).dx).collect();
            ensure!(eventually_nonincreasing(&row), "{:?} along x at y={}: {row:?}", f.x_axis, f.y_values[yi]);
        }
        for xi in 0..nx {
            let col: Vec<f64> = (0..ny).filter_map(|yi| f.at(xi, yi).dy).collect();
            ensure!(eventually_nonincreasing(&col), "{:?} along y at x={}: {col:?}", f.y_axis, f.x_values[xi]);
        }
    }
    Ok(format!("450 budget increases; {arrows} arrow components on 3 lattices"))
}

// -------------------------------------------------------------- isotonic

fn isotonic() -> Outcome {
    let seqs = isotonic_oracle::all_sequences(&[0.0, 1.0, 2.0, 3.0], 6);
    ensure!(seqs.len() == 4096, "expected 4^6 sequences");
    for s in &seqs {
        for (dir, up) in [(Direction::Nondecreasing, true), (Direction::Nonincreasing, false)] {
            let got = isotonic_fit(s, dir);
            let want = isotonic_oracle::brute_force_isotonic(s, up);
            ensure!(got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 1e-8), "{s:?} {dir:?}: {got:?} vs {want:?}");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let n = rng.random_range(1..80);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let dir = if rng.random_bool(0.5) { Direction::Nondecreasing } else { Direction::Nonincreasing };
        let once = isotonic_fit(&xs, dir);
        ensure!(isotonic_fit(&once, dir) == once, "not idempotent on {xs:?}");
    }
    Ok("4096 sequences in both directions match brute force; 1000 idempotence draws".into())
}

// ---------------------------------------------------------- fit recovery

fn fit_lattice(offset: f64) -> Vec<(f64, f64, f64)> {
    const MS: [f64; 6] = [4.5e6, 1.4e7, 4.1e7, 1.1e8, 3.4e8, 7.8e8];
    let mut pts = Vec::new();
    for (i, &m) in MS.iter().enumerate() {
        let m = if offset == 0.0 || i + 1 == MS.len() { m } else { (m * MS[i + 1]).sqrt() };
        for k in 0..10 {
            let t = 1.2e5 * 2f64.powf((f64::from(k) + offset) / 3.5);
            for j in 0..9 {
                pts.push((m, t, 2f64.powf(-21.0 + 2.0 * (f64::from(j) + offset))));
            }
        }
    }
    pts
}

fn fit_recovery() -> Outcome {
    let start = Instant::now();
    for (e, a, alpha) in [(2.5, 30.0, 0.4), (1.8, 400.0, 0.65), (3.2, 5.0, 0.2)] {
        let series: Vec<(f64, f64)> = (0..16).map(|k| 8000.0 * f64::from(k + 1)).map(|t| (t, e + a * t.powf(-alpha))).collect();
        let fit = fit_power_law(&series, DEFAULT_FIT_RANGE).map_err(|e| e.to_string())?;
        for (name, got, want) in [("E", fit.e, e), ("A", fit.a, a), ("alpha", fit.alpha, alpha)] {
            ensure!(rel(got, want) <= 1e-3, "power law {name}: {got} vs planted {want}");
        }
    }
    let truth = ParametricLaw::l2_fixture();
    let clean: Vec<FitRow> =
        fit_lattice(0.0).into_iter().map(|(m, t, nbr)| FitRow { m, t, nbr, loss: truth.predict_at_iterations(m, t, nbr) }).collect();
    let law = fit_parametric(&clean, &FitOptions::new(LawForm::L2)).map_err(|e| e.to_string())?;
    let (g, w) = (law.coefficients(), truth.coefficients());
    let mut worst = 0.0f64;
    for (name, got, want) in [
        ("e", g.e, w.e),
        ("a", g.a, w.a),
        ("alpha", g.alpha, w.alpha),
        ("b", g.b, w.b),
        ("beta", g.beta, w.beta),
        ("c", g.c, w.c),
        ("gamma", g.gamma, w.gamma),
        ("alpha2", g.alpha2, w.alpha2),
    ] {
        ensure!(rel(got, want) <= 0.02, "L2 {name}: {got} vs planted {want}");
        worst = worst.max(rel(got, want));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let noisy: Vec<FitRow> = clean.iter().map(|r| FitRow { loss: r.loss + noise.sample(&mut rng), ..*r }).collect();
    let law = fit_parametric(&noisy, &FitOptions::new(LawForm::L2)).map_err(|e| e.to_string())?;
    let held_out = fit_lattice(0.5);
    let sq: f64 = held_out
        .iter()
        .map(|&(m, t, s)| (law.predict_at_iterations(m, t, s) - truth.predict_at_iterations(m, t, s)).powi(2))
        .sum();
    let rmse = (sq / held_out.len() as f64).sqrt();
    ensure!(rmse <= 0.02, "noisy fit held-out RMSE {rmse}");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("power laws within 1e-3; L2 worst coefficient error {:.3}%; noisy RMSE {rmse:.4}; {secs:.1}s", 100.0 * worst))
}

// ------------------------------------------------------ planner vs brute

fn dp_law() -> ParametricLaw {
    let d = Domain { m: (1e6, 1e10), t: (100.0, 1_048_576.0), nbr: (1e-15, 10.0), nonprivate: true };
    ParametricLaw::l2_fixture().with_domain(d).unwrap()
}

fn opts(density: u32) -> PlannerOptions {
    PlannerOptions { lattice_density: density, ..Default::default() }
}

fn planner_vs_brute_force() -> Outcome {
    let law = dp_law();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..50 {
        let compute = 10f64.powf(rng.random_range(16.0..21.0));
        let eps = 2f64.powf(rng.random_range(-1.0..5.0));
        let data = 10f64.powf(rng.random_range(5.0..9.0)).round() as u64;
        let spec = PrivacySpec::new(eps, 1e-8).map_err(|e| e.to_string())?;
        let got = optimal_allocation(&Budgets { compute, privacy: Some(spec), data }, &law, &opts(3))
            .map_err(|e| format!("draw {i}: {e}"))?;
        let want = brute_planner::brute_force_optimum(&law, compute, Some(spec), data, 512.0, 3)
            .ok_or_else(|| format!("draw {i}: exhaustive scan found nothing"))?;
        let b = got.best;
        let got_tuple =
            (b.config.model_params, b.config.iterations, b.config.batch_size, b.nbr.unwrap(), b.predicted_loss.unwrap());
        ensure!(
            got_tuple == (want.m, want.t, want.batch, want.nbr, want.loss),
            "draw {i} (C={compute:e}, eps={eps}, N={data}): {got_tuple:?} vs exhaustive {:?}",
            (want.m, want.t, want.batch, want.nbr, want.loss)
        );
        ensure!(rel(b.config.compute(), compute) <= 1e-12, "draw {i}: compute identity off by {}", rel(b.config.compute(), compute));
        let setup = AccountingSetup::new(data, b.config.batch_size, b.config.iterations, b.batching.unwrap())
            .map_err(|e| e.to_string())?;
        let achieved = epsilon_of(&setup, NoiseBatchRatio::new(b.nbr.unwrap()).unwrap(), 1e-8).map_err(|e| e.to_string())?;
        ensure!(achieved <= eps, "draw {i}: re-verified epsilon {achieved} > {eps}");
    }
    Ok("50 budget triples equal the exhaustive scan; compute identity and privacy re-verified".into())
}

// ------------------------------------------------- qualitative findings

fn qualitative_findings() -> Outcome {
    let law = dp_law();
    let mut notes = Vec::new();

    // (a) smaller models under DP at equal compute
    for c in [1e18, 1e19, 1e20] {
        let private = Budgets { compute: c, privacy: Some(PrivacySpec::new(1.0, 1e-8).unwrap()), data: 10_000_000 };
        let open = Budgets { privacy: None, ..private };
        let p = optimal_allocation(&private, &law, &opts(4)).map_err(|e| e.to_string())?.best;
        let n = optimal_allocation(&open, &law, &opts(4)).map_err(|e| e.to_string())?.best;
        ensure!(
            p.config.model_params < n.config.model_params,
            "(a) C={c:e}: DP model {} not below non-private {}",
            p.config.model_params,
            n.config.model_params
        );
    }
    notes.push("(a) DP optimum smaller at 3 budgets");

    // (b) loss flattens in compute; a planted plateau is found within one step
    let base = Budgets { compute: 1e16, privacy: Some(PrivacySpec::new(1.0, 1e-8).unwrap()), data: 10_000_000 };
    let grid = geomspace(1e16, 1e24, 9);
    let s = sweep(SweepAxis::Compute, &base, &grid, &law, &opts(3)).map_err(|e| e.to_string())?;
    let loss: Vec<f64> = s.points.iter().map(|p| p.loss.unwrap()).collect();
    let c_star = critical_compute(&s, 0.01).map_err(|e| e.to_string())?;
    ensure!(c_star.is_some_and(|c| c < grid[8]), "(b) no critical compute below the grid top: {loss:?}");
    ensure!(loss[8] / loss[6] > 0.99, "(b) loss still falling at the top: {loss:?}");
    for onset in 3..30usize {
        let xs: Vec<f64> = (0..33).map(|k| 1e16 * 10f64.powf(f64::from(k) / 4.0)).collect();
        let points = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let l = 3.0 + 0.05 * (onset as f64 - k as f64).max(0.0);
                SweepPoint { x, at_budget: None, band: None, best: None, loss: Some(l) }
            })
            .collect();
        let c = critical_compute(&SweepSeries { axis: SweepAxis::Compute, points }, 0.01).map_err(|e| e.to_string())?;
        let found = c.and_then(|c| xs.iter().position(|&x| x == c));
        ensure!(found.is_some_and(|f| f.abs_diff(onset) <= 1), "(b) plateau at step {onset}, found {found:?}");
    }
    notes.push("(b) saturation and 27 planted plateaus");

    // (c) token/model ratio: growing under DP, flat on the symmetric non-private law
    let k = Coefficients { e: 1.0, a: 400.0, alpha: 0.3, b: 400.0, beta: 0.3, c: 0.0, gamma: 1.0, alpha2: 0.0 };
    let d = Domain { m: (1e5, 1e11), t: (10.0, 1e9), nbr: (1e-15, 10.0), nonprivate: true };
    let sym = ParametricLaw::new(LawForm::L2, k, d).unwrap();
    let open = Budgets { compute: 1e18, privacy: None, data: u64::MAX };
    let flat = sweep(SweepAxis::Compute, &open, &geomspace(1e18, 1e22, 5), &sym, &opts(32))
        .map_err(|e| e.to_string())?
        .token_model_ratios();
    let mean = flat.iter().map(|r| r.1).sum::<f64>() / flat.len() as f64;
    ensure!(flat.iter().all(|r| (r.1 / mean - 1.0).abs() <= 0.2), "(c) non-private ratios not flat: {flat:?}");
    let private = Budgets { compute: 1e17, privacy: Some(PrivacySpec::new(1.0, 1e-8).unwrap()), data: 10_000_000 };
    let dp = sweep(SweepAxis::Compute, &private, &geomspace(1e17, 1e21, 5), &law, &opts(4))
        .map_err(|e| e.to_string())?
        .token_model_ratios();
    ensure!(dp.windows(2).all(|w| w[1].1 > w[0].1), "(c) DP ratios not increasing: {dp:?}");
    notes.push("(c) ratio rises under DP, flat within 20% without");

    // (d) compute-optimal never worse than a fixed baseline
    let eps = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
    let cmp = compare_baselines(&default_baselines(), 10_000_000, 1e-8, &eps, &law, &opts(2), SavingsGrid { density: 1, decades: 1 })
        .map_err(|e| e.to_string())?;
    for s in &cmp.series {
        for p in &s.points {
            let base = p.baseline.predicted_loss.ok_or_else(|| format!("(d) {} has no loss at eps {}", s.baseline.name, p.epsilon))?;
            let best = p.optimal.and_then(|o| o.predicted_loss).ok_or("(d) no optimum")?;
            ensure!(best <= base, "(d) {} at eps {}: optimum {best} > baseline {base}", s.baseline.name, p.epsilon);
        }
    }
    notes.push("(d) 3 baselines x 7 epsilons");
    Ok(notes.join("; "))
}

// ------------------------------------------------------------ end to end

fn end_to_end(suite_start: Instant) -> Outcome {
    const M: [u64; 3] = [4_500_000, 40_000_000, 784_000_000];
    const S: [f64; 4] = [0.0, 1e-6, 1e-4, 1e-2];
    let ts: Vec<u64> = (1..=16).map(|k| 8000 * k).collect();
    let law = ParametricLaw::l2_fixture();
    let grid = synth_grid(&law, (&M, &ts, &S), 0.0, 11).map_err(|e| e.to_string())?.clean(1).map_err(|e| e.to_string())?;
    let x = grid.extrapolate(&[1 << 18, 1 << 20], DEFAULT_FIT_RANGE).map_err(|e| e.to_string())?;
    let interp = InterpolatedLaw::from_grid(&x.grid).map_err(|e| e.to_string())?;
    let mut nodes = 0;
    for &m in &M {
        for &t in &ts {
            for &s in &S {
                let want = law.predict_at_iterations(m as f64, t as f64, s);
                let got = interp.query(m as f64, t as f64, s).map_err(|e| e.to_string())?;
                ensure!(got == want, "node ({m}, {t}, {s}): {got} vs generator {want}");
                nodes += 1;
            }
        }
    }
    let axes = x.grid.axes();
    let truth = |m: f64, t: f64, s: f64| law.predict_at_iterations(m, t, s);
    let mut cells = 0;
    for w in axes.m.windows(2) {
        for v in axes.t.windows(2).filter(|v| v[1] <= 128_000) {
            for u in S[1..].windows(2) {
                let (m, t, s) =
                    ((w[0] as f64 * w[1] as f64).sqrt() * 0.9, (v[0] as f64 * v[1] as f64).sqrt(), (u[0] * u[1]).sqrt() * 1.3);
                let got = interp.query(m, t, s).map_err(|e| e.to_string())?;
                let bound =
                    trilinear::trilinear_bound(truth, [w[0] as f64, v[0] as f64, u[0]], [w[1] as f64, v[1] as f64, u[1]]);
                ensure!((got - truth(m, t, s)).abs() <= bound, "off-node ({m}, {t}, {s}): error above bound {bound}");
                cells += 1;
            }
        }
    }
    // the CLI composes the same stages
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    support::dpscale_ok(&[
        "synth", "--law", "builtin:l2", "--model-params", "4.5e6,4e7", "--iterations", "8000:64000:8000", "--nbr", "0,1e-6,1e-4",
        "-o", &p("raw.csv"),
    ])?;
    support::dpscale_ok(&["clean", "--input", &p("raw.csv"), "--window", "1", "-o", &p("clean.json")])?;
    support::dpscale_ok(&["extrapolate", "--input", &p("clean.json"), "--to", "131072", "--fit-range", "16000:64000", "-o", &p("x.json")])?;
    support::dpscale_ok(&["fit-interp", "--input", &p("x.json"), "-o", &p("law.json")])?;
    let doc: dpscale_core::LawDocument = serde_json::from_str(&support::read(std::path::Path::new(&p("law.json")))).map_err(|e| e.to_string())?;
    for m in [4_500_000u64, 40_000_000] {
        for t in (8000..=64000).step_by(8000) {
            for s in [0.0, 1e-6, 1e-4] {
                let got = doc.law.query(m as f64, t as f64, s).map_err(|e| e.to_string())?;
                ensure!(got == law.predict_at_iterations(m as f64, t as f64, s), "CLI pipeline node ({m}, {t}, {s})");
            }
        }
    }
    let secs = suite_start.elapsed().as_secs_f64();
    ensure!(secs < 300.0, "acceptance run already at {secs:.0}s");
    Ok(format!("{nodes} nodes exact, {cells} off-node cells within the interpolation bound, CLI pipeline exact; {secs:.0}s elapsed"))
}

// ----------------------------------------------------- interface pinning

fn interface_pinning() -> Outcome {
    let cli = support::cli_outputs()?;
    for (name, text) in &cli {
        support::check_golden(name, text)?;
    }
    ensure!(support::cli_outputs()? == cli, "command outputs differ between runs");
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(|e| e.to_string())?;
    let api = rt.block_on(support::api_outputs());
    for (name, status, body) in &api {
        support::check_golden(name, &support::api_golden_text(*status, body))?;
    }
    ensure!(rt.block_on(support::api_outputs()) == api, "API responses differ between runs");
    Ok(format!("{} command outputs and {} API responses match golden files byte for byte, twice", cli.len(), api.len()))
}

fn main() -> ExitCode {
    let suite_start = Instant::now();
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("accounting_exactness", Box::new(accounting_exactness)),
        ("calibration_safety_and_agreement", Box::new(calibration)),
        ("monotonicity", Box::new(monotonicity)),
        ("isotonic_oracle", Box::new(isotonic)),
        ("fit_recovery", Box::new(fit_recovery)),
        ("planner_vs_brute_force", Box::new(planner_vs_brute_force)),
        ("qualitative_findings", Box::new(qualitative_findings)),
        ("end_to_end_pipeline", Box::new(move || end_to_end(suite_start))),
        ("interface_pinning", Box::new(interface_pinning)),
    ];
    let total = checks.len();
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {why}");
            }
        }
    }
    println!("acceptance: {}/{total} criteria passed", total - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
