//! Request and report types shared by the command line and the HTTP API.
//!
//! Both front ends build a request, call one function here and serialize
//! the result with [`crate::formats::to_json`], so equal inputs give equal
//! bytes regardless of how they arrived.

use dpscale_core::accounting::{
    calibrate_branch, calibrate_nbr, vector_field, AccountingSetup, Batching, BudgetAxis, Calibration, PrivacySpec,
    VectorField, VectorFieldSpec, NBR_REL_TOL,
};
use dpscale_core::grid::Provenance;
use dpscale_core::lawfit::{Coefficients, Domain, FitMetadata, FittedLaw, LawDocument, LawForm, LossModel};
use dpscale_core::math::geomspace;
use dpscale_core::planner::{
    compare_baselines, critical_compute, optimal_allocation, sweep, AllocationBand, Baseline, BaselineComparison,
    Budgets, CancelFlag, Exclusions, PlanResult, PlannerOptions, SavingsGrid, SweepAxis, SweepPoint, DEFAULT_LATTICE_DENSITY,
    DEFAULT_MAX_CONFIGS, DEFAULT_NEAR_OPTIMAL,
};
use dpscale_core::DEFAULT_SEQ_LEN;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::formats::PlotRow;

/// Default saturation tolerance for critical compute.
pub const DEFAULT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BatchingChoice {
    Poisson,
    Deterministic,
    /// Both analyses; the smaller noise wins.
    Both,
}

impl std::str::FromStr for BatchingChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "poisson" => Ok(Self::Poisson),
            "deterministic" => Ok(Self::Deterministic),
            "both" => Ok(Self::Both),
            _ => Err("expected poisson, deterministic or both".into()),
        }
    }
}

pub fn parse_sweep_axis(s: &str) -> Result<SweepAxis, String> {
    match s {
        "compute" => Ok(SweepAxis::Compute),
        "privacy" | "epsilon" => Ok(SweepAxis::Privacy),
        "data" => Ok(SweepAxis::Data),
        _ => Err("expected compute, privacy or data".into()),
    }
}

pub fn parse_budget_axis(s: &str) -> Result<BudgetAxis, String> {
    match s {
        "privacy" | "epsilon" => Ok(BudgetAxis::Privacy),
        "compute" | "batch" => Ok(BudgetAxis::Compute),
        "data" => Ok(BudgetAxis::Data),
        _ => Err("expected privacy, compute or data".into()),
    }
}

/// A whole count, allowing scientific notation such as `1e7`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(64) => Ok(v as u64),
        _ => Err(format!("not a whole number: {s:?}")),
    }
}

fn positive(field: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::invalid(field, "must be positive and finite"))
    }
}

// ---------------------------------------------------------------- calibrate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateRequest {
    pub epsilon: f64,
    pub delta: f64,
    pub data: u64,
    pub batch: f64,
    pub steps: u64,
    pub batching: BatchingChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub batching: Batching,
    pub noise_batch_ratio: Option<f64>,
    pub epsilon_achieved: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateReport {
    pub request: CalibrateRequest,
    pub noise_batch_ratio: f64,
    pub noise_multiplier: f64,
    pub epsilon_achieved: f64,
    pub batching_branch: Batching,
    /// Present for `batching = both`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<Vec<BranchReport>>,
}

pub fn calibrate(req: &CalibrateRequest) -> Result<CalibrateReport, CliError> {
    let spec = PrivacySpec::new(req.epsilon, req.delta)?;
    let setup = |b| AccountingSetup::new(req.data, req.batch, req.steps, b);
    let (chosen, branches): (Calibration, _) = match req.batching {
        BatchingChoice::Poisson => (calibrate_branch(&spec, &setup(Batching::Poisson)?)?, None),
        BatchingChoice::Deterministic => (calibrate_branch(&spec, &setup(Batching::Deterministic)?)?, None),
        BatchingChoice::Both => {
            let chosen = calibrate_nbr(&spec, &setup(Batching::Poisson)?)?;
            let branches = [Batching::Poisson, Batching::Deterministic]
                .into_iter()
                .map(|b| match setup(b).and_then(|s| calibrate_branch(&spec, &s)) {
                    Ok(c) => BranchReport {
                        batching: b,
                        noise_batch_ratio: Some(c.nbr.value()),
                        epsilon_achieved: Some(c.epsilon),
                        error: None,
                    },
                    Err(e) => BranchReport {
                        batching: b,
                        noise_batch_ratio: None,
                        epsilon_achieved: None,
                        error: Some(e.to_string()),
                    },
                })
                .collect();
            (chosen, Some(branches))
        }
    };
    Ok(CalibrateReport {
        request: req.clone(),
        noise_batch_ratio: chosen.nbr.value(),
        noise_multiplier: chosen.noise_multiplier(req.batch),
        epsilon_achieved: chosen.epsilon,
        batching_branch: chosen.batching,
        branches,
    })
}

// ---------------------------------------------------------------- plan

/// Budgets plus lattice settings. `epsilon: None` plans non-private
/// training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub compute: f64,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub data: u64,
    pub seq_len: f64,
    pub lattice_density: u32,
    pub near_optimal: f64,
}

impl PlanRequest {
    pub fn new(compute: f64, epsilon: Option<f64>, delta: f64, data: u64) -> Self {
        Self {
            compute,
            epsilon,
            delta,
            data,
            seq_len: DEFAULT_SEQ_LEN,
            lattice_density: DEFAULT_LATTICE_DENSITY,
            near_optimal: DEFAULT_NEAR_OPTIMAL,
        }
    }

    fn budgets(&self) -> Result<Budgets, CliError> {
        positive("compute", self.compute)?;
        let privacy = match self.epsilon {
            Some(e) => Some(PrivacySpec::new(e, self.delta)?),
            None => None,
        };
        Ok(Budgets { compute: self.compute, privacy, data: self.data })
    }

    fn options(&self, cancel: Option<&CancelFlag>) -> PlannerOptions {
        PlannerOptions {
            lattice_density: self.lattice_density,
            seq_len: self.seq_len,
            near_optimal: self.near_optimal,
            rel_tol: NBR_REL_TOL,
            max_configs: DEFAULT_MAX_CONFIGS,
            cancel: cancel.cloned(),
        }
    }
}

/// One line of the saturating-budget table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub data: u64,
    /// ε; `None` for non-private training.
    pub privacy: Option<f64>,
    pub compute: f64,
    pub cross_entropy: f64,
    pub model_size: f64,
    pub iterations: u64,
    pub batch_size: f64,
    pub token_model_ratio: f64,
}

pub const TABLE_HEADER: &str =
    "data,privacy,compute,cross_entropy,model_size,iterations,batch_size,token_model_ratio";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub request: PlanRequest,
    pub best: PlanResult,
    pub band: AllocationBand,
    pub evaluated: usize,
    pub excluded: Exclusions,
    pub row: TableRow,
}

pub fn plan(req: &PlanRequest, law: &FittedLaw) -> Result<PlanReport, CliError> {
    plan_with_cancel(req, law, None)
}

/// As [`plan`], giving up once `cancel` is set.
pub fn plan_with_cancel(req: &PlanRequest, law: &FittedLaw, cancel: Option<&CancelFlag>) -> Result<PlanReport, CliError> {
    let budgets = req.budgets()?;
    let a = optimal_allocation(&budgets, law, &req.options(cancel))?;
    let best = a.best;
    let row = TableRow {
        data: req.data,
        privacy: req.epsilon,
        compute: req.compute,
        cross_entropy: best.predicted_loss.expect("optimum has a loss"),
        model_size: best.config.model_params,
        iterations: best.config.iterations,
        batch_size: best.config.batch_size,
        token_model_ratio: best.token_model_ratio,
    };
    Ok(PlanReport { request: req.clone(), best, band: a.band, evaluated: a.evaluated, excluded: a.excluded, row })
}

/// Compute grid `from..=to` with `points` log-spaced values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl LogGrid {
    pub fn values(&self, field: &str) -> Result<Vec<f64>, CliError> {
        positive(field, self.from)?;
        positive(field, self.to)?;
        if self.from >= self.to || self.points < 2 {
            return Err(CliError::invalid(field, "needs from < to and at least 2 points"));
        }
        Ok(geomspace(self.from, self.to, self.points))
    }
}

/// Plan at the critical compute of a compute sweep: the smallest budget on
/// `grid` whose loss is within `tolerance` of the sweep's best.
pub fn plan_saturated(
    req: &PlanRequest,
    grid: LogGrid,
    tolerance: f64,
    law: &FittedLaw,
) -> Result<PlanReport, CliError> {
    let values = grid.values("saturate")?;
    let base = PlanRequest { compute: values[0], ..req.clone() };
    let series = sweep(SweepAxis::Compute, &base.budgets()?, &values, law, &base.options(None))?;
    let c_star = critical_compute(&series, tolerance)?
        .ok_or_else(|| CliError::Numeric { code: "no_feasible_config", message: "no compute on the grid is feasible".into() })?;
    plan(&PlanRequest { compute: c_star, ..req.clone() }, law)
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for r in rows {
        let privacy = r.privacy.map_or_else(|| "inf".to_string(), |e| format!("{e}"));
        out.push_str(&format!(
            "{},{},{:e},{},{:e},{},{:e},{:e}\n",
            r.data, privacy, r.compute, r.cross_entropy, r.model_size, r.iterations, r.batch_size, r.token_model_ratio
        ));
    }
    out
}

// ---------------------------------------------------------------- sweep

/// A sweep over one budget. Budgets not on the swept axis come from the
/// fixed fields; `epsilon: None` (outside a privacy sweep) is non-private.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub axis: SweepAxis,
    pub grid: LogGrid,
    pub compute: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub data: Option<u64>,
    pub seq_len: f64,
    pub lattice_density: u32,
    pub near_optimal: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub request: SweepRequest,
    pub points: Vec<SweepPoint>,
    /// Critical compute (compute sweeps only).
    pub critical_compute: Option<f64>,
}

pub fn sweep_report(req: &SweepRequest, law: &FittedLaw) -> Result<SweepReport, CliError> {
    sweep_report_with_cancel(req, law, None)
}

/// As [`sweep_report`], giving up once `cancel` is set.
pub fn sweep_report_with_cancel(
    req: &SweepRequest,
    law: &FittedLaw,
    cancel: Option<&CancelFlag>,
) -> Result<SweepReport, CliError> {
    let values = req.grid.values("from")?;
    let need = |v: Option<f64>, field: &str, axis: SweepAxis| match v {
        Some(v) => Ok(v),
        None if req.axis == axis => Ok(f64::NAN),
        None => Err(CliError::invalid(field, "required for this sweep")),
    };
    let compute = need(req.compute, "compute", SweepAxis::Compute)?;
    let data = need(req.data.map(|d| d as f64), "data", SweepAxis::Data)?;
    let epsilon = match (req.axis, req.epsilon) {
        (SweepAxis::Privacy, _) => Some(values[0]),
        (_, e) => e,
    };
    let base = PlanRequest {
        compute: if compute.is_nan() { values[0] } else { compute },
        epsilon,
        delta: req.delta,
        data: if data.is_nan() { values[0].round().max(1.0) as u64 } else { data as u64 },
        seq_len: req.seq_len,
        lattice_density: req.lattice_density,
        near_optimal: req.near_optimal,
    };
    let series = sweep(req.axis, &base.budgets()?, &values, law, &base.options(cancel))?;
    let critical_compute = match req.axis {
        SweepAxis::Compute => critical_compute(&series, req.tolerance)?,
        _ => None,
    };
    Ok(SweepReport { request: req.clone(), points: series.points, critical_compute })
}

/// Plot series for a sweep: the best loss, then each hyperparameter of the
/// optimum with its near-optimal band.
pub fn sweep_plots(report: &SweepReport) -> Vec<(&'static str, Vec<PlotRow>)> {
    let loss = report.points.iter().filter_map(|p| p.loss.map(|l| (p.x, l, None))).collect();
    let mut out = vec![("loss", loss)];
    type Pick = fn(&PlanResult, &AllocationBand) -> (f64, (f64, f64));
    let picks: [(&'static str, Pick); 4] = [
        ("model_params", |r, b| (r.config.model_params, b.model_params)),
        ("batch_size", |r, b| (r.config.batch_size, b.batch_size)),
        ("iterations", |r, b| (r.config.iterations as f64, (b.iterations.0 as f64, b.iterations.1 as f64))),
        ("token_model_ratio", |r, b| (r.token_model_ratio, b.token_model_ratio)),
    ];
    for (name, pick) in picks {
        let rows = report
            .points
            .iter()
            .filter_map(|p| match (p.at_budget.as_ref(), p.band.as_ref()) {
                (Some(r), Some(b)) => {
                    let (v, band) = pick(r, b);
                    Some((p.x, v, Some(band)))
                }
                _ => None,
            })
            .collect();
        out.push((name, rows));
    }
    out
}

// ---------------------------------------------------------------- vector field

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldRequest {
    pub x: BudgetAxis,
    pub y: BudgetAxis,
    pub x_exponents: (i32, i32),
    pub y_exponents: (i32, i32),
    pub epsilon: f64,
    pub batch: f64,
    pub data: f64,
    pub steps: u64,
    pub delta: f64,
}

/// Lattice points are capped so one request stays interactive.
pub const MAX_FIELD_POINTS: i64 = 4096;

pub fn vector_field_report(req: &VectorFieldRequest) -> Result<VectorField, CliError> {
    if req.x == req.y {
        return Err(CliError::invalid("y", "must differ from x"));
    }
    let span = |(a, b): (i32, i32)| i64::from(b) - i64::from(a) + 1;
    if span(req.x_exponents) * span(req.y_exponents) > MAX_FIELD_POINTS {
        return Err(CliError::invalid("points", format!("lattice larger than {MAX_FIELD_POINTS} points")));
    }
    let spec = VectorFieldSpec {
        x: req.x,
        y: req.y,
        x_exponents: req.x_exponents,
        y_exponents: req.y_exponents,
        epsilon: req.epsilon,
        batch: req.batch,
        data: req.data,
        steps: req.steps,
        delta: req.delta,
        rel_tol: NBR_REL_TOL,
    };
    Ok(vector_field(&spec)?)
}

// ---------------------------------------------------------------- law

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawInfo {
    pub schema_version: u32,
    pub kind: String,
    pub form: Option<LawForm>,
    pub coefficients: Option<Coefficients>,
    pub domain: Domain,
    pub nonprivate_slice: bool,
    pub provenance: Option<Provenance>,
    pub fit_metadata: Option<FitMetadata>,
}

pub fn law_info(doc: &LawDocument) -> LawInfo {
    let domain = doc.law.domain();
    let (form, coefficients, provenance, fit_metadata) = match &doc.law {
        FittedLaw::Parametric(p) => (Some(p.form()), Some(*p.coefficients()), None, p.fit_metadata().cloned()),
        FittedLaw::Interp(i) => (None, None, Some(*i.provenance()), None),
    };
    LawInfo {
        schema_version: doc.schema_version,
        kind: doc.law.kind().into(),
        form,
        coefficients,
        domain,
        nonprivate_slice: domain.nonprivate,
        provenance,
        fit_metadata,
    }
}

// ---------------------------------------------------------------- baselines

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRequest {
    pub baselines: Vec<Baseline>,
    pub data: u64,
    pub delta: f64,
    pub epsilons: Vec<f64>,
    pub seq_len: f64,
    pub lattice_density: u32,
    pub savings: SavingsGrid,
}

pub fn baselines_report(req: &BaselineRequest, law: &FittedLaw) -> Result<BaselineComparison, CliError> {
    if req.baselines.is_empty() {
        return Err(CliError::invalid("config", "no baselines"));
    }
    for &e in &req.epsilons {
        positive("epsilons", e)?;
    }
    let options = PlannerOptions {
        lattice_density: req.lattice_density,
        seq_len: req.seq_len,
        ..PlannerOptions::default()
    };
    Ok(compare_baselines(&req.baselines, req.data, req.delta, &req.epsilons, law, &options, req.savings)?)
}
