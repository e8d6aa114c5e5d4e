//! HTTP JSON API under `/api/v1`.
//!
//! Handlers parse query parameters into the same request types the command
//! line uses, run the work on the blocking pool under a deadline, and
//! answer with the same JSON bytes the CLI would print.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use dpscale_core::accounting::BudgetAxis;
use dpscale_core::lawfit::LawDocument;
use dpscale_core::planner::{CancelFlag, SweepAxis, DEFAULT_LATTICE_DENSITY, DEFAULT_NEAR_OPTIMAL};
use dpscale_core::DEFAULT_SEQ_LEN;
use serde::Serialize;
use tower_http::cors::CorsLayer;

use crate::error::{CliError, ErrorBody};
use crate::formats::to_json;
use crate::reports::{
    calibrate, law_info, parse_budget_axis, parse_count, parse_sweep_axis, plan_with_cancel, sweep_report_with_cancel,
    vector_field_report,
    BatchingChoice, CalibrateRequest, LogGrid, PlanRequest, SweepRequest, VectorFieldRequest, DEFAULT_TOLERANCE,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub law: Option<LawDocument>,
    pub default_delta: f64,
    pub timeout: Duration,
    pub cors: bool,
}

#[derive(Debug)]
struct Shared {
    law: Option<Arc<LawDocument>>,
    default_delta: f64,
    timeout: Duration,
}

type AppState = Arc<Shared>;

pub fn router(config: ServiceConfig) -> Router {
    let state = Arc::new(Shared {
        law: config.law.map(Arc::new),
        default_delta: config.default_delta,
        timeout: config.timeout,
    });
    let api = Router::new()
        .route("/health", get(health))
        .route("/calibrate", get(calibrate_handler))
        .route("/plan", get(plan_handler))
        .route("/sweep", get(sweep_handler))
        .route("/vector-field", get(vector_field_handler))
        .route("/law", get(law_handler));
    let app = Router::new().nest("/api/v1", api).with_state(state);
    if config.cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(e: &CliError) -> Response {
    let status = match e {
        CliError::OutOfDomain { .. } | CliError::Numeric { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::BAD_REQUEST,
    };
    json(status, to_json(&e.body()))
}

fn plain_error(status: StatusCode, code: &str, message: &str, field: Option<&str>) -> Response {
    let body = ErrorBody { code: code.into(), message: message.into(), field: field.map(Into::into) };
    json(status, to_json(&body))
}

/// Run `work` on the blocking pool. Past the deadline the request gets a
/// 503 and the flag handed to `work` is set so the search stops early.
async fn run<T, F>(state: &AppState, work: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&CancelFlag) -> Result<T, CliError> + Send + 'static,
{
    let cancel = CancelFlag::new();
    let flag = cancel.clone();
    let task = tokio::task::spawn_blocking(move || work(&flag));
    match tokio::time::timeout(state.timeout, task).await {
        Ok(Ok(Ok(v))) => json(StatusCode::OK, to_json(&v)),
        Ok(Ok(Err(e))) => error_response(&e),
        Ok(Err(_)) => plain_error(StatusCode::INTERNAL_SERVER_ERROR, "internal", "request handler failed", None),
        Err(_) => {
            cancel.cancel();
            plain_error(StatusCode::SERVICE_UNAVAILABLE, "timeout", "request exceeded the time limit", None)
        }
    }
}

fn law_or_404(state: &AppState) -> Result<Arc<LawDocument>, Response> {
    state
        .law
        .clone()
        .ok_or_else(|| plain_error(StatusCode::NOT_FOUND, "law_not_loaded", "the service was started without a law", Some("law")))
}

/// Query parameters by name; each is consumed once and leftovers are
/// rejected so typos do not go unnoticed.
struct Params(BTreeMap<String, String>);

impl Params {
    fn new(query: Result<Query<Vec<(String, String)>>, QueryRejection>) -> Result<Self, CliError> {
        let Query(pairs) = query.map_err(|e| CliError::invalid("query", e.body_text()))?;
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            if map.contains_key(&k) {
                return Err(CliError::invalid(k, "given more than once"));
            }
            map.insert(k, v);
        }
        Ok(Self(map))
    }

    fn parse<T>(&mut self, name: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, CliError> {
        match self.0.remove(name) {
            None => Ok(None),
            Some(raw) => f(raw.trim()).map(Some).map_err(|m| CliError::invalid(name, m)),
        }
    }

    fn real(&mut self, name: &str) -> Result<Option<f64>, CliError> {
        self.parse(name, |s| s.parse::<f64>().map_err(|_| format!("not a number: {s:?}")))
    }

    fn count(&mut self, name: &str) -> Result<Option<u64>, CliError> {
        self.parse(name, parse_count)
    }

    fn int(&mut self, name: &str) -> Result<Option<i32>, CliError> {
        self.parse(name, |s| s.parse::<i32>().map_err(|_| format!("not an integer: {s:?}")))
    }

    fn required<T>(name: &str, v: Option<T>) -> Result<T, CliError> {
        v.ok_or_else(|| CliError::invalid(name, "required"))
    }

    /// ε, where `inf` (or absence) means non-private.
    fn epsilon(&mut self) -> Result<Option<f64>, CliError> {
        Ok(self.real("epsilon")?.filter(|&e| e != f64::INFINITY))
    }

    fn finish(self) -> Result<(), CliError> {
        match self.0.into_keys().next() {
            Some(k) => Err(CliError::invalid(k, "unknown parameter")),
            None => Ok(()),
        }
    }
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    law_loaded: bool,
}

async fn health(State(state): State<AppState>) -> Response {
    json(StatusCode::OK, to_json(&Health { status: "ok", law_loaded: state.law.is_some() }))
}

fn calibrate_request(p: &mut Params, default_delta: f64) -> Result<CalibrateRequest, CliError> {
    let req = CalibrateRequest {
        epsilon: Params::required("epsilon", p.real("epsilon")?)?,
        delta: p.real("delta")?.unwrap_or(default_delta),
        data: Params::required("data", p.count("data")?)?,
        batch: Params::required("batch", p.real("batch")?)?,
        steps: Params::required("steps", p.count("steps")?)?,
        batching: p.parse("batching", str::parse)?.unwrap_or(BatchingChoice::Both),
    };
    Ok(req)
}

async fn calibrate_handler(
    State(state): State<AppState>,
    query: Result<Query<Vec<(String, String)>>, QueryRejection>,
) -> Response {
    let parsed = Params::new(query).and_then(|mut p| {
        let r = calibrate_request(&mut p, state.default_delta)?;
        p.finish().map(|_| r)
    });
    match parsed {
        Ok(req) => run(&state, move |_| calibrate(&req)).await,
        Err(e) => error_response(&e),
    }
}

fn plan_request(p: &mut Params, default_delta: f64) -> Result<PlanRequest, CliError> {
    Ok(PlanRequest {
        compute: Params::required("compute", p.real("compute")?)?,
        epsilon: p.epsilon()?,
        delta: p.real("delta")?.unwrap_or(default_delta),
        data: Params::required("data", p.count("data")?)?,
        seq_len: p.real("seq_len")?.unwrap_or(DEFAULT_SEQ_LEN),
        lattice_density: p.parse("lattice_density", |s| s.parse::<u32>().map_err(|_| "not an integer".into()))?
            .unwrap_or(DEFAULT_LATTICE_DENSITY),
        near_optimal: p.real("near_optimal")?.unwrap_or(DEFAULT_NEAR_OPTIMAL),
    })
}

async fn plan_handler(
    State(state): State<AppState>,
    query: Result<Query<Vec<(String, String)>>, QueryRejection>,
) -> Response {
    let law = match law_or_404(&state) {
        Ok(l) => l,
        Err(r) => return r,
    };
    let parsed = Params::new(query).and_then(|mut p| {
        let r = plan_request(&mut p, state.default_delta)?;
        p.finish().map(|_| r)
    });
    match parsed {
        Ok(req) => run(&state, move |c| plan_with_cancel(&req, &law.law, Some(c))).await,
        Err(e) => error_response(&e),
    }
}

fn sweep_request(p: &mut Params, default_delta: f64) -> Result<SweepRequest, CliError> {
    let axis: SweepAxis = Params::required("axis", p.parse("axis", parse_sweep_axis)?)?;
    Ok(SweepRequest {
        axis,
        grid: LogGrid {
            from: Params::required("from", p.real("from")?)?,
            to: Params::required("to", p.real("to")?)?,
            points: p.parse("points", |s| s.parse::<usize>().map_err(|_| "not an integer".into()))?.unwrap_or(9),
        },
        compute: p.real("compute")?,
        epsilon: p.epsilon()?,
        delta: p.real("delta")?.unwrap_or(default_delta),
        data: p.count("data")?,
        seq_len: p.real("seq_len")?.unwrap_or(DEFAULT_SEQ_LEN),
        lattice_density: p.parse("lattice_density", |s| s.parse::<u32>().map_err(|_| "not an integer".into()))?
            .unwrap_or(DEFAULT_LATTICE_DENSITY),
        near_optimal: p.real("near_optimal")?.unwrap_or(DEFAULT_NEAR_OPTIMAL),
        tolerance: p.real("tolerance")?.unwrap_or(DEFAULT_TOLERANCE),
    })
}

/// Sweeps are capped so one request evaluates a bounded number of plans.
const MAX_SWEEP_POINTS: usize = 64;

async fn sweep_handler(
    State(state): State<AppState>,
    query: Result<Query<Vec<(String, String)>>, QueryRejection>,
) -> Response {
    let law = match law_or_404(&state) {
        Ok(l) => l,
        Err(r) => return r,
    };
    let parsed = Params::new(query).and_then(|mut p| {
        let r = sweep_request(&mut p, state.default_delta)?;
        if r.grid.points > MAX_SWEEP_POINTS {
            return Err(CliError::invalid("points", format!("at most {MAX_SWEEP_POINTS}")));
        }
        p.finish().map(|_| r)
    });
    match parsed {
        Ok(req) => run(&state, move |c| sweep_report_with_cancel(&req, &law.law, Some(c))).await,
        Err(e) => error_response(&e),
    }
}

/// Exponent ranges used when a request leaves them out.
pub fn default_exponents(axis: BudgetAxis) -> (i32, i32) {
    match axis {
        BudgetAxis::Privacy => (-2, 6),
        BudgetAxis::Compute => (10, 20),
        BudgetAxis::Data => (20, 30),
    }
}

fn vector_field_request(p: &mut Params, default_delta: f64) -> Result<VectorFieldRequest, CliError> {
    let x = Params::required("x", p.parse("x", parse_budget_axis)?)?;
    let y = Params::required("y", p.parse("y", parse_budget_axis)?)?;
    let (x0, x1) = default_exponents(x);
    let (y0, y1) = default_exponents(y);
    Ok(VectorFieldRequest {
        x,
        y,
        x_exponents: (p.int("x_from")?.unwrap_or(x0), p.int("x_to")?.unwrap_or(x1)),
        y_exponents: (p.int("y_from")?.unwrap_or(y0), p.int("y_to")?.unwrap_or(y1)),
        epsilon: p.real("epsilon")?.unwrap_or(4.0),
        batch: p.real("batch")?.unwrap_or(65536.0),
        data: p.real("data")?.unwrap_or(16_777_216.0),
        steps: p.count("steps")?.unwrap_or(16_000),
        delta: p.real("delta")?.unwrap_or(default_delta),
    })
}

async fn vector_field_handler(
    State(state): State<AppState>,
    query: Result<Query<Vec<(String, String)>>, QueryRejection>,
) -> Response {
    let parsed = Params::new(query).and_then(|mut p| {
        let r = vector_field_request(&mut p, state.default_delta)?;
        p.finish().map(|_| r)
    });
    match parsed {
        Ok(req) => run(&state, move |_| vector_field_report(&req)).await,
        Err(e) => error_response(&e),
    }
}

async fn law_handler(State(state): State<AppState>) -> Response {
    match law_or_404(&state) {
        Ok(law) => json(StatusCode::OK, to_json(&law_info(&law))),
        Err(r) => r,
    }
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(config)).await
}
