//! Shared helpers: running the binary, calling the router, golden files.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dpscale_cli::formats::load_law;
use dpscale_cli::service::{router, ServiceConfig, DEFAULT_TIMEOUT};
use http_body_util::BodyExt;
use tower::ServiceExt;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compare against `tests/golden/<name>`; with `UPDATE_GOLDEN=1` the file
/// is rewritten instead.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(golden_dir()).map_err(|e| e.to_string())?;
        fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let want = fs::read_to_string(&path)
        .map_err(|e| format!("{}: {e} (rerun with UPDATE_GOLDEN=1 to create it)", path.display()))?;
    if want == actual {
        return Ok(());
    }
    let line = want.lines().zip(actual.lines()).position(|(a, b)| a != b).unwrap_or(want.lines().count().min(actual.lines().count()));
    Err(format!(
        "{name} differs from golden at line {}:\n  want: {:?}\n  got:  {:?}",
        line + 1,
        want.lines().nth(line).unwrap_or("<eof>"),
        actual.lines().nth(line).unwrap_or("<eof>")
    ))
}

pub fn assert_golden(name: &str, actual: &str) {
    if let Err(e) = check_golden(name, actual) {
        panic!("{e}");
    }
}

pub fn dpscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpscale"))
        .args(args)
        .env_remove("DPSCALE_DELTA")
        .env_remove("DPSCALE_WORKSPACE")
        .env_remove("DPSCALE_PORT")
        .output()
        .expect("run dpscale")
}

/// Standard output of a successful run.
pub fn dpscale_ok(args: &[&str]) -> Result<String, String> {
    let out = dpscale(args);
    if out.status.success() {
        String::from_utf8(out.stdout).map_err(|e| e.to_string())
    } else {
        Err(format!("dpscale {args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

pub fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn config(law: Option<&str>) -> ServiceConfig {
    ServiceConfig {
        law: law.map(|l| load_law(l).unwrap()),
        default_delta: 1e-8,
        timeout: DEFAULT_TIMEOUT,
        cors: false,
    }
}

pub fn app(law: Option<&str>) -> Router {
    router(config(law))
}

pub fn app_with_timeout(law: &str, timeout: Duration) -> Router {
    router(ServiceConfig { timeout, ..config(Some(law)) })
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, String) {
    let req = Request::builder().uri(uri).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

/// Small, fast arguments shared by the golden cases.
pub const PLAN_ARGS: &[&str] =
    &["plan", "--law", "builtin:l2", "--compute", "1e19", "--epsilon", "4", "--data", "1e7", "--lattice-density", "3"];
pub const PLAN_QUERY: &str = "/api/v1/plan?compute=1e19&epsilon=4&data=1e7&lattice_density=3";

/// Every pinned command-line output, produced by running the pipeline and
/// report commands in a scratch directory.
pub fn cli_outputs() -> Result<Vec<(String, String)>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let mut out = Vec::new();
    let mut file = |name: &str, path: &str| out.push((name.to_string(), read(Path::new(path))));

    dpscale_ok(&[
        "synth", "--law", "builtin:l2", "--model-params", "4.5e6,4.1e7,3.35e8", "--iterations", "1000:8000:1000",
        "--nbr", "0,1e-6,1e-4", "--noise-sd", "0.01", "--seed", "7", "-o", &p("raw.csv"),
    ])?;
    file("synth_grid.csv", &p("raw.csv"));
    dpscale_ok(&["clean", "--input", &p("raw.csv"), "--window", "3", "-o", &p("clean.json")])?;
    file("clean_grid.json", &p("clean.json"));
    dpscale_ok(&[
        "extrapolate", "--input", &p("clean.json"), "--to", "16000,32000", "--fit-range", "2000:8000", "--fits",
        &p("fits.json"), "-o", &p("extrapolated.json"),
    ])?;
    file("extrapolated_grid.json", &p("extrapolated.json"));
    file("extrapolate_fits.json", &p("fits.json"));
    dpscale_ok(&["fit-interp", "--input", &p("extrapolated.json"), "-o", &p("interp.json")])?;
    file("law_interp.json", &p("interp.json"));
    dpscale_ok(&["fit-parametric", "--input", &p("raw.csv"), "--no-filters", "--starts", "4", "-o", &p("param.json")])?;
    file("law_parametric.json", &p("param.json"));

    let sweep_dir = p("plots");
    let reports: Vec<(&str, Vec<&str>)> = vec![
        ("calibrate.json", vec!["calibrate", "--epsilon", "4", "--data", "1e7", "--batch", "4096", "--steps", "1000"]),
        (
            "calibrate_poisson.json",
            vec!["calibrate", "--epsilon", "1", "--data", "1e6", "--batch", "1024", "--steps", "500", "--batching", "poisson"],
        ),
        ("plan.json", PLAN_ARGS.to_vec()),
        (
            "plan_table.csv",
            vec![
                "plan", "--law", "builtin:l2", "--compute", "1e19", "--epsilon", "1,4,inf", "--data", "1e7,1e8",
                "--lattice-density", "3", "--format", "table",
            ],
        ),
        (
            "sweep.json",
            vec![
                "sweep", "--law", "builtin:l2", "--axis", "compute", "--from", "1e16", "--to", "1e22", "--points", "4",
                "--epsilon", "4", "--data", "1e7", "--lattice-density", "2", "--plot-dir", &sweep_dir,
            ],
        ),
        (
            "vector_field.json",
            vec!["vector-field", "--x", "privacy", "--y", "compute", "--x-exponents", "0:2", "--y-exponents", "12:13"],
        ),
        (
            "baselines.json",
            vec![
                "baselines", "--law", "builtin:l2", "--epsilons", "1,4", "--lattice-density", "2", "--savings-density",
                "2", "--savings-decades", "1",
            ],
        ),
        ("law_info.json", vec!["law", "--law", "builtin:l1"]),
    ];
    for (name, args) in reports {
        out.push((name.to_string(), dpscale_ok(&args)?));
    }
    for series in ["loss", "model_params", "batch_size", "iterations", "token_model_ratio"] {
        let name = format!("{series}.csv");
        out.push((format!("sweep_plot_{name}"), read(&Path::new(&sweep_dir).join(&name))));
    }
    Ok(out)
}

/// Every pinned API response: `(name, status, body)`.
pub async fn api_outputs() -> Vec<(String, StatusCode, String)> {
    let with_law = app(Some("builtin:l2"));
    let without = app(None);
    let cases: Vec<(&str, &Router, &str)> = vec![
        ("health", &with_law, "/api/v1/health"),
        ("health_no_law", &without, "/api/v1/health"),
        ("calibrate", &with_law, "/api/v1/calibrate?epsilon=4&data=1e7&batch=4096&steps=1000"),
        ("plan", &with_law, PLAN_QUERY),
        ("plan_nonprivate", &with_law, "/api/v1/plan?compute=1e19&epsilon=inf&data=1e7&lattice_density=3"),
        ("sweep", &with_law, "/api/v1/sweep?axis=privacy&from=1&to=16&points=3&compute=1e19&data=1e7&lattice_density=2"),
        ("vector_field", &with_law, "/api/v1/vector-field?x=data&y=privacy&x_from=20&x_to=21&y_from=0&y_to=1"),
        ("law", &with_law, "/api/v1/law"),
        ("error_bad_epsilon", &with_law, "/api/v1/plan?compute=1e19&epsilon=abc&data=1e7"),
        ("error_missing_data", &with_law, "/api/v1/plan?compute=1e19&epsilon=4"),
        ("error_unknown_param", &with_law, "/api/v1/calibrate?epsilon=4&data=1e7&batch=4096&steps=1000&epsilnn=2"),
        ("error_unattainable", &with_law, "/api/v1/calibrate?epsilon=1e-9&data=10&batch=5&steps=100000&batching=deterministic"),
        ("error_out_of_domain", &with_law, "/api/v1/plan?compute=1e21&epsilon=0.25&data=1e5&lattice_density=2"),
        ("error_no_law", &without, "/api/v1/plan?compute=1e19&epsilon=4&data=1e7"),
    ];
    let mut out = Vec::new();
    for (name, app, uri) in cases {
        let (status, body) = get(app, uri).await;
        out.push((format!("api_{name}.json"), status, body));
    }
    out
}

/// Golden text for an API case: status line, then the body.
pub fn api_golden_text(status: StatusCode, body: &str) -> String {
    format!("HTTP {}\n{body}", status.as_u16())
}
