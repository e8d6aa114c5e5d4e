//! File formats: grid CSV, JSON documents and plot CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use dpscale_core::grid::{Measurement, MeasurementGrid};
use dpscale_core::lawfit::{FittedLaw, LawDocument, ParametricLaw, LAW_SCHEMA_VERSION};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

pub const GRID_HEADER: [&str; 5] = ["model_params", "iterations", "noise_batch_ratio", "learning_rate", "loss"];

/// Pretty JSON with a trailing newline. Floats print in shortest
/// round-trip form, so re-parsing is exact.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

/// Write to `path`, or standard output when `None`.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, contents).map_err(|source| CliError::Io { path: p.into(), source }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}

/// Parse the measurement CSV. Integers may be written in scientific
/// notation as long as they are whole.
pub fn parse_grid_csv(text: &str, path: &Path) -> Result<Vec<Measurement>, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| CliError::format(path, e))?.clone();
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(GRID_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::format(path, format!("missing column {name}")))?;
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::format(path, format!("row {row}: {e}")))?;
        let num = |k: usize| -> Result<f64, CliError> {
            let raw = record.get(cols[k]).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| CliError::format(path, format!("row {row}: {} is not a number: {raw:?}", GRID_HEADER[k])))
        };
        let whole = |k: usize| -> Result<u64, CliError> {
            let v = num(k)?;
            if v >= 1.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
                Ok(v as u64)
            } else {
                Err(CliError::format(path, format!("row {row}: {} must be a positive integer", GRID_HEADER[k])))
            }
        };
        rows.push(Measurement {
            model_params: whole(0)?,
            iterations: whole(1)?,
            noise_batch_ratio: num(2)?,
            learning_rate: num(3)?,
            loss: num(4)?,
        });
    }
    Ok(rows)
}

pub fn grid_csv(rows: &[Measurement]) -> String {
    let mut out = GRID_HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model_params, r.iterations, r.noise_batch_ratio, r.learning_rate, r.loss
        ));
    }
    out
}

/// A grid from either format: JSON documents start with `{`, anything
/// else is read as the measurement CSV.
pub fn read_grid(path: &Path) -> Result<MeasurementGrid, CliError> {
    let text = read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
    } else {
        Ok(MeasurementGrid::load(&parse_grid_csv(&text, path)?)?)
    }
}

/// `builtin:l1`, `builtin:l2` or a path to a law document.
pub fn load_law(source: &str) -> Result<LawDocument, CliError> {
    let builtin = match source {
        "builtin:l1" => Some(ParametricLaw::l1_fixture()),
        "builtin:l2" => Some(ParametricLaw::l2_fixture()),
        _ => None,
    };
    if let Some(law) = builtin {
        return Ok(LawDocument::new(FittedLaw::Parametric(law)));
    }
    let path = Path::new(source);
    let doc: LawDocument = read_json(path)?;
    if doc.schema_version != LAW_SCHEMA_VERSION {
        return Err(CliError::format(
            path,
            format!("schema_version {} unsupported (expected {LAW_SCHEMA_VERSION})", doc.schema_version),
        ));
    }
    Ok(doc)
}

/// One plot row: `x`, `value` and an optional band.
pub type PlotRow = (f64, f64, Option<(f64, f64)>);

/// Plot CSV with header `x,value` or `x,value,band_min,band_max`.
pub fn plot_csv(rows: &[PlotRow]) -> String {
    let banded = rows.iter().any(|r| r.2.is_some());
    let mut out = String::from(if banded { "x,value,band_min,band_max\n" } else { "x,value\n" });
    for &(x, v, band) in rows {
        match (banded, band) {
            (true, Some((lo, hi))) => out.push_str(&format!("{x:e},{v:e},{lo:e},{hi:e}\n")),
            (true, None) => out.push_str(&format!("{x:e},{v:e},,\n")),
            (false, _) => out.push_str(&format!("{x:e},{v:e}\n")),
        }
    }
    out
}
