//! Level-3 surrogates: CSV lookup tables, URL-fetched data and the
//! time-average objective over a sampled trajectory.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use crate::engine::{format_scalar, Solver, StageContext, StageError};
use crate::model::InputValue;
use crate::provenance::{hash_artifact, Digest};

pub const MAX_REDIRECTS: u32 = 5;
pub const FETCH_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("malformed CSV at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },
    #[error("x values must be strictly increasing (line {line})")]
    NonMonotonicX { line: u64 },
    #[error("at least two data rows are required, found {0}")]
    TooFewRows(usize),
    #[error("{x} is outside the table range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("samples cover [{first}, {last}] but [0, {t_e}] was requested")]
    CoverageError { first: f64, last: f64, t_e: f64 },
    #[error("averaging horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum FetchError {
    #[error("invalid URL {0:?}")]
    InvalidUrl(String),
    #[error("unsupported URL scheme {0:?} (expected http, https or file)")]
    UnsupportedScheme(String),
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("HTTP status {0}")]
    HttpStatus(u16),
}

struct NumericCsv {
    header: Option<Vec<String>>,
    rows: Vec<(u64, Vec<f64>)>,
}

/// Parse a numeric CSV with an optional single header line.
fn parse_numeric_csv(bytes: &[u8], columns: usize, exact: bool) -> Result<NumericCsv, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut out = NumericCsv {
        header: None,
        rows: Vec::new(),
    };
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::MalformedCsv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(idx as u64 + 1);
        let bad_width = if exact {
            record.len() != columns
        } else {
            record.len() < columns
        };
        if bad_width {
            return Err(DataError::MalformedCsv {
                line,
                message: format!("expected {columns} columns, found {}", record.len()),
            });
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(DataError::MalformedCsv {
                        line,
                        message: "non-finite value".into(),
                    });
                }
                out.rows.push((line, values));
            }
            Err(_) if idx == 0 => out.header = Some(record.iter().map(str::to_string).collect()),
            Err(e) => {
                return Err(DataError::MalformedCsv {
                    line,
                    message: format!("not a number: {e}"),
                })
            }
        }
    }
    Ok(out)
}

fn strictly_increasing(rows: &[(u64, f64, f64)]) -> Result<(), DataError> {
    for w in rows.windows(2) {
        if w[1].1 <= w[0].1 {
            return Err(DataError::NonMonotonicX { line: w[1].0 });
        }
    }
    if rows.len() < 2 {
        return Err(DataError::TooFewRows(rows.len()));
    }
    Ok(())
}

/// Piecewise-linear lookup table over strictly increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    knots: Vec<(f64, f64)>,
    /// Column names from the header line, if there was one.
    pub columns: Option<(String, String)>,
}

impl LookupTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, DataError> {
        let rows: Vec<_> = knots
            .iter()
            .enumerate()
            .map(|(i, k)| (i as u64 + 1, k.0, k.1))
            .collect();
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(DataError::MalformedCsv {
                line: 0,
                message: "non-finite value".into(),
            });
        }
        strictly_increasing(&rows)?;
        Ok(LookupTable { knots, columns: None })
    }

    pub fn with_columns(mut self, x: &str, y: &str) -> Self {
        self.columns = Some((x.to_string(), y.to_string()));
        self
    }

    /// Two numeric columns, `,` separated, optional header line, LF or CRLF.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, DataError> {
        let csv = parse_numeric_csv(bytes, 2, true)?;
        let rows: Vec<_> = csv.rows.iter().map(|(l, v)| (*l, v[0], v[1])).collect();
        strictly_increasing(&rows)?;
        Ok(LookupTable {
            knots: rows.iter().map(|r| (r.1, r.2)).collect(),
            columns: csv.header.map(|h| (h[0].clone(), h[1].clone())),
        })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    /// Canonical CSV, 17 significant digits, header kept.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some((x, y)) = &self.columns {
            let _ = writeln!(out, "{x},{y}");
        }
        for (x, y) in &self.knots {
            let _ = writeln!(out, "{x:.16e},{y:.16e}");
        }
        out
    }
}

pub fn load_table(path: &Path) -> Result<LookupTable, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    LookupTable::from_csv(&bytes)
}

/// Piecewise-linear interpolation, exact at knots, no extrapolation.
pub fn interpolate(table: &LookupTable, x: f64) -> Result<f64, DataError> {
    let (lo, hi) = table.range();
    if !(x >= lo && x <= hi) {
        return Err(DataError::OutOfRange { x, lo, hi });
    }
    let knots = &table.knots;
    let idx = knots.partition_point(|k| k.0 < x);
    if knots[idx].0 == x {
        return Ok(knots[idx].1);
    }
    let (x0, y0) = knots[idx - 1];
    let (x1, y1) = knots[idx];
    Ok(y0 + (x - x0) * (y1 - y0) / (x1 - x0))
}

/// Sampled trajectory `(t, X)` with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<(f64, f64)>,
}

impl TimeSeries {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, DataError> {
        let table = LookupTable::new(samples)?;
        Ok(TimeSeries { samples: table.knots })
    }

    /// Read `t` from the first column and `X` from `value_column` (0-based).
    pub fn from_csv(bytes: &[u8], value_column: usize) -> Result<Self, DataError> {
        let csv = parse_numeric_csv(bytes, value_column + 1, false)?;
        let rows: Vec<_> = csv.rows.iter().map(|(l, v)| (*l, v[0], v[value_column])).collect();
        strictly_increasing(&rows)?;
        Ok(TimeSeries {
            samples: rows.iter().map(|r| (r.1, r.2)).collect(),
        })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }
}

/// Time average `(1/t_e) ∫_0^{t_e} X(t) dt` by the trapezoidal rule over the
/// samples, restricted to `[0, t_e]`.
pub fn time_average_objective(series: &TimeSeries, t_e: f64) -> Result<f64, DataError> {
    if !(t_e > 0.0 && t_e.is_finite()) {
        return Err(DataError::InvalidHorizon(t_e));
    }
    let s = &series.samples;
    let (first, last) = (s[0].0, s[s.len() - 1].0);
    if first > 0.0 || last < t_e {
        return Err(DataError::CoverageError { first, last, t_e });
    }
    let at = |t: f64, (t0, x0): (f64, f64), (t1, x1): (f64, f64)| x0 + (t - t0) * (x1 - x0) / (t1 - t0);
    let mut integral = 0.0;
    for w in s.windows(2) {
        let (a, b) = (w[0], w[1]);
        let lo = a.0.max(0.0);
        let hi = b.0.min(t_e);
        if hi <= lo {
            continue;
        }
        let xl = if lo == a.0 { a.1 } else { at(lo, a, b) };
        let xh = if hi == b.0 { b.1 } else { at(hi, a, b) };
        integral += 0.5 * (xl + xh) * (hi - lo);
    }
    Ok(integral / t_e)
}

/// Fetch `http`, `https` or `file` URLs. Returns the body and its SHA-256.
pub fn fetch_url(url: &str) -> Result<(Vec<u8>, Digest), FetchError> {
    let parsed = url::Url::parse(url).map_err(|_| FetchError::InvalidUrl(url.to_string()))?;
    let body = match parsed.scheme() {
        "file" => {
            let path = parsed
                .to_file_path()
                .map_err(|_| FetchError::InvalidUrl(url.to_string()))?;
            std::fs::read(&path).map_err(|e| FetchError::TransportFailure(format!("{}: {e}", path.display())))?
        }
        "http" | "https" => fetch_http(url)?,
        other => return Err(FetchError::UnsupportedScheme(other.to_string())),
    };
    let digest = hash_artifact(&body);
    Ok((body, digest))
}

fn fetch_http(url: &str) -> Result<Vec<u8>, FetchError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .max_redirects(MAX_REDIRECTS)
        .timeout_global(Some(FETCH_TIMEOUT))
        .http_status_as_error(false)
        .build()
        .into();
    let mut response = agent
        .get(url)
        .call()
        .map_err(|e| FetchError::TransportFailure(e.to_string()))?;
    let status = response.status().as_u16();
    if status >= 400 {
        return Err(FetchError::HttpStatus(status));
    }
    let headers = response.headers();
    let declared: Option<usize> = if headers.contains_key("content-encoding") {
        None
    } else {
        headers
            .get("content-length")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok())
    };
    let mut body = Vec::new();
    response
        .body_mut()
        .as_reader()
        .read_to_end(&mut body)
        .map_err(|e| FetchError::TransportFailure(e.to_string()))?;
    if let Some(n) = declared {
        if n != body.len() {
            return Err(FetchError::TransportFailure(format!(
                "Content-Length {n} but received {} bytes",
                body.len()
            )));
        }
    }
    Ok(body)
}

fn stage_err(e: impl std::fmt::Display) -> StageError {
    StageError::new(e.to_string())
}

/// Execute a table realization.
///
/// Table and time-series outputs receive the canonical table; scalar outputs
/// receive the table interpolated at the abscissa input. The abscissa is the
/// input port named in the table header, otherwise the first scalar input. A
/// header also pins the scalar output to the port named by its second column.
pub fn run_table_surrogate(ctx: &mut StageContext<'_>, source: &[u8]) -> Result<(), StageError> {
    let table = LookupTable::from_csv(source).map_err(stage_err)?;
    let manifest = ctx.manifest;
    let abscissa = table
        .columns
        .as_ref()
        .and_then(|(x, _)| manifest.input(x))
        .or_else(|| manifest.inputs.iter().find(|p| p.semantic_type == "scalar"))
        .map(|p| p.name.clone());
    let y_column = table.columns.as_ref().map(|(_, y)| y.clone());

    for port in &manifest.outputs {
        match port.semantic_type.as_str() {
            "table" | "time-series" => {
                ctx.write_output(&port.name, "csv", table.to_csv().as_bytes())?;
            }
            "scalar" => {
                if let Some(y) = &y_column {
                    if manifest.output(y).is_some() && *y != port.name {
                        continue;
                    }
                }
                let x = match &abscissa {
                    Some(name) => ctx.number(name)?,
                    None => None,
                };
                match x {
                    Some(x) => {
                        let y = interpolate(&table, x).map_err(stage_err)?;
                        ctx.write_output(&port.name, "txt", format_scalar(y).as_bytes())?;
                    }
                    None if port.optional => {}
                    None => {
                        return Err(StageError::new(format!(
                            "table realization needs an abscissa input for output {:?}",
                            port.name
                        )))
                    }
                }
            }
            other => {
                return Err(StageError::new(format!(
                    "table realization cannot produce {other:?} port {:?}",
                    port.name
                )))
            }
        }
    }
    Ok(())
}

/// Built-in `builtin:time-average`: averages the `series` input over
/// `[0, t_e]` (default: the whole series) into the `objective` output.
pub struct TimeAverageSolver;

impl Solver for TimeAverageSolver {
    fn run(&self, ctx: &mut StageContext<'_>) -> Result<(), StageError> {
        let bytes = match ctx.input_path("series") {
            Some(path) => std::fs::read(path)?,
            None => match ctx.value("series")? {
                Some(InputValue::Text(path)) => std::fs::read(path)?,
                _ => return Err(StageError::new("time-average needs a `series` input")),
            },
        };
        let series = TimeSeries::from_csv(&bytes, 1).map_err(stage_err)?;
        let t_e = match ctx.number("t_e")? {
            Some(t) => t,
            None => series.samples.last().map(|s| s.0).unwrap_or_default(),
        };
        let zeta = time_average_objective(&series, t_e).map_err(stage_err)?;
        ctx.write_output("objective", "txt", format_scalar(zeta).as_bytes())?;
        Ok(())
    }
}
