//! File formats: metadata-headed CSV, 16-bit PGM with a `.meta` sidecar, and
//! JSON-lines validation reports.
//!
//! Every writer renders into memory first and then replaces the target via a
//! temporary file and rename, so a failed command never leaves a truncated
//! file behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::error::{QevError, Result};
use crate::oracle::ValidationReport;
use crate::wigner::Grid2D;

/// First line of every CSV and `.meta` file.
pub const FORMAT_TAG: &str = "# qev v1";

/// C `printf("%.12e")` rendering: 12 mantissa digits, signed exponent of at
/// least two digits.
pub fn fmt_e12(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

/// Ordered `key=value` metadata rendered as `# key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let value = value.to_string().replace(['\n', '\r'], " ");
        self.entries.push((key.into(), value));
        self
    }

    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.push(key, fmt_e12(value))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Format tag plus one `# key=value` line per entry.
    pub fn render(&self) -> String {
        let mut out = String::from(FORMAT_TAG);
        out.push('\n');
        for (k, v) in &self.entries {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }
}

/// Write `contents` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    fs::write(&tmp, contents).and_then(|_| fs::rename(&tmp, path)).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        QevError::Io(e).context(format!("writing {}", path.display()))
    })
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// CSV text of a slice: metadata, then `u,v,W` rows with `v` outermost.
pub fn grid_csv(grid: &Grid2D, meta: &Metadata) -> String {
    let (cu, cv) = grid.plane.axes();
    let mut out = meta.render();
    let _ = writeln!(out, "{},{},W", cu.name(), cv.name());
    for iv in 0..grid.axis_v.count {
        let v = fmt_e12(grid.axis_v.coord(iv));
        for iu in 0..grid.axis_u.count {
            let _ = writeln!(out, "{},{},{}", fmt_e12(grid.axis_u.coord(iu)), v, fmt_e12(grid.get(iu, iv)));
        }
    }
    out
}

pub fn write_grid_csv(path: &Path, grid: &Grid2D, meta: &Metadata) -> Result<()> {
    write_atomic(path, grid_csv(grid, meta).as_bytes())
}

/// Parse a slice CSV written by [`grid_csv`] back into `(u, v, W)` triples.
pub fn read_grid_csv(text: &str) -> Result<Vec<[f64; 3]>> {
    let mut lines = text.lines();
    if lines.next() != Some(FORMAT_TAG) {
        return Err(QevError::Config("missing format tag".into()));
    }
    let mut out = Vec::new();
    let mut header_seen = false;
    for line in lines {
        if line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let mut row = [0.0; 3];
        let mut fields = line.split(',');
        for slot in &mut row {
            let f = fields.next().ok_or_else(|| QevError::Config(format!("short row: {line}")))?;
            *slot = f.parse().map_err(|_| QevError::Config(format!("bad number {f:?}")))?;
        }
        out.push(row);
    }
    Ok(out)
}

/// Binary P5 PGM, 16-bit big-endian, min-max normalized. The top image row
/// is the largest `v`.
pub fn grid_pgm(grid: &Grid2D) -> Vec<u8> {
    let (nu, nv) = (grid.axis_u.count, grid.axis_v.count);
    let (lo, hi) = grid.min_max();
    let span = hi - lo;
    let mut out = format!("P5\n{nu} {nv}\n65535\n").into_bytes();
    out.reserve(2 * nu * nv);
    for iv in (0..nv).rev() {
        for iu in 0..nu {
            let level = if span > 0.0 { ((grid.get(iu, iv) - lo) / span * 65535.0).round() as u16 } else { 0 };
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    out
}

/// `path` with its extension replaced by `meta`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

/// Write the PGM and its `.meta` sidecar carrying `min`/`max`.
pub fn write_grid_pgm(path: &Path, grid: &Grid2D, meta: &Metadata) -> Result<()> {
    let (lo, hi) = grid.min_max();
    let mut m = meta.clone();
    m.push_f64("min", lo).push_f64("max", hi).push("rows", "top=v_max");
    write_atomic(path, &grid_pgm(grid))?;
    write_atomic(&meta_path(path), m.render().as_bytes())
}

/// JSON-lines rendering: a `header` record, one `point` record per sample,
/// then a `summary` record.
pub fn validation_jsonl(report: &ValidationReport) -> Result<String> {
    let mut out = String::new();
    let header = json!({
        "record": "header",
        "format": "qev v1",
        "params": report.params,
        "seed": report.seed,
        "tol": report.tol,
        "abs_floor": report.abs_floor,
        "k_num": report.k_num,
        "k_ratio": report.k_ratio,
        "n_num_ratio": report.n_num_ratio,
        "quadrature": report.quadrature,
    });
    push_line(&mut out, &header)?;
    for r in &report.records {
        push_line(
            &mut out,
            &json!({
                "record": "point",
                "index": r.index,
                "x": r.point.x,
                "y": r.point.y,
                "px": r.point.px,
                "py": r.point.py,
                "closed_form": r.closed_value,
                "oracle": r.oracle_value,
                "abs_err": r.abs_err,
                "rel_err": finite_or_null(r.rel_err),
                "verdict": r.verdict,
            }),
        )?;
    }
    push_line(
        &mut out,
        &json!({
            "record": "summary",
            "n_match": report.summary.n_match,
            "n_mismatch": report.summary.n_mismatch,
            "max_rel_err": finite_or_null(report.summary.max_rel_err),
            "max_abs_err": report.summary.max_abs_err,
        }),
    )?;
    Ok(out)
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn push_line<T: Serialize>(out: &mut String, v: &T) -> Result<()> {
    let line = serde_json::to_string(v).map_err(|e| QevError::Numeric(format!("serializing report: {e}")))?;
    out.push_str(&line);
    out.push('\n');
    Ok(())
}

pub fn write_validation(path: &Path, report: &ValidationReport) -> Result<()> {
    write_atomic(path, validation_jsonl(report)?.as_bytes())
}
