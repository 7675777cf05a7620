//! CSV and JSON artifacts. Every file carries the tool version and the
//! resolved configuration so it can be traced back to the run that made it.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::bounds::FerCurve;
use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_HEADER: &str = "scheme,t,F_t,ldb,ldb_valid,ub,mc_fer,mc_ci,d_min,chi,n";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

pub fn curves_to_csv(curves: &[FerCurve], config: &ExperimentConfig) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "# nfv-fer {VERSION}").unwrap();
    writeln!(out, "# config: {}", config.to_json()?).unwrap();
    for curve in curves {
        if let Some(mc) = &curve.mc {
            let meta = serde_json::to_string(mc).map_err(|e| Error::Serialize(e.to_string()))?;
            writeln!(out, "# mc {}: {meta}", curve.metadata.scheme).unwrap();
        }
    }
    writeln!(out, "{CSV_HEADER}").unwrap();
    for curve in curves {
        let m = &curve.metadata;
        for p in &curve.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                m.scheme,
                format_f64(p.t),
                format_f64(p.f_t),
                optional(p.ldb.value()),
                p.ldb.is_valid(),
                optional(p.ub),
                optional(p.mc.as_ref().map(|m| m.fer)),
                optional(p.mc.as_ref().map(|m| m.ci_halfwidth)),
                m.d_min,
                m.chi,
                m.n,
            )
            .unwrap();
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: T,
}

/// Pretty JSON wrapping `body` with version and config.
pub fn to_json_document<T: Serialize>(config: &ExperimentConfig, body: T) -> Result<String> {
    let doc = Document {
        tool: "nfv-fer",
        version: VERSION,
        config,
        body,
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct CurvesBody<'a> {
    curves: &'a [FerCurve],
}

pub fn curves_to_json(curves: &[FerCurve], config: &ExperimentConfig) -> Result<String> {
    to_json_document(config, CurvesBody { curves })
}

pub fn render_curves(curves: &[FerCurve], config: &ExperimentConfig, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => curves_to_csv(curves, config),
        OutputFormat::Json => curves_to_json(curves, config),
    }
}

/// Writes `contents`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
