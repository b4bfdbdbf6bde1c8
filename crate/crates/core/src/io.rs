//! Artifact serialization: JSON documents with embedded provenance and
//! CSV emission with fixed float formatting.
//!
//! CSVs are comma-separated with a header row, LF line endings, and floats
//! printed at 17 significant digits. JSON artifacts embed the resolved
//! configuration and a `generated_at` timestamp, which is the only
//! nondeterministic field.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::mdp_core::{AcoeSolution, FiniteModel};

/// 17 significant digits: lossless round-trip for f64.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<P: AsRef<Path>>(path: P, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Serialize `payload` with the resolved configuration and a timestamp
/// merged into the top-level object.
pub fn write_json_artifact<P: AsRef<Path>, T: Serialize>(
    path: P,
    payload: &T,
    config: &BTreeMap<String, String>,
) -> Result<()> {
    let mut value = serde_json::to_value(payload)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Config("JSON artifacts must be objects".into()))?;
    obj.insert(
        "config".into(),
        serde_json::to_value(config)?,
    );
    obj.insert("generated_at".into(), Value::from(unix_timestamp()));
    let text = serde_json::to_string_pretty(&value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn parse_finite_model_json(text: &str) -> Result<FiniteModel> {
    let model: FiniteModel = serde_json::from_str(text)?;
    model.validate()?;
    Ok(model)
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn read_finite_model<P: AsRef<Path>>(path: P) -> Result<FiniteModel> {
    parse_finite_model_json(&fs::read_to_string(&path)?)
}

pub fn read_acoe_solution<P: AsRef<Path>>(path: P) -> Result<AcoeSolution> {
    let text = fs::read_to_string(&path)?;
    Ok(serde_json::from_str(&text)?)
}
