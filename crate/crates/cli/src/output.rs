//! Result files: a provenance header, CSV or JSON body, atomic replacement.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};
use tempfile::NamedTempFile;

use crate::config::{RunConfig, VERSION};
use crate::error::CliResult;

#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub version: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn of(cfg: &RunConfig) -> Self {
        Meta {
            version: VERSION,
            config_hash: cfg.hash(),
            seed: cfg.seed,
        }
    }
}

/// Writes through a temporary file in the target directory, so readers see
/// either the old file or the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// CSV with a `#` comment line carrying version, config hash and seed.
pub fn csv_bytes(
    meta: &Meta,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> CliResult<Vec<u8>> {
    let mut out = format!(
        "# qwalk {} config {} seed {}\n",
        meta.version, meta.config_hash, meta.seed
    )
    .into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    Ok(out)
}

/// Pretty JSON object with a leading `meta` field.
pub fn json_bytes(meta: &Meta, body: Value) -> CliResult<Vec<u8>> {
    let mut obj = Map::new();
    obj.insert("meta".into(), serde_json::to_value(meta)?);
    match body {
        Value::Object(m) => obj.extend(m),
        other => {
            obj.insert("result".into(), other);
        }
    }
    let mut bytes = serde_json::to_vec_pretty(&Value::Object(obj))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn num(v: f64) -> String {
    v.to_string()
}
