//! Artifact emission: schema-tagged CSV files and JSON summaries, written
//! atomically, with a config hash embedded in every filename.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Twelve hex chars of the SHA-256 of the effective config's canonical JSON.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

/// Write-temp-then-rename so partially written artifacts never appear.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// CSV with a `# schema:` comment line, RFC-4180 quoting, LF endings.
pub struct CsvArtifact {
    schema: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvArtifact {
    pub fn new(schema: &'static str, header: &[&str]) -> Self {
        CsvArtifact {
            schema,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, fields: Vec<String>) {
        debug_assert_eq!(fields.len(), self.header.len());
        self.rows.push(fields);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "# schema: {}", self.schema)?;
        {
            let mut writer = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut buf);
            writer
                .write_record(&self.header)
                .map_err(|e| crate::error::CliError::Config(format!("csv write: {e}")))?;
            for row in &self.rows {
                writer
                    .write_record(row)
                    .map_err(|e| crate::error::CliError::Config(format!("csv write: {e}")))?;
            }
            writer
                .flush()
                .map_err(|e| crate::error::CliError::Config(format!("csv write: {e}")))?;
        }
        write_atomic(path, &buf)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| crate::error::CliError::Config(format!("json write: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn artifact_path(dir: &Path, stem: &str, hash: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_{hash}.{ext}"))
}

/// Stable float field: f64 Display is the shortest round-trip form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len().max(1) as f64).sqrt()
}
