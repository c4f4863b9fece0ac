//! Output directory handling: CSV files with row counts and SHA-256
//! digests, and the run manifest that lists them.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::spec::ExperimentSpec;

/// Formats a real with the shortest representation that parses back to the
/// same value; non-finite and missing values become empty fields.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

pub fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    /// Data rows, header excluded.
    pub rows: u64,
    pub sha256: String,
}

/// A CSV file being written: LF line endings, header first.
pub struct CsvFile {
    name: String,
    path: PathBuf,
    writer: csv::Writer<fs::File>,
    rows: u64,
}

impl CsvFile {
    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        self.rows += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<FileEntry> {
        let mut file = self
            .writer
            .into_inner()
            .map_err(|e| anyhow::anyhow!("flushing {}: {}", self.name, e.error()))?;
        file.flush()?;
        drop(file);
        Ok(FileEntry {
            sha256: digest_file(&self.path)?,
            name: self.name,
            rows: self.rows,
        })
    }
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvFile> {
        let path = self.root.join(name);
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(file);
        writer.write_record(header)?;
        Ok(CsvFile {
            name: name.to_string(),
            path,
            writer,
            rows: 0,
        })
    }

    /// Writes an arbitrary JSON document and returns its file entry.
    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<FileEntry> {
        let path = self.root.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        Ok(FileEntry {
            name: name.to_string(),
            rows: 1,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunInfo {
    pub run_id: u64,
    #[serde(rename = "K")]
    pub k: usize,
    pub chi: f64,
    pub replicate: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    pub run_id: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Complete,
    /// Some runs failed; files hold the successful ones only.
    Partial,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Seed derivation used for `runs[*].seed`.
    pub seed_rule: &'static str,
    pub spec: ExperimentSpec,
    pub runs: Vec<RunInfo>,
    pub status: Status,
    pub errors: Vec<RunError>,
    /// Command-specific results (fits, overlay constants, ...).
    pub summary: serde_json::Value,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
}

pub const SEED_RULE: &str =
    "seed = derive_seed(sim.seed, [k_index, chi_index, replicate]); h <- splitmix64(h ^ splitmix64(i)) per index";

impl RunManifest {
    pub fn new(command: &'static str, spec: &ExperimentSpec) -> Self {
        Self {
            tool: "gogrow",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed_rule: SEED_RULE,
            spec: spec.clone(),
            runs: Vec::new(),
            status: Status::Complete,
            errors: Vec::new(),
            summary: serde_json::Value::Null,
            wall_time_s: 0.0,
            files: Vec::new(),
        }
    }

    pub fn write(&self, out: &OutputDir) -> Result<PathBuf> {
        let path = out.path().join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
