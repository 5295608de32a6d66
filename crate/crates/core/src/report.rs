//! Tidy CSV tables with a provenance header, and a JSON manifest per run.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub const TOOL: &str = "rsop";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies the inputs of a run; printed at the top of every table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(scenario: &str, hash: &str, seed: u64) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            scenario: scenario.into(),
            hash: hash.into(),
            seed,
        }
    }

    pub fn header_line(&self) -> String {
        format!(
            "# {} {} scenario={} hash={} seed={}",
            self.tool, self.version, self.scenario, self.hash, self.seed
        )
    }
}

/// Table with a declared column set; rows of the wrong width are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::config(format!(
                "table {}: row has {} fields for {} columns",
                self.name,
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn to_bytes(&self, prov: &Provenance) -> Result<Vec<u8>> {
        let mut out = prov.header_line().into_bytes();
        out.push(b'\n');
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn write(&self, dir: &Path, prov: &Provenance) -> Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.to_bytes(prov)?)?;
        Ok(path)
    }
}

/// Formats a row from heterogeneous displayable values.
#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => {
        vec![$($crate::report::cell(&$v)),*]
    };
}

pub fn cell(v: &dyn Display) -> String {
    v.to_string()
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestFile {
    pub file: String,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub experiment: String,
    pub files: Vec<ManifestFile>,
    pub summary: serde_json::Value,
}

/// Writes the tables and a `manifest.json` describing them into `dir`.
pub fn write_outputs(
    dir: &Path,
    prov: &Provenance,
    experiment: &str,
    tables: &[CsvTable],
    summary: serde_json::Value,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut files = Vec::new();
    for t in tables {
        written.push(t.write(dir, prov)?);
        files.push(ManifestFile {
            file: format!("{}.csv", t.name),
            columns: t.columns.clone(),
            rows: t.rows.len(),
        });
    }
    let manifest = Manifest {
        provenance: prov.clone(),
        experiment: experiment.into(),
        files,
        summary,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::config(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text)?;
    written.push(path);
    Ok(written)
}
