//! Run manifest and the output directory that fills it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Version tag recorded in every manifest.
pub const VERSION_TAG: &str = concat!("qedlab-harness ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// A declared invariant check and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub cell: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub cells: Vec<CellTiming>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Passed,
    /// Every cell ran but at least one check failed.
    Violations,
    /// At least one cell or output failed operationally.
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Passed => 0,
            RunStatus::Failed => 1,
            RunStatus::Violations => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<u64>,
    /// The validated config with every default populated.
    pub config: serde_json::Value,
    pub files: Vec<FileEntry>,
    pub checks: Vec<Check>,
    pub errors: Vec<String>,
    pub status: RunStatus,
    pub timings: Timings,
}

impl RunManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Output directory shared by the cells of one run. Each cell writes its own
/// files; the registry keeps them sorted by path.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Mutex<BTreeMap<String, FileEntry>>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self {
            root,
            files: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        let entry = FileEntry {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        };
        self.files.lock().expect("file registry poisoned").insert(rel.to_string(), entry);
        Ok(())
    }

    /// Writes `header` and then one record per row, so even an empty table
    /// carries its column set.
    pub fn write_csv<T: Serialize>(&self, rel: &str, header: &[&str], rows: &[T]) -> Result<()> {
        self.write_bytes(rel, &csv_bytes(header, rows)?)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(rel, &bytes)
    }

    pub fn entries(&self) -> Vec<FileEntry> {
        self.files.lock().expect("file registry poisoned").values().cloned().collect()
    }

    /// Listed files that are missing or empty on disk.
    pub fn incomplete(&self) -> Vec<String> {
        self.entries()
            .into_iter()
            .filter(|e| std::fs::metadata(self.root.join(&e.path)).map_or(true, |m| m.len() == 0))
            .map(|e| e.path)
            .collect()
    }
}

pub fn csv_bytes<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(writer.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
}
