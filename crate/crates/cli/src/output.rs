//! Artifact writing and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Record of one run, written to `manifest.json` at the output root.
///
/// `argv` omits `--out`, so the manifest is identical wherever the run
/// was written and replaying it with any `--out` reproduces the artifacts.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub input: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub artifacts: Vec<String>,
}

/// Collects artifacts under one output directory.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.bytes(name, &bytes)
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        wtr.write_record(header).map_err(io)?;
        for row in rows {
            wtr.write_record(row.into_iter().collect::<Vec<_>>()).map_err(io)?;
        }
        let bytes = wtr.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.bytes(name, &bytes)
    }

    /// Writes the manifest; call last.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<Vec<String>, CliError> {
        manifest.artifacts = self.written.clone();
        self.json(MANIFEST, &manifest)?;
        Ok(self.written)
    }
}

/// Drops `--out <dir>` / `--out=<dir>` from an argument list.
pub fn strip_out(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

/// Formats an optional float, leaving the cell empty for `None`.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
