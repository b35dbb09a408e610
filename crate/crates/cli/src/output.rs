//! Output directory bookkeeping: tables, JSON documents and the run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::OutputConfig;
use crate::CliError;

/// A CSV table built from already formatted cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest representation that reads back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Serialize)]
struct FileEntry {
    name: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: &'a str,
    noise_digest: &'a str,
    noise_seed: u64,
    files: Vec<FileEntry>,
    summary: &'a serde_json::Value,
}

/// Writes into one output directory and keeps the list of produced files.
pub struct OutputDir {
    root: PathBuf,
    formats: OutputConfig,
    config_digest: String,
    noise_digest: String,
    noise_seed: u64,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(
        root: &Path,
        formats: &OutputConfig,
        config_digest: &str,
        noise_digest: &str,
        noise_seed: u64,
    ) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            formats: formats.clone(),
            config_digest: config_digest.to_string(),
            noise_digest: noise_digest.to_string(),
            noise_seed,
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn wants(&self, format: &str) -> bool {
        self.formats.wants(format)
    }

    /// Registers a file written by someone else (binary matrices and sidecars).
    pub fn record(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `table` with the config and noise digests appended to every row.
    pub fn csv(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        if !self.wants("csv") {
            return Ok(());
        }
        let mut w = csv::Writer::from_path(self.path(name))?;
        let mut header = table.header.clone();
        header.push("config_sha256".into());
        header.push("noise_digest".into());
        w.write_record(&header)?;
        for row in &table.rows {
            let mut r = row.clone();
            r.push(self.config_digest.clone());
            r.push(self.noise_digest.clone());
            w.write_record(&r)?;
        }
        w.flush()?;
        self.record(name);
        Ok(())
    }

    /// Writes `value` as pretty JSON wrapped with the two digests.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        if !self.wants("json") {
            return Ok(());
        }
        let doc = serde_json::json!({
            "config_sha256": self.config_digest,
            "noise_digest": self.noise_digest,
            "data": value,
        });
        std::fs::write(self.path(name), serde_json::to_string_pretty(&doc)? + "\n")?;
        self.record(name);
        Ok(())
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        std::fs::write(self.path(name), contents)?;
        self.record(name);
        Ok(())
    }

    /// Writes `manifest.json` listing every produced file with its hash.
    pub fn finish(self, command: &str, summary: &serde_json::Value) -> Result<PathBuf, CliError> {
        let mut names = self.files.clone();
        names.sort();
        names.dedup();
        let mut files = Vec::with_capacity(names.len());
        for name in names {
            let bytes = std::fs::read(self.path(&name))?;
            files.push(FileEntry {
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
                name,
            });
        }
        let manifest = Manifest {
            command,
            config_sha256: &self.config_digest,
            noise_digest: &self.noise_digest,
            noise_seed: self.noise_seed,
            files,
            summary,
        };
        let path = self.path("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}
