//! Artifact writing: CSV tables, the summary and the run manifest.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use freegas::spectral::{fmt_sig17, TimeSeries};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.txt";

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub params: serde_json::Map<String, serde_json::Value>,
    pub wall_time_secs: f64,
    pub outputs: Vec<OutputFile>,
}

/// Two-column CSV with 17 significant digits.
pub fn table_csv(header: &str, rows: &[(f64, f64)]) -> String {
    let mut out = String::with_capacity(48 * rows.len() + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for (x, y) in rows {
        let _ = writeln!(out, "{},{}", fmt_sig17(*x), fmt_sig17(*y));
    }
    out
}

/// `N,meanD` rows; `N` is written as an integer.
pub fn scan_csv(rows: &[(usize, f64)]) -> String {
    let mut out = String::from("N,meanD\n");
    for (n, d) in rows {
        let _ = writeln!(out, "{n},{}", fmt_sig17(*d));
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects files in memory and writes them in insertion order.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    summary: Vec<String>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn add_series(&mut self, name: impl Into<String>, ts: &TimeSeries) {
        self.add(name, ts.to_csv());
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.summary.push(s.into());
    }

    pub fn summary_text(&self) -> String {
        let mut s = self.summary.join("\n");
        s.push('\n');
        s
    }

    /// Writes data files and the summary into `dir`, then the manifest.
    pub fn write(
        mut self,
        dir: &Path,
        subcommand: &str,
        params: serde_json::Map<String, serde_json::Value>,
        wall_time_secs: f64,
    ) -> io::Result<(PathBuf, RunManifest)> {
        std::fs::create_dir_all(dir)?;
        let summary = self.summary_text();
        self.add(SUMMARY, summary);
        let mut outputs = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
            outputs.push(OutputFile { path: name.clone(), sha256: sha256_hex(bytes) });
        }
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            params,
            wall_time_secs,
            outputs,
        };
        let path = dir.join(MANIFEST);
        let mut json = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        json.push('\n');
        std::fs::write(&path, json)?;
        Ok((path, manifest))
    }
}
