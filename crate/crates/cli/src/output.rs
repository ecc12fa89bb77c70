//! Data files and the run manifest.
//!
//! Every CSV starts with a `#`-prefixed block carrying the program version
//! and the configuration, followed by the column-name row. The manifest
//! stores the same configuration as JSON, so `qjumps run manifest.json`
//! reproduces the data files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";

/// A named data file held in memory until the collector writes it.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Prefix `body` (column row plus data) with the header block.
pub fn with_header(config: &ExperimentConfig, body: &[u8]) -> Vec<u8> {
    let mut out = format!("# qjumps {VERSION}\n").into_bytes();
    for line in config.echo().lines() {
        out.extend_from_slice(b"# ");
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    out.extend_from_slice(body);
    out
}

/// Render rows of numbers under a column row.
pub fn table(columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut s = columns.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s.into_bytes()
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub version: &'static str,
    pub experiment: crate::config::Experiment,
    pub master_seed: u64,
    pub config: &'a ExperimentConfig,
    pub files: Vec<String>,
    pub summary: &'a serde_json::Value,
    pub wall_time_seconds: f64,
}

/// Write all data files and the manifest into `config.out_dir`.
pub fn write_all(
    config: &ExperimentConfig,
    files: &[DataFile],
    summary: &serde_json::Value,
    wall: Duration,
) -> Result<Vec<PathBuf>, CliError> {
    let dir: &Path = &config.out_dir;
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(files.len() + 1);
    for f in files {
        let path = dir.join(&f.name);
        fs::write(&path, &f.bytes)?;
        written.push(path);
    }
    let manifest = Manifest {
        version: VERSION,
        experiment: config.experiment,
        master_seed: config.master_seed,
        config,
        files: files.iter().map(|f| f.name.clone()).collect(),
        summary,
        wall_time_seconds: wall.as_secs_f64(),
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_block_precedes_columns() {
        let c = ExperimentConfig::default();
        let bytes = with_header(&c, &table(&["a", "b"], vec![vec!["1".into(), "2".into()]]));
        let text = String::from_utf8(bytes).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body, ["a,b", "1,2"]);
        assert!(text.starts_with("# qjumps "));
        assert!(text.contains("# master_seed = 1"));
        assert!(!text.contains("out_dir"));
    }
}
