//! Report bundles: atomically-written outputs plus a manifest that lists
//! everything the run produced.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Write via a temp file in the same directory, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Everything a finished experiment hands back.
#[derive(Debug)]
pub struct ReportBundle {
    pub output_dir: PathBuf,
    pub summary: String,
    /// File names written into `output_dir`, manifest included.
    pub files: Vec<String>,
    pub passed: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    passed: bool,
    checks: Vec<(String, bool)>,
    outputs: &'a [String],
}

/// Accumulates output files for one experiment run and closes with a
/// summary and manifest.
pub struct ReportWriter {
    dir: PathBuf,
    files: Vec<String>,
    checks: Vec<(String, bool)>,
    summary: String,
}

impl ReportWriter {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ReportWriter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            checks: Vec::new(),
            summary: String::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_file(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&self.path(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Record files written through another helper (plots write two files).
    pub fn record_files(&mut self, names: Vec<String>) {
        self.files.extend(names);
    }

    pub fn add_check(&mut self, name: impl Into<String>, passed: bool) {
        self.checks.push((name.into(), passed));
    }

    pub fn push_summary(&mut self, line: impl AsRef<str>) {
        self.summary.push_str(line.as_ref());
        self.summary.push('\n');
    }

    /// Write `summary.txt` and `manifest.json`, returning the bundle.
    pub fn finalize(mut self, config_hash: &str) -> io::Result<ReportBundle> {
        let passed = self.checks.iter().all(|(_, p)| *p);
        let summary = self.summary.clone();
        self.write_file("summary.txt", summary.as_bytes())?;
        let manifest = Manifest {
            config_hash,
            passed,
            checks: self.checks.clone(),
            outputs: &self.files,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&self.path("manifest.json"), json.as_bytes())?;
        let mut files = self.files;
        files.push("manifest.json".to_string());
        Ok(ReportBundle {
            output_dir: self.dir,
            summary,
            files,
            passed,
        })
    }
}
