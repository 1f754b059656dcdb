use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("cannot write {}: {e}", path.display()))
}

pub fn prepare(dir: &Path) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    Ok(dir.to_path_buf())
}

pub fn write_toml(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = toml::to_string(value).map_err(|e| io_failure(path, e))?;
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

pub struct Table {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl Table {
    pub fn create<S: AsRef<str>>(path: &Path, header: &[S]) -> Result<Self, Failure> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| io_failure(path, e))?;
        writer
            .write_record(header.iter().map(AsRef::as_ref))
            .map_err(|e| io_failure(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<(), Failure> {
        self.writer
            .write_record(fields.iter().map(AsRef::as_ref))
            .map_err(|e| io_failure(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), Failure> {
        self.writer.flush().map_err(|e| io_failure(&self.path, e))
    }
}

/// Round-trip formatting; empty for missing values.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// `prefix_1, …, prefix_n` column names.
pub fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}
