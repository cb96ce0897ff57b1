//! File writers. Every output names the config hash and seed it came from.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Provenance stamped on every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stamp {
    pub config_sha256: String,
    pub seed: u64,
}

impl Stamp {
    pub fn csv_line(&self) -> String {
        format!("# config_sha256={} seed={}\n", self.config_sha256, self.seed)
    }
}

/// CSV text with the provenance comment and a header row.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(stamp: &Stamp, columns: &[&str]) -> Self {
        let mut text = stamp.csv_line();
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row<I: IntoIterator<Item = Cell>>(&mut self, cells: I) {
        let mut first = true;
        for c in cells {
            if !first {
                self.text.push(',');
            }
            first = false;
            match c {
                Cell::F(v) => push_f64(&mut self.text, v),
                Cell::U(v) => write!(self.text, "{v}").unwrap(),
                Cell::B(v) => self.text.push(if v { '1' } else { '0' }),
            }
        }
        self.text.push('\n');
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_text(path, &self.text)
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Shortest round-trip form; exponent notation for very small or large
/// magnitudes.
fn push_f64(out: &mut String, v: f64) {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        write!(out, "{v:e}").unwrap();
    } else {
        write!(out, "{v}").unwrap();
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Cell {
    F(f64),
    U(u64),
    B(bool),
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn ensure_dir(dir: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    Ok(dir.to_path_buf())
}
