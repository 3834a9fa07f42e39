//! Versioned report envelope and output files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::Format;
use crate::error::CliError;

/// Bumped whenever a report layout changes incompatibly.
pub const SCHEMA_VERSION: u32 = 1;

/// Result of one command: the report body, a CSV rendering and extra files to write.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: &'static str,
    pub passed: bool,
    pub body: Value,
    pub csv: String,
    /// `(file name, contents)` written next to the report.
    pub artifacts: Vec<(String, String)>,
}

impl Outcome {
    pub fn new<T: Serialize>(command: &'static str, passed: bool, body: &T, csv: String) -> Result<Self, CliError> {
        let body = serde_json::to_value(body).map_err(|e| CliError::Config(format!("cannot serialize report: {e}")))?;
        Ok(Self { command, passed, body, csv, artifacts: Vec::new() })
    }

    pub fn with_artifact(mut self, name: impl Into<String>, contents: String) -> Self {
        self.artifacts.push((name.into(), contents));
        self
    }

    /// The report with `schema_version`, `command` and `passed` prepended.
    pub fn envelope(&self) -> Value {
        let mut map = Map::new();
        map.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
        map.insert("command".into(), Value::from(self.command));
        map.insert("passed".into(), Value::from(self.passed));
        match &self.body {
            Value::Object(body) => {
                for (k, v) in body {
                    map.insert(k.clone(), v.clone());
                }
            }
            other => {
                map.insert("report".into(), other.clone());
            }
        }
        Value::Object(map)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(&self.envelope()).expect("report values are plain JSON") + "\n",
            Format::Csv => self.csv.clone(),
        }
    }

    /// Write the report and artifacts into `dir`, each file via a temporary sibling and a rename.
    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir)?;
        let ext = match format {
            Format::Json => "json",
            Format::Csv => "csv",
        };
        let mut files = vec![(format!("{}.{ext}", self.command.replace('-', "_")), self.render(format))];
        files.extend(self.artifacts.iter().cloned());
        let mut written = Vec::with_capacity(files.len());
        for (name, contents) in files {
            let path = dir.join(&name);
            let tmp = dir.join(format!(".{name}.tmp"));
            let mut file = fs::File::create(&tmp)?;
            file.write_all(contents.as_bytes())?;
            file.sync_all()?;
            fs::rename(&tmp, &path)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Minimal CSV writer for numeric tables.
#[derive(Debug, Default)]
pub struct Csv {
    out: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut csv = Self::default();
        csv.row(header.iter().map(|h| h.to_string()));
        csv
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let cells: Vec<String> = cells.into_iter().map(|c| quote(&c)).collect();
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}

fn quote(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

/// Number formatting for CSV cells; non-finite values are written as `inf`, `-inf` or `nan`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
