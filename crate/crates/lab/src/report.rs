//! Per-experiment output directory: CSV and SVG files plus a JSON manifest
//! echoing the inputs, seeds, versions, measured metrics and assertions.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;
use serde_json::Value;

use crate::error::{LabError, EXIT_ASSERTION, EXIT_PASS};
use crate::svg::LinePlot;

/// Formats a number for CSV output (17 significant digits, `.` decimal).
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// One named check.
#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Final state of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Passed,
    Failed,
    Error,
}

/// What an experiment returns to the batch runner.
#[derive(Clone, Debug)]
pub struct Summary {
    pub name: String,
    pub kind: &'static str,
    pub status: Status,
    pub dir: PathBuf,
    /// Lines the runner prints to standard output, in order.
    pub printed: Vec<String>,
    /// Failed assertion names or the error message.
    pub problems: Vec<String>,
    /// Process exit code this outcome maps to.
    pub code: u8,
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    kind: &'a str,
    status: Status,
    tool: &'a str,
    tool_version: &'a str,
    core_version: &'a str,
    seed: u64,
    config: &'a Value,
    inputs: &'a [String],
    outputs: &'a [String],
    metrics: &'a BTreeMap<String, Value>,
    assertions: &'a [Assertion],
    error: Option<&'a str>,
}

/// Collects the outputs of one experiment.
#[derive(Debug)]
pub struct Report {
    pub name: String,
    pub kind: &'static str,
    pub seed: u64,
    pub dir: PathBuf,
    pub emit_svg: bool,
    config: Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    metrics: BTreeMap<String, Value>,
    assertions: Vec<Assertion>,
    printed: Vec<String>,
}

impl Report {
    /// Creates (or reuses) `dir`, which this experiment owns exclusively.
    pub fn create(name: &str, kind: &'static str, seed: u64, dir: PathBuf, emit_svg: bool, config: Value, inputs: Vec<String>) -> Result<Self, LabError> {
        fs::create_dir_all(&dir).map_err(|e| LabError::Output(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            name: name.into(),
            kind,
            seed,
            dir,
            emit_svg,
            config,
            inputs,
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
            assertions: Vec::new(),
            printed: Vec::new(),
        })
    }

    fn path(&mut self, file: &str) -> Result<PathBuf, LabError> {
        let p = self.dir.join(file);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.outputs.push(file.to_string());
        Ok(p)
    }

    /// Writes a CSV with a header row.
    pub fn csv<I>(&mut self, file: &str, header: &[&str], rows: I) -> Result<(), LabError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let p = self.path(file)?;
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes a file through a core writer.
    pub fn write_with(&mut self, file: &str, f: impl FnOnce(&mut BufWriter<File>) -> mfl_core::Result<()>) -> Result<(), LabError> {
        let p = self.path(file)?;
        let mut w = BufWriter::new(File::create(&p)?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes a plot when SVG output is enabled.
    pub fn svg(&mut self, file: &str, plot: &LinePlot) -> Result<(), LabError> {
        if self.emit_svg {
            let p = self.path(file)?;
            fs::write(p, plot.render())?;
        }
        Ok(())
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.metrics.insert(key.into(), v);
    }

    /// Records a check; a failed check makes the experiment fail but does not
    /// stop it.
    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.into(), passed, detail: detail.into() });
    }

    /// Queues a line for standard output.
    pub fn print(&mut self, line: impl Into<String>) {
        self.printed.push(line.into());
    }

    fn write_manifest(&self, status: Status, error: Option<&str>) -> Result<(), LabError> {
        let m = Manifest {
            name: &self.name,
            kind: self.kind,
            status,
            tool: env!("CARGO_PKG_NAME"),
            tool_version: env!("CARGO_PKG_VERSION"),
            core_version: mfl_core::VERSION,
            seed: self.seed,
            config: &self.config,
            inputs: &self.inputs,
            outputs: &self.outputs,
            metrics: &self.metrics,
            assertions: &self.assertions,
            error,
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| LabError::Output(e.to_string()))?;
        fs::write(self.dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }

    /// Writes the manifest and summarizes the run.
    pub fn finish(self, error: Option<&LabError>) -> Result<Summary, LabError> {
        let failed: Vec<String> = self.assertions.iter().filter(|a| !a.passed).map(|a| format!("{}: {}", a.name, a.detail)).collect();
        let (status, problems, code) = match error {
            Some(e) => (Status::Error, vec![e.to_string()], e.exit_code()),
            None if failed.is_empty() => (Status::Passed, Vec::new(), EXIT_PASS),
            None => (Status::Failed, failed, EXIT_ASSERTION),
        };
        let msg = error.map(|e| e.to_string());
        self.write_manifest(status, msg.as_deref())?;
        Ok(Summary { name: self.name, kind: self.kind, status, dir: self.dir, printed: self.printed, problems, code })
    }
}
