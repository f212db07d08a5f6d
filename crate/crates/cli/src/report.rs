use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::{ConfigError, OutputFormat, RunConfig};

pub const ARTIFACT: &str = "fgeom";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub name: String,
    pub index: usize,
    pub location: Value,
    pub residual: Option<f64>,
    pub tolerance: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Record {
    pub fn check(name: &str, index: usize, location: Value, residual: f64, tolerance: f64) -> Self {
        let ok = residual.is_finite() && residual <= tolerance;
        Record {
            name: name.to_string(),
            index,
            location,
            residual: residual.is_finite().then_some(residual),
            tolerance,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            error: None,
            message: (!residual.is_finite()).then(|| format!("non-finite residual {residual}")),
        }
    }

    pub fn failure(
        name: &str,
        index: usize,
        location: Value,
        tolerance: f64,
        code: &str,
        message: String,
    ) -> Self {
        Record {
            name: name.to_string(),
            index,
            location,
            residual: None,
            tolerance,
            verdict: Verdict::Fail,
            error: Some(code.to_string()),
            message: Some(message),
        }
    }
}

/// A report-only value with no verdict attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub name: String,
    pub index: usize,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: RunConfig,
    pub records: Vec<Record>,
    pub measurements: Vec<Measurement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Table>,
    pub summary: Summary,
    /// The only field that varies between identical runs.
    pub timing: Timing,
}

impl Report {
    pub fn new(
        config: RunConfig,
        mut records: Vec<Record>,
        mut measurements: Vec<Measurement>,
        table: Option<Table>,
        timing: Timing,
    ) -> Self {
        records.sort_by(|a, b| a.name.cmp(&b.name).then(a.index.cmp(&b.index)));
        measurements.sort_by(|a, b| a.name.cmp(&b.name).then(a.index.cmp(&b.index)));
        let passed = records.iter().filter(|r| r.verdict == Verdict::Pass).count();
        Report {
            artifact: ARTIFACT,
            version: env!("CARGO_PKG_VERSION"),
            command: config.command.name(),
            config,
            summary: Summary {
                total: records.len(),
                passed,
                failed: records.len() - passed,
            },
            records,
            measurements,
            table,
            timing,
        }
    }

    pub fn passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn max_residual(&self, name: &str) -> Option<f64> {
        self.records
            .iter()
            .filter(|r| r.name == name)
            .filter_map(|r| r.residual)
            .fold(None, |m, r| Some(m.map_or(r, |m: f64| m.max(r))))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// The JSON text with the timing field removed, for comparisons.
    pub fn to_json_untimed(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Value::Object(m) = &mut v {
            m.remove("timing");
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    /// Lossy projection: the table when present, otherwise one line per record.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let cell = |v: &Value| match v {
            Value::Null => String::new(),
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        if let Some(t) = &self.table {
            w.write_record(&t.columns).expect("in-memory write");
            for row in &t.rows {
                w.write_record(row.iter().map(cell)).expect("in-memory write");
            }
        } else {
            w.write_record([
                "name", "index", "location", "residual", "tolerance", "verdict", "error",
            ])
            .expect("in-memory write");
            for r in &self.records {
                w.write_record([
                    r.name.clone(),
                    r.index.to_string(),
                    r.location.to_string(),
                    r.residual.map(|x| format!("{x:e}")).unwrap_or_default(),
                    format!("{:e}", r.tolerance),
                    match r.verdict {
                        Verdict::Pass => "pass".into(),
                        Verdict::Fail => "fail".into(),
                    },
                    r.error.clone().unwrap_or_default(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => self.to_json(),
            OutputFormat::Csv => self.to_csv(),
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), ConfigError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ConfigError::Output(e.to_string()))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.flush())
        .map_err(|e| ConfigError::Output(e.to_string()))?;
    tmp.persist(path)
        .map_err(|e| ConfigError::Output(e.error.to_string()))?;
    Ok(())
}
