//! Report files: `report.json` plus one CSV per table.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentId};
use crate::error::Result;

/// `git describe` of the build.
pub const BUILD_STAMP: &str = env!("GELSIM_BUILD");

/// An empirical value with its theoretical target and acceptance band.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub empirical: f64,
    pub target: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Formula the target comes from.
    pub provenance: String,
    pub pass: bool,
}

impl Check {
    pub fn between(
        name: impl Into<String>,
        empirical: f64,
        target: Option<f64>,
        lower: f64,
        upper: f64,
        provenance: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            empirical,
            target,
            lower: Some(lower),
            upper: Some(upper),
            provenance: provenance.into(),
            pass: empirical >= lower && empirical <= upper,
        }
    }

    pub fn at_most(
        name: impl Into<String>,
        empirical: f64,
        target: Option<f64>,
        upper: f64,
        provenance: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            empirical,
            target,
            lower: None,
            upper: Some(upper),
            provenance: provenance.into(),
            pass: empirical <= upper,
        }
    }

    pub fn at_least(
        name: impl Into<String>,
        empirical: f64,
        target: Option<f64>,
        lower: f64,
        provenance: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            empirical,
            target,
            lower: Some(lower),
            upper: None,
            provenance: provenance.into(),
            pass: empirical >= lower,
        }
    }
}

/// Formats a float for CSV output: shortest round-trip digits, exponent
/// notation outside `[1e-4, 1e16)`. `None` is an empty cell.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width of table {}",
            self.name
        );
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub experiment: ExperimentId,
    pub title: String,
    pub config: ExperimentConfig,
    pub build: String,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub failures: Vec<ReplicateFailure>,
}

impl Report {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            experiment: config.experiment,
            title: config.experiment.title().to_string(),
            config: config.clone(),
            build: BUILD_STAMP.to_string(),
            tables: Vec::new(),
            checks: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes `report.json` and every table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for t in &self.tables {
            t.write_csv(fs::File::create(dir.join(t.file_name()))?)?;
        }
        let f = fs::File::create(dir.join("report.json"))?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_bands() {
        assert!(Check::between("x", 0.7, None, 0.69, 0.77, "").pass);
        assert!(!Check::between("x", 0.8, None, 0.69, 0.77, "").pass);
        assert!(!Check::at_most("x", f64::NAN, None, 1.0, "").pass);
        assert!(Check::at_least("x", 0.9, None, 0.8, "").pass);
    }

    #[test]
    fn csv_is_rfc4180_with_header() {
        let mut t = Table::new("demo", &["k", "label"]);
        t.push(vec![num(0.5), "a,b".into()]);
        assert_eq!(num(2.5e-300), "2.5e-300");
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,label\n0.5,\"a,b\"\n");
    }
}
