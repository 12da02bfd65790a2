//! Report bundles and their on-disk layout.
//!
//! A run directory holds `diagnostics.csv`, `diagnostics.schema.json`,
//! `rates.json`, `acceptance.json`, `config.json` and one two-column `.dat`
//! file per plot under `plots/`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use collapse_core::rates::RateReport;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::ExperimentName;

/// The shipped column documentation for every experiment.
pub const COLUMN_SCHEMA: &str = include_str!("../schema/diagnostics.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub description: String,
}

/// Documented columns of one experiment's diagnostics table.
pub fn columns(experiment: ExperimentName) -> Vec<Column> {
    let schema: Value = serde_json::from_str(COLUMN_SCHEMA).expect("shipped schema is valid JSON");
    let cols = &schema["experiments"][experiment.as_str()];
    serde_json::from_value(cols.clone()).expect("shipped schema lists columns")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

/// One acceptance entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    /// Passes when `measured <= bound`; NaN fails.
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            relation: Relation::AtMost,
            passed: measured <= bound,
        }
    }

    /// Passes when `measured >= bound`; NaN fails.
    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            relation: Relation::AtLeast,
            passed: measured >= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    /// File stem under `plots/`.
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: ExperimentName,
    pub rows: Vec<Vec<f64>>,
    pub rates: Vec<RateReport>,
    pub checks: Vec<Check>,
    pub plots: Vec<Plot>,
    /// Extra measured scalars reported next to the checks.
    pub summary: Map<String, Value>,
}

impl Report {
    pub fn new(experiment: ExperimentName) -> Self {
        Self {
            experiment,
            rows: Vec::new(),
            rates: Vec::new(),
            checks: Vec::new(),
            plots: Vec::new(),
            summary: Map::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.into(), value.into());
    }

    pub fn plot(&mut self, name: &str, points: Vec<(f64, f64)>) {
        self.plots.push(Plot {
            name: name.into(),
            points,
        });
    }

    pub fn csv(&self) -> String {
        let cols = columns(self.experiment);
        let mut out = cols.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(",");
        out.push('\n');
        for row in &self.rows {
            debug_assert_eq!(row.len(), cols.len());
            let cells: Vec<String> = row.iter().map(|v| cell(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn acceptance_json(&self) -> Value {
        serde_json::json!({
            "experiment": self.experiment.as_str(),
            "passed": self.passed(),
            "checks": self.checks,
            "summary": self.summary,
        })
    }

    /// Writes the bundle into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path, config: &Value) -> io::Result<()> {
        fs::create_dir_all(dir.join("plots"))?;
        fs::write(dir.join("diagnostics.csv"), self.csv())?;
        let schema = serde_json::json!({
            "experiment": self.experiment.as_str(),
            "columns": columns(self.experiment),
        });
        fs::write(dir.join("diagnostics.schema.json"), pretty(&schema))?;
        fs::write(dir.join("rates.json"), pretty(&serde_json::to_value(&self.rates)?))?;
        fs::write(dir.join("acceptance.json"), pretty(&self.acceptance_json()))?;
        fs::write(dir.join("config.json"), pretty(config))?;
        for plot in &self.plots {
            let mut text = String::new();
            for (x, y) in &plot.points {
                let _ = writeln!(text, "{} {}", cell(*x), cell(*y));
            }
            fs::write(dir.join("plots").join(format!("{}.dat", plot.name)), text)?;
        }
        Ok(())
    }
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}
