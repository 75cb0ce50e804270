use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::Summary;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// How `value` is compared with `threshold`, e.g. `"<="`.
    pub rule: String,
    pub passed: bool,
}

impl Verdict {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            rule: "<=".into(),
            passed: value <= threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            rule: ">=".into(),
            passed: value >= threshold,
        }
    }

    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            rule: ">".into(),
            passed: value > threshold,
        }
    }

    pub fn flag(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            value: passed as u8 as f64,
            threshold: 1.0,
            rule: "==".into(),
            passed,
        }
    }
}

/// Rows of floats under named columns, written as CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleReport {
    pub experiment: String,
    pub config_digest: String,
    pub seed: u64,
    pub tags: Vec<String>,
    pub parameters: BTreeMap<String, f64>,
    pub per_trajectory: BTreeMap<String, Vec<f64>>,
    pub summaries: BTreeMap<String, Summary>,
    pub scalars: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub raw: Table,
}

impl EnsembleReport {
    pub fn new(experiment: &str, config_digest: &str, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            config_digest: config_digest.into(),
            seed,
            tags: Vec::new(),
            parameters: BTreeMap::new(),
            per_trajectory: BTreeMap::new(),
            summaries: BTreeMap::new(),
            scalars: BTreeMap::new(),
            verdicts: Vec::new(),
            warnings: Vec::new(),
            raw: Table::default(),
        }
    }

    pub fn passed(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self).map_err(|e| Error::Format(e.to_string()))?;
        v["passed"] = serde_json::Value::Bool(self.passed());
        serde_json::to_string_pretty(&v).map_err(|e| Error::Format(e.to_string()))
    }

    /// Raw series as CSV with a commented header carrying the digest.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# experiment: {}", self.experiment)?;
        writeln!(out, "# config_digest: {}", self.config_digest)?;
        writeln!(out, "# seed: {}", self.seed)?;
        writeln!(out, "{}", self.raw.columns.join(","))?;
        for row in &self.raw.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}
