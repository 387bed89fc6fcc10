//! Experiment reports: long-format CSV rows keyed by table cell, plus a
//! JSON summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::{format_f64, write_atomic};
use crate::error::{Error, Result};
use crate::sobol::SobolEstimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub table: String,
    pub model: String,
    pub quantity: String,
    /// Sample size for rows of a study over n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// Display form: an interval, a formula or a formatted number.
    pub display: String,
    pub seed: u64,
}

impl ReportRow {
    pub fn key(&self) -> String {
        match self.n {
            Some(n) => format!("{}/{}/{}/n={}", self.table, self.model, self.quantity, n),
            None => format!("{}/{}/{}", self.table, self.model, self.quantity),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(title: impl Into<String>, seed: u64) -> Self {
        Self { title: title.into(), seed, rows: Vec::new(), notes: Vec::new() }
    }

    fn row(&self, table: &str, model: &str, quantity: &str) -> ReportRow {
        ReportRow {
            table: table.into(),
            model: model.into(),
            quantity: quantity.into(),
            n: None,
            value: None,
            sd: None,
            method: None,
            display: String::new(),
            seed: self.seed,
        }
    }

    pub fn push_value(&mut self, table: &str, model: &str, quantity: &str, value: f64) {
        let mut r = self.row(table, model, quantity);
        r.value = Some(value);
        r.display = format!("{value:.3}");
        self.rows.push(r);
    }

    pub fn push_text(&mut self, table: &str, model: &str, quantity: &str, text: impl Into<String>) {
        let mut r = self.row(table, model, quantity);
        r.display = text.into();
        self.rows.push(r);
    }

    pub fn push_study_value(&mut self, table: &str, model: &str, quantity: &str, n: usize, value: f64) {
        let mut r = self.row(table, model, quantity);
        r.n = Some(n);
        r.value = Some(value);
        r.display = if value.is_finite() { format!("{value:.4}") } else { "NA".into() };
        self.rows.push(r);
    }

    pub fn push_estimate(&mut self, table: &str, model: &str, e: &SobolEstimate) {
        let mut r = self.row(table, model, &e.label);
        r.value = if e.bounds.is_some() { None } else { Some(e.value) };
        r.sd = e.sd;
        r.method = Some(e.method.to_string());
        r.display = e.display_value();
        self.rows.push(r);
    }

    pub fn merge(&mut self, other: Report) {
        self.rows.extend(other.rows);
        self.notes.extend(other.notes);
    }

    pub fn get(&self, table: &str, model: &str, quantity: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.table == table && r.model == model && r.quantity == quantity && r.n.is_none())
    }

    pub fn value(&self, table: &str, model: &str, quantity: &str) -> Option<f64> {
        self.get(table, model, quantity).and_then(|r| r.value)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["key", "table", "model", "quantity", "n", "value", "sd", "method", "display", "seed"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.key(),
                r.table.clone(),
                r.model.clone(),
                r.quantity.clone(),
                r.n.map(|n| n.to_string()).unwrap_or_default(),
                r.value.map(format_f64).unwrap_or_default(),
                r.sd.map(format_f64).unwrap_or_default(),
                r.method.clone().unwrap_or_default(),
                r.display.clone(),
                r.seed.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
    }

    /// One row per quantity of `table` and one column per model, holding
    /// display values.
    pub fn to_wide_csv(&self, table: &str) -> Result<String> {
        let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.table == table && r.n.is_none()).collect();
        let mut models: Vec<&str> = Vec::new();
        let mut quantities: Vec<&str> = Vec::new();
        for r in &rows {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
            if !quantities.contains(&r.quantity.as_str()) {
                quantities.push(&r.quantity);
            }
        }
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["quantity".to_string()];
        for m in &models {
            header.push(m.to_string());
            header.push(format!("{m}_sd"));
            header.push(format!("{m}_method"));
        }
        w.write_record(&header).map_err(io)?;
        for q in &quantities {
            let mut rec = vec![q.to_string()];
            for m in &models {
                match rows.iter().find(|r| r.model == *m && r.quantity == *q) {
                    Some(r) => {
                        rec.push(r.display.clone());
                        rec.push(r.sd.map(|v| format!("{v:.1e}")).unwrap_or_default());
                        rec.push(r.method.clone().unwrap_or_default());
                    }
                    None => rec.extend([String::new(), String::new(), String::new()]),
                }
            }
            w.write_record(&rec).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
    }

    pub fn to_summary(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(format!("report serialization: {e}")))
    }

    /// Aligned plain-text table for terminal output.
    pub fn to_text(&self) -> String {
        let mut out = format!("# {} (seed {})\n", self.title, self.seed);
        let width = self.rows.iter().map(|r| r.key().len()).max().unwrap_or(0);
        for r in &self.rows {
            let _ = write!(out, "{:<width$}  {:>16}", r.key(), r.display);
            if let Some(sd) = r.sd {
                let _ = write!(out, "  sd {sd:.1e}");
            }
            if let Some(m) = &r.method {
                let _ = write!(out, "  [{m}]");
            }
            out.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        write_atomic(&csv_path, self.to_csv()?.as_bytes())?;
        write_atomic(&json_path, self.to_summary()?.as_bytes())?;
        Ok((csv_path, json_path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sobol::{Bounds, Method};

    fn sample() -> Report {
        let mut r = Report::new("demo", 7);
        r.push_value("table1", "simple_glm", "Q2", 0.6081);
        r.push_text("table1", "simple_glm", "formula", "Y = 1.92 + 2.69 X1");
        r.push_estimate(
            "table2",
            "joint_gam",
            &SobolEstimate { label: "S1".into(), value: 0.325, sd: Some(5e-3), method: Method::MC, replicates: 100, bounds: None },
        );
        r.push_estimate(
            "table2",
            "joint_gam",
            &SobolEstimate::bounded("ST1", Bounds { lower: 0.325, upper: 0.586, lower_open: true, upper_open: false }, Method::Eq),
        );
        r.push_study_value("figure4", "joint_gam", "Q2_mean", 30, 0.41);
        r
    }

    #[test]
    fn csv_is_long_format_with_seed_and_method() {
        let text = sample().to_csv().unwrap();
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 5);
        assert_eq!(&rows[2][0], "table2/joint_gam/S1");
        assert_eq!(&rows[2][7], "MC");
        assert_eq!(&rows[3][8], "]0.325, 0.586]");
        assert_eq!(&rows[3][5], "");
        assert_eq!(&rows[4][0], "figure4/joint_gam/Q2_mean/n=30");
        assert!(rows.iter().all(|r| &r[9] == "7"));
    }

    #[test]
    fn summary_roundtrip_and_lookup() {
        let r = sample();
        let back: Report = serde_json::from_str(&r.to_summary().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.value("table1", "simple_glm", "Q2"), Some(0.6081));
        assert!(r.value("table2", "joint_gam", "ST1").is_none());
        assert!(r.to_text().contains("[MC]"));
        let wide = r.to_wide_csv("table2").unwrap();
        assert_eq!(wide.lines().next().unwrap(), "quantity,joint_gam,joint_gam_sd,joint_gam_method");
        assert!(wide.contains("S1,0.325,5.0e-3,MC"));
    }

    #[test]
    fn writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let (c, j) = sample().write(dir.path(), "out").unwrap();
        assert!(std::fs::read_to_string(c).unwrap().starts_with("key,"));
        assert!(std::fs::read_to_string(j).unwrap().contains("\"title\": \"demo\""));
    }
}
