//! Tidy result tables, their on-disk layout and summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anonsim::metrics::{percentiles, quartile_summary};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const RESULTS_HEADER: &str = "trial,step,metric,value";

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub trial: u64,
    pub step: u64,
    pub metric: String,
    pub value: f64,
}

/// One row per (trial, step, metric) plus named side tables.
#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<Row>,
    /// File name → CSV text.
    pub side: BTreeMap<String, String>,
}

impl ResultTable {
    pub fn push(&mut self, trial: u64, step: u64, metric: impl Into<String>, value: f64) {
        self.rows.push(Row { trial, step, metric: metric.into(), value });
    }

    pub fn extend_trial(&mut self, rows: Vec<Row>) {
        self.rows.extend(rows);
    }

    /// Stable sort by (trial, step); metrics keep their emission order.
    pub fn canonicalize(&mut self) {
        self.rows.sort_by_key(|r| (r.trial, r.step));
    }

    pub fn results_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 24);
        out.push_str(RESULTS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.trial, r.step, r.metric, r.value);
        }
        out
    }

    /// Mean and requested percentiles per (step, metric).
    pub fn aggregate_csv(&self, pcts: &[f64]) -> Result<String, CliError> {
        let mut groups: BTreeMap<(u64, &str), Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry((r.step, r.metric.as_str())).or_default().push(r.value);
        }
        let names: Vec<String> = pcts.iter().map(|p| format!("p{p:02}")).collect();
        let mut out = format!("step,metric,n,mean,{}\n", names.join(","));
        for ((step, metric), values) in groups {
            let ps = percentiles(&values, pcts).map_err(CliError::run)?;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let cells: Vec<String> = names.iter().map(|n| ps[n].to_string()).collect();
            let _ = writeln!(out, "{step},{metric},{},{mean},{}", values.len(), cells.join(","));
        }
        Ok(out)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<String, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Writes `results.csv`, optional `aggregate.csv`, side tables and
/// `metadata.json` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, table: &ResultTable) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = serde_json::Map::new();
    files.insert("results.csv".into(), write_file(dir, "results.csv", &table.results_csv())?.into());
    if !cfg.percentiles.is_empty() {
        let text = table.aggregate_csv(&cfg.percentiles)?;
        files.insert("aggregate.csv".into(), write_file(dir, "aggregate.csv", &text)?.into());
    }
    for (name, text) in &table.side {
        files.insert(name.clone(), write_file(dir, name, text)?.into());
    }
    let meta = serde_json::json!({
        "kind": cfg.kind.as_str(),
        "seed": cfg.seed,
        "description": cfg.description,
        "config_sha256": sha256_hex(&cfg.source),
        "versions": {
            "anonsim-core": anonsim::VERSION,
            "anonsim-cli": env!("CARGO_PKG_VERSION"),
        },
        "rows": table.rows.len(),
        "files": files,
    });
    let text = serde_json::to_string_pretty(&meta)? + "\n";
    write_file(dir, "metadata.json", &text)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Trial,
    Step,
    Metric,
}

impl std::str::FromStr for GroupBy {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "trial" => Ok(GroupBy::Trial),
            "step" => Ok(GroupBy::Step),
            "metric" => Ok(GroupBy::Metric),
            other => Err(CliError::Run(format!("unknown column `{other}` (expected trial, step or metric)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Num(u64),
    Text(String),
}

impl std::fmt::Display for Key {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Key::Num(n) => write!(f, "{n}"),
            Key::Text(s) => f.write_str(s),
        }
    }
}

/// Quartile summary of `value` per group, optionally restricted to one
/// metric. Output rows are sorted by group key.
pub fn summarize(results_csv: &str, group_by: &str, metric: Option<&str>) -> Result<String, CliError> {
    let mut reader = csv::Reader::from_reader(results_csv.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::Run(format!("results table lacks column `{name}`")))
    };
    let group_col = match group_by.parse::<GroupBy>() {
        Ok(_) => col(group_by)?,
        Err(e) => return Err(e),
    };
    let (metric_col, value_col) = (col("metric")?, col("value")?);
    let numeric = group_by != "metric";
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        if metric.is_some_and(|m| &rec[metric_col] != m) {
            continue;
        }
        let raw = &rec[group_col];
        let key = if numeric {
            Key::Num(raw.parse().map_err(|_| CliError::Run(format!("non-integer {group_by} `{raw}`")))?)
        } else {
            Key::Text(raw.to_string())
        };
        let v: f64 = rec[value_col].parse().map_err(|_| CliError::Run(format!("bad value `{}`", &rec[value_col])))?;
        groups.entry(key).or_default().push(v);
    }
    let mut out = format!("{group_by},n,q1,median,q3,iqr,band_lo,band_hi\n");
    for (k, values) in groups {
        let s = quartile_summary(&values).map_err(CliError::run)?;
        let _ = writeln!(out, "{k},{},{},{},{},{},{},{}", s.n, s.q1, s.median, s.q3, s.iqr, s.band_lo, s.band_hi);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(u64, u64, &str, f64)]) -> String {
        let mut t = ResultTable::default();
        for &(a, b, m, v) in rows {
            t.push(a, b, m, v);
        }
        t.results_csv()
    }

    #[test]
    fn summarize_single_and_interpolated() {
        let csv = table(&[(0, 0, "x", 1.0), (1, 0, "x", 2.0), (2, 0, "x", 3.0), (3, 0, "x", 4.0), (4, 0, "x", 100.0), (0, 1, "x", 7.0)]);
        let out = summarize(&csv, "step", None).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[1], "0,5,2,3,4,2,-1,7");
        assert_eq!(lines[2], "1,1,7,7,7,0,7,7");
    }

    #[test]
    fn summarize_permutation_invariant() {
        let a = table(&[(0, 0, "x", 1.0), (1, 0, "x", 5.0), (2, 1, "y", 3.0)]);
        let b = table(&[(2, 1, "y", 3.0), (1, 0, "x", 5.0), (0, 0, "x", 1.0)]);
        assert_eq!(summarize(&a, "metric", None).unwrap(), summarize(&b, "metric", None).unwrap());
        assert!(summarize(&a, "bogus", None).is_err());
        let only_y = summarize(&a, "trial", Some("y")).unwrap();
        assert_eq!(only_y.lines().count(), 2);
    }

    #[test]
    fn canonical_order_is_stable() {
        let mut t = ResultTable::default();
        t.push(1, 0, "b", 1.0);
        t.push(0, 2, "a", 1.0);
        t.push(0, 1, "z", 1.0);
        t.push(0, 1, "a", 1.0);
        t.canonicalize();
        let got: Vec<(u64, u64, &str)> = t.rows.iter().map(|r| (r.trial, r.step, r.metric.as_str())).collect();
        assert_eq!(got, vec![(0, 1, "z"), (0, 1, "a"), (0, 2, "a"), (1, 0, "b")]);
    }
}
