//! Aggregation of per-run metrics into a summary table: per (sweep value,
//! metric), the mean and standard deviation of each run's final-epoch value.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::runner::{read_metrics, MetricsRow};

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub sweep: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn get(&self, sweep: &str, metric: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.sweep == sweep && r.metric == metric)
    }

    pub fn mean(&self, sweep: &str, metric: &str) -> Option<f64> {
        self.get(sweep, metric).map(|r| r.mean)
    }
}

/// For each run and metric keep the value at the largest epoch.
fn final_values(rows: &[MetricsRow]) -> BTreeMap<(String, String, String), (usize, f64)> {
    let mut last: BTreeMap<(String, String, String), (usize, f64)> = BTreeMap::new();
    for r in rows {
        let key = (r.sweep.clone(), r.metric.clone(), r.run_id.clone());
        match last.get(&key) {
            Some(&(epoch, _)) if epoch >= r.epoch => {}
            _ => {
                last.insert(key, (r.epoch, r.value));
            }
        }
    }
    last
}

/// Aggregate all `runs/*/metrics.csv` under `out_dir` and write
/// `summary.csv` and `summary.json` next to them.
pub fn emit_summary(out_dir: &Path) -> Result<SummaryTable> {
    let runs_dir = out_dir.join("runs");
    let mut files = Vec::new();
    if runs_dir.is_dir() {
        for entry in fs::read_dir(&runs_dir)? {
            let path = entry?.path().join("metrics.csv");
            if path.is_file() {
                files.push(path);
            }
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyDataset("emit_summary: no metrics files"));
    }

    let mut rows = Vec::new();
    let mut offenders = Vec::new();
    for f in &files {
        match read_metrics(f) {
            Ok(mut r) => rows.append(&mut r),
            Err(Error::MixedSchema(mut who)) => offenders.append(&mut who),
            Err(e) => return Err(e),
        }
    }
    if !offenders.is_empty() {
        return Err(Error::MixedSchema(offenders));
    }

    let last = final_values(&rows);
    // group by (sweep, metric)
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for ((sweep, metric, _run), (_epoch, value)) in last {
        groups.entry((sweep, metric)).or_default().push(value);
    }

    let mut table = SummaryTable::default();
    for ((sweep, metric), values) in groups {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = (values.iter().map(|v| v * v).sum::<f64>() / n - mean * mean).max(0.0);
        table.rows.push(SummaryRow {
            sweep,
            metric,
            mean,
            std: var.sqrt(),
            count: values.len(),
        });
    }

    let mut csv = String::from("sweep,metric,mean,std,count\n");
    for r in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.sweep, r.metric, r.mean, r.std, r.count
        ));
    }
    fs::write(out_dir.join("summary.csv"), csv)?;

    let mut nested: BTreeMap<&str, BTreeMap<&str, &SummaryRow>> = BTreeMap::new();
    for r in &table.rows {
        nested.entry(&r.sweep).or_default().insert(&r.metric, r);
    }
    let json = serde_json::to_string_pretty(&nested)?;
    fs::write(out_dir.join("summary.json"), json + "\n")?;

    Ok(table)
}
