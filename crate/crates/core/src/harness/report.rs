use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{ExperimentSummary, CONFIDENCE_LEVEL};
use super::HarnessError;
use crate::objectives::confidence_interval;

/// Metric columns in display order.
pub const REPORT_METRICS: [&str; 5] = [
    "best_heldout_accuracy",
    "test_accuracy",
    "test_ndcg1",
    "test_ndcg5",
    "best_heldout_loss",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    /// `None` for a single run.
    pub half_width: Option<f64>,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub run_dir: PathBuf,
    pub cells: Vec<Option<Cell>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

fn load_summary(dir: &Path) -> Result<ExperimentSummary, HarnessError> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::Runtime(format!("{}: corrupt summary: {e}", path.display())))
}

/// Aggregate completed runs into a comparison table. Means and intervals
/// are recomputed from the raw per-run values and must agree with the
/// stored summary.
pub fn report(dirs: &[PathBuf]) -> Result<ReportTable, HarnessError> {
    if dirs.is_empty() {
        return Err(HarnessError::Validation("report: no run directories given".into()));
    }
    let mut rows = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let summary = load_summary(dir)?;
        let label = summary.label.clone().unwrap_or_else(|| {
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string())
        });
        let mut cells = Vec::with_capacity(REPORT_METRICS.len());
        for name in REPORT_METRICS {
            let Some(block) = summary.metrics.get(name) else {
                cells.push(None);
                continue;
            };
            if block.values.is_empty() {
                cells.push(None);
                continue;
            }
            let recomputed = confidence_interval(&block.values, CONFIDENCE_LEVEL).ok();
            match (&recomputed, &block.summary) {
                (Some(r), Some(s)) => {
                    if (r.mean - s.mean).abs() > 1e-9 || (r.half_width - s.half_width).abs() > 1e-9 {
                        return Err(HarnessError::Runtime(format!(
                            "{}: stored {name} interval disagrees with its raw values",
                            dir.display()
                        )));
                    }
                }
                (None, None) => {}
                _ => {
                    return Err(HarnessError::Runtime(format!(
                        "{}: stored {name} summary inconsistent with value count",
                        dir.display()
                    )))
                }
            }
            let mean = block.values.iter().sum::<f64>() / block.values.len() as f64;
            cells.push(Some(Cell {
                mean: recomputed.as_ref().map_or(mean, |r| r.mean),
                half_width: recomputed.map(|r| r.half_width),
                n: block.values.len(),
            }));
        }
        rows.push(ReportRow {
            label,
            run_dir: dir.clone(),
            cells,
        });
    }
    rows.sort_by(|a, b| a.label.cmp(&b.label).then_with(|| a.run_dir.cmp(&b.run_dir)));
    Ok(ReportTable {
        columns: REPORT_METRICS.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}

fn cell_text(cell: &Option<Cell>) -> String {
    match cell {
        None => "-".into(),
        Some(Cell {
            mean,
            half_width: Some(h),
            ..
        }) => format!("{mean:.4} ± {h:.4}"),
        Some(Cell { mean, .. }) => format!("{mean:.4}"),
    }
}

impl ReportTable {
    /// Fixed-width text table; intervals are 99% normal-approximation.
    pub fn to_text(&self) -> String {
        let mut header = vec!["config".to_string()];
        header.extend(self.columns.iter().cloned());
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut line = vec![r.label.clone()];
                line.extend(r.cells.iter().map(cell_text));
                line
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|l| l[i].chars().count())
                    .chain([header[i].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for line in std::iter::once(&header).chain(&body) {
            let cols: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}", w = *w))
                .collect();
            writeln!(out, "{}", cols.join("  ").trim_end()).expect("string write");
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["config".to_string(), "n_runs".to_string()];
        for c in &self.columns {
            header.push(format!("{c}_mean"));
            header.push(format!("{c}_ci99"));
        }
        w.write_record(&header).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        for r in &self.rows {
            let n = r.cells.iter().flatten().map(|c| c.n).max().unwrap_or(0);
            let mut rec = vec![r.label.clone(), n.to_string()];
            for c in &r.cells {
                match c {
                    Some(c) => {
                        rec.push(c.mean.to_string());
                        rec.push(c.half_width.map(|h| h.to_string()).unwrap_or_default());
                    }
                    None => {
                        rec.push(String::new());
                        rec.push(String::new());
                    }
                }
            }
            w.write_record(&rec).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Runtime(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}
