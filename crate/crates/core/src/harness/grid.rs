use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{create_dir, run_experiment, write_json, CONFIDENCE_LEVEL};
use super::HarnessError;
use crate::objectives::confidence_interval;

/// Evenly spaced points `start, start + step, ..., end`; `step` must
/// divide the range.
pub fn grid_points(start: f64, end: f64, step: f64) -> Result<Vec<f64>, HarnessError> {
    if !(step > 0.0) || end < start || !start.is_finite() || !end.is_finite() {
        return Err(HarnessError::Validation(format!(
            "grid: need start <= end and step > 0 (got {start}, {end}, {step})"
        )));
    }
    let n = ((end - start) / step).round();
    if ((n * step) - (end - start)).abs() > 1e-9 {
        return Err(HarnessError::Validation(format!(
            "grid: step {step} does not divide [{start}, {end}]"
        )));
    }
    Ok((0..=n as usize)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub p_explore: f64,
    pub mean_heldout_accuracy: f64,
    pub half_width: Option<f64>,
    pub n_runs: usize,
    pub run_dir: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub format_version: u32,
    /// Sorted by mean heldout accuracy, best first (ties: smaller p first).
    pub rows: Vec<GridRow>,
    pub best_p_explore: f64,
}

/// One full experiment per `p_explore` value, each in its own
/// subdirectory of `out`.
pub fn grid_search_pexplore(config: &ExperimentConfig, out: &Path, points: &[f64]) -> Result<GridTable, HarnessError> {
    if points.is_empty() {
        return Err(HarnessError::Validation("grid: no points".into()));
    }
    create_dir(out)?;
    let mut rows = Vec::with_capacity(points.len());
    for &p in points {
        let mut c = config.clone();
        c.meta_policy.p_explore = p;
        let name = format!("p{p:.2}");
        let dir = out.join(&name);
        let summary = run_experiment(&c, &dir)?;
        let values: Vec<f64> = summary.runs.iter().map(|r| r.best_heldout).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let half_width = confidence_interval(&values, CONFIDENCE_LEVEL).ok().map(|s| s.half_width);
        rows.push(GridRow {
            p_explore: p,
            mean_heldout_accuracy: mean,
            half_width,
            n_runs: values.len(),
            run_dir: name,
        });
    }
    rows.sort_by(|a, b| {
        b.mean_heldout_accuracy
            .total_cmp(&a.mean_heldout_accuracy)
            .then(a.p_explore.total_cmp(&b.p_explore))
    });
    let table = GridTable {
        format_version: 1,
        best_p_explore: rows[0].p_explore,
        rows,
    };
    write_json(&out.join("grid.json"), &table)?;
    let mut csv = csv::Writer::from_path(out.join("grid.csv")).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    for row in &table.rows {
        csv.serialize(row).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    }
    csv.flush().map_err(|e| HarnessError::io(&out.join("grid.csv"), e))?;
    Ok(table)
}
