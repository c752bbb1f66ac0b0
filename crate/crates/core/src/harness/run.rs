use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FORMAT_VERSION};
use super::data::load_task;
use super::HarnessError;
use crate::episodes::{make_meta_set, MetaSet};
use crate::learners::{checkpoint, Evaluation};
use crate::meta_policy::{meta_train, MetaEpochRecord, RunRecord};
use crate::objectives::{confidence_interval, MetricSummary};
use crate::rng::{self, Purpose};

pub const CONFIDENCE_LEVEL: f64 = 0.99;

/// Seed of the meta-set for dataset combination `combo`.
pub fn combo_seed(data_seed: u64, combo: usize) -> u64 {
    rng::stream(data_seed, Purpose::Combination, combo as u64, 0).next_u64()
}

/// Seed handed to `meta_train` for one (combination, seed) run.
pub fn run_seed(seed: u64, combo: usize) -> u64 {
    rng::stream(seed, Purpose::Misc, combo as u64, 0).next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub combo: usize,
    pub seed: u64,
    pub run_seed: u64,
    pub best_heldout: f64,
    pub best_epoch: Option<usize>,
    pub best_heldout_loss: Option<f64>,
    pub failed_epochs: usize,
    pub test: Option<Evaluation>,
}

/// Raw per-run values of one metric and their confidence interval
/// (absent with fewer than two values).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub values: Vec<f64>,
    pub summary: Option<MetricSummary>,
}

impl MetricBlock {
    pub fn from_values(values: Vec<f64>) -> Self {
        let summary = confidence_interval(&values, CONFIDENCE_LEVEL).ok();
        MetricBlock { values, summary }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub format_version: u32,
    pub label: Option<String>,
    pub config_hash: String,
    pub n_runs: usize,
    pub runs: Vec<RunSummary>,
    pub metrics: BTreeMap<String, MetricBlock>,
}

#[derive(Serialize)]
struct EpochLine<'a> {
    format_version: u32,
    combo: usize,
    seed: u64,
    #[serde(flatten)]
    entry: &'a MetaEpochRecord,
}

#[derive(Serialize)]
struct CsvRow {
    combo: usize,
    seed: u64,
    epoch: usize,
    explored: bool,
    failed: bool,
    lr: f64,
    decay: f64,
    width: usize,
    heldout_accuracy: f64,
    heldout_loss: Option<f64>,
    reward: f64,
    best_heldout_so_far: f64,
    test_accuracy: Option<f64>,
    test_loss: Option<f64>,
    test_ndcg1: Option<f64>,
    test_ndcg5: Option<f64>,
}

#[derive(Serialize)]
struct RunFile<'a> {
    format_version: u32,
    config_hash: &'a str,
    combo: usize,
    seed: u64,
    run_seed: u64,
    record: &'a RunRecord,
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

/// Meta-sets for every configured combination.
pub fn build_meta_sets(config: &ExperimentConfig, domains: &[usize]) -> Result<Vec<MetaSet>, HarnessError> {
    (0..config.combos)
        .map(|c| Ok(make_meta_set(domains, &config.meta_set, combo_seed(config.meta_policy.seed, c))?))
        .collect()
}

type Pick = fn(&RunSummary) -> Option<f64>;

fn metric_values(runs: &[RunSummary], pick: Pick) -> Option<MetricBlock> {
    let values: Vec<f64> = runs.iter().filter_map(pick).collect();
    (!values.is_empty()).then(|| MetricBlock::from_values(values))
}

/// Execute every (combination, seed) run and write `config.json`,
/// `metrics.jsonl`, `metrics.csv`, `summary.json`, per-run records and
/// best-learner checkpoints under `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary, HarnessError> {
    config.validate()?;
    let task = load_task(&config.task)?;
    let meta_sets = build_meta_sets(config, &task.domains)?;
    let seeds = config.run_seeds();
    let jobs: Vec<(usize, u64)> = (0..config.combos)
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    log::info!("running {} meta-training runs into {}", jobs.len(), out.display());
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(c, s)| {
            meta_train(
                &config.meta_policy,
                &config.learner,
                &task.pool,
                &meta_sets[c],
                run_seed(s, c),
                None,
            )
            .map_err(HarnessError::from)
        })
        .collect::<Result<_, _>>()?;

    let hash = config.hash();
    create_dir(out)?;
    write_json(&out.join("config.json"), config)?;

    let manifests = out.join("manifests");
    create_dir(&manifests)?;
    for (c, m) in meta_sets.iter().enumerate() {
        write_json(&manifests.join(format!("combo{c}.json")), &m.manifest())?;
    }

    let jsonl_path = out.join("metrics.jsonl");
    let mut jsonl = Vec::new();
    let csv_path = out.join("metrics.csv");
    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut runs = Vec::with_capacity(records.len());
    for (&(combo, seed), record) in jobs.iter().zip(&records) {
        for entry in &record.entries {
            let line = EpochLine {
                format_version: FORMAT_VERSION,
                combo,
                seed,
                entry,
            };
            serde_json::to_writer(&mut jsonl, &line).map_err(|e| HarnessError::Runtime(e.to_string()))?;
            jsonl.push(b'\n');
            csv.serialize(CsvRow {
                combo,
                seed,
                epoch: entry.epoch,
                explored: entry.explored,
                failed: entry.failed,
                lr: entry.hyper.lr,
                decay: entry.hyper.decay,
                width: entry.hyper.width,
                heldout_accuracy: entry.heldout_accuracy,
                heldout_loss: entry.heldout_loss,
                reward: entry.reward,
                best_heldout_so_far: entry.best_heldout_so_far,
                test_accuracy: entry.test.as_ref().map(|t| t.accuracy),
                test_loss: entry.test.as_ref().map(|t| t.loss),
                test_ndcg1: entry.test.as_ref().and_then(|t| t.ndcg1),
                test_ndcg5: entry.test.as_ref().and_then(|t| t.ndcg5),
            })
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        }

        let rs = run_seed(seed, combo);
        let run_dir = out.join("runs").join(format!("combo{combo}-seed{seed}"));
        create_dir(&run_dir)?;
        write_json(
            &run_dir.join("record.json"),
            &RunFile {
                format_version: FORMAT_VERSION,
                config_hash: &hash,
                combo,
                seed,
                run_seed: rs,
                record,
            },
        )?;
        if let Some(params) = &record.best_params {
            checkpoint::save(&run_dir, params).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        }
        runs.push(RunSummary {
            combo,
            seed,
            run_seed: rs,
            best_heldout: record.best_heldout,
            best_epoch: record.best_epoch,
            best_heldout_loss: record.best_heldout_loss,
            failed_epochs: record.entries.iter().filter(|e| e.failed).count(),
            test: record.test.clone(),
        });
    }
    let mut file = fs::File::create(&jsonl_path).map_err(|e| HarnessError::io(&jsonl_path, e))?;
    file.write_all(&jsonl).map_err(|e| HarnessError::io(&jsonl_path, e))?;
    let csv_bytes = csv.into_inner().map_err(|e| HarnessError::Runtime(e.to_string()))?;
    fs::write(&csv_path, csv_bytes).map_err(|e| HarnessError::io(&csv_path, e))?;

    let mut metrics = BTreeMap::new();
    let picks: [(&str, Pick); 6] = [
        ("best_heldout_accuracy", |r| Some(r.best_heldout)),
        ("best_heldout_loss", |r| r.best_heldout_loss),
        ("test_accuracy", |r| r.test.as_ref().map(|t| t.accuracy)),
        ("test_loss", |r| r.test.as_ref().map(|t| t.loss)),
        ("test_ndcg1", |r| r.test.as_ref().and_then(|t| t.ndcg1)),
        ("test_ndcg5", |r| r.test.as_ref().and_then(|t| t.ndcg5)),
    ];
    for (name, pick) in picks {
        if let Some(block) = metric_values(&runs, pick) {
            metrics.insert(name.to_string(), block);
        }
    }
    let summary = ExperimentSummary {
        format_version: FORMAT_VERSION,
        label: config.label.clone(),
        config_hash: hash,
        n_runs: runs.len(),
        runs,
        metrics,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Output directory precedence: explicit flag, then `METAOPT_OUT`, then
/// the config's `output_dir`.
pub fn resolve_output_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    match std::env::var_os("METAOPT_OUT") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => config.output_dir.clone(),
    }
}
