use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use metaopt::harness::{
    baseline_config, grid_points, grid_search_pexplore, report, run_experiment, ExperimentConfig, ExperimentSummary,
    HarnessError, TaskSource,
};
use metaopt::learners::checkpoint;
use metaopt::objectives::confidence_interval;

fn quadratic_config(epochs: usize, combos: usize, seeds: &[u64]) -> ExperimentConfig {
    let text = format!(
        r#"{{
        "format_version": 1,
        "label": "quad",
        "task": {{"source": "synthetic", "family": {{"kind": "quadratic_bowl", "dimension": 6, "noise": 0.1, "seed": 4}}, "n_tasks": 15}},
        "meta_set": {{"n_way": 1, "counts": {{"train_shots": 3, "heldout": 3, "test": 3}}, "n_train_batches": 2, "mode": {{"mode": "shared_domains"}}}},
        "learner": {{"kind": "direct"}},
        "meta_policy": {{"lr_grid": [0.05, 0.1], "width_grid": [1], "p_explore": 0.2, "meta_epochs": {epochs}, "inner_epochs": 2}},
        "combos": {combos},
        "seeds": {seeds:?},
        "output_dir": "unused"
    }}"#
    );
    ExperimentConfig::from_json(&text).unwrap()
}

/// Three well separated query clusters, `per_cluster` queries each.
fn letor_fixture(per_cluster: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut out = String::new();
    let mut qid = 1;
    for cluster in 0..3 {
        let centre: Vec<f64> = (0..3).map(|f| if f == cluster { 5.0 } else { 0.0 }).collect();
        for _ in 0..per_cluster {
            for doc in 0..5 {
                let grade = rng.random_range(0..3u32);
                out.push_str(&format!("{grade} qid:{qid}"));
                for (f, c) in centre.iter().enumerate() {
                    let signal = grade as f64 * 0.2;
                    let v = c + signal + rng.random_range(-0.1..0.1);
                    out.push_str(&format!(" {}:{v:.5}", f + 1));
                }
                out.push_str(&format!(" #doc{qid}-{doc}\n"));
            }
            qid += 1;
        }
    }
    out
}

fn letor_config(dir: &Path) -> PathBuf {
    fs::write(dir.join("train.txt"), letor_fixture(12)).unwrap();
    let config = r#"{
        "format_version": 1,
        "label": "letor",
        "task": {"source": "letor", "path": "train.txt", "domains": {"k": 3, "threshold": 0.5, "restarts": 4, "seed": 1}},
        "meta_set": {"n_way": 1, "counts": {"train_shots": 2, "heldout": 2, "test": 2}, "n_train_batches": 2,
                     "mode": {"mode": "disjoint_domains", "train_domains": 1, "heldout_domains": 1, "test_domains": 1}},
        "learner": {"kind": "mlp", "hidden_layers": 1},
        "meta_policy": {"lr_grid": [0.05, 0.1], "width_grid": [4], "p_explore": 0.3, "meta_epochs": 3},
        "combos": 2,
        "seeds": [5],
        "output_dir": "runs"
    }"#;
    let path = dir.join("letor.json");
    fs::write(&path, config).unwrap();
    path
}

fn metaopt() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_metaopt"));
    c.env_remove("METAOPT_OUT");
    c
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = quadratic_config(4, 3, &[1, 2]);
    let summary = run_experiment(&config, dir.path()).unwrap();
    assert_eq!(summary.n_runs, 6);

    let jsonl = fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 4 * 3 * 2);
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["format_version"], 1);
        assert!(v["lambdas"].is_array());
    }
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 24);

    for c in 0..3 {
        assert!(dir.path().join(format!("manifests/combo{c}.json")).is_file());
        for s in [1, 2] {
            let run = dir.path().join(format!("runs/combo{c}-seed{s}"));
            let record: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(run.join("record.json")).unwrap()).unwrap();
            assert_eq!(record["config_hash"], config.hash());
            let epochs: Vec<u64> = record["record"]["entries"]
                .as_array()
                .unwrap()
                .iter()
                .map(|e| e["epoch"].as_u64().unwrap())
                .collect();
            assert_eq!(epochs, vec![0, 1, 2, 3]);
            let groups = checkpoint::load(&run).unwrap();
            assert_eq!(groups.len(), 6);
        }
    }

    let stored: ExperimentConfig =
        serde_json::from_str(&fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(stored.hash(), summary.config_hash);

    let block = &summary.metrics["best_heldout_accuracy"];
    assert_eq!(block.values.len(), 6);
    let ci = confidence_interval(&block.values, 0.99).unwrap();
    assert_eq!(block.summary.as_ref().unwrap(), &ci);
}

#[test]
fn runs_are_reproducible_from_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = quadratic_config(5, 2, &[3]);
    let a = run_experiment(&config, &dir.path().join("a")).unwrap();
    let b = run_experiment(&config, &dir.path().join("b")).unwrap();
    assert_eq!(a, b);
    for file in ["metrics.jsonl", "metrics.csv", "summary.json", "runs/combo1-seed3/record.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn report_recomputes_and_is_order_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let config = quadratic_config(4, 2, &[0, 1]);
    let a = dir.path().join("gre");
    let b = dir.path().join("base");
    run_experiment(&config, &a).unwrap();
    run_experiment(&baseline_config(&config), &b).unwrap();

    let t1 = report(&[a.clone(), b.clone()]).unwrap();
    let t2 = report(&[b.clone(), a.clone()]).unwrap();
    assert_eq!(t1.to_text(), t2.to_text());
    assert_eq!(t1.rows.len(), 2);
    assert_eq!(t1.rows[0].label, "quad");
    assert_eq!(t1.rows[1].label, "quad (baseline)");

    let summary: ExperimentSummary =
        serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    let stored = summary.metrics["best_heldout_accuracy"].summary.clone().unwrap();
    let cell = t1.rows[0].cells[0].clone().unwrap();
    assert!((cell.mean - stored.mean).abs() <= 1e-9);
    assert!((cell.half_width.unwrap() - stored.half_width).abs() <= 1e-9);

    let csv = t1.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("config,n_runs,best_heldout_accuracy_mean"));

    let single = report(std::slice::from_ref(&a)).unwrap();
    assert_eq!(single.rows.len(), 1);
}

#[test]
fn report_rejects_missing_and_tampered_runs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(report(&[dir.path().join("nope")]), Err(HarnessError::Io { .. })));

    let run = dir.path().join("run");
    run_experiment(&quadratic_config(3, 2, &[0]), &run).unwrap();
    let path = run.join("summary.json");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    v["metrics"]["best_heldout_accuracy"]["values"][0] = serde_json::json!(-5.0);
    fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    assert!(matches!(report(std::slice::from_ref(&run)), Err(HarnessError::Runtime(m)) if m.contains("disagrees")));

    fs::write(&path, "{ not json").unwrap();
    assert!(matches!(report(&[run]), Err(HarnessError::Runtime(m)) if m.contains("corrupt")));
}

#[test]
fn grid_search_covers_the_unit_interval() {
    let points = grid_points(0.0, 1.0, 0.1).unwrap();
    assert_eq!(points.len(), 11);
    let dir = tempfile::tempdir().unwrap();
    let config = quadratic_config(3, 2, &[0]);
    let table = grid_search_pexplore(&config, dir.path(), &points).unwrap();
    assert_eq!(table.rows.len(), 11);
    assert!(table.rows.iter().all(|r| r.half_width.is_some()));
    for pair in table.rows.windows(2) {
        assert!(pair[0].mean_heldout_accuracy >= pair[1].mean_heldout_accuracy);
    }
    assert_eq!(table.best_p_explore, table.rows[0].p_explore);
    assert!(dir.path().join("p0.30/summary.json").is_file());
    assert!(dir.path().join("grid.json").is_file());
    assert_eq!(fs::read_to_string(dir.path().join("grid.csv")).unwrap().lines().count(), 12);
}

#[test]
fn letor_source_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = letor_config(dir.path());
    let config = ExperimentConfig::load(&config_path).unwrap();
    assert!(matches!(&config.task, TaskSource::Letor { path, .. } if path.is_absolute() || path.starts_with(dir.path())));
    let summary = run_experiment(&config, &dir.path().join("out")).unwrap();
    assert_eq!(summary.n_runs, 2);
    for name in ["test_ndcg1", "test_ndcg5"] {
        let block = &summary.metrics[name];
        assert!(block.values.iter().all(|v| (0.0..=1.0).contains(v)), "{name}");
    }

    let out = metaopt()
        .args(["make-domains", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("domains"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let domains: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("domains/domains.json")).unwrap()).unwrap();
    assert_eq!(domains["format_version"], 1);
    assert_eq!(domains["partition"]["k"], 3);
    assert_eq!(domains["qids"].as_array().unwrap().len(), 36);
    assert!(domains["partition"]["silhouette"].as_f64().unwrap() >= 0.5);
    assert!(dir.path().join("domains/manifests/combo1.json").is_file());
}

#[test]
fn cli_exit_codes_and_output_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("q.json");
    let mut config = quadratic_config(2, 1, &[0]);
    config.output_dir = dir.path().join("from_config");
    fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();

    // Config output_dir, then the environment, then --out.
    assert!(metaopt().args(["meta-train", "--config"]).arg(&config_path).status().unwrap().success());
    assert!(dir.path().join("from_config/metrics.jsonl").is_file());
    let status = metaopt()
        .env("METAOPT_OUT", dir.path().join("from_env"))
        .args(["eval", "--config"])
        .arg(&config_path)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("from_env/summary.json").is_file());
    let status = metaopt()
        .env("METAOPT_OUT", dir.path().join("ignored"))
        .args(["meta-train", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("from_flag"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("from_flag/summary.json").is_file());
    assert!(!dir.path().join("ignored").exists());

    let bad = metaopt()
        .args(["meta-train", "--config"])
        .arg(&config_path)
        .args(["--p-explore", "1.5"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("meta_policy.p_explore"));

    let unknown = dir.path().join("unknown.json");
    fs::write(
        &unknown,
        fs::read_to_string(&config_path).unwrap().replacen('{', "{\"surprise\": 1, ", 1),
    )
    .unwrap();
    assert_eq!(metaopt().args(["meta-train", "--config"]).arg(&unknown).status().unwrap().code(), Some(1));
    assert_eq!(metaopt().arg("frobnicate").status().unwrap().code(), Some(1));

    let missing = metaopt()
        .args(["report"])
        .arg(dir.path().join("no-such-run"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));

    let rep = metaopt()
        .arg("report")
        .arg(dir.path().join("from_flag"))
        .arg(dir.path().join("from_env"))
        .arg("--out")
        .arg(dir.path().join("report"))
        .output()
        .unwrap();
    assert!(rep.status.success());
    let text = String::from_utf8_lossy(&rep.stdout);
    assert!(text.contains("quad (baseline)"), "{text}");
    assert!(dir.path().join("report/report.csv").is_file());
}
