use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use metaopt::harness::{
    baseline_config, build_meta_sets, grid_points, grid_search_pexplore, load_task, report, resolve_output_dir,
    run_experiment, DomainInfo, ExperimentConfig, HarnessError, FORMAT_VERSION,
};

#[derive(Parser)]
#[command(name = "metaopt", version, about = "Meta-learned gradient scaling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Replace the configured run seeds with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides METAOPT_OUT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the exploration probability.
    #[arg(long = "p-explore")]
    p_explore: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train over every (combination, seed) pair.
    MetaTrain(Common),
    /// Sweep p_explore over [start, end] and rank the grid points.
    GridSearch {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        start: f64,
        #[arg(long, default_value_t = 1.0)]
        end: f64,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
    },
    /// Cluster a LETOR file into domains and write the meta-set manifests.
    MakeDomains(Common),
    /// Train the identity-scaling baseline (no exploration) under the same protocol.
    Eval(Common),
    /// Aggregate finished runs into a comparison table.
    Report {
        /// Run directories containing summary.json.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write report.txt and report.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn prepare(common: &Common) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    if let Some(p) = common.p_explore {
        config.meta_policy.p_explore = p;
    }
    config.validate()?;
    let out = resolve_output_dir(common.out.as_deref(), &config);
    Ok((config, out))
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn to_json(value: &impl Serialize) -> Result<String, HarnessError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| HarnessError::Runtime(e.to_string()))
}

#[derive(Serialize)]
struct DomainsFile<'a> {
    format_version: u32,
    #[serde(flatten)]
    info: &'a DomainInfo,
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::MetaTrain(common) => {
            let (config, out) = prepare(&common)?;
            let summary = run_experiment(&config, &out)?;
            println!("{} runs written to {}", summary.n_runs, out.display());
        }
        Command::Eval(common) => {
            let (config, out) = prepare(&common)?;
            let summary = run_experiment(&baseline_config(&config), &out)?;
            println!("{} baseline runs written to {}", summary.n_runs, out.display());
        }
        Command::GridSearch {
            common,
            start,
            end,
            step,
        } => {
            let (config, out) = prepare(&common)?;
            let points = grid_points(start, end, step)?;
            let table = grid_search_pexplore(&config, &out, &points)?;
            for row in &table.rows {
                match row.half_width {
                    Some(h) => println!("p_explore={:.2}  {:.4} ± {:.4}", row.p_explore, row.mean_heldout_accuracy, h),
                    None => println!("p_explore={:.2}  {:.4}", row.p_explore, row.mean_heldout_accuracy),
                }
            }
            println!("best p_explore: {:.2}", table.best_p_explore);
        }
        Command::MakeDomains(common) => {
            let (config, out) = prepare(&common)?;
            let task = load_task(&config.task)?;
            let info = task.domain_info.as_ref().ok_or_else(|| {
                HarnessError::Validation("task.source: make-domains needs a letor source".into())
            })?;
            let meta_sets = build_meta_sets(&config, &task.domains)?;
            let manifests = out.join("manifests");
            fs::create_dir_all(&manifests).map_err(|e| HarnessError::io(&manifests, e))?;
            write(
                &out.join("domains.json"),
                &to_json(&DomainsFile {
                    format_version: FORMAT_VERSION,
                    info,
                })?,
            )?;
            for (c, m) in meta_sets.iter().enumerate() {
                write(&manifests.join(format!("combo{c}.json")), &to_json(&m.manifest())?)?;
            }
            println!(
                "K={} silhouette={:.4}; {} manifests written to {}",
                info.partition.k,
                info.partition.silhouette,
                meta_sets.len(),
                out.display()
            );
        }
        Command::Report { runs, out } => {
            let table = report(&runs)?;
            let text = table.to_text();
            print!("{text}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
                write(&dir.join("report.txt"), &text)?;
                write(&dir.join("report.csv"), &table.to_csv()?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
