//! `uwmpc` — data collection, training, and closed-loop evaluation for the
//! simulated 4-DOF underwater manipulator controller.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uwmpc_core::nn::{self, NetworkParams};
use uwmpc_harness::collect::{collect_data, load_dataset, save_dataset};
use uwmpc_harness::config::HarnessConfig;
use uwmpc_harness::manifest::{file_ref, Manifest};
use uwmpc_harness::metrics::compute_metrics;
use uwmpc_harness::report::{aggregate_header, aggregate_row, summarize};
use uwmpc_harness::runner::{
    run_scenario, SETTLING_BAND_FLOOR_RAD, SETTLING_BAND_FRAC,
};
use uwmpc_harness::scenario::{builtin, known_names};

#[derive(Parser)]
#[command(name = "uwmpc", version, about = "NN-MPC experiment harness (simulated plant)")]
struct Cli {
    /// Configuration file; defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run excitation episodes and write the transition dataset.
    Collect {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output dataset CSV (a `.meta.toml` sidecar is written next to it).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the delta-state model on a collected dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one closed-loop scenario and write trajectory + metrics + manifest.
    Run {
        /// Built-in scenario name or a path to a scenario TOML file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recompute metrics from a trajectory CSV.
    Metrics {
        #[arg(long)]
        traj: PathBuf,
    },
    /// Run several scenarios across seeds and write an aggregate CSV.
    Sweep {
        /// Comma-separated scenario names, or `all`.
        #[arg(long, default_value = "all")]
        scenarios: String,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize an aggregate CSV into a per-scenario table.
    Report {
        #[arg(long)]
        aggregate: PathBuf,
    },
    /// Print the effective configuration as canonical TOML.
    Config {
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<HarnessConfig, String> {
    match path {
        Some(p) => HarnessConfig::load(p).map_err(|e| format!("{}: {e}", p.display())),
        None => Ok(HarnessConfig::default()),
    }
}

fn resolve_scenario(spec: &str, seed: u64) -> Result<uwmpc_harness::scenario::Scenario, String> {
    if known_names().contains(&spec) {
        return builtin(spec, seed).map_err(|e| e.to_string());
    }
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{spec}: {e}"))?;
        let mut s: uwmpc_harness::scenario::Scenario =
            toml::from_str(&text).map_err(|e| format!("{spec}: {e}"))?;
        s.seed = seed;
        return Ok(s);
    }
    Err(format!(
        "unknown scenario {spec:?} (built-ins: {})",
        known_names().join(", ")
    ))
}

fn run_one(
    cfg: &HarnessConfig,
    scenario: &uwmpc_harness::scenario::Scenario,
    net: &NetworkParams<f64>,
    model_path: &Path,
    out_dir: &Path,
) -> Result<uwmpc_harness::metrics::RunMetrics, String> {
    std::fs::create_dir_all(out_dir).map_err(|e| e.to_string())?;
    let (traj, metrics) = run_scenario(cfg, scenario, net).map_err(|e| e.to_string())?;

    let traj_path = out_dir.join(format!("{}-{}.csv", scenario.name, scenario.seed));
    traj.save_csv(&traj_path).map_err(|e| e.to_string())?;

    let metrics_txt = out_dir.join(format!("{}-{}.metrics.txt", scenario.name, scenario.seed));
    std::fs::write(&metrics_txt, metrics.to_text()).map_err(|e| e.to_string())?;
    let metrics_csv = out_dir.join(format!("{}-{}.metrics.csv", scenario.name, scenario.seed));
    let csv = format!(
        "{}\n{}\n",
        aggregate_header(scenario.reference.len()),
        aggregate_row(&scenario.name, scenario.seed, &metrics)
    );
    std::fs::write(&metrics_csv, csv).map_err(|e| e.to_string())?;

    let mut manifest = Manifest::new("run", cfg.hash(), scenario.seed);
    manifest.scenario = Some(scenario.clone());
    manifest.inputs.push(file_ref(model_path).map_err(|e| e.to_string())?);
    for p in [&traj_path, &metrics_txt, &metrics_csv] {
        manifest.outputs.push(file_ref(p).map_err(|e| e.to_string())?);
    }
    manifest
        .save(&out_dir.join(format!("{}-{}.manifest.toml", scenario.name, scenario.seed)))
        .map_err(|e| e.to_string())?;
    Ok(metrics)
}

fn real_main() -> Result<(), String> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.config)?;
    cfg.validate().map_err(|e| e.to_string())?;

    match cli.command {
        Command::Collect { seed, out } => {
            let data = collect_data(&cfg, seed).map_err(|e| e.to_string())?;
            save_dataset(&data, &out).map_err(|e| e.to_string())?;
            let mut manifest = Manifest::new("collect", cfg.hash(), seed);
            manifest.outputs.push(file_ref(&out).map_err(|e| e.to_string())?);
            manifest
                .save(&out.with_extension("manifest.toml"))
                .map_err(|e| e.to_string())?;
            println!("collected {} transitions -> {}", data.rows.len(), out.display());
        }
        Command::Train { data, out, seed } => {
            let dataset = load_dataset(&data).map_err(|e| e.to_string())?;
            let mut tc = cfg.training.clone();
            if let Some(s) = seed {
                tc.seed = s;
            }
            let (net, report) = nn::train(&dataset, &tc).map_err(|e| e.to_string())?;
            nn::save_model(&net, &out).map_err(|e| e.to_string())?;
            let mut manifest = Manifest::new("train", cfg.hash(), tc.seed);
            manifest.inputs.push(file_ref(&data).map_err(|e| e.to_string())?);
            manifest.outputs.push(file_ref(&out).map_err(|e| e.to_string())?);
            manifest
                .save(&out.with_extension("manifest.toml"))
                .map_err(|e| e.to_string())?;
            println!(
                "trained on {} rows ({} held out); final val loss {:.3e} -> {}",
                report.train_rows,
                report.val_rows,
                report.val_loss.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
            for (i, (mse, var)) in report
                .val_mse
                .iter()
                .zip(&report.target_variance)
                .enumerate()
            {
                println!(
                    "  component {:2}: val mse {:.3e} ({:.2}% of target variance)",
                    i,
                    mse,
                    100.0 * mse / var.max(1e-300)
                );
            }
        }
        Command::Run { scenario, model, out, seed } => {
            let net = nn::load_model::<f64>(&model).map_err(|e| e.to_string())?;
            let s = resolve_scenario(&scenario, seed)?;
            let metrics = run_one(&cfg, &s, &net, &model, &out)?;
            print!("{}", metrics.to_text());
        }
        Command::Metrics { traj } => {
            let t = uwmpc_core::trajectory::Trajectory::<f64>::load_csv(&traj)
                .map_err(|e| e.to_string())?;
            let m = compute_metrics(&t, SETTLING_BAND_FRAC, SETTLING_BAND_FLOOR_RAD, None)
                .map_err(|e| e.to_string())?;
            print!("{}", m.to_text());
        }
        Command::Sweep { scenarios, seeds, model, out } => {
            let net = nn::load_model::<f64>(&model).map_err(|e| e.to_string())?;
            let names: Vec<String> = if scenarios == "all" {
                known_names().iter().map(|s| s.to_string()).collect()
            } else {
                scenarios.split(',').map(|s| s.trim().to_string()).collect()
            };
            std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            let mut rows = Vec::new();
            let mut dof = 4;
            for name in &names {
                for seed in 0..seeds {
                    let s = resolve_scenario(name, seed)?;
                    dof = s.reference.len();
                    let m = run_one(&cfg, &s, &net, &model, &out)?;
                    rows.push(aggregate_row(&s.name, seed, &m));
                }
            }
            let mut csv = aggregate_header(dof);
            csv.push('\n');
            for r in &rows {
                csv.push_str(r);
                csv.push('\n');
            }
            let agg = out.join("aggregate.csv");
            std::fs::write(&agg, &csv).map_err(|e| e.to_string())?;
            print!("{}", summarize(&csv).map_err(|e| e.to_string())?);
            println!("aggregate -> {}", agg.display());
        }
        Command::Config { out } => {
            let text = cfg.to_toml().map_err(|e| e.to_string())?;
            match out {
                Some(p) => std::fs::write(&p, &text).map_err(|e| e.to_string())?,
                None => print!("{text}"),
            }
        }
        Command::Report { aggregate } => {
            let text = std::fs::read_to_string(&aggregate).map_err(|e| e.to_string())?;
            print!("{}", summarize(&text).map_err(|e| e.to_string())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
