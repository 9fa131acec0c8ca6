//! Command-line entry point for the membership-inference experiment
//! pipeline.

mod commands;
mod config;
mod pipeline;
mod report;
mod sweep;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "trajmia",
    version,
    about = "Membership-inference experiments against batch off-policy deep RL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the behaviour policy and collect member/nonmember trajectory files.
    Collect {
        #[arg(long)]
        config: PathBuf,
        /// Which model's data to collect: `shadow` or `private`.
        #[arg(long, default_value = "shadow")]
        role: String,
        /// Episode cap; defaults to the first configured value.
        #[arg(long)]
        t_max: Option<usize>,
        /// Run seed (selects disjoint reset-seed ranges).
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the target policy offline from a trajectory file.
    TrainRl {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory batch file (the private training data).
        #[arg(long)]
        batch: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Policy checkpoint destination.
        #[arg(long)]
        out: PathBuf,
        /// Optional learning-curve CSV destination.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Query matched outputs and format the labeled attack dataset.
    BuildDataset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        member: PathBuf,
        #[arg(long)]
        nonmember: PathBuf,
        /// Target-policy checkpoint to query.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Clip length; defaults to the batch's episode cap.
        #[arg(long)]
        clip_len: Option<usize>,
        #[arg(long, default_value = "individual")]
        mode: String,
        /// Shuffle the input trajectories' tuples before pairing.
        #[arg(long)]
        decorrelate: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Fit the membership classifier on a dataset directory.
    TrainAttack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics and ROC of a classifier over a dataset directory.
    Evaluate {
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Environment name recorded in the metrics rows.
        #[arg(long, default_value = "PointReach2D")]
        env_name: String,
        /// Episode cap recorded in the metrics rows.
        #[arg(long, default_value_t = 0)]
        t_max: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the whole grid: settings x seeds, with per-cell isolation.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Overrides the configured seeds (comma-separated).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Overrides the configured episode caps (comma-separated).
        #[arg(long, value_delimiter = ',')]
        t_max: Option<Vec<usize>>,
        /// Overrides the configured modes (comma-separated).
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<String>>,
    },
    /// Regenerate every CSV and the summary from a persisted run report.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Host the built-in environment over stdio (adapter protocol).
    ServeEnv {
        #[arg(long, default_value = "point-reach-2d")]
        env: String,
        #[arg(long, default_value_t = 50)]
        t_max: usize,
        /// 0/1 goal-indicator reward instead of the dense distance reward.
        #[arg(long)]
        sparse: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(all_ok) => std::process::exit(if all_ok { 0 } else { 1 }),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Collect { config, role, t_max, seed, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let t_max = t_max.unwrap_or(cfg.experiment.t_max[0]);
            commands::collect(&cfg, &role, t_max, seed, &commands::resolve_out(&out_dir))?;
            Ok(true)
        }
        Command::TrainRl { config, batch, seed, out, curve } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::train_rl(
                &cfg,
                &batch,
                seed,
                &commands::resolve_out(&out),
                curve.as_deref(),
            )?;
            Ok(true)
        }
        Command::BuildDataset {
            config,
            member,
            nonmember,
            model,
            out_dir,
            clip_len,
            mode,
            decorrelate,
            seed,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mode = pipeline::Mode::parse(&mode)?;
            commands::build_dataset(
                &cfg,
                &member,
                &nonmember,
                &model,
                &commands::resolve_out(&out_dir),
                clip_len,
                mode,
                decorrelate,
                seed,
            )?;
            Ok(true)
        }
        Command::TrainAttack { config, dataset, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::train_attack_cmd(&cfg, &dataset, seed, &commands::resolve_out(&out))?;
            Ok(true)
        }
        Command::Evaluate { classifier, dataset, out_dir, env_name, t_max, seed } => {
            commands::evaluate(
                &classifier,
                &dataset,
                &commands::resolve_out(&out_dir),
                &env_name,
                t_max,
                seed,
            )?;
            Ok(true)
        }
        Command::Sweep { config, out_dir, seeds, t_max, modes } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seeds) = seeds {
                cfg.experiment.seeds = seeds;
            }
            if let Some(t_max) = t_max {
                cfg.experiment.t_max = t_max;
            }
            if let Some(modes) = modes {
                cfg.experiment.modes = modes;
            }
            cfg.validate()?;

            let out_dir = out_dir
                .map(|d| commands::resolve_out(&d))
                .unwrap_or_else(|| cfg.resolved_out_dir());
            let report = sweep::sweep(&cfg)?;
            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            report.save(out_dir.join("run_report.json"))?;
            report::write_report(&report, &out_dir)?;
            let ok = report.all_completed();
            println!(
                "sweep finished: {}/{} cells completed; artifacts in {}",
                report
                    .cells
                    .iter()
                    .filter(|c| matches!(c.status, sweep::CellStatus::Ok))
                    .count(),
                report.cells.len(),
                out_dir.display()
            );
            Ok(ok)
        }
        Command::Report { run, out_dir } => {
            let report = sweep::RunReport::load(&run)?;
            report::write_report(&report, &commands::resolve_out(&out_dir))?;
            Ok(true)
        }
        Command::ServeEnv { env, t_max, sparse } => {
            commands::serve_env(&env, t_max, sparse)?;
            Ok(true)
        }
    }
}
