//! The sweep driver: Cartesian product of settings times seeds, per-cell
//! failure isolation, and aggregation over completed seeds.

use crate::config::ExperimentConfig;
use crate::pipeline::{run_pipeline, CellResult, CellSetting, Mode};
use anyhow::Result;
use serde::{Deserialize, Serialize};
use trajmia_agents::eval::mean_and_stderr;

pub const REPORT_FORMAT: &str = "trajmia.run-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { error: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellRecord {
    pub setting: CellSetting,
    pub seed: u64,
    pub status: CellStatus,
    pub result: Option<CellResult>,
}

/// Mean and standard error over however many seeds had the value defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Aggregate {
    fn over(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, stderr) = mean_and_stderr(values);
        Some(Self { mean, stderr, count: values.len() })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateRow {
    pub setting: CellSetting,
    pub theta: f64,
    pub seeds_total: usize,
    pub seeds_completed: usize,
    pub acc: Option<Aggregate>,
    pub pr: Option<Aggregate>,
    pub re: Option<Aggregate>,
    pub f1: Option<Aggregate>,
    pub mcc: Option<Aggregate>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub code_version: String,
    pub config_hash: String,
    pub config_toml: String,
    pub cells: Vec<CellRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl RunReport {
    pub fn all_completed(&self) -> bool {
        self.cells.iter().all(|c| matches!(c.status, CellStatus::Ok))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let report: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        anyhow::ensure!(
            report.format == REPORT_FORMAT && report.version == REPORT_VERSION,
            "unknown run-report format {}/{}",
            report.format,
            report.version
        );
        Ok(report)
    }
}

/// Expands the config grid into concrete cell settings.
pub fn settings_from(cfg: &ExperimentConfig) -> Result<Vec<CellSetting>> {
    let e = &cfg.experiment;
    let mut settings = Vec::new();
    for &t_max in &e.t_max {
        let clips: Vec<usize> =
            if e.clip_lengths.is_empty() { vec![t_max] } else { e.clip_lengths.clone() };
        for clip_len in clips {
            for mode in &e.modes {
                for corr in &e.correlations {
                    settings.push(CellSetting {
                        t_max,
                        clip_len,
                        mode: Mode::parse(mode)?,
                        decorrelate: corr == "decorrelated",
                    });
                }
            }
        }
    }
    Ok(settings)
}

/// Runs every `(setting, seed)` cell; failures are recorded and the rest of
/// the sweep proceeds.
pub fn sweep(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let settings = settings_from(cfg)?;
    let mut cells = Vec::new();
    for setting in &settings {
        for &seed in &cfg.experiment.seeds {
            let started = std::time::Instant::now();
            let record = match run_pipeline(cfg, setting, seed) {
                Ok(result) => CellRecord {
                    setting: setting.clone(),
                    seed,
                    status: CellStatus::Ok,
                    result: Some(result),
                },
                Err(e) => CellRecord {
                    setting: setting.clone(),
                    seed,
                    status: CellStatus::Failed { error: format!("{e:#}") },
                    result: None,
                },
            };
            eprintln!(
                "cell {} seed {seed}: {} ({:.1?})",
                setting.id(),
                match &record.status {
                    CellStatus::Ok => "ok".to_string(),
                    CellStatus::Failed { error } => format!("FAILED: {error}"),
                },
                started.elapsed()
            );
            cells.push(record);
        }
    }

    let aggregates = aggregate(cfg, &settings, &cells);
    Ok(RunReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        code_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        config_toml: cfg.to_toml(),
        cells,
        aggregates,
    })
}

fn aggregate(
    cfg: &ExperimentConfig,
    settings: &[CellSetting],
    cells: &[CellRecord],
) -> Vec<AggregateRow> {
    let seeds_total = cfg.experiment.seeds.len();
    let mut rows = Vec::new();
    for setting in settings {
        let completed: Vec<&CellResult> = cells
            .iter()
            .filter(|c| &c.setting == setting)
            .filter_map(|c| c.result.as_ref())
            .collect();
        if completed.is_empty() {
            continue;
        }
        let thetas: Vec<f64> = completed[0].rows.iter().map(|r| r.theta).collect();
        for (i, &theta) in thetas.iter().enumerate() {
            let collect = |f: &dyn Fn(&trajmia_attack::MetricRow) -> Option<f64>| -> Vec<f64> {
                completed.iter().filter_map(|c| f(&c.rows[i])).collect()
            };
            rows.push(AggregateRow {
                setting: setting.clone(),
                theta,
                seeds_total,
                seeds_completed: completed.len(),
                acc: Aggregate::over(&collect(&|r| r.acc)),
                pr: Aggregate::over(&collect(&|r| r.pr)),
                re: Aggregate::over(&collect(&|r| r.re)),
                f1: Aggregate::over(&collect(&|r| r.f1)),
                mcc: Aggregate::over(&collect(&|r| Some(r.mcc))),
            });
        }
    }
    rows
}
