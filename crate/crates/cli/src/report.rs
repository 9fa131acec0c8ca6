//! Report emission: deterministic CSV tables and a machine-readable summary
//! regenerated from a persisted run report.

use crate::sweep::{AggregateRow, CellStatus, RunReport};
use anyhow::Result;
use serde::Serialize;
use std::path::Path;
use trajmia_attack::metrics::{metrics_to_csv, MetricRow};

fn agg_cells(a: &Option<crate::sweep::Aggregate>) -> String {
    match a {
        Some(a) => format!("{},{},{}", a.mean, a.stderr, a.count),
        None => "undefined,undefined,0".to_string(),
    }
}

pub const AGG_CSV_HEADER: &str = "t_max,clip_len,mode,correlation,m,theta,seeds_completed,seeds_total,\
acc_mean,acc_stderr,acc_n,pr_mean,pr_stderr,pr_n,re_mean,re_stderr,re_n,f1_mean,f1_stderr,f1_n,\
mcc_mean,mcc_stderr,mcc_n";

fn aggregates_to_csv(rows: &[AggregateRow], m: usize) -> String {
    let mut out = String::from(AGG_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let used_m = match r.setting.mode {
            crate::pipeline::Mode::Individual => 1,
            crate::pipeline::Mode::Collective => m,
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.setting.t_max,
            r.setting.clip_len,
            r.setting.mode.name(),
            if r.setting.decorrelate { "decorrelated" } else { "correlated" },
            used_m,
            r.theta,
            r.seeds_completed,
            r.seeds_total,
            agg_cells(&r.acc),
            agg_cells(&r.pr),
            agg_cells(&r.re),
            agg_cells(&r.f1),
            agg_cells(&r.mcc),
        ));
    }
    out
}

#[derive(Serialize)]
struct SettingSummary {
    setting_id: String,
    best_theta: f64,
    best_mean_acc: Option<f64>,
    mean_mcc_at_best: Option<f64>,
    seeds_completed: usize,
    mean_shadow_val_acc: Option<f64>,
}

#[derive(Serialize)]
struct Summary {
    code_version: String,
    config_hash: String,
    cells_total: usize,
    cells_completed: usize,
    settings: Vec<SettingSummary>,
}

/// Writes every artifact of a run into `out_dir`:
/// `metrics.csv`, `metrics_agg.csv`, per-cell ROC and learning-curve CSVs,
/// and `summary.json`. Output is byte-deterministic in the report content.
pub fn write_report(report: &RunReport, out_dir: impl AsRef<Path>) -> Result<()> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    std::fs::create_dir_all(out_dir.join("roc"))?;
    std::fs::create_dir_all(out_dir.join("learning_curves"))?;

    let mut all_rows: Vec<MetricRow> = Vec::new();
    for cell in &report.cells {
        let Some(result) = &cell.result else { continue };
        all_rows.extend(result.rows.iter().cloned());

        let stem = format!("{}_seed{}", cell.setting.id(), cell.seed);
        result.roc.write_csv(out_dir.join("roc").join(format!("{stem}.csv")))?;
        result
            .shadow_curve
            .write_csv(out_dir.join("learning_curves").join(format!("{stem}_shadow.csv")))?;
        result
            .private_curve
            .write_csv(out_dir.join("learning_curves").join(format!("{stem}_private.csv")))?;
    }
    std::fs::write(out_dir.join("metrics.csv"), metrics_to_csv(&all_rows))?;

    // m recorded in rows; aggregates carry it through the config echo.
    let m = all_rows.iter().map(|r| r.m).max().unwrap_or(1);
    std::fs::write(out_dir.join("metrics_agg.csv"), aggregates_to_csv(&report.aggregates, m))?;

    let mut settings_seen: Vec<String> = Vec::new();
    let mut summaries = Vec::new();
    for agg in &report.aggregates {
        let id = agg.setting.id();
        if settings_seen.contains(&id) {
            continue;
        }
        settings_seen.push(id.clone());

        let per_theta: Vec<(f64, f64)> = report
            .aggregates
            .iter()
            .filter(|a| a.setting == agg.setting)
            .filter_map(|a| a.acc.map(|x| (a.theta, x.mean)))
            .collect();
        let best_theta = trajmia_attack::best_threshold(&per_theta).unwrap_or(0.5);
        let best = report
            .aggregates
            .iter()
            .find(|a| a.setting == agg.setting && a.theta == best_theta);

        let val_accs: Vec<f64> = report
            .cells
            .iter()
            .filter(|c| c.setting == agg.setting)
            .filter_map(|c| c.result.as_ref().map(|r| r.shadow_val_acc))
            .collect();
        summaries.push(SettingSummary {
            setting_id: id,
            best_theta,
            best_mean_acc: best.and_then(|a| a.acc.map(|x| x.mean)),
            mean_mcc_at_best: best.and_then(|a| a.mcc.map(|x| x.mean)),
            seeds_completed: agg.seeds_completed,
            mean_shadow_val_acc: if val_accs.is_empty() {
                None
            } else {
                Some(val_accs.iter().sum::<f64>() / val_accs.len() as f64)
            },
        });
    }

    let summary = Summary {
        code_version: report.code_version.clone(),
        config_hash: report.config_hash.clone(),
        cells_total: report.cells.len(),
        cells_completed: report
            .cells
            .iter()
            .filter(|c| matches!(c.status, CellStatus::Ok))
            .count(),
        settings: summaries,
    };
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}
