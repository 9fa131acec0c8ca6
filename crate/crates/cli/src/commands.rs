//! Stage-wise subcommands operating on persisted artifacts.

use crate::config::ExperimentConfig;
use crate::pipeline::{build_env, Mode, SeedPlan};
use anyhow::{bail, Context, Result};
use std::path::{Path, PathBuf};
use trajmia_agents::{
    collect_batch_mixed, load_bcq_policy, query_output_trajectories, save_bcq_policy,
    save_mlp_policy, train_target_policy,
};
use trajmia_attack::classifier::predict_dataset;
use trajmia_attack::dataset::AttackDataset;
use trajmia_attack::metrics::{default_theta_sweep, MetricRow};
use trajmia_attack::{
    build_collective_dataset, build_individual_dataset, confusion, decorrelate_batch, roc_curve,
    train_attack, ArchConfig, AttackClassifier,
};
use trajmia_core::persist::{load_batch, save_batch};
use trajmia_core::seeding::substream;
use trajmia_core::SourceTag;

/// `collect`: train the behaviour policy and write the member/nonmember
/// trajectory files of one model role.
pub fn collect(cfg: &ExperimentConfig, role: &str, t_max: usize, seed: u64, out_dir: &Path) -> Result<()> {
    let plan = SeedPlan::new(seed);
    let (member_base, nonmember_base) = match role {
        "shadow" => (plan.shadow_member_base, plan.shadow_nonmember_base),
        "private" => (plan.private_member_base, plan.private_nonmember_base),
        other => bail!("unknown role {other:?} (expected shadow or private)"),
    };

    let mut env = build_env(cfg, t_max)?;
    let env = env.as_mut();
    let oracles = crate::pipeline::OraclePolicies::train(cfg, env, &plan)?;
    std::fs::create_dir_all(out_dir)?;

    let members = collect_batch_mixed(
        env,
        &oracles.member_refs(),
        cfg.experiment.members,
        cfg.experiment.collect_noise,
        member_base,
        SourceTag::Member,
    )?;
    save_batch(out_dir.join("member.jsonl"), &members)?;

    let nonmembers = collect_batch_mixed(
        env,
        &oracles.nonmember_refs(),
        cfg.experiment.nonmembers,
        cfg.experiment.collect_noise,
        nonmember_base,
        SourceTag::NonMember,
    )?;
    save_batch(out_dir.join("nonmember.jsonl"), &nonmembers)?;

    save_mlp_policy(out_dir.join("behavior.json"), oracles.first_member_policy())?;
    println!(
        "collected {} members and {} nonmembers into {}",
        members.len(),
        nonmembers.len(),
        out_dir.display()
    );
    Ok(())
}

/// `train-rl`: train the target policy offline from a trajectory file.
pub fn train_rl(
    cfg: &ExperimentConfig,
    batch_path: &Path,
    seed: u64,
    out: &Path,
    curve_out: Option<&Path>,
) -> Result<()> {
    let batch = load_batch::<f32>(batch_path, None)?;
    let mut env = build_env(cfg, batch.spec().t_max)?;
    let (policy, curve) = train_target_policy(&batch, env.as_mut(), &cfg.trainer.to_bcq(), seed)?;
    save_bcq_policy(out, &policy)?;
    if let Some(curve_out) = curve_out {
        curve.write_csv(curve_out)?;
    }
    println!(
        "trained target policy on {} trajectories ({} tuples); final return {:?}",
        batch.len(),
        batch.tuple_count(),
        curve.points.last().map(|p| p.mean_return)
    );
    Ok(())
}

/// `build-dataset`: query matched outputs from a trained policy and format
/// the labeled dataset.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    cfg: &ExperimentConfig,
    member_path: &Path,
    nonmember_path: &Path,
    model_path: &Path,
    out_dir: &Path,
    clip_len: Option<usize>,
    mode: Mode,
    decorrelate: bool,
    seed: u64,
) -> Result<()> {
    let members = load_batch::<f32>(member_path, None)?;
    let nonmembers = load_batch::<f32>(nonmember_path, Some(members.spec()))?;
    let mut env = build_env(cfg, members.spec().t_max)?;
    let env = env.as_mut();
    let policy = load_bcq_policy::<f32>(model_path, env.spec())?;

    let mut seeds = members.seed_record().to_vec();
    seeds.extend_from_slice(nonmembers.seed_record());
    let outputs = query_output_trajectories(env, &policy, &seeds)?;

    let (members, nonmembers) = if decorrelate {
        (
            decorrelate_batch(&members, substream(seed, 0))?,
            decorrelate_batch(&nonmembers, substream(seed, 1))?,
        )
    } else {
        (members, nonmembers)
    };

    let clip_len = clip_len.unwrap_or(members.spec().t_max);
    let mut dataset = build_individual_dataset(&members, &nonmembers, &outputs, clip_len)?;
    if mode == Mode::Collective {
        dataset = build_collective_dataset(
            &dataset,
            cfg.experiment.m,
            substream(seed, 2),
            cfg.experiment.collective_passes,
        )?;
    }
    dataset.save(out_dir)?;
    println!("wrote {} {} samples to {}", dataset.len(), dataset.mode().name(), out_dir.display());
    Ok(())
}

/// `train-attack`: fit the membership classifier on a dataset directory.
pub fn train_attack_cmd(cfg: &ExperimentConfig, dataset_dir: &Path, seed: u64, out: &Path) -> Result<()> {
    let dataset = AttackDataset::<f32>::load(dataset_dir)?;
    let arch = match dataset.mode() {
        trajmia_attack::DatasetMode::Individual => ArchConfig::Tcn(cfg.classifier.tcn.clone()),
        trajmia_attack::DatasetMode::Collective => ArchConfig::ResNet(cfg.classifier.resnet.clone()),
    };
    let classifier = train_attack(&dataset, &arch, &cfg.classifier.train, seed)?;
    classifier.save(out)?;
    println!(
        "trained {} classifier: best val loss {:.4} at epoch {} of {}",
        arch.name(),
        classifier.meta.best_val_loss,
        classifier.meta.best_epoch,
        classifier.meta.epochs_run
    );
    Ok(())
}

/// `evaluate`: metrics and ROC of a classifier over every sample of a
/// dataset directory.
pub fn evaluate(
    classifier_path: &Path,
    dataset_dir: &Path,
    out_dir: &Path,
    env_name: &str,
    t_max: usize,
    seed: u64,
) -> Result<()> {
    let dataset = AttackDataset::<f32>::load(dataset_dir)?;
    let classifier = AttackClassifier::<f32>::load(classifier_path)?;
    let preds = predict_dataset(&classifier, &dataset)?;
    let probs: Vec<f64> = preds.iter().map(|p| p.probability).collect();
    let labels: Vec<bool> = preds.iter().map(|p| p.label).collect();

    let sweep = default_theta_sweep();
    let mut rows = Vec::new();
    for &theta in &sweep {
        let cm = confusion(&probs, &labels, theta)?;
        rows.push(MetricRow::from_confusion(
            env_name,
            dataset.mode().name(),
            t_max,
            dataset.clip_len,
            dataset.m,
            theta,
            seed,
            &cm,
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    trajmia_attack::metrics::write_metrics_csv(out_dir.join("metrics.csv"), &rows)?;
    roc_curve(&probs, &labels, &sweep)?.write_csv(out_dir.join("roc.csv"))?;

    let at_half = rows.iter().find(|r| r.theta == 0.5).and_then(|r| r.acc);
    println!(
        "evaluated {} samples; accuracy at theta 0.5: {}",
        dataset.len(),
        at_half.map(|a| format!("{a:.3}")).unwrap_or_else(|| "undefined".into())
    );
    Ok(())
}

/// `serve-env`: host the built-in environment over stdio for adapter
/// clients.
pub fn serve_env(name: &str, t_max: usize, sparse: bool) -> Result<()> {
    match name {
        "point-reach-2d" => {
            let mut env = trajmia_core::env::PointReach2D::<f32>::with_reward(t_max, sparse);
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            trajmia_core::env::serve_environment(&mut env, stdin, stdout)
                .context("serving environment")?;
            Ok(())
        }
        other => bail!("unknown env {other:?}"),
    }
}

/// Resolve a user-supplied output path against the out-root variable.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var(crate::config::OUT_ROOT_VAR) {
        Ok(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

