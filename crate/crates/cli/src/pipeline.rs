//! One attack-pipeline cell: collect, train the shadow and private target
//! policies, query matched outputs, format, train the classifier and
//! evaluate on the private model's pairs.

use crate::config::ExperimentConfig;
use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};
use trajmia_agents::{
    collect_batch_mixed, query_output_trajectories, train_behavior_policy, train_target_policy,
    LearningCurve, MlpPolicy,
};
use trajmia_attack::classifier::predict_dataset;
use trajmia_attack::dataset::Split;
use trajmia_attack::metrics::{default_theta_sweep, MetricRow};
use trajmia_attack::{
    apply_threshold, build_collective_dataset, build_individual_dataset, confusion,
    decorrelate_batch, roc_curve, train_attack, ArchConfig, RocCurve,
};
use trajmia_core::env::{ExternalEnvClient, PointReach2D};
use trajmia_core::seeding::substream;
use trajmia_core::{Environment, Policy, SourceTag, TrajectoryBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Individual,
    Collective,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "individual" => Ok(Mode::Individual),
            "collective" => Ok(Mode::Collective),
            other => Err(anyhow!("unknown mode {other:?}")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Individual => "individual",
            Mode::Collective => "collective",
        }
    }
}

/// One point of the sweep grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSetting {
    pub t_max: usize,
    pub clip_len: usize,
    pub mode: Mode,
    pub decorrelate: bool,
}

impl CellSetting {
    pub fn id(&self) -> String {
        format!(
            "tmax{}_clip{}_{}_{}",
            self.t_max,
            self.clip_len,
            self.mode.name(),
            if self.decorrelate { "decorrelated" } else { "correlated" }
        )
    }
}

/// Seed derivation for one `(run seed)` cell. Member and nonmember reset
/// ranges are disjoint by construction across the whole run.
pub struct SeedPlan {
    pub shadow_member_base: u64,
    pub shadow_nonmember_base: u64,
    pub private_member_base: u64,
    pub private_nonmember_base: u64,
    pub oracle_seed: u64,
    pub fresh_oracle_seed: u64,
    pub shadow_trainer_seed: u64,
    pub private_trainer_seed: u64,
    pub classifier_seed: u64,
    pub dataset_seed: u64,
    pub decorrelate_base: u64,
}

impl SeedPlan {
    pub fn new(run_seed: u64) -> Self {
        let base = run_seed.wrapping_mul(10_000_000);
        Self {
            shadow_member_base: base,
            shadow_nonmember_base: base + 1_000_000,
            private_member_base: base + 2_000_000,
            private_nonmember_base: base + 3_000_000,
            oracle_seed: substream(base, 0x11),
            fresh_oracle_seed: substream(base, 0x12),
            shadow_trainer_seed: substream(base, 0x13),
            private_trainer_seed: substream(base, 0x14),
            classifier_seed: substream(base, 0x15),
            dataset_seed: substream(base, 0x16),
            decorrelate_base: substream(base, 0x17),
        }
    }
}

pub fn build_env(cfg: &ExperimentConfig, t_max: usize) -> Result<Box<dyn Environment<f32>>> {
    match cfg.experiment.env.as_str() {
        "point-reach-2d" => {
            Ok(Box::new(PointReach2D::<f32>::with_reward(t_max, cfg.experiment.sparse_reward)))
        }
        "external" => {
            let argv = &cfg.experiment.external_command;
            let mut command = std::process::Command::new(&argv[0]);
            command.args(&argv[1..]);
            let client =
                ExternalEnvClient::<f32>::from_command(&mut command).context("spawning external env")?;
            Ok(Box::new(client))
        }
        other => Err(anyhow!("unknown env {other:?}")),
    }
}

/// Everything a finished cell reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellResult {
    pub setting: CellSetting,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    pub roc: RocCurve,
    pub shadow_curve: LearningCurve,
    pub private_curve: LearningCurve,
    /// Accuracy of the classifier on its own shadow validation split at 0.5.
    pub shadow_val_acc: f64,
}

/// Trains the behaviour policies for one cell (shared across batches unless
/// `fresh` nonmember policies are requested).
pub struct OraclePolicies {
    member_policies: Vec<MlpPolicy<f32>>,
    nonmember_policies: Vec<MlpPolicy<f32>>,
}

impl OraclePolicies {
    pub fn train(
        cfg: &ExperimentConfig,
        env: &mut dyn Environment<f32>,
        plan: &SeedPlan,
    ) -> Result<Self> {
        let ddpg = cfg.oracle.to_ddpg();
        let mut member_policies = Vec::new();
        for k in 0..cfg.experiment.mix_policies {
            let seed = substream(plan.oracle_seed, k as u64);
            member_policies.push(train_behavior_policy(env, cfg.oracle.steps, &ddpg, seed)?);
        }
        let nonmember_policies = if cfg.experiment.nonmember_policy == "fresh" {
            let mut fresh = Vec::new();
            for k in 0..cfg.experiment.mix_policies {
                let seed = substream(plan.fresh_oracle_seed, k as u64);
                fresh.push(train_behavior_policy(env, cfg.oracle.steps, &ddpg, seed)?);
            }
            fresh
        } else {
            Vec::new()
        };
        Ok(Self { member_policies, nonmember_policies })
    }

    pub fn member_refs(&self) -> Vec<&dyn Policy<f32>> {
        self.member_policies.iter().map(|p| p as &dyn Policy<f32>).collect()
    }

    pub fn nonmember_refs(&self) -> Vec<&dyn Policy<f32>> {
        if self.nonmember_policies.is_empty() {
            self.member_refs()
        } else {
            self.nonmember_policies.iter().map(|p| p as &dyn Policy<f32>).collect()
        }
    }

    pub fn first_member_policy(&self) -> &MlpPolicy<f32> {
        &self.member_policies[0]
    }
}

struct ModelSide {
    members: TrajectoryBatch<f32>,
    nonmembers: TrajectoryBatch<f32>,
    outputs: TrajectoryBatch<f32>,
    curve: LearningCurve,
}

fn build_side(
    cfg: &ExperimentConfig,
    env: &mut dyn Environment<f32>,
    oracles: &OraclePolicies,
    member_base: u64,
    nonmember_base: u64,
    trainer_seed: u64,
) -> Result<ModelSide> {
    let e = &cfg.experiment;
    let members = collect_batch_mixed(
        env,
        &oracles.member_refs(),
        e.members,
        e.collect_noise,
        member_base,
        SourceTag::Member,
    )?;
    let nonmembers = collect_batch_mixed(
        env,
        &oracles.nonmember_refs(),
        e.nonmembers,
        e.collect_noise,
        nonmember_base,
        SourceTag::NonMember,
    )?;

    let (policy, curve) = train_target_policy(&members, env, &cfg.trainer.to_bcq(), trainer_seed)?;

    let mut query_seeds = members.seed_record().to_vec();
    query_seeds.extend_from_slice(nonmembers.seed_record());
    let outputs = query_output_trajectories(env, &policy, &query_seeds)?;

    Ok(ModelSide { members, nonmembers, outputs, curve })
}

/// Runs the full pipeline for one `(setting, seed)` cell and returns one
/// metrics row per acceptance threshold.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    setting: &CellSetting,
    run_seed: u64,
) -> Result<CellResult> {
    let plan = SeedPlan::new(run_seed);
    let mut env = build_env(cfg, setting.t_max)?;
    let env = env.as_mut();

    let oracles = OraclePolicies::train(cfg, env, &plan)?;

    // Shadow side: known membership, trains the classifier.
    let shadow = build_side(
        cfg,
        env,
        &oracles,
        plan.shadow_member_base,
        plan.shadow_nonmember_base,
        plan.shadow_trainer_seed,
    )
    .context("shadow model")?;
    // Private side: the attacked model; its pairs are the evaluation set.
    let private = build_side(
        cfg,
        env,
        &oracles,
        plan.private_member_base,
        plan.private_nonmember_base,
        plan.private_trainer_seed,
    )
    .context("private model")?;

    let (sh_members, sh_nonmembers) = if setting.decorrelate {
        (
            decorrelate_batch(&shadow.members, substream(plan.decorrelate_base, 0))?,
            decorrelate_batch(&shadow.nonmembers, substream(plan.decorrelate_base, 1))?,
        )
    } else {
        (shadow.members.clone(), shadow.nonmembers.clone())
    };
    let (pr_members, pr_nonmembers) = if setting.decorrelate {
        (
            decorrelate_batch(&private.members, substream(plan.decorrelate_base, 2))?,
            decorrelate_batch(&private.nonmembers, substream(plan.decorrelate_base, 3))?,
        )
    } else {
        (private.members.clone(), private.nonmembers.clone())
    };

    let mut shadow_ds =
        build_individual_dataset(&sh_members, &sh_nonmembers, &shadow.outputs, setting.clip_len)?;
    let mut private_ds =
        build_individual_dataset(&pr_members, &pr_nonmembers, &private.outputs, setting.clip_len)?;

    let arch = match setting.mode {
        Mode::Individual => ArchConfig::Tcn(cfg.classifier.tcn.clone()),
        Mode::Collective => ArchConfig::ResNet(cfg.classifier.resnet.clone()),
    };
    let m = match setting.mode {
        Mode::Individual => 1,
        Mode::Collective => {
            let m = cfg.experiment.m;
            shadow_ds = build_collective_dataset(
                &shadow_ds,
                m,
                plan.dataset_seed,
                cfg.experiment.collective_passes,
            )?;
            private_ds = build_collective_dataset(
                &private_ds,
                m,
                substream(plan.dataset_seed, 1),
                cfg.experiment.collective_passes,
            )?;
            m
        }
    };

    let classifier = train_attack(&shadow_ds, &arch, &cfg.classifier.train, plan.classifier_seed)?;

    let shadow_val_acc = {
        let preds = predict_dataset(&classifier, &shadow_ds)?;
        let val: Vec<_> = preds.iter().filter(|p| p.split == Split::Validation).collect();
        let correct = val
            .iter()
            .filter(|p| apply_threshold(p.probability, 0.5).unwrap_or(false) == p.label)
            .count();
        correct as f64 / val.len().max(1) as f64
    };

    // Every private-side pair is held out with respect to the classifier.
    let preds = predict_dataset(&classifier, &private_ds)?;
    let probs: Vec<f64> = preds.iter().map(|p| p.probability).collect();
    let labels: Vec<bool> = preds.iter().map(|p| p.label).collect();

    let env_name = shadow.members.spec().name.clone();
    let sweep = default_theta_sweep();
    let mut rows = Vec::with_capacity(sweep.len());
    for &theta in &sweep {
        let cm = confusion(&probs, &labels, theta)?;
        rows.push(MetricRow::from_confusion(
            &env_name,
            setting.mode.name(),
            setting.t_max,
            setting.clip_len,
            m,
            theta,
            run_seed,
            &cm,
        ));
    }
    let roc = roc_curve(&probs, &labels, &sweep)?;

    Ok(CellResult {
        setting: setting.clone(),
        seed: run_seed,
        rows,
        roc,
        shadow_curve: shadow.curve,
        private_curve: private.curve,
        shadow_val_acc,
    })
}
