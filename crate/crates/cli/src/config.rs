//! The experiment configuration file (TOML) and its validation.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use trajmia_agents::{BcqConfig, DdpgConfig};
use trajmia_attack::{ResNetConfig, TcnConfig, TrainSpec};

/// Environment variable prepended to relative output directories.
pub const OUT_ROOT_VAR: &str = "TRAJMIA_OUT_ROOT";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// `point-reach-2d` or `external` (see `external_command`).
    pub env: String,
    /// Command line of an adapter-protocol environment server.
    pub external_command: Vec<String>,
    pub sparse_reward: bool,
    pub t_max: Vec<usize>,
    /// Empty means "clip at t_max" for every cell.
    pub clip_lengths: Vec<usize>,
    pub modes: Vec<String>,
    /// Pairs per stack in collective mode.
    pub m: usize,
    /// Re-deals of each split into stacks when building collective sets.
    pub collective_passes: usize,
    pub correlations: Vec<String>,
    pub members: usize,
    pub nonmembers: usize,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    /// Exploration-noise scale used when collecting batches.
    pub collect_noise: f64,
    /// `shared` reuses the behaviour policy for nonmembers, `fresh` trains a
    /// second one.
    pub nonmember_policy: String,
    /// Number of behaviour policies mixed during collection.
    pub mix_policies: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            env: "point-reach-2d".into(),
            external_command: Vec::new(),
            sparse_reward: false,
            t_max: vec![20],
            clip_lengths: Vec::new(),
            modes: vec!["individual".into()],
            m: 10,
            collective_passes: 4,
            correlations: vec!["correlated".into()],
            members: 200,
            nonmembers: 200,
            seeds: vec![1, 2, 3],
            out_dir: "runs/experiment".into(),
            collect_noise: 0.5,
            nonmember_policy: "shared".into(),
            mix_policies: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub steps: usize,
    pub hidden: usize,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub explore_noise: f64,
    pub warmup: usize,
    pub batch_size: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            steps: 3_000,
            hidden: 64,
            lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            explore_noise: 0.1,
            warmup: 500,
            batch_size: 64,
        }
    }
}

impl OracleSection {
    pub fn to_ddpg(&self) -> DdpgConfig {
        DdpgConfig {
            hidden: self.hidden,
            actor_lr: self.lr,
            critic_lr: self.lr,
            gamma: self.gamma,
            tau: self.tau,
            explore_noise: self.explore_noise,
            warmup_steps: self.warmup,
            batch_size: self.batch_size,
            ..DdpgConfig::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub gradient_steps: usize,
    pub hidden: usize,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub phi: f64,
    pub n_cand: usize,
    pub kl_weight: f64,
    pub min_weight: f64,
    pub batch_size: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl Default for TrainerSection {
    fn default() -> Self {
        Self {
            gradient_steps: 8_000,
            hidden: 96,
            lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            phi: 0.05,
            n_cand: 10,
            kl_weight: 0.5,
            min_weight: 0.75,
            batch_size: 64,
            eval_interval: 500,
            eval_episodes: 10,
        }
    }
}

impl TrainerSection {
    pub fn to_bcq(&self) -> BcqConfig {
        BcqConfig {
            hidden: self.hidden,
            vae_lr: self.lr,
            critic_lr: self.lr,
            pert_lr: self.lr,
            gamma: self.gamma,
            tau: self.tau,
            phi: self.phi,
            n_cand: self.n_cand,
            kl_weight: self.kl_weight,
            min_weight: self.min_weight,
            batch_size: self.batch_size,
            gradient_steps: self.gradient_steps,
            eval_interval: self.eval_interval,
            eval_episodes: self.eval_episodes,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub tcn: TcnConfig,
    pub resnet: ResNetConfig,
    pub train: TrainSpec,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub oracle: OracleSection,
    pub trainer: TrainerSection,
    pub classifier: ClassifierSection,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .with_context(|| format!("reading config {}", path.as_ref().display()))?;
        let cfg: Self = toml::from_str(&text).context("parsing config TOML")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.t_max.is_empty() || e.modes.is_empty() || e.correlations.is_empty() || e.seeds.is_empty() {
            bail!("t_max, modes, correlations and seeds must all be nonempty");
        }
        let mut seeds = e.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != e.seeds.len() {
            bail!("seeds must be distinct");
        }
        if e.members == 0 || e.nonmembers == 0 {
            bail!("members and nonmembers must be positive");
        }
        for mode in &e.modes {
            if mode != "individual" && mode != "collective" {
                bail!("unknown mode {mode:?} (expected individual or collective)");
            }
        }
        for corr in &e.correlations {
            if corr != "correlated" && corr != "decorrelated" {
                bail!("unknown correlation {corr:?} (expected correlated or decorrelated)");
            }
        }
        if e.nonmember_policy != "shared" && e.nonmember_policy != "fresh" {
            bail!("nonmember_policy must be shared or fresh");
        }
        if e.env != "point-reach-2d" && e.env != "external" {
            bail!("unknown env {:?} (expected point-reach-2d or external)", e.env);
        }
        if e.env == "external" && e.external_command.is_empty() {
            bail!("external env requires external_command");
        }
        if e.mix_policies == 0 {
            bail!("mix_policies must be at least 1");
        }
        Ok(())
    }

    /// Output directory with the `TRAJMIA_OUT_ROOT` prefix applied to
    /// relative paths.
    pub fn resolved_out_dir(&self) -> PathBuf {
        let dir = PathBuf::from(&self.experiment.out_dir);
        if dir.is_absolute() {
            return dir;
        }
        match std::env::var(OUT_ROOT_VAR) {
            Ok(root) if !root.is_empty() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// FNV-1a of the canonical serialized form, for provenance records.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.to_toml().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}
