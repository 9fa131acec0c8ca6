//! Policy checkpoints: a JSON parameter archive with the environment spec
//! embedded. Loaders verify structural compatibility before rebuilding the
//! policy.

use crate::bcq::BcqPolicy;
use crate::ddpg::MlpPolicy;
use crate::error::{AgentError, Result};
use crate::mlp::MlpLayout;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;
use trajmia_core::{EnvSpec, Scalar};
use trajmia_nn::{ParamArchive, ParamSet};

pub const FORMAT_NAME: &str = "trajmia.policy";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PolicyCheckpoint {
    format: String,
    version: u32,
    kind: String,
    dtype: String,
    env: EnvSpec<f64>,
    config: serde_json::Value,
    params: ParamArchive,
    /// Extra parameter groups (the batch-constrained policy carries three).
    extra_params: Vec<(String, ParamArchive)>,
}

fn read_checkpoint(path: &Path, want_kind: &str, want_dtype: &str) -> Result<PolicyCheckpoint> {
    let text = std::fs::read_to_string(path)?;
    let ck: PolicyCheckpoint = serde_json::from_str(&text)?;
    if ck.format != FORMAT_NAME || ck.version != FORMAT_VERSION {
        return Err(AgentError::BadCheckpoint(format!(
            "unknown format {}/{}",
            ck.format, ck.version
        )));
    }
    if ck.kind != want_kind {
        return Err(AgentError::BadCheckpoint(format!(
            "kind {} found, {} requested",
            ck.kind, want_kind
        )));
    }
    if ck.dtype != want_dtype {
        return Err(AgentError::BadCheckpoint(format!(
            "dtype {} found, {} requested",
            ck.dtype, want_dtype
        )));
    }
    Ok(ck)
}

fn check_spec<F: Scalar>(expected: &EnvSpec<F>, stored: &EnvSpec<f64>) -> Result<EnvSpec<F>> {
    let restored = EnvSpec::<F>::from_wire(stored);
    if !restored.compatible_with(expected) {
        return Err(AgentError::BadCheckpoint(format!(
            "environment spec mismatch: checkpoint {} ({}x{}, t_max {}), expected {} ({}x{}, t_max {})",
            restored.name,
            restored.state_dim,
            restored.action_dim,
            restored.t_max,
            expected.name,
            expected.state_dim,
            expected.action_dim,
            expected.t_max,
        )));
    }
    Ok(restored)
}

pub fn save_mlp_policy<F: Scalar>(path: impl AsRef<Path>, policy: &MlpPolicy<F>) -> Result<()> {
    let ck = PolicyCheckpoint {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        kind: "mlp-actor".into(),
        dtype: F::DTYPE.into(),
        env: policy.spec().to_wire(),
        config: json!({}),
        params: policy.params().to_archive(),
        extra_params: Vec::new(),
    };
    std::fs::write(path, serde_json::to_string(&ck)?)?;
    Ok(())
}

pub fn load_mlp_policy<F: Scalar>(
    path: impl AsRef<Path>,
    expected: &EnvSpec<F>,
) -> Result<MlpPolicy<F>> {
    let ck = read_checkpoint(path.as_ref(), "mlp-actor", F::DTYPE)?;
    let spec = check_spec(expected, &ck.env)?;
    let params = ParamSet::<F>::from_archive(&ck.params)?;
    let layout = MlpLayout::from_params(&params, "actor")
        .ok_or_else(|| AgentError::BadCheckpoint("actor parameters missing".into()))?;
    MlpPolicy::new(params, layout, spec)
}

pub fn save_bcq_policy<F: Scalar>(path: impl AsRef<Path>, policy: &BcqPolicy<F>) -> Result<()> {
    let (vae, pert, critics, zdim, hidden) = policy.parts();
    let ck = PolicyCheckpoint {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        kind: "bcq-policy".into(),
        dtype: F::DTYPE.into(),
        env: policy.spec().to_wire(),
        config: json!({
            "phi": policy.phi(),
            "n_cand": policy.n_cand(),
            "zdim": zdim,
            "hidden": hidden,
        }),
        params: vae.to_archive(),
        extra_params: vec![
            ("pert".to_string(), pert.to_archive()),
            ("critics".to_string(), critics.to_archive()),
        ],
    };
    std::fs::write(path, serde_json::to_string(&ck)?)?;
    Ok(())
}

pub fn load_bcq_policy<F: Scalar>(
    path: impl AsRef<Path>,
    expected: &EnvSpec<F>,
) -> Result<BcqPolicy<F>> {
    let ck = read_checkpoint(path.as_ref(), "bcq-policy", F::DTYPE)?;
    let spec = check_spec(expected, &ck.env)?;
    let cfg = &ck.config;
    let get = |key: &str| -> Result<f64> {
        cfg.get(key)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| AgentError::BadCheckpoint(format!("config key {key} missing")))
    };
    let phi = get("phi")?;
    let n_cand = get("n_cand")? as usize;
    let zdim = get("zdim")? as usize;
    let hidden = get("hidden")? as usize;

    let vae = ParamSet::<F>::from_archive(&ck.params)?;
    let mut pert = None;
    let mut critics = None;
    for (name, archive) in &ck.extra_params {
        match name.as_str() {
            "pert" => pert = Some(ParamSet::<F>::from_archive(archive)?),
            "critics" => critics = Some(ParamSet::<F>::from_archive(archive)?),
            _ => {}
        }
    }
    let pert = pert.ok_or_else(|| AgentError::BadCheckpoint("pert group missing".into()))?;
    let critics = critics.ok_or_else(|| AgentError::BadCheckpoint("critics group missing".into()))?;
    BcqPolicy::from_parts(spec, vae, pert, critics, phi, n_cand, zdim, hidden)
}
