//! Record-per-line trajectory batch files.
//!
//! Line 1 is a JSON header declaring the format version, the full
//! environment spec (dimensions included), the scalar dtype, the batch tag
//! and the record count. Every following line is one JSON trajectory record:
//!
//! ```text
//! {"id":0,"seed":17,"terminal":true,"states":[...],"actions":[...],"rewards":[...]}
//! ```
//!
//! `states` holds `(T + 1) * state_dim` values (the visited state sequence,
//! flattened row-major), `actions` holds `T * action_dim`, `rewards` holds
//! `T`. Chain consistency is implied by the shared-state encoding; batches of
//! resampled (decorrelated) trajectories set `chained: false` in the header
//! and store `T * 2 * state_dim` values in `states` (state and next state per
//! tuple). Loaders reject mismatched header dims and dtype.

use crate::env::EnvSpec;
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::trajectory::{SourceTag, Trajectory, TrajectoryBatch, Transition};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const FORMAT_NAME: &str = "trajmia.trajectory-batch";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct Header<F: Scalar> {
    format: String,
    version: u32,
    dtype: String,
    env: EnvSpec<F>,
    source_tag: SourceTag,
    chained: bool,
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct Record<F: Scalar> {
    id: usize,
    seed: u64,
    terminal: bool,
    states: Vec<F>,
    actions: Vec<F>,
    rewards: Vec<F>,
}

pub fn save_batch<F: Scalar>(path: impl AsRef<Path>, batch: &TrajectoryBatch<F>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let chained = !batch.is_decorrelated();
    let header = Header {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        dtype: F::DTYPE.to_string(),
        env: batch.spec().clone(),
        source_tag: batch.source_tag(),
        chained,
        count: batch.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;

    for (id, (seed, traj)) in batch.entries().enumerate() {
        let ts = traj.transitions();
        let mut states = Vec::new();
        if chained {
            states.extend(ts.iter().flat_map(|t| t.state.iter().copied()));
            states.extend(ts.last().unwrap().next_state.iter().copied());
        } else {
            for t in ts {
                states.extend(t.state.iter().copied());
                states.extend(t.next_state.iter().copied());
            }
        }
        let record = Record {
            id,
            seed,
            terminal: ts.last().unwrap().terminal,
            states,
            actions: ts.iter().flat_map(|t| t.action.iter().copied()).collect(),
            rewards: ts.iter().map(|t| t.reward).collect(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a batch, verifying the format, dtype and (when provided) that the
/// file's environment spec matches `expected`.
pub fn load_batch<F: Scalar>(
    path: impl AsRef<Path>,
    expected: Option<&EnvSpec<F>>,
) -> Result<TrajectoryBatch<F>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| CoreError::HeaderMismatch("file is empty".into()))??;
    let header: Header<F> = serde_json::from_str(&header_line)?;

    if header.format != FORMAT_NAME {
        return Err(CoreError::HeaderMismatch(format!("unknown format {:?}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(CoreError::HeaderMismatch(format!("unsupported version {}", header.version)));
    }
    if header.dtype != F::DTYPE {
        return Err(CoreError::HeaderMismatch(format!(
            "dtype {} does not match requested {}",
            header.dtype,
            F::DTYPE
        )));
    }
    header.env.validate().map_err(|e| CoreError::HeaderMismatch(e.to_string()))?;
    if let Some(expected) = expected {
        if header.env.state_dim != expected.state_dim || header.env.action_dim != expected.action_dim {
            return Err(CoreError::HeaderMismatch(format!(
                "dims {}x{} do not match expected {}x{}",
                header.env.state_dim, header.env.action_dim, expected.state_dim, expected.action_dim
            )));
        }
    }

    let ds = header.env.state_dim;
    let da = header.env.action_dim;
    let mut trajectories = Vec::with_capacity(header.count);
    let mut seeds = Vec::with_capacity(header.count);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record<F> = serde_json::from_str(&line)?;
        let t = record.rewards.len();
        if record.actions.len() != t * da {
            return Err(CoreError::HeaderMismatch(format!(
                "record {}: {} action values for {} steps of dim {}",
                record.id,
                record.actions.len(),
                t,
                da
            )));
        }
        let expected_states = if header.chained { (t + 1) * ds } else { t * 2 * ds };
        if record.states.len() != expected_states {
            return Err(CoreError::HeaderMismatch(format!(
                "record {}: {} state values, expected {}",
                record.id,
                record.states.len(),
                expected_states
            )));
        }

        let mut transitions = Vec::with_capacity(t);
        for i in 0..t {
            let (state, next_state) = if header.chained {
                (
                    record.states[i * ds..(i + 1) * ds].to_vec(),
                    record.states[(i + 1) * ds..(i + 2) * ds].to_vec(),
                )
            } else {
                let base = i * 2 * ds;
                (
                    record.states[base..base + ds].to_vec(),
                    record.states[base + ds..base + 2 * ds].to_vec(),
                )
            };
            transitions.push(Transition {
                state,
                action: record.actions[i * da..(i + 1) * da].to_vec(),
                reward: record.rewards[i],
                next_state,
                terminal: record.terminal && i == t - 1,
            });
        }
        let traj = if header.chained {
            Trajectory::new(transitions)?
        } else {
            Trajectory::from_resampled(transitions)?
        };
        trajectories.push(traj);
        seeds.push(record.seed);
    }

    if trajectories.len() != header.count {
        return Err(CoreError::HeaderMismatch(format!(
            "header promised {} records, found {}",
            header.count,
            trajectories.len()
        )));
    }
    TrajectoryBatch::with_decorrelated(
        header.env,
        header.source_tag,
        trajectories,
        seeds,
        !header.chained,
    )
}
