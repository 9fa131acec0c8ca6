//! The data formatter: trajectories in, fixed-shape labeled classifier
//! inputs out.
//!
//! States and rewards are dropped; every trajectory reduces to its
//! `action_dim x T` action matrix. Matched training/output matrices are
//! clipped or last-action-padded to a common length `L` and stacked
//! vertically into `2*action_dim x L` pairs; collective mode stacks `m`
//! same-label pairs into a `2*action_dim x L x m` tensor.

use crate::error::{AttackError, Result};
use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use trajmia_core::seeding::{self, splitmix64, streams};
use trajmia_core::{Scalar, SourceTag, Trajectory, TrajectoryBatch};

/// The action matrix of one trajectory plus its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionTrajectory<F: Scalar> {
    /// `action_dim x T`, column `j` = action at step `j`.
    pub actions: Array2<F>,
    pub origin: SourceTag,
    pub seed: u64,
}

/// Train/validation/test assignment, decided per seed by a deterministic
/// hash so no trajectory ever lands in two splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    /// 70/10/20 assignment from the seed hash.
    pub fn assign(seed: u64) -> Self {
        let u = (splitmix64(seed) >> 11) as f64 / (1u64 << 53) as f64;
        if u < 0.7 {
            Split::Train
        } else if u < 0.8 {
            Split::Validation
        } else {
            Split::Test
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// One labeled `2*action_dim x L` matrix: candidate training actions on
/// top, model-output actions below, both from the same reset seed.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample<F: Scalar> {
    pub matrix: Array2<F>,
    pub label: bool,
    pub seed: u64,
    pub split: Split,
}

/// `m` same-label pairs stacked along the third axis.
#[derive(Clone, Debug, PartialEq)]
pub struct CollectiveSample<F: Scalar> {
    /// `2*action_dim x L x m`.
    pub tensor: Array3<F>,
    pub label: bool,
    pub seeds: Vec<u64>,
    pub split: Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    Individual,
    Collective,
}

impl DatasetMode {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetMode::Individual => "individual",
            DatasetMode::Collective => "collective",
        }
    }
}

#[derive(Clone, Debug)]
pub enum Samples<F: Scalar> {
    Individual(Vec<PairedSample<F>>),
    Collective(Vec<CollectiveSample<F>>),
}

/// Labeled, split-tagged classifier inputs of one mode.
#[derive(Clone, Debug)]
pub struct AttackDataset<F: Scalar> {
    pub samples: Samples<F>,
    pub action_dim: usize,
    pub clip_len: usize,
    /// Stack size; 1 in individual mode.
    pub m: usize,
    /// Free-form provenance of the source batches.
    pub provenance: String,
}

impl<F: Scalar> AttackDataset<F> {
    pub fn mode(&self) -> DatasetMode {
        match self.samples {
            Samples::Individual(_) => DatasetMode::Individual,
            Samples::Collective(_) => DatasetMode::Collective,
        }
    }

    pub fn len(&self) -> usize {
        match &self.samples {
            Samples::Individual(v) => v.len(),
            Samples::Collective(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(positives, negatives)` counts per split.
    pub fn split_counts(&self, split: Split) -> (usize, usize) {
        let mut pos = 0;
        let mut neg = 0;
        let mut tally = |label: bool, s: Split| {
            if s == split {
                if label {
                    pos += 1;
                } else {
                    neg += 1;
                }
            }
        };
        match &self.samples {
            Samples::Individual(v) => v.iter().for_each(|s| tally(s.label, s.split)),
            Samples::Collective(v) => v.iter().for_each(|s| tally(s.label, s.split)),
        }
        (pos, neg)
    }

    /// Positive fraction over the whole dataset.
    pub fn balance(&self) -> f64 {
        let positives = match &self.samples {
            Samples::Individual(v) => v.iter().filter(|s| s.label).count(),
            Samples::Collective(v) => v.iter().filter(|s| s.label).count(),
        };
        positives as f64 / self.len() as f64
    }
}

/// Strips states and rewards: column `j` of the result is the action taken
/// at step `j`.
pub fn extract_actions<F: Scalar>(
    trajectory: &Trajectory<F>,
    origin: SourceTag,
    seed: u64,
) -> ActionTrajectory<F> {
    let da = trajectory.action_dim();
    let t = trajectory.len();
    let mut actions = Array2::<F>::zeros((da, t));
    for (j, tr) in trajectory.transitions().iter().enumerate() {
        for i in 0..da {
            actions[[i, j]] = tr.action[i];
        }
    }
    ActionTrajectory { actions, origin, seed }
}

/// Fixes the length to `clip_len`: longer matrices keep their first
/// `clip_len` columns, shorter ones repeat the last action.
pub fn clip_or_pad<F: Scalar>(actions: &ActionTrajectory<F>, clip_len: usize) -> Result<Array2<F>> {
    if clip_len == 0 {
        return Err(AttackError::ZeroClipLength);
    }
    let (da, t) = actions.actions.dim();
    let mut out = Array2::<F>::zeros((da, clip_len));
    for j in 0..clip_len {
        let src = j.min(t - 1);
        for i in 0..da {
            out[[i, j]] = actions.actions[[i, src]];
        }
    }
    Ok(out)
}

/// Vertically concatenates the clipped training and output matrices into a
/// `2*action_dim x clip_len` sample. Both sides must share the reset seed
/// (equal initial states) and the output side must come from the model.
pub fn make_pair<F: Scalar>(
    train_at: &ActionTrajectory<F>,
    output_at: &ActionTrajectory<F>,
    clip_len: usize,
    label: bool,
) -> Result<PairedSample<F>> {
    if train_at.seed != output_at.seed {
        return Err(AttackError::SeedMismatch { train: train_at.seed, output: output_at.seed });
    }
    if output_at.origin != SourceTag::ModelOutput {
        return Err(AttackError::NotModelOutput { got: output_at.origin.to_string() });
    }
    let da = train_at.actions.nrows();
    if output_at.actions.nrows() != da {
        return Err(AttackError::ActionDimMismatch { a: da, b: output_at.actions.nrows() });
    }
    let top = clip_or_pad(train_at, clip_len)?;
    let bottom = clip_or_pad(output_at, clip_len)?;
    let matrix = ndarray::concatenate(Axis(0), &[top.view(), bottom.view()]).expect("same widths");
    Ok(PairedSample { matrix, label, seed: train_at.seed, split: Split::assign(train_at.seed) })
}

/// Builds the labeled individual-mode dataset: member trajectories paired
/// with their seed-matched outputs as positives, nonmembers with theirs as
/// negatives. Split assignment is by seed hash; both labels must survive in
/// every split.
pub fn build_individual_dataset<F: Scalar>(
    member: &TrajectoryBatch<F>,
    nonmember: &TrajectoryBatch<F>,
    outputs: &TrajectoryBatch<F>,
    clip_len: usize,
) -> Result<AttackDataset<F>> {
    if member.is_empty() {
        return Err(AttackError::MissingLabel { side: "member" });
    }
    if nonmember.is_empty() {
        return Err(AttackError::MissingLabel { side: "nonmember" });
    }
    let member_seeds: BTreeSet<u64> = member.seed_record().iter().copied().collect();
    let shared: Vec<u64> = nonmember
        .seed_record()
        .iter()
        .copied()
        .filter(|s| member_seeds.contains(s))
        .collect();
    if !shared.is_empty() {
        return Err(AttackError::OverlappingSeeds { shared });
    }

    let mut output_map: BTreeMap<u64, ActionTrajectory<F>> = BTreeMap::new();
    for (seed, traj) in outputs.entries() {
        output_map.insert(seed, extract_actions(traj, outputs.source_tag(), seed));
    }

    let mut samples = Vec::with_capacity(member.len() + nonmember.len());
    let mut missing = Vec::new();
    for (batch, label) in [(member, true), (nonmember, false)] {
        for (seed, traj) in batch.entries() {
            match output_map.get(&seed) {
                None => missing.push(seed),
                Some(out_at) => {
                    let train_at = extract_actions(traj, batch.source_tag(), seed);
                    samples.push(make_pair(&train_at, out_at, clip_len, label)?);
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(AttackError::MissingOutputs { missing });
    }

    let dataset = AttackDataset {
        action_dim: member.spec().action_dim,
        clip_len,
        m: 1,
        provenance: format!(
            "env={} members={} nonmembers={} outputs={} decorrelated={}",
            member.spec().name,
            member.len(),
            nonmember.len(),
            outputs.len(),
            member.is_decorrelated(),
        ),
        samples: Samples::Individual(samples),
    };
    for split in [Split::Train, Split::Validation, Split::Test] {
        let (pos, neg) = dataset.split_counts(split);
        if pos == 0 {
            return Err(AttackError::EmptySplitLabel { split: split.name(), label: 1 });
        }
        if neg == 0 {
            return Err(AttackError::EmptySplitLabel { split: split.name(), label: 0 });
        }
    }
    Ok(dataset)
}

/// Stacks `m` same-label pairs (drawn without replacement within a stack)
/// into collective samples, per split and label. `passes` independent
/// shuffles of each split re-deal the pairs into stacks; leftovers of an
/// incomplete stack are dropped.
pub fn build_collective_dataset<F: Scalar>(
    individual: &AttackDataset<F>,
    m: usize,
    seed: u64,
    passes: usize,
) -> Result<AttackDataset<F>> {
    if m == 0 {
        return Err(AttackError::Empty("stack size"));
    }
    let pairs = match &individual.samples {
        Samples::Individual(v) => v,
        Samples::Collective(_) => {
            return Err(AttackError::ModeMismatch { dataset: "collective", arch: "collective stacking" })
        }
    };

    let mut rng = seeding::rng(seed, streams::DATASET);
    let mut out = Vec::new();
    for split in [Split::Train, Split::Validation, Split::Test] {
        for label in [true, false] {
            let bucket: Vec<&PairedSample<F>> =
                pairs.iter().filter(|p| p.split == split && p.label == label).collect();
            if bucket.len() < m {
                return Err(AttackError::TooFewForStack {
                    split: split.name(),
                    label: label as u8,
                    got: bucket.len(),
                    need: m,
                });
            }
            for _ in 0..passes.max(1) {
                let mut order: Vec<usize> = (0..bucket.len()).collect();
                // Fisher-Yates under the dataset stream.
                for i in (1..order.len()).rev() {
                    let j = rand::Rng::random_range(&mut rng, 0..=i);
                    order.swap(i, j);
                }
                for stack in order.chunks(m) {
                    if stack.len() < m {
                        break; // leftovers dropped
                    }
                    let rows = 2 * individual.action_dim;
                    let mut tensor = Array3::<F>::zeros((rows, individual.clip_len, m));
                    let mut seeds = Vec::with_capacity(m);
                    for (k, &idx) in stack.iter().enumerate() {
                        let p = bucket[idx];
                        seeds.push(p.seed);
                        for r in 0..rows {
                            for c in 0..individual.clip_len {
                                tensor[[r, c, k]] = p.matrix[[r, c]];
                            }
                        }
                    }
                    out.push(CollectiveSample { tensor, label, seeds, split });
                }
            }
        }
    }

    Ok(AttackDataset {
        action_dim: individual.action_dim,
        clip_len: individual.clip_len,
        m,
        provenance: format!("{} | collective m={m} passes={passes}", individual.provenance),
        samples: Samples::Collective(out),
    })
}

/// The decorrelation ablation: pools every tuple of the batch, shuffles the
/// pool uniformly, and deals synthetic trajectories of the original lengths
/// back out. Seeds and tags are preserved so downstream pairing still
/// works; the tuple multiset is invariant.
pub fn decorrelate_batch<F: Scalar>(batch: &TrajectoryBatch<F>, seed: u64) -> Result<TrajectoryBatch<F>> {
    if batch.is_empty() {
        return Err(AttackError::Empty("batch"));
    }
    let mut pool: Vec<trajmia_core::Transition<F>> = batch
        .trajectories()
        .iter()
        .flat_map(|t| t.transitions().iter().cloned())
        .collect();
    // Clear terminal flags: tuple positions no longer mark episode ends.
    for t in pool.iter_mut() {
        t.terminal = false;
    }
    let mut rng = seeding::rng(seed, streams::DECORRELATE);
    for i in (1..pool.len()).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i);
        pool.swap(i, j);
    }

    let mut pool_iter = pool.into_iter();
    let mut trajectories = Vec::with_capacity(batch.len());
    for original in batch.trajectories() {
        let transitions: Vec<_> = pool_iter.by_ref().take(original.len()).collect();
        trajectories.push(Trajectory::from_resampled(transitions)?);
    }
    Ok(TrajectoryBatch::with_decorrelated(
        batch.spec().clone(),
        batch.source_tag(),
        trajectories,
        batch.seed_record().to_vec(),
        true,
    )?)
}

// ---- persistence --------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    format: String,
    version: u32,
    dtype: String,
    mode: DatasetMode,
    action_dim: usize,
    clip_len: usize,
    m: usize,
    provenance: String,
    records: Vec<SampleRecord>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    label: bool,
    split: Split,
    seeds: Vec<u64>,
}

pub const DATASET_FORMAT: &str = "trajmia.attack-dataset";
pub const DATASET_VERSION: u32 = 1;

impl<F: Scalar> AttackDataset<F> {
    /// Writes `manifest.json` plus `samples.bin` (sample-major, row-major
    /// little-endian scalars) into `dir`. Reload is bit-exact.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut records = Vec::with_capacity(self.len());
        let mut blob: Vec<u8> = Vec::new();
        match &self.samples {
            Samples::Individual(v) => {
                for s in v {
                    records.push(SampleRecord { label: s.label, split: s.split, seeds: vec![s.seed] });
                    for x in s.matrix.iter() {
                        x.write_le(&mut blob);
                    }
                }
            }
            Samples::Collective(v) => {
                for s in v {
                    records.push(SampleRecord { label: s.label, split: s.split, seeds: s.seeds.clone() });
                    for x in s.tensor.iter() {
                        x.write_le(&mut blob);
                    }
                }
            }
        }
        let manifest = DatasetManifest {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            dtype: F::DTYPE.into(),
            mode: self.mode(),
            action_dim: self.action_dim,
            clip_len: self.clip_len,
            m: self.m,
            provenance: self.provenance.clone(),
            records,
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        std::fs::write(dir.join("samples.bin"), blob)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        if manifest.format != DATASET_FORMAT || manifest.version != DATASET_VERSION {
            return Err(AttackError::BadDatasetFile(format!(
                "unknown format {}/{}",
                manifest.format, manifest.version
            )));
        }
        if manifest.dtype != F::DTYPE {
            return Err(AttackError::BadDatasetFile(format!(
                "dtype {} does not match requested {}",
                manifest.dtype,
                F::DTYPE
            )));
        }
        let blob = std::fs::read(dir.join("samples.bin"))?;
        let rows = 2 * manifest.action_dim;
        let per_matrix = rows * manifest.clip_len;
        let per_sample = match manifest.mode {
            DatasetMode::Individual => per_matrix,
            DatasetMode::Collective => per_matrix * manifest.m,
        };
        let expected = per_sample * manifest.records.len() * F::BYTE_WIDTH;
        if blob.len() != expected {
            return Err(AttackError::BadDatasetFile(format!(
                "samples.bin holds {} bytes, manifest implies {}",
                blob.len(),
                expected
            )));
        }

        let mut scalars = blob.chunks_exact(F::BYTE_WIDTH).map(F::read_le);
        let mut take = |n: usize| -> Vec<F> { scalars.by_ref().take(n).collect() };
        let samples = match manifest.mode {
            DatasetMode::Individual => {
                let mut v = Vec::with_capacity(manifest.records.len());
                for r in &manifest.records {
                    let matrix =
                        Array2::from_shape_vec((rows, manifest.clip_len), take(per_matrix))
                            .expect("checked length");
                    v.push(PairedSample { matrix, label: r.label, seed: r.seeds[0], split: r.split });
                }
                Samples::Individual(v)
            }
            DatasetMode::Collective => {
                let mut v = Vec::with_capacity(manifest.records.len());
                for r in &manifest.records {
                    let flat = take(per_sample);
                    let mut tensor = Array3::<F>::zeros((rows, manifest.clip_len, manifest.m));
                    let mut it = flat.into_iter();
                    for i in 0..rows {
                        for j in 0..manifest.clip_len {
                            for k in 0..manifest.m {
                                tensor[[i, j, k]] = it.next().unwrap();
                            }
                        }
                    }
                    v.push(CollectiveSample {
                        tensor,
                        label: r.label,
                        seeds: r.seeds.clone(),
                        split: r.split,
                    });
                }
                Samples::Collective(v)
            }
        };
        Ok(Self {
            samples,
            action_dim: manifest.action_dim,
            clip_len: manifest.clip_len,
            m: manifest.m,
            provenance: manifest.provenance,
        })
    }
}
