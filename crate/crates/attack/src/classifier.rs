//! Training and applying the membership classifiers.
//!
//! Both architectures minimize mean binary cross-entropy between the
//! predicted membership probability and the pair label; training returns
//! the parameters with the best validation loss.

use crate::dataset::{AttackDataset, CollectiveSample, DatasetMode, PairedSample, Samples, Split};
use crate::error::{AttackError, Result};
use crate::resnet::{ResNetConfig, ResNetNet};
use crate::tcn::{TcnConfig, TcnNet};
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use std::path::Path;
use trajmia_core::seeding::{self, streams};
use trajmia_core::Scalar;
use trajmia_nn::{
    check_gradients, sigmoid, Adam, AdamConfig, Bound, GradCheckReport, Graph, ParamArchive,
    ParamSet, VarId,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum ArchConfig {
    Tcn(TcnConfig),
    ResNet(ResNetConfig),
}

impl ArchConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ArchConfig::Tcn(_) => "tcn",
            ArchConfig::ResNet(_) => "resnet",
        }
    }

    fn expected_mode(&self) -> DatasetMode {
        match self {
            ArchConfig::Tcn(_) => DatasetMode::Individual,
            ArchConfig::ResNet(_) => DatasetMode::Collective,
        }
    }

    fn weight_decay(&self) -> f64 {
        match self {
            ArchConfig::Tcn(_) => 0.0,
            ArchConfig::ResNet(r) => r.weight_decay,
        }
    }
}

/// Optimization settings for the attack classifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Early-stopping patience on validation loss, in epochs.
    pub patience: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 32, epochs: 50, patience: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub best_val_loss: f64,
}

/// A trained membership classifier: architecture tag, parameters and
/// training metadata.
pub struct AttackClassifier<F: Scalar> {
    arch: ArchConfig,
    input_shape: Vec<usize>,
    params: ParamSet<F>,
    pub meta: TrainMeta,
    pub dataset_hash: String,
}

enum Net {
    Tcn(TcnNet),
    ResNet(ResNetNet),
}

impl<F: Scalar> AttackClassifier<F> {
    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn net(&self) -> Result<Net> {
        match &self.arch {
            ArchConfig::Tcn(cfg) => Ok(Net::Tcn(TcnNet::from_params(
                cfg,
                self.input_shape[0],
                self.input_shape[1],
                &self.params,
            )?)),
            ArchConfig::ResNet(cfg) => {
                Ok(Net::ResNet(ResNetNet::from_params(cfg, &self.params)?))
            }
        }
    }

    /// Logits for a batched input (inference mode, no dropout).
    fn logits(&self, x: ArrayD<F>) -> Result<Vec<f64>> {
        let net = self.net()?;
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, false);
        let xv = g.constant(x);
        let z = match &net {
            Net::Tcn(t) => t.forward(&mut g, &bound, xv, None),
            Net::ResNet(r) => r.forward(&mut g, &bound, xv),
        };
        Ok(g.value(z).iter().map(|v| v.as_f64()).collect())
    }
}

/// A borrowed sample of either mode.
pub enum SampleInput<'a, F: Scalar> {
    Pair(&'a PairedSample<F>),
    Collective(&'a CollectiveSample<F>),
}

impl<'a, F: Scalar> From<&'a PairedSample<F>> for SampleInput<'a, F> {
    fn from(s: &'a PairedSample<F>) -> Self {
        SampleInput::Pair(s)
    }
}

impl<'a, F: Scalar> From<&'a CollectiveSample<F>> for SampleInput<'a, F> {
    fn from(s: &'a CollectiveSample<F>) -> Self {
        SampleInput::Collective(s)
    }
}

fn stack_pairs<F: Scalar>(samples: &[&PairedSample<F>]) -> ArrayD<F> {
    let (rows, len) = samples[0].matrix.dim();
    let mut x = ArrayD::<F>::zeros(IxDyn(&[samples.len(), rows, len]));
    for (n, s) in samples.iter().enumerate() {
        for i in 0..rows {
            for j in 0..len {
                x[[n, i, j]] = s.matrix[[i, j]];
            }
        }
    }
    x
}

fn stack_collective<F: Scalar>(samples: &[&CollectiveSample<F>]) -> ArrayD<F> {
    let (rows, len, m) = samples[0].tensor.dim();
    let mut x = ArrayD::<F>::zeros(IxDyn(&[samples.len(), rows, len, m]));
    for (n, s) in samples.iter().enumerate() {
        for i in 0..rows {
            for j in 0..len {
                for k in 0..m {
                    x[[n, i, j, k]] = s.tensor[[i, j, k]];
                }
            }
        }
    }
    x
}

struct SplitView<'a, F: Scalar> {
    pairs: Vec<&'a PairedSample<F>>,
    stacks: Vec<&'a CollectiveSample<F>>,
    labels: Vec<bool>,
}

impl<'a, F: Scalar> SplitView<'a, F> {
    fn gather(dataset: &'a AttackDataset<F>, split: Split) -> Self {
        let mut view = Self { pairs: Vec::new(), stacks: Vec::new(), labels: Vec::new() };
        match &dataset.samples {
            Samples::Individual(v) => {
                for s in v.iter().filter(|s| s.split == split) {
                    view.pairs.push(s);
                    view.labels.push(s.label);
                }
            }
            Samples::Collective(v) => {
                for s in v.iter().filter(|s| s.split == split) {
                    view.stacks.push(s);
                    view.labels.push(s.label);
                }
            }
        }
        view
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn both_labels(&self) -> bool {
        self.labels.iter().any(|&l| l) && self.labels.iter().any(|&l| !l)
    }

    fn batch(&self, idx: &[usize]) -> (ArrayD<F>, ArrayD<F>) {
        let y = ArrayD::from_shape_vec(
            IxDyn(&[idx.len()]),
            idx.iter().map(|&i| if self.labels[i] { F::one() } else { F::zero() }).collect(),
        )
        .unwrap();
        let x = if self.pairs.is_empty() {
            let picked: Vec<&CollectiveSample<F>> = idx.iter().map(|&i| self.stacks[i]).collect();
            stack_collective(&picked)
        } else {
            let picked: Vec<&PairedSample<F>> = idx.iter().map(|&i| self.pairs[i]).collect();
            stack_pairs(&picked)
        };
        (x, y)
    }
}

fn forward_net<F: Scalar>(
    net: &Net,
    g: &mut Graph<F>,
    bound: &Bound,
    x: VarId,
    dropout_rng: Option<&mut rand_chacha::ChaCha8Rng>,
) -> VarId {
    match net {
        Net::Tcn(t) => t.forward(g, bound, x, dropout_rng),
        Net::ResNet(r) => r.forward(g, bound, x),
    }
}

fn eval_loss<F: Scalar>(net: &Net, params: &ParamSet<F>, view: &SplitView<F>) -> f64 {
    let idx: Vec<usize> = (0..view.len()).collect();
    let (x, y) = view.batch(&idx);
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let xv = g.constant(x);
    let yv = g.constant(y);
    let z = forward_net(net, &mut g, &bound, xv, None);
    let loss = g.bce_with_logits(z, yv);
    g.scalar_value(loss).as_f64()
}

/// Trains a classifier on the dataset's train split, early-stopping on the
/// validation split, and returns the parameters with the best validation
/// loss.
pub fn train_attack<F: Scalar>(
    dataset: &AttackDataset<F>,
    arch: &ArchConfig,
    spec: &TrainSpec,
    seed: u64,
) -> Result<AttackClassifier<F>> {
    if dataset.mode() != arch.expected_mode() {
        return Err(AttackError::ModeMismatch {
            dataset: dataset.mode().name(),
            arch: arch.name(),
        });
    }
    let train = SplitView::gather(dataset, Split::Train);
    let val = SplitView::gather(dataset, Split::Validation);
    if train.len() == 0 || !train.both_labels() {
        return Err(AttackError::EmptySplitLabel { split: "train", label: u8::from(!train.labels.contains(&true)) });
    }
    if val.len() == 0 || !val.both_labels() {
        return Err(AttackError::EmptySplitLabel { split: "validation", label: u8::from(!val.labels.contains(&true)) });
    }

    let rows = 2 * dataset.action_dim;
    let input_shape = match dataset.mode() {
        DatasetMode::Individual => vec![rows, dataset.clip_len],
        DatasetMode::Collective => vec![rows, dataset.clip_len, dataset.m],
    };

    let mut init_rng = seeding::rng(seed, streams::PARAM_INIT);
    let mut params = ParamSet::<F>::new();
    let net = match arch {
        ArchConfig::Tcn(cfg) => {
            Net::Tcn(TcnNet::build(cfg, rows, dataset.clip_len, &mut params, &mut init_rng)?)
        }
        ArchConfig::ResNet(cfg) => {
            Net::ResNet(ResNetNet::build(cfg, rows, &mut params, &mut init_rng)?)
        }
    };

    let adam_cfg = AdamConfig { lr: spec.lr, weight_decay: arch.weight_decay(), ..AdamConfig::default() };
    let mut adam = Adam::new(adam_cfg, &params);
    let mut loop_rng = seeding::rng(seed, streams::TRAIN_LOOP);

    let initial_train_loss = eval_loss(&net, &params, &train);
    let mut best_val_loss = eval_loss(&net, &params, &val);
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;
    let mut final_train_loss = initial_train_loss;
    let mut epochs_run = 0usize;

    for epoch in 1..=spec.epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rand::Rng::random_range(&mut loop_rng, 0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(spec.batch_size.max(1)) {
            let (x, y) = train.batch(chunk);
            let mut g = Graph::new();
            let bound = params.bind(&mut g, true);
            let xv = g.constant(x);
            let yv = g.constant(y);
            let z = forward_net(&net, &mut g, &bound, xv, Some(&mut loop_rng));
            let loss = g.bce_with_logits(z, yv);
            g.backward(loss);
            let grads = bound.take_grads(&mut g);
            adam.step(&mut params, &grads);

            let l = g.scalar_value(loss).as_f64();
            if !l.is_finite() {
                return Err(AttackError::NanLoss { epoch });
            }
            epoch_loss += l;
            batches += 1.0;
        }
        final_train_loss = epoch_loss / batches;

        let val_loss = eval_loss(&net, &params, &val);
        if !val_loss.is_finite() {
            return Err(AttackError::NanLoss { epoch });
        }
        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_params = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= spec.patience {
                break;
            }
        }
    }

    Ok(AttackClassifier {
        arch: arch.clone(),
        input_shape,
        params: best_params,
        meta: TrainMeta {
            seed,
            epochs_run,
            best_epoch,
            initial_train_loss,
            final_train_loss,
            best_val_loss,
        },
        dataset_hash: dataset_hash(dataset),
    })
}

/// FNV-1a over the dataset's logical content, recorded in checkpoints.
pub fn dataset_hash<F: Scalar>(dataset: &AttackDataset<F>) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(dataset.mode().name().as_bytes());
    eat(&dataset.action_dim.to_le_bytes());
    eat(&dataset.clip_len.to_le_bytes());
    eat(&dataset.m.to_le_bytes());
    eat(dataset.provenance.as_bytes());
    match &dataset.samples {
        Samples::Individual(v) => {
            for s in v {
                eat(&[s.label as u8]);
                eat(&s.seed.to_le_bytes());
            }
        }
        Samples::Collective(v) => {
            for s in v {
                eat(&[s.label as u8]);
                for seed in &s.seeds {
                    eat(&seed.to_le_bytes());
                }
            }
        }
    }
    format!("{h:016x}")
}

/// Membership probability of one sample under a frozen classifier.
pub fn predict_membership<F: Scalar>(
    classifier: &AttackClassifier<F>,
    sample: SampleInput<'_, F>,
) -> Result<f64> {
    let x = match sample {
        SampleInput::Pair(p) => {
            let got = p.matrix.shape().to_vec();
            if got != classifier.input_shape {
                return Err(AttackError::ShapeMismatch {
                    expected: classifier.input_shape.clone(),
                    got,
                });
            }
            stack_pairs(&[p])
        }
        SampleInput::Collective(c) => {
            let got = c.tensor.shape().to_vec();
            if got != classifier.input_shape {
                return Err(AttackError::ShapeMismatch {
                    expected: classifier.input_shape.clone(),
                    got,
                });
            }
            stack_collective(&[c])
        }
    };
    let z = classifier.logits(x)?[0];
    // Sigmoid of a finite logit, kept strictly inside (0, 1).
    Ok(sigmoid::<f64>(z).clamp(1e-15, 1.0 - 1e-15))
}

/// One prediction per dataset sample, batched for speed.
pub struct Prediction {
    pub probability: f64,
    pub label: bool,
    pub split: Split,
}

pub fn predict_dataset<F: Scalar>(
    classifier: &AttackClassifier<F>,
    dataset: &AttackDataset<F>,
) -> Result<Vec<Prediction>> {
    const CHUNK: usize = 256;
    let mut out = Vec::with_capacity(dataset.len());
    match &dataset.samples {
        Samples::Individual(v) => {
            for chunk in v.chunks(CHUNK) {
                let refs: Vec<&PairedSample<F>> = chunk.iter().collect();
                if refs[0].matrix.shape() != classifier.input_shape.as_slice() {
                    return Err(AttackError::ShapeMismatch {
                        expected: classifier.input_shape.clone(),
                        got: refs[0].matrix.shape().to_vec(),
                    });
                }
                for (z, s) in classifier.logits(stack_pairs(&refs))?.into_iter().zip(chunk) {
                    out.push(Prediction {
                        probability: sigmoid::<f64>(z).clamp(1e-15, 1.0 - 1e-15),
                        label: s.label,
                        split: s.split,
                    });
                }
            }
        }
        Samples::Collective(v) => {
            for chunk in v.chunks(CHUNK) {
                let refs: Vec<&CollectiveSample<F>> = chunk.iter().collect();
                if refs[0].tensor.shape() != classifier.input_shape.as_slice() {
                    return Err(AttackError::ShapeMismatch {
                        expected: classifier.input_shape.clone(),
                        got: refs[0].tensor.shape().to_vec(),
                    });
                }
                for (z, s) in classifier.logits(stack_collective(&refs))?.into_iter().zip(chunk) {
                    out.push(Prediction {
                        probability: sigmoid::<f64>(z).clamp(1e-15, 1.0 - 1e-15),
                        label: s.label,
                        split: s.split,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Binary decision at acceptance threshold `theta`; ties accept.
pub fn apply_threshold(probability: f64, theta: f64) -> Result<bool> {
    if !(0.0 < theta && theta < 1.0) {
        return Err(AttackError::InvalidTheta(theta));
    }
    if !(0.0 < probability && probability < 1.0) {
        return Err(AttackError::InvalidTheta(probability));
    }
    Ok(probability >= theta)
}

const GRAD_CHECK_PARAM_LIMIT: usize = 500;
const GRAD_CHECK_STEP: f64 = 1e-5;

/// Verifies the analytic loss gradients of a tiny classifier against
/// central finite differences in `f64` on the probe dataset (dropout
/// disabled so the loss is a pure function of the parameters).
pub fn gradient_check(
    arch: &ArchConfig,
    probe: &AttackDataset<f64>,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if probe.mode() != arch.expected_mode() {
        return Err(AttackError::ModeMismatch { dataset: probe.mode().name(), arch: arch.name() });
    }
    let rows = 2 * probe.action_dim;
    let mut init_rng = seeding::rng(seed, streams::PARAM_INIT);
    let mut params = ParamSet::<f64>::new();
    let net = match arch {
        ArchConfig::Tcn(cfg) => {
            Net::Tcn(TcnNet::build(cfg, rows, probe.clip_len, &mut params, &mut init_rng)?)
        }
        ArchConfig::ResNet(cfg) => {
            Net::ResNet(ResNetNet::build(cfg, rows, &mut params, &mut init_rng)?)
        }
    };
    if params.num_scalars() > GRAD_CHECK_PARAM_LIMIT {
        return Err(AttackError::TooManyParams {
            got: params.num_scalars(),
            limit: GRAD_CHECK_PARAM_LIMIT,
        });
    }

    let idx: Vec<usize> = (0..probe.len()).collect();
    let everything = SplitView::gather_all(probe);
    let (x, y) = everything.batch(&idx);

    let analytic = {
        let mut g = Graph::new();
        let bound = params.bind(&mut g, true);
        let xv = g.constant(x.clone());
        let yv = g.constant(y.clone());
        let z = forward_net(&net, &mut g, &bound, xv, None);
        let loss = g.bce_with_logits(z, yv);
        g.backward(loss);
        bound.take_grads(&mut g)
    };

    let report = check_gradients(
        &mut params,
        |p| {
            let mut g = Graph::new();
            let bound = p.bind(&mut g, false);
            // Frozen binding computes the same forward value; gradients are
            // not needed inside the finite-difference evaluations.
            let xv = g.constant(x.clone());
            let yv = g.constant(y.clone());
            let z = forward_net(&net, &mut g, &bound, xv, None);
            let loss = g.bce_with_logits(z, yv);
            g.scalar_value(loss)
        },
        &analytic,
        n_coords,
        GRAD_CHECK_STEP,
        seed,
    );
    Ok(report)
}

impl<'a, F: Scalar> SplitView<'a, F> {
    /// Every sample regardless of split (used by the gradient check).
    fn gather_all(dataset: &'a AttackDataset<F>) -> Self {
        let mut view = Self { pairs: Vec::new(), stacks: Vec::new(), labels: Vec::new() };
        match &dataset.samples {
            Samples::Individual(v) => {
                for s in v {
                    view.pairs.push(s);
                    view.labels.push(s.label);
                }
            }
            Samples::Collective(v) => {
                for s in v {
                    view.stacks.push(s);
                    view.labels.push(s.label);
                }
            }
        }
        view
    }
}

// ---- checkpointing -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ClassifierCheckpoint {
    format: String,
    version: u32,
    dtype: String,
    arch: ArchConfig,
    input_shape: Vec<usize>,
    dataset_hash: String,
    meta: TrainMeta,
    params: ParamArchive,
}

pub const CLASSIFIER_FORMAT: &str = "trajmia.attack-classifier";
pub const CLASSIFIER_VERSION: u32 = 1;

impl<F: Scalar> AttackClassifier<F> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let ck = ClassifierCheckpoint {
            format: CLASSIFIER_FORMAT.into(),
            version: CLASSIFIER_VERSION,
            dtype: F::DTYPE.into(),
            arch: self.arch.clone(),
            input_shape: self.input_shape.clone(),
            dataset_hash: self.dataset_hash.clone(),
            meta: self.meta.clone(),
            params: self.params.to_archive(),
        };
        std::fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: ClassifierCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.format != CLASSIFIER_FORMAT || ck.version != CLASSIFIER_VERSION {
            return Err(AttackError::BadDatasetFile(format!(
                "unknown classifier format {}/{}",
                ck.format, ck.version
            )));
        }
        if ck.dtype != F::DTYPE {
            return Err(AttackError::BadDatasetFile(format!(
                "classifier dtype {} does not match requested {}",
                ck.dtype,
                F::DTYPE
            )));
        }
        let classifier = AttackClassifier {
            arch: ck.arch,
            input_shape: ck.input_shape,
            params: ParamSet::<F>::from_archive(&ck.params)?,
            meta: ck.meta,
            dataset_hash: ck.dataset_hash,
        };
        classifier.net()?; // layout must resolve
        Ok(classifier)
    }
}
