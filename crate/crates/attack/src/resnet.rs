//! Residual 2-D convolutional classifier for collective-mode samples.
//!
//! Stages of basic residual blocks over the `(clip_len x m)` plane with the
//! paired action channels as input, channel width doubling per stage,
//! global average pooling and an affine map to one logit.

use crate::error::{AttackError, Result};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trajmia_core::Scalar;
use trajmia_nn::{init, Bound, Graph, ParamId, ParamSet, VarId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResNetConfig {
    pub stages: usize,
    pub blocks_per_stage: usize,
    pub base_channels: usize,
    /// Decoupled weight-decay coefficient applied by the optimizer.
    pub weight_decay: f64,
}

impl Default for ResNetConfig {
    fn default() -> Self {
        Self { stages: 3, blocks_per_stage: 2, base_channels: 16, weight_decay: 1.0 }
    }
}

impl ResNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 || self.blocks_per_stage == 0 || self.base_channels == 0 {
            return Err(AttackError::Empty("resnet config"));
        }
        Ok(())
    }
}

struct ConvIds {
    w: ParamId,
    b: ParamId,
}

fn conv_params<F: Scalar>(
    params: &mut ParamSet<F>,
    rng: &mut ChaCha8Rng,
    name: &str,
    c_out: usize,
    c_in: usize,
    kernel: usize,
) -> ConvIds {
    let fan_in = c_in * kernel * kernel;
    ConvIds {
        w: params.add(
            format!("{name}.w"),
            init::uniform_fan_in(rng, &[c_out, c_in, kernel, kernel], fan_in),
        ),
        b: params.add(format!("{name}.b"), init::uniform_fan_in(rng, &[c_out], fan_in)),
    }
}

fn conv_from_params<F: Scalar>(params: &ParamSet<F>, name: &str) -> Option<ConvIds> {
    Some(ConvIds {
        w: params.id_by_name(&format!("{name}.w"))?,
        b: params.id_by_name(&format!("{name}.b"))?,
    })
}

struct Block {
    conv1: ConvIds,
    conv2: ConvIds,
    skip: Option<ConvIds>,
}

pub(crate) struct ResNetNet {
    stem: ConvIds,
    blocks: Vec<Block>,
    head_w: ParamId,
    head_b: ParamId,
}

impl ResNetNet {
    pub fn build<F: Scalar>(
        cfg: &ResNetConfig,
        in_channels: usize,
        params: &mut ParamSet<F>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let stem = conv_params(params, rng, "resnet.stem", cfg.base_channels, in_channels, 3);
        let mut blocks = Vec::new();
        let mut c_in = cfg.base_channels;
        for stage in 0..cfg.stages {
            let c_out = cfg.base_channels << stage;
            for b in 0..cfg.blocks_per_stage {
                let name = format!("resnet.s{stage}.b{b}");
                let conv1 = conv_params(params, rng, &format!("{name}.conv1"), c_out, c_in, 3);
                let conv2 = conv_params(params, rng, &format!("{name}.conv2"), c_out, c_out, 3);
                let skip = (c_in != c_out)
                    .then(|| conv_params(params, rng, &format!("{name}.skip"), c_out, c_in, 1));
                blocks.push(Block { conv1, conv2, skip });
                c_in = c_out;
            }
        }
        let head_w = params.add("resnet.head.w", init::uniform_fan_in(rng, &[c_in, 1], c_in));
        let head_b = params.add("resnet.head.b", init::uniform_fan_in(rng, &[1], c_in));
        Ok(Self { stem, blocks, head_w, head_b })
    }

    pub fn from_params<F: Scalar>(cfg: &ResNetConfig, params: &ParamSet<F>) -> Result<Self> {
        cfg.validate()?;
        let missing = |what: &str| AttackError::BadDatasetFile(format!("{what} parameters missing"));
        let stem = conv_from_params(params, "resnet.stem").ok_or_else(|| missing("resnet stem"))?;
        let mut blocks = Vec::new();
        let mut c_in = cfg.base_channels;
        for stage in 0..cfg.stages {
            let c_out = cfg.base_channels << stage;
            for b in 0..cfg.blocks_per_stage {
                let name = format!("resnet.s{stage}.b{b}");
                let conv1 =
                    conv_from_params(params, &format!("{name}.conv1")).ok_or_else(|| missing(&name))?;
                let conv2 =
                    conv_from_params(params, &format!("{name}.conv2")).ok_or_else(|| missing(&name))?;
                let skip = if c_in != c_out {
                    Some(conv_from_params(params, &format!("{name}.skip")).ok_or_else(|| missing(&name))?)
                } else {
                    None
                };
                blocks.push(Block { conv1, conv2, skip });
                c_in = c_out;
            }
        }
        Ok(Self {
            stem,
            blocks,
            head_w: params.id_by_name("resnet.head.w").ok_or_else(|| missing("resnet head"))?,
            head_b: params.id_by_name("resnet.head.b").ok_or_else(|| missing("resnet head"))?,
        })
    }

    /// Forward to logits `(n,)` from input `(n, channels, clip_len, m)`.
    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, bound: &Bound, x: VarId) -> VarId {
        let mut h = g.conv2d_same(x, bound.var(self.stem.w), bound.var(self.stem.b));
        h = g.relu(h);
        for block in &self.blocks {
            let input = h;
            let mut y = g.conv2d_same(input, bound.var(block.conv1.w), bound.var(block.conv1.b));
            y = g.relu(y);
            y = g.conv2d_same(y, bound.var(block.conv2.w), bound.var(block.conv2.b));
            let skip = match &block.skip {
                Some(s) => g.conv2d_same(input, bound.var(s.w), bound.var(s.b)),
                None => input,
            };
            let sum = g.add(y, skip);
            h = g.relu(sum);
        }
        let pooled = g.global_avg_pool(h);
        let z = g.matmul(pooled, bound.var(self.head_w));
        let z = g.add_bias(z, bound.var(self.head_b));
        g.squeeze_col(z)
    }
}
