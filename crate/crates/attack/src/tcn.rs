//! Temporal-convolutional sequence classifier for individual-mode samples.
//!
//! A stack of residual blocks of dilated causal 1-D convolutions (dilation
//! `2^i` at level `i`, two convolutions per level), global average pooling
//! over time and an affine map to one logit.

use crate::error::{AttackError, Result};
use ndarray::ArrayD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trajmia_core::Scalar;
use trajmia_nn::{init, Bound, Graph, ParamId, ParamSet, VarId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcnConfig {
    pub levels: usize,
    pub channels: usize,
    pub kernel: usize,
    pub dropout: f64,
}

impl Default for TcnConfig {
    fn default() -> Self {
        Self { levels: 4, channels: 32, kernel: 3, dropout: 0.5 }
    }
}

impl TcnConfig {
    /// Span of input steps influencing the last output step: two
    /// convolutions per level with dilations doubling each level.
    pub fn receptive_field(&self) -> usize {
        1 + 2 * (self.kernel - 1) * ((1 << self.levels) - 1)
    }

    /// The receptive field must cover the clip length, otherwise early
    /// steps could never influence the logit.
    pub fn validate(&self, clip_len: usize) -> Result<()> {
        if self.levels == 0 || self.channels == 0 || self.kernel < 2 {
            return Err(AttackError::Empty("tcn config"));
        }
        let rf = self.receptive_field();
        if rf < clip_len {
            return Err(AttackError::ReceptiveFieldTooSmall { rf, clip_len });
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
    let fan_in = c_in * kernel;
    ConvIds {
        w: params.add(format!("{name}.w"), init::uniform_fan_in(rng, &[c_out, c_in, kernel], fan_in)),
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
    dilation: usize,
}

pub(crate) struct TcnNet {
    blocks: Vec<Block>,
    head_w: ParamId,
    head_b: ParamId,
    dropout: f64,
}

impl TcnNet {
    pub fn build<F: Scalar>(
        cfg: &TcnConfig,
        in_channels: usize,
        clip_len: usize,
        params: &mut ParamSet<F>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate(clip_len)?;
        let mut blocks = Vec::with_capacity(cfg.levels);
        let mut c_in = in_channels;
        for level in 0..cfg.levels {
            let dilation = 1 << level;
            let name = format!("tcn.b{level}");
            let conv1 = conv_params(params, rng, &format!("{name}.conv1"), cfg.channels, c_in, cfg.kernel);
            let conv2 =
                conv_params(params, rng, &format!("{name}.conv2"), cfg.channels, cfg.channels, cfg.kernel);
            let skip = (c_in != cfg.channels)
                .then(|| conv_params(params, rng, &format!("{name}.skip"), cfg.channels, c_in, 1));
            blocks.push(Block { conv1, conv2, skip, dilation });
            c_in = cfg.channels;
        }
        let head_w = params.add("tcn.head.w", init::uniform_fan_in(rng, &[cfg.channels, 1], cfg.channels));
        let head_b = params.add("tcn.head.b", init::uniform_fan_in(rng, &[1], cfg.channels));
        Ok(Self { blocks, head_w, head_b, dropout: cfg.dropout })
    }

    pub fn from_params<F: Scalar>(
        cfg: &TcnConfig,
        in_channels: usize,
        clip_len: usize,
        params: &ParamSet<F>,
    ) -> Result<Self> {
        cfg.validate(clip_len)?;
        let mut blocks = Vec::with_capacity(cfg.levels);
        let mut c_in = in_channels;
        for level in 0..cfg.levels {
            let name = format!("tcn.b{level}");
            let missing = || AttackError::BadDatasetFile(format!("{name} parameters missing"));
            let conv1 = conv_from_params(params, &format!("{name}.conv1")).ok_or_else(missing)?;
            let conv2 = conv_from_params(params, &format!("{name}.conv2")).ok_or_else(missing)?;
            let skip = if c_in != cfg.channels {
                Some(conv_from_params(params, &format!("{name}.skip")).ok_or_else(missing)?)
            } else {
                None
            };
            blocks.push(Block { conv1, conv2, skip, dilation: 1 << level });
            c_in = cfg.channels;
        }
        let missing = || AttackError::BadDatasetFile("tcn head parameters missing".into());
        Ok(Self {
            blocks,
            head_w: params.id_by_name("tcn.head.w").ok_or_else(missing)?,
            head_b: params.id_by_name("tcn.head.b").ok_or_else(missing)?,
            dropout: cfg.dropout,
        })
    }

    /// Forward to logits `(n,)`. `dropout_rng = None` means inference
    /// (no dropout); during training the inverted masks come from the rng.
    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        bound: &Bound,
        x: VarId,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> VarId {
        let mut rng = dropout_rng;
        let mut h = x;
        for block in &self.blocks {
            let input = h;
            let mut y = g.conv1d_causal(input, bound.var(block.conv1.w), bound.var(block.conv1.b), block.dilation);
            y = g.relu(y);
            y = self.dropout(g, y, &mut rng);
            y = g.conv1d_causal(y, bound.var(block.conv2.w), bound.var(block.conv2.b), block.dilation);
            y = g.relu(y);
            y = self.dropout(g, y, &mut rng);
            let skip = match &block.skip {
                Some(s) => g.conv1d_causal(input, bound.var(s.w), bound.var(s.b), 1),
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

    fn dropout<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        x: VarId,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> VarId {
        let Some(rng) = rng.as_deref_mut() else { return x };
        if self.dropout <= 0.0 {
            return x;
        }
        let keep = 1.0 - self.dropout;
        let shape = g.value(x).raw_dim();
        let mask = ArrayD::from_shape_simple_fn(shape, || {
            if rng.random_range(0.0..1.0f64) < keep {
                F::of_f64(1.0 / keep)
            } else {
                F::zero()
            }
        });
        let m = g.constant(mask);
        g.mul(x, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receptive_field_formula() {
        let cfg = TcnConfig::default();
        // 1 + 2*(3-1)*(2^4-1) = 61
        assert_eq!(cfg.receptive_field(), 61);
        assert!(cfg.validate(61).is_ok());
        assert!(matches!(
            cfg.validate(62),
            Err(AttackError::ReceptiveFieldTooSmall { rf: 61, clip_len: 62 })
        ));
    }
}
