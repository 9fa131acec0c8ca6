//! Shared dense-network plumbing for the agents.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use trajmia_core::{Scalar, Transition};
use trajmia_nn::{init, Bound, Graph, ParamId, ParamSet, VarId};

pub(crate) struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new<F: Scalar>(
        params: &mut ParamSet<F>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = params.add(format!("{prefix}.w"), init::uniform_fan_in(rng, &[in_dim, out_dim], in_dim));
        let b = params.add(format!("{prefix}.b"), init::uniform_fan_in(rng, &[out_dim], in_dim));
        Self { w, b }
    }

    pub fn from_params<F: Scalar>(params: &ParamSet<F>, prefix: &str) -> Option<Self> {
        Some(Self {
            w: params.id_by_name(&format!("{prefix}.w"))?,
            b: params.id_by_name(&format!("{prefix}.b"))?,
        })
    }

    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, bound: &Bound, x: VarId) -> VarId {
        let h = g.matmul(x, bound.var(self.w));
        g.add_bias(h, bound.var(self.b))
    }
}

/// Two relu hidden layers and a linear head.
pub(crate) struct MlpLayout {
    pub l1: Dense,
    pub l2: Dense,
    pub out: Dense,
}

impl MlpLayout {
    pub fn new<F: Scalar>(
        params: &mut ParamSet<F>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
    ) -> Self {
        Self {
            l1: Dense::new(params, rng, &format!("{prefix}.l1"), in_dim, hidden),
            l2: Dense::new(params, rng, &format!("{prefix}.l2"), hidden, hidden),
            out: Dense::new(params, rng, &format!("{prefix}.out"), hidden, out_dim),
        }
    }

    pub fn from_params<F: Scalar>(params: &ParamSet<F>, prefix: &str) -> Option<Self> {
        Some(Self {
            l1: Dense::from_params(params, &format!("{prefix}.l1"))?,
            l2: Dense::from_params(params, &format!("{prefix}.l2"))?,
            out: Dense::from_params(params, &format!("{prefix}.out"))?,
        })
    }

    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, bound: &Bound, x: VarId) -> VarId {
        let h = self.l1.forward(g, bound, x);
        let h = g.relu(h);
        let h = self.l2.forward(g, bound, h);
        let h = g.relu(h);
        self.out.forward(g, bound, h)
    }
}

/// `target = tau * source + (1 - tau) * target`, elementwise over aligned
/// parameter sets.
pub(crate) fn soft_update<F: Scalar>(target: &mut ParamSet<F>, source: &ParamSet<F>, tau: f64) {
    let t = F::of_f64(tau);
    let keep = F::one() - t;
    for id in source.ids() {
        let s = source.value(id);
        let dst = target.value_mut(id);
        ndarray::Zip::from(dst).and(s).for_each(|d, &sv| {
            *d = t * sv + keep * *d;
        });
    }
}

/// Splits a minibatch of transitions into the arrays the update rules need:
/// `(states, actions, rewards, next_states, not_terminal)`.
pub(crate) fn batch_arrays<F: Scalar>(
    batch: &[Transition<F>],
) -> (Array2<F>, Array2<F>, Array1<F>, Array2<F>, Array1<F>) {
    let n = batch.len();
    let ds = batch[0].state.len();
    let da = batch[0].action.len();
    let mut s = Array2::<F>::zeros((n, ds));
    let mut a = Array2::<F>::zeros((n, da));
    let mut r = Array1::<F>::zeros(n);
    let mut s2 = Array2::<F>::zeros((n, ds));
    let mut live = Array1::<F>::zeros(n);
    for (i, t) in batch.iter().enumerate() {
        for j in 0..ds {
            s[[i, j]] = t.state[j];
            s2[[i, j]] = t.next_state[j];
        }
        for j in 0..da {
            a[[i, j]] = t.action[j];
        }
        r[i] = t.reward;
        live[i] = if t.terminal { F::zero() } else { F::one() };
    }
    (s, a, r, s2, live)
}
