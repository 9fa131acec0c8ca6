//! The data oracle: a deterministic actor-critic learner that produces the
//! exploration (behaviour) policy, plus batch collection on top of it.

use crate::error::{AgentError, Result};
use crate::eval::evaluate_policy;
use crate::mlp::{batch_arrays, soft_update, MlpLayout};
use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use trajmia_core::seeding::{self, streams, substream};
use trajmia_core::{
    rollout, Environment, EnvSpec, Policy, ReplayBuffer, Scalar, SourceTag, TrajectoryBatch,
};
use trajmia_nn::{Adam, AdamConfig, Graph, ParamSet};

#[derive(Clone, Debug)]
pub struct DdpgConfig {
    /// Width of the two hidden layers.
    pub hidden: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    /// Soft target-update rate.
    pub tau: f64,
    /// Gaussian exploration noise scale during training.
    pub explore_noise: f64,
    /// Uniform-random action steps before any gradient update.
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Episodes used by the final divergence-check evaluation.
    pub eval_episodes: usize,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            explore_noise: 0.1,
            warmup_steps: 1000,
            batch_size: 64,
            buffer_capacity: 100_000,
            eval_episodes: 5,
        }
    }
}

/// Deterministic actor policy: two relu layers, tanh head scaled to the
/// uniform action bound.
pub struct MlpPolicy<F: Scalar> {
    pub(crate) params: ParamSet<F>,
    pub(crate) layout: MlpLayout,
    pub(crate) spec: EnvSpec<F>,
    pub(crate) bound: F,
}

impl<F: Scalar> MlpPolicy<F> {
    pub(crate) fn new(params: ParamSet<F>, layout: MlpLayout, spec: EnvSpec<F>) -> Result<Self> {
        let bound = spec.uniform_bound()?;
        Ok(Self { params, layout, spec, bound })
    }

    pub fn spec(&self) -> &EnvSpec<F> {
        &self.spec
    }

    pub(crate) fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    fn act_batch(&self, states: &Array2<F>) -> Array2<F> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, false);
        let x = g.constant(states.clone().into_dyn());
        let h = self.layout.forward(&mut g, &bound, x);
        let t = g.tanh(h);
        let a = g.scale(t, self.bound);
        g.value(a).clone().into_dimensionality::<ndarray::Ix2>().unwrap()
    }
}

impl<F: Scalar> Policy<F> for MlpPolicy<F> {
    fn action_dim(&self) -> usize {
        self.spec.action_dim
    }

    fn act(&self, state: &[F]) -> Vec<F> {
        let s = Array2::from_shape_vec((1, state.len()), state.to_vec()).unwrap();
        self.act_batch(&s).index_axis(Axis(0), 0).to_vec()
    }
}

/// Trains the behaviour policy for `total_steps` environment steps.
///
/// Critic regresses one-step bootstrapped targets under discount `gamma`,
/// the actor ascends the critic value, and target copies track the main
/// networks through soft updates. `total_steps = 0` returns the untrained
/// (randomly initialized) actor, which is still a valid policy.
pub fn train_behavior_policy<F: Scalar>(
    env: &mut dyn Environment<F>,
    total_steps: usize,
    cfg: &DdpgConfig,
    seed: u64,
) -> Result<MlpPolicy<F>> {
    let spec = env.spec().clone();
    spec.validate()?;
    let act_bound = spec.uniform_bound()?;
    let (ds, da) = (spec.state_dim, spec.action_dim);

    let mut init_rng = seeding::rng(seed, streams::PARAM_INIT);
    let mut actor = ParamSet::<F>::new();
    let actor_layout = MlpLayout::new(&mut actor, &mut init_rng, "actor", ds, cfg.hidden, da);
    let mut critic = ParamSet::<F>::new();
    let critic_layout = MlpLayout::new(&mut critic, &mut init_rng, "critic", ds + da, cfg.hidden, 1);
    let mut actor_target = actor.clone();
    let mut critic_target = critic.clone();

    let mut adam_actor = Adam::new(AdamConfig::with_lr(cfg.actor_lr), &actor);
    let mut adam_critic = Adam::new(AdamConfig::with_lr(cfg.critic_lr), &critic);

    let mut buffer = ReplayBuffer::<F>::new(cfg.buffer_capacity, substream(seed, streams::BUFFER_SAMPLE));
    let mut train_rng = seeding::rng(seed, streams::TRAIN_LOOP);

    let act_greedy = |actor: &ParamSet<F>, state: &[F]| -> Vec<F> {
        let mut g = Graph::new();
        let bound = actor.bind(&mut g, false);
        let x = g.constant(
            Array2::from_shape_vec((1, ds), state.to_vec()).unwrap().into_dyn(),
        );
        let h = actor_layout.forward(&mut g, &bound, x);
        let t = g.tanh(h);
        let a = g.scale(t, act_bound);
        g.value(a).iter().copied().collect()
    };

    let mut episode = 0u64;
    let mut state = env.reset(substream(seed, 0x5000))?;
    let gamma = F::of_f64(cfg.gamma);

    for step in 0..total_steps {
        let mut action: Vec<F> = if step < cfg.warmup_steps {
            (0..da)
                .map(|i| {
                    let lo = spec.action_low[i].as_f64();
                    let hi = spec.action_high[i].as_f64();
                    F::of_f64(train_rng.random_range(lo..hi))
                })
                .collect()
        } else {
            let mut a = act_greedy(&actor, &state);
            for x in a.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut train_rng);
                *x = *x + F::of_f64(z * cfg.explore_noise);
            }
            a
        };
        spec.clamp_action(&mut action);

        let out = env.step(&action)?;
        buffer.push(trajmia_core::Transition {
            state: state.clone(),
            action,
            reward: out.reward,
            next_state: out.next_state.clone(),
            terminal: out.terminal,
        });
        if out.terminal {
            episode += 1;
            state = env.reset(substream(seed, 0x5000 + episode))?;
        } else {
            state = out.next_state;
        }

        if step < cfg.warmup_steps {
            continue;
        }

        let batch = buffer.sample(cfg.batch_size)?;
        let (s, a, r, s2, live) = batch_arrays(&batch);
        let n = batch.len();

        // Bootstrapped target y = r + gamma * live * Q'(s', mu'(s'))
        let y = {
            let mut g = Graph::new();
            let ab = actor_target.bind(&mut g, false);
            let cb = critic_target.bind(&mut g, false);
            let s2v = g.constant(s2.clone().into_dyn());
            let h = actor_layout.forward(&mut g, &ab, s2v);
            let t = g.tanh(h);
            let a2 = g.scale(t, act_bound);
            let sa = g.concat_cols(s2v, a2);
            let q = critic_layout.forward(&mut g, &cb, sa);
            let qv = g.value(q);
            let mut y = Array2::<F>::zeros((n, 1));
            for i in 0..n {
                y[[i, 0]] = r[i] + gamma * live[i] * qv[[i, 0]];
            }
            y
        };

        // Critic regression.
        let critic_loss = {
            let mut g = Graph::new();
            let cb = critic.bind(&mut g, true);
            let sv = g.constant(s.clone().into_dyn());
            let av = g.constant(a.clone().into_dyn());
            let yv = g.constant(y.into_dyn());
            let sa = g.concat_cols(sv, av);
            let q = critic_layout.forward(&mut g, &cb, sa);
            let d = g.sub(q, yv);
            let sq = g.mul(d, d);
            let loss = g.mean_all(sq);
            g.backward(loss);
            let grads = cb.take_grads(&mut g);
            adam_critic.step(&mut critic, &grads);
            g.scalar_value(loss).as_f64()
        };

        // Actor ascent on the (frozen) critic value.
        let actor_loss = {
            let mut g = Graph::new();
            let ab = actor.bind(&mut g, true);
            let cb = critic.bind(&mut g, false);
            let sv = g.constant(s.into_dyn());
            let h = actor_layout.forward(&mut g, &ab, sv);
            let t = g.tanh(h);
            let ap = g.scale(t, act_bound);
            let sa = g.concat_cols(sv, ap);
            let q = critic_layout.forward(&mut g, &cb, sa);
            let mq = g.mean_all(q);
            let loss = g.scale(mq, -F::one());
            g.backward(loss);
            let grads = ab.take_grads(&mut g);
            adam_actor.step(&mut actor, &grads);
            g.scalar_value(loss).as_f64()
        };

        if !critic_loss.is_finite() || !actor_loss.is_finite() {
            return Err(AgentError::Diverged {
                step,
                loss: if critic_loss.is_finite() { actor_loss } else { critic_loss },
            });
        }

        soft_update(&mut critic_target, &critic, cfg.tau);
        soft_update(&mut actor_target, &actor, cfg.tau);
    }

    let policy = MlpPolicy::new(actor, actor_layout, spec)?;

    if total_steps > 0 {
        let (mean_return, _) =
            evaluate_policy(env, &policy, cfg.eval_episodes.max(1), 1.0, substream(seed, 0x6000))?;
        if !mean_return.is_finite() {
            return Err(AgentError::Diverged { step: total_steps, loss: mean_return });
        }
    }
    Ok(policy)
}

/// Collects `n_trajectories` i.i.d. exploration rollouts; trajectory `i`
/// resets with `seed_base + i` and that seed is recorded for initial-state
/// matching downstream.
pub fn collect_batch<F: Scalar>(
    env: &mut dyn Environment<F>,
    policy: &dyn Policy<F>,
    n_trajectories: usize,
    noise: f64,
    seed_base: u64,
    tag: SourceTag,
) -> Result<TrajectoryBatch<F>> {
    collect_batch_mixed(env, &[policy], n_trajectories, noise, seed_base, tag)
}

/// Like [`collect_batch`] but cycling through several behaviour policies
/// (trajectory `i` uses `policies[i % k]`).
pub fn collect_batch_mixed<F: Scalar>(
    env: &mut dyn Environment<F>,
    policies: &[&dyn Policy<F>],
    n_trajectories: usize,
    noise: f64,
    seed_base: u64,
    tag: SourceTag,
) -> Result<TrajectoryBatch<F>> {
    if n_trajectories == 0 || policies.is_empty() {
        return Err(AgentError::ZeroCount);
    }
    let mut trajectories = Vec::with_capacity(n_trajectories);
    let mut seeds = Vec::with_capacity(n_trajectories);
    for i in 0..n_trajectories {
        let seed = seed_base + i as u64;
        trajectories.push(rollout(env, policies[i % policies.len()], seed, noise)?);
        seeds.push(seed);
    }
    Ok(TrajectoryBatch::new(env.spec().clone(), tag, trajectories, seeds)?)
}
