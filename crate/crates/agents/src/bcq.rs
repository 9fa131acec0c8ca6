//! The trainer oracle: batch-constrained Q-learning over a replay buffer,
//! with black-box trajectory queries against the trained target policy.
//!
//! The target policy decodes candidate actions from a state-conditioned
//! generative model, perturbs them within a small range and picks the
//! candidate with the highest conservative twin-Q value, which keeps
//! selected actions inside the support of the training batch.

use crate::curve::LearningCurve;
use crate::error::{AgentError, Result};
use crate::eval::evaluate_policy;
use crate::mlp::{batch_arrays, soft_update, Dense, MlpLayout};
use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use trajmia_core::seeding::{self, splitmix64, streams, substream};
use trajmia_core::{
    rollout, Environment, EnvSpec, Policy, ReplayBuffer, Scalar, SourceTag, TrajectoryBatch,
};
use trajmia_nn::{Adam, AdamConfig, Bound, Graph, ParamSet, VarId};

#[derive(Clone, Debug)]
pub struct BcqConfig {
    /// Width of every hidden layer.
    pub hidden: usize,
    pub vae_lr: f64,
    pub critic_lr: f64,
    pub pert_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Perturbation range as a fraction of the action bound.
    pub phi: f64,
    /// Candidate actions sampled from the generative model per state.
    pub n_cand: usize,
    /// Weight on the minimum of the twin Q estimates in the target.
    pub min_weight: f64,
    /// Weight of the KL regularizer in the generative-model loss.
    pub kl_weight: f64,
    pub batch_size: usize,
    pub gradient_steps: usize,
    /// Evaluate the policy every this many gradient steps.
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl Default for BcqConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            vae_lr: 1e-3,
            critic_lr: 1e-3,
            pert_lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            phi: 0.05,
            n_cand: 10,
            min_weight: 0.75,
            kl_weight: 0.5,
            batch_size: 64,
            gradient_steps: 20_000,
            eval_interval: 500,
            eval_episodes: 10,
        }
    }
}

struct VaeLayout {
    enc_l1: Dense,
    enc_l2: Dense,
    enc_mu: Dense,
    enc_log_std: Dense,
    dec: MlpLayout,
}

impl VaeLayout {
    fn new<F: Scalar>(
        params: &mut ParamSet<F>,
        rng: &mut ChaCha8Rng,
        ds: usize,
        da: usize,
        zdim: usize,
        hidden: usize,
    ) -> Self {
        Self {
            enc_l1: Dense::new(params, rng, "vae.enc.l1", ds + da, hidden),
            enc_l2: Dense::new(params, rng, "vae.enc.l2", hidden, hidden),
            enc_mu: Dense::new(params, rng, "vae.enc.mu", hidden, zdim),
            enc_log_std: Dense::new(params, rng, "vae.enc.log_std", hidden, zdim),
            dec: MlpLayout::new(params, rng, "vae.dec", ds + zdim, hidden, da),
        }
    }

    fn from_params<F: Scalar>(params: &ParamSet<F>) -> Option<Self> {
        Some(Self {
            enc_l1: Dense::from_params(params, "vae.enc.l1")?,
            enc_l2: Dense::from_params(params, "vae.enc.l2")?,
            enc_mu: Dense::from_params(params, "vae.enc.mu")?,
            enc_log_std: Dense::from_params(params, "vae.enc.log_std")?,
            dec: MlpLayout::from_params(params, "vae.dec")?,
        })
    }

    fn encode<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        bound: &Bound,
        s: VarId,
        a: VarId,
    ) -> (VarId, VarId) {
        let sa = g.concat_cols(s, a);
        let h = self.enc_l1.forward(g, bound, sa);
        let h = g.relu(h);
        let h = self.enc_l2.forward(g, bound, h);
        let h = g.relu(h);
        let mu = self.enc_mu.forward(g, bound, h);
        let raw = self.enc_log_std.forward(g, bound, h);
        let log_std = g.clamp(raw, F::of_f64(-4.0), F::of_f64(15.0));
        (mu, log_std)
    }

    fn decode<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        bound: &Bound,
        s: VarId,
        z: VarId,
        act_bound: F,
    ) -> VarId {
        let sz = g.concat_cols(s, z);
        let h = self.dec.forward(g, bound, sz);
        let t = g.tanh(h);
        g.scale(t, act_bound)
    }
}

fn perturb<F: Scalar>(
    g: &mut Graph<F>,
    pert_bound: &Bound,
    pert: &MlpLayout,
    s: VarId,
    a: VarId,
    phi: f64,
    act_bound: F,
) -> VarId {
    if phi == 0.0 {
        return a;
    }
    let sa = g.concat_cols(s, a);
    let h = pert.forward(g, pert_bound, sa);
    let t = g.tanh(h);
    let xi = g.scale(t, F::of_f64(phi) * act_bound);
    let sum = g.add(a, xi);
    g.clamp(sum, -act_bound, act_bound)
}

/// Everything the trainer owns; internals are deliberately private and only
/// the resulting [`BcqPolicy`] leaves this module.
pub struct BcqModel<F: Scalar> {
    spec: EnvSpec<F>,
    cfg: BcqConfig,
    act_bound: F,
    zdim: usize,
    vae: ParamSet<F>,
    vae_layout: VaeLayout,
    pert: ParamSet<F>,
    pert_layout: MlpLayout,
    pert_target: ParamSet<F>,
    critics: ParamSet<F>,
    q1_layout: MlpLayout,
    q2_layout: MlpLayout,
    critics_target: ParamSet<F>,
    adam_vae: Adam<F>,
    adam_pert: Adam<F>,
    adam_critics: Adam<F>,
    train_rng: ChaCha8Rng,
}

impl<F: Scalar> BcqModel<F> {
    fn new(spec: EnvSpec<F>, cfg: BcqConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        let act_bound = spec.uniform_bound()?;
        let (ds, da) = (spec.state_dim, spec.action_dim);
        let zdim = 2 * da;

        let mut rng = seeding::rng(seed, streams::PARAM_INIT);
        let mut vae = ParamSet::new();
        let vae_layout = VaeLayout::new(&mut vae, &mut rng, ds, da, zdim, cfg.hidden);
        let mut pert = ParamSet::new();
        let pert_layout = MlpLayout::new(&mut pert, &mut rng, "pert", ds + da, cfg.hidden, da);
        let mut critics = ParamSet::new();
        let q1_layout = MlpLayout::new(&mut critics, &mut rng, "q1", ds + da, cfg.hidden, 1);
        let q2_layout = MlpLayout::new(&mut critics, &mut rng, "q2", ds + da, cfg.hidden, 1);

        let adam_vae = Adam::new(AdamConfig::with_lr(cfg.vae_lr), &vae);
        let adam_pert = Adam::new(AdamConfig::with_lr(cfg.pert_lr), &pert);
        let adam_critics = Adam::new(AdamConfig::with_lr(cfg.critic_lr), &critics);

        Ok(Self {
            spec,
            act_bound,
            zdim,
            pert_target: pert.clone(),
            critics_target: critics.clone(),
            vae,
            vae_layout,
            pert,
            pert_layout,
            critics,
            q1_layout,
            q2_layout,
            adam_vae,
            adam_pert,
            adam_critics,
            train_rng: seeding::rng(seed, streams::TRAIN_LOOP),
            cfg,
        })
    }

    fn sample_latent_clamped(&mut self, rows: usize) -> Array2<F> {
        let mut z = Array2::<F>::zeros((rows, self.zdim));
        for v in z.iter_mut() {
            let draw: f64 = StandardNormal.sample(&mut self.train_rng);
            *v = F::of_f64(draw.clamp(-0.5, 0.5));
        }
        z
    }

    fn train_step(&mut self, step: usize, buffer: &mut ReplayBuffer<F>) -> Result<()> {
        let batch = buffer.sample(self.cfg.batch_size)?;
        let (s, a, r, s2, live) = batch_arrays(&batch);
        let n = batch.len();
        let gamma = F::of_f64(self.cfg.gamma);

        // Generative-model update: reconstruction + KL.
        let vae_loss = {
            let mut eps = Array2::<F>::zeros((n, self.zdim));
            for v in eps.iter_mut() {
                let draw: f64 = StandardNormal.sample(&mut self.train_rng);
                *v = F::of_f64(draw);
            }
            let mut g = Graph::new();
            let vb = self.vae.bind(&mut g, true);
            let sv = g.constant(s.clone().into_dyn());
            let av = g.constant(a.clone().into_dyn());
            let (mu, log_std) = self.vae_layout.encode(&mut g, &vb, sv, av);
            let std = g.exp(log_std);
            let epsv = g.constant(eps.into_dyn());
            let noise = g.mul(std, epsv);
            let z = g.add(mu, noise);
            let recon = self.vae_layout.decode(&mut g, &vb, sv, z, self.act_bound);

            let d = g.sub(recon, av);
            let sq = g.mul(d, d);
            let recon_loss = g.mean_all(sq);

            let two_l = g.scale(log_std, F::of_f64(2.0));
            let var = g.exp(two_l);
            let mu2 = g.mul(mu, mu);
            let t1 = g.sub(two_l, mu2);
            let t2 = g.sub(t1, var);
            let t3 = g.add_scalar(t2, F::one());
            let klm = g.mean_all(t3);
            let kl = g.scale(klm, F::of_f64(-0.5));

            let klw = g.scale(kl, F::of_f64(self.cfg.kl_weight));
            let loss = g.add(recon_loss, klw);
            g.backward(loss);
            let grads = vb.take_grads(&mut g);
            self.adam_vae.step(&mut self.vae, &grads);
            g.scalar_value(loss).as_f64()
        };

        // Twin-critic update against the conservative candidate-max target.
        let critic_loss = {
            let rows = n * self.cfg.n_cand;
            let mut s2_rep = Array2::<F>::zeros((rows, s2.ncols()));
            for i in 0..n {
                for c in 0..self.cfg.n_cand {
                    s2_rep.row_mut(i * self.cfg.n_cand + c).assign(&s2.row(i));
                }
            }
            let z = self.sample_latent_clamped(rows);

            let q_best: Array1<F> = {
                let mut g = Graph::new();
                let vb = self.vae.bind(&mut g, false);
                let pb = self.pert_target.bind(&mut g, false);
                let cb = self.critics_target.bind(&mut g, false);
                let sv = g.constant(s2_rep.into_dyn());
                let zv = g.constant(z.into_dyn());
                let cand = self.vae_layout.decode(&mut g, &vb, sv, zv, self.act_bound);
                let cand = perturb(
                    &mut g,
                    &pb,
                    &self.pert_layout,
                    sv,
                    cand,
                    self.cfg.phi,
                    self.act_bound,
                );
                let sa = g.concat_cols(sv, cand);
                let q1 = self.q1_layout.forward(&mut g, &cb, sa);
                let q2 = self.q2_layout.forward(&mut g, &cb, sa);
                let q1v = g.value(q1);
                let q2v = g.value(q2);
                let lam = F::of_f64(self.cfg.min_weight);
                let one_m = F::one() - lam;
                let mut best = Array1::<F>::from_elem(n, F::of_f64(f64::NEG_INFINITY));
                for i in 0..n {
                    for c in 0..self.cfg.n_cand {
                        let row = i * self.cfg.n_cand + c;
                        let (qa, qb) = (q1v[[row, 0]], q2v[[row, 0]]);
                        let q = lam * qa.min(qb) + one_m * qa.max(qb);
                        if q > best[i] {
                            best[i] = q;
                        }
                    }
                }
                best
            };

            let mut y = Array2::<F>::zeros((n, 1));
            for i in 0..n {
                y[[i, 0]] = r[i] + gamma * live[i] * q_best[i];
            }

            let mut g = Graph::new();
            let cb = self.critics.bind(&mut g, true);
            let sv = g.constant(s.clone().into_dyn());
            let av = g.constant(a.clone().into_dyn());
            let yv = g.constant(y.into_dyn());
            let sa = g.concat_cols(sv, av);
            let q1 = self.q1_layout.forward(&mut g, &cb, sa);
            let q2 = self.q2_layout.forward(&mut g, &cb, sa);
            let d1 = g.sub(q1, yv);
            let sq1 = g.mul(d1, d1);
            let l1 = g.mean_all(sq1);
            let d2 = g.sub(q2, yv);
            let sq2 = g.mul(d2, d2);
            let l2 = g.mean_all(sq2);
            let loss = g.add(l1, l2);
            g.backward(loss);
            let grads = cb.take_grads(&mut g);
            self.adam_critics.step(&mut self.critics, &grads);
            g.scalar_value(loss).as_f64()
        };

        // Perturbation-network ascent on Q1 over decoded actions.
        let pert_loss = if self.cfg.phi > 0.0 {
            let z = self.sample_latent_clamped(n);
            let mut g = Graph::new();
            let vb = self.vae.bind(&mut g, false);
            let pb = self.pert.bind(&mut g, true);
            let cb = self.critics.bind(&mut g, false);
            let sv = g.constant(s.into_dyn());
            let zv = g.constant(z.into_dyn());
            let sampled = self.vae_layout.decode(&mut g, &vb, sv, zv, self.act_bound);
            let acted = perturb(&mut g, &pb, &self.pert_layout, sv, sampled, self.cfg.phi, self.act_bound);
            let sa = g.concat_cols(sv, acted);
            let q = self.q1_layout.forward(&mut g, &cb, sa);
            let mq = g.mean_all(q);
            let loss = g.scale(mq, -F::one());
            g.backward(loss);
            let grads = pb.take_grads(&mut g);
            self.adam_pert.step(&mut self.pert, &grads);
            g.scalar_value(loss).as_f64()
        } else {
            0.0
        };

        if !vae_loss.is_finite() || !critic_loss.is_finite() || !pert_loss.is_finite() {
            let bad = [vae_loss, critic_loss, pert_loss]
                .into_iter()
                .find(|l| !l.is_finite())
                .unwrap();
            return Err(AgentError::Diverged { step, loss: bad });
        }

        soft_update(&mut self.critics_target, &self.critics, self.cfg.tau);
        soft_update(&mut self.pert_target, &self.pert, self.cfg.tau);
        Ok(())
    }

    fn snapshot_policy(&self) -> BcqPolicy<F> {
        BcqPolicy {
            spec: self.spec.clone(),
            vae: self.vae.clone(),
            pert: self.pert.clone(),
            critics: self.critics.clone(),
            phi: self.cfg.phi,
            n_cand: self.cfg.n_cand,
            zdim: self.zdim,
            act_bound: self.act_bound,
            hidden: self.cfg.hidden,
        }
    }
}

/// The released target policy: candidate decoding, perturbation and argmax-Q
/// selection over frozen parameters.
///
/// `act` is a pure function: the candidate latent draws are derived from the
/// state bits, so identical queries return identical actions.
pub struct BcqPolicy<F: Scalar> {
    spec: EnvSpec<F>,
    vae: ParamSet<F>,
    pert: ParamSet<F>,
    critics: ParamSet<F>,
    phi: f64,
    n_cand: usize,
    zdim: usize,
    act_bound: F,
    hidden: usize,
}

impl<F: Scalar> BcqPolicy<F> {
    pub fn spec(&self) -> &EnvSpec<F> {
        &self.spec
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn n_cand(&self) -> usize {
        self.n_cand
    }

    pub(crate) fn parts(&self) -> (&ParamSet<F>, &ParamSet<F>, &ParamSet<F>, usize, usize) {
        (&self.vae, &self.pert, &self.critics, self.zdim, self.hidden)
    }

    pub(crate) fn from_parts(
        spec: EnvSpec<F>,
        vae: ParamSet<F>,
        pert: ParamSet<F>,
        critics: ParamSet<F>,
        phi: f64,
        n_cand: usize,
        zdim: usize,
        hidden: usize,
    ) -> Result<Self> {
        let act_bound = spec.uniform_bound()?;
        // Validate that all layouts resolve.
        VaeLayout::from_params(&vae)
            .ok_or_else(|| AgentError::BadCheckpoint("generative-model parameters missing".into()))?;
        MlpLayout::from_params(&pert, "pert")
            .ok_or_else(|| AgentError::BadCheckpoint("perturbation parameters missing".into()))?;
        MlpLayout::from_params(&critics, "q1")
            .ok_or_else(|| AgentError::BadCheckpoint("critic parameters missing".into()))?;
        Ok(Self { spec, vae, pert, critics, phi, n_cand, zdim, act_bound, hidden })
    }

    /// Candidate latent vector for `(state, candidate)`; standard normal
    /// draws clamped to `[-0.5, 0.5]`, derived deterministically from the
    /// state bits.
    pub fn candidate_noise(&self, state: &[F], candidate: usize) -> Vec<F> {
        let mut h = splitmix64(0x7A11_BC0D ^ candidate as u64);
        for x in state {
            h = splitmix64(h ^ x.as_f64().to_bits());
        }
        (0..self.zdim)
            .map(|j| {
                h = splitmix64(h ^ j as u64);
                let u1 = ((h >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
                h = splitmix64(h);
                let u2 = (h >> 11) as f64 / (1u64 << 53) as f64;
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                F::of_f64(z.clamp(-0.5, 0.5))
            })
            .collect()
    }

    /// Decodes one action from the generative model for an explicit latent.
    pub fn decode_with(&self, state: &[F], z: &[F]) -> Vec<F> {
        let vae_layout = VaeLayout::from_params(&self.vae).expect("validated at construction");
        let mut g = Graph::new();
        let vb = self.vae.bind(&mut g, false);
        let sv = g.constant(Array2::from_shape_vec((1, state.len()), state.to_vec()).unwrap().into_dyn());
        let zv = g.constant(Array2::from_shape_vec((1, z.len()), z.to_vec()).unwrap().into_dyn());
        let a = vae_layout.decode(&mut g, &vb, sv, zv, self.act_bound);
        g.value(a).iter().copied().collect()
    }
}

impl<F: Scalar> Policy<F> for BcqPolicy<F> {
    fn action_dim(&self) -> usize {
        self.spec.action_dim
    }

    fn act(&self, state: &[F]) -> Vec<F> {
        let vae_layout = VaeLayout::from_params(&self.vae).expect("validated at construction");
        let pert_layout = MlpLayout::from_params(&self.pert, "pert").expect("validated");
        let q1_layout = MlpLayout::from_params(&self.critics, "q1").expect("validated");

        let n = self.n_cand;
        let ds = state.len();
        let mut s_rep = Array2::<F>::zeros((n, ds));
        let mut z = Array2::<F>::zeros((n, self.zdim));
        for c in 0..n {
            for j in 0..ds {
                s_rep[[c, j]] = state[j];
            }
            let noise = self.candidate_noise(state, c);
            for j in 0..self.zdim {
                z[[c, j]] = noise[j];
            }
        }

        let mut g = Graph::new();
        let vb = self.vae.bind(&mut g, false);
        let pb = self.pert.bind(&mut g, false);
        let cb = self.critics.bind(&mut g, false);
        let sv = g.constant(s_rep.into_dyn());
        let zv = g.constant(z.into_dyn());
        let cand = vae_layout.decode(&mut g, &vb, sv, zv, self.act_bound);
        let cand = perturb(&mut g, &pb, &pert_layout, sv, cand, self.phi, self.act_bound);
        let sa = g.concat_cols(sv, cand);
        let q1 = q1_layout.forward(&mut g, &cb, sa);

        let qv = g.value(q1);
        let mut best = 0usize;
        for c in 1..n {
            if qv[[c, 0]] > qv[[best, 0]] {
                best = c;
            }
        }
        g.value(cand)
            .index_axis(Axis(0), best)
            .iter()
            .copied()
            .collect()
    }
}

/// Trains the target policy from a replay buffer that already holds the
/// batch tuples. The gradient loop touches training data only through
/// `buffer.sample`, never through ordered trajectories.
pub fn train_from_buffer<F: Scalar>(
    buffer: &mut ReplayBuffer<F>,
    spec: &EnvSpec<F>,
    env_for_eval: &mut dyn Environment<F>,
    cfg: &BcqConfig,
    seed: u64,
) -> Result<(BcqPolicy<F>, LearningCurve)> {
    if buffer.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let mut model = BcqModel::new(spec.clone(), cfg.clone(), seed)?;
    let mut curve = LearningCurve::new();
    let eval_seed = substream(seed, 0x7000);

    for step in 0..cfg.gradient_steps {
        model.train_step(step, buffer)?;
        let done = step + 1;
        let at_interval = cfg.eval_interval > 0 && done % cfg.eval_interval == 0;
        if at_interval || done == cfg.gradient_steps {
            let policy = model.snapshot_policy();
            let (mean, stderr) =
                evaluate_policy(env_for_eval, &policy, cfg.eval_episodes, 1.0, eval_seed)?;
            if !mean.is_finite() {
                return Err(AgentError::Diverged { step, loss: mean });
            }
            curve.push(done, mean, stderr);
        }
    }
    Ok((model.snapshot_policy(), curve))
}

/// Fills a fresh replay buffer from `batch` (the only place trajectory order
/// is seen) and trains on the decorated tuples.
pub fn train_target_policy<F: Scalar>(
    batch: &TrajectoryBatch<F>,
    env_for_eval: &mut dyn Environment<F>,
    cfg: &BcqConfig,
    seed: u64,
) -> Result<(BcqPolicy<F>, LearningCurve)> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let capacity = batch.tuple_count();
    let mut buffer = ReplayBuffer::new(capacity, substream(seed, streams::BUFFER_SAMPLE));
    for traj in batch.trajectories() {
        buffer.insert(traj);
    }
    train_from_buffer(&mut buffer, batch.spec(), env_for_eval, cfg, seed)
}

/// One noiseless rollout per seed against the released policy; the seed
/// record is preserved so every output trajectory shares its initial state
/// with the data trajectory of the same seed.
pub fn query_output_trajectories<F: Scalar>(
    env: &mut dyn Environment<F>,
    policy: &dyn Policy<F>,
    seeds: &[u64],
) -> Result<TrajectoryBatch<F>> {
    if seeds.is_empty() {
        return Err(AgentError::ZeroCount);
    }
    let mut trajectories = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        trajectories.push(rollout(env, policy, seed, 0.0)?);
    }
    Ok(TrajectoryBatch::new(
        env.spec().clone(),
        SourceTag::ModelOutput,
        trajectories,
        seeds.to_vec(),
    )?)
}
