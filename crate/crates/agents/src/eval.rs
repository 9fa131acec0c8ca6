//! Policy evaluation over noiseless rollouts.

use crate::error::{AgentError, Result};
use trajmia_core::{discounted_return, rollout, Environment, Policy, Scalar};

/// Mean and standard error of the (optionally discounted) episode return
/// over `episodes` noiseless rollouts seeded `seed_base..seed_base+episodes`.
///
/// `gamma = 1.0` gives the undiscounted return used by learning curves.
pub fn evaluate_policy<F: Scalar>(
    env: &mut dyn Environment<F>,
    policy: &dyn Policy<F>,
    episodes: usize,
    gamma: f64,
    seed_base: u64,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(AgentError::ZeroCount);
    }
    let mut returns = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let traj = rollout(env, policy, seed_base + i as u64, 0.0)?;
        let g = discounted_return(&traj.rewards(), F::of_f64(gamma))?;
        returns.push(g.as_f64());
    }
    Ok(mean_and_stderr(&returns))
}

/// Sample mean and standard error (`s / sqrt(n)` with the `n - 1` variance
/// denominator; `0` for a single observation).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
