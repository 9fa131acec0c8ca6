//! The policy interface plus scripted policies used as cheap stand-ins for a
//! trained behaviour policy.

use crate::scalar::Scalar;
use crate::seeding::splitmix64;

/// A deterministic state-to-action map. Stochasticity (exploration noise) is
/// always added externally by the rollout machinery, never inside `act`.
pub trait Policy<F: Scalar> {
    fn action_dim(&self) -> usize;
    fn act(&self, state: &[F]) -> Vec<F>;
}

/// Emits the same action regardless of state.
pub struct ConstantPolicy<F: Scalar> {
    action: Vec<F>,
}

impl<F: Scalar> ConstantPolicy<F> {
    pub fn new(action: Vec<F>) -> Self {
        Self { action }
    }
}

impl<F: Scalar> Policy<F> for ConstantPolicy<F> {
    fn action_dim(&self) -> usize {
        self.action.len()
    }

    fn act(&self, _state: &[F]) -> Vec<F> {
        self.action.clone()
    }
}

/// A pure pseudo-random policy: the action is a hash of `(seed, state bits)`
/// mapped uniformly into the action box. Behaves like a uniform-random
/// baseline while staying a deterministic map, so it satisfies the policy
/// contract and keeps rollouts reproducible.
pub struct HashedUniformPolicy<F: Scalar> {
    seed: u64,
    low: Vec<F>,
    high: Vec<F>,
}

impl<F: Scalar> HashedUniformPolicy<F> {
    pub fn new(seed: u64, low: Vec<F>, high: Vec<F>) -> Self {
        assert_eq!(low.len(), high.len());
        Self { seed, low, high }
    }
}

impl<F: Scalar> Policy<F> for HashedUniformPolicy<F> {
    fn action_dim(&self) -> usize {
        self.low.len()
    }

    fn act(&self, state: &[F]) -> Vec<F> {
        let mut h = splitmix64(self.seed);
        for x in state {
            h = splitmix64(h ^ x.as_f64().to_bits());
        }
        (0..self.low.len())
            .map(|i| {
                h = splitmix64(h ^ (i as u64));
                let u = (h >> 11) as f64 / (1u64 << 53) as f64; // [0, 1)
                let lo = self.low[i].as_f64();
                let hi = self.high[i].as_f64();
                F::of_f64(lo + u * (hi - lo))
            })
            .collect()
    }
}

/// Scripted policy for `PointReach2D`: heads straight for the goal `(1, 1)`
/// at full speed (unit Euclidean direction).
pub struct GoalSeekPolicy;

impl<F: Scalar> Policy<F> for GoalSeekPolicy {
    fn action_dim(&self) -> usize {
        2
    }

    fn act(&self, state: &[F]) -> Vec<F> {
        let dx = 1.0 - state[0].as_f64();
        let dy = 1.0 - state[1].as_f64();
        let norm = (dx * dx + dy * dy).sqrt();
        if norm < 1e-12 {
            return vec![F::zero(), F::zero()];
        }
        vec![F::of_f64(dx / norm), F::of_f64(dy / norm)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashed_policy_is_pure_and_in_bounds() {
        let p = HashedUniformPolicy::<f64>::new(3, vec![-1.0, -1.0], vec![1.0, 1.0]);
        let s = vec![0.25, -0.5];
        assert_eq!(p.act(&s), p.act(&s));
        for k in 0..100 {
            let s = vec![k as f64 * 0.01, -(k as f64) * 0.02];
            let a = p.act(&s);
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn hashed_policy_covers_the_box() {
        let p = HashedUniformPolicy::<f64>::new(9, vec![-1.0], vec![1.0]);
        let mean: f64 = (0..2000)
            .map(|k| p.act(&[k as f64])[0])
            .sum::<f64>()
            / 2000.0;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn goal_seek_points_at_goal() {
        let p = GoalSeekPolicy;
        let a: Vec<f64> = p.act(&[0.0, 0.0]);
        let expected = 1.0 / 2f64.sqrt();
        assert!((a[0] - expected).abs() < 1e-12);
        assert!((a[1] - expected).abs() < 1e-12);
    }
}
