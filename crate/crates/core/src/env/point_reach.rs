//! Built-in desk-scale continuous-control task.

use super::{EnvSpec, Environment, StepOutcome};
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::seeding::{self, streams};
use rand::Rng;

/// A planar point-mass steered toward a fixed goal.
///
/// State is the position `s` in `[-2, 2]^2`, actions live in `[-1, 1]^2` and
/// move the point by `s' = clamp(s + 0.1 * a)`. The dense reward is the
/// negative Euclidean distance to the goal `(1, 1)`; the sparse variant pays
/// 1 inside the goal radius and 0 elsewhere. Episodes start uniformly in
/// `[-0.5, 0.5]^2` (determined by the reset seed) and end inside the goal
/// radius 0.05 or after `t_max` steps.
pub struct PointReach2D<F: Scalar> {
    spec: EnvSpec<F>,
    sparse: bool,
    position: [F; 2],
    steps: usize,
    done: bool,
    started: bool,
}

const GOAL: [f64; 2] = [1.0, 1.0];
const DT: f64 = 0.1;
const GOAL_RADIUS: f64 = 0.05;
const STATE_BOUND: f64 = 2.0;
const INIT_HALF_WIDTH: f64 = 0.5;

impl<F: Scalar> PointReach2D<F> {
    pub fn new(t_max: usize) -> Self {
        Self::with_reward(t_max, false)
    }

    /// `sparse = true` switches to the 0/1 goal-indicator reward.
    pub fn with_reward(t_max: usize, sparse: bool) -> Self {
        let spec = EnvSpec::with_unit_actions("PointReach2D", 2, 2, t_max);
        Self { spec, sparse, position: [F::zero(); 2], steps: 0, done: true, started: false }
    }

    fn distance_to_goal(p: &[F; 2]) -> F {
        let dx = p[0] - F::of_f64(GOAL[0]);
        let dy = p[1] - F::of_f64(GOAL[1]);
        (dx * dx + dy * dy).sqrt()
    }
}

impl<F: Scalar> Environment<F> for PointReach2D<F> {
    fn spec(&self) -> &EnvSpec<F> {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<F>> {
        let mut rng = seeding::rng(seed, streams::ENV_RESET);
        let x = rng.random_range(-INIT_HALF_WIDTH..INIT_HALF_WIDTH);
        let y = rng.random_range(-INIT_HALF_WIDTH..INIT_HALF_WIDTH);
        self.position = [F::of_f64(x), F::of_f64(y)];
        self.steps = 0;
        self.done = false;
        self.started = true;
        Ok(self.position.to_vec())
    }

    fn step(&mut self, action: &[F]) -> Result<StepOutcome<F>> {
        if !self.started {
            return Err(CoreError::SteppedBeforeReset);
        }
        if self.done {
            return Err(CoreError::SteppedWhileTerminal);
        }
        if action.len() != 2 {
            return Err(CoreError::ActionDimMismatch { expected: 2, got: action.len() });
        }
        let mut a = [action[0], action[1]];
        self.spec.clamp_action(&mut a);

        let bound = F::of_f64(STATE_BOUND);
        let dt = F::of_f64(DT);
        for i in 0..2 {
            let next = self.position[i] + dt * a[i];
            self.position[i] = next.max(-bound).min(bound);
        }
        self.steps += 1;

        let dist = Self::distance_to_goal(&self.position);
        let at_goal = dist < F::of_f64(GOAL_RADIUS);
        let reward = if self.sparse {
            if at_goal { F::one() } else { F::zero() }
        } else {
            -dist
        };
        let terminal = at_goal || self.steps >= self.spec.t_max;
        self.done = terminal;
        Ok(StepOutcome { next_state: self.position.to_vec(), reward, terminal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_seed_deterministic_and_in_support() {
        let mut env = PointReach2D::<f64>::new(50);
        let a = env.reset(42).unwrap();
        let b = env.reset(42).unwrap();
        assert_eq!(a, b);
        for seed in 0..200u64 {
            let s = env.reset(seed).unwrap();
            assert!(s.iter().all(|v| (-0.5..0.5).contains(v)), "{s:?}");
        }
    }

    #[test]
    fn reset_mean_is_near_center() {
        // Monte-Carlo estimate of the uniform mean over 10^4 seeds.
        let mut env = PointReach2D::<f64>::new(50);
        let n = 10_000u64;
        let mut sums = [0.0f64; 2];
        for seed in 0..n {
            let s = env.reset(seed).unwrap();
            sums[0] += s[0];
            sums[1] += s[1];
        }
        for s in sums {
            assert!((s / n as f64).abs() < 0.02, "mean {}", s / n as f64);
        }
    }

    #[test]
    fn step_applies_stated_dynamics() {
        let mut env = PointReach2D::<f64>::new(50);
        env.reset(0).unwrap();
        env.position = [0.0, 0.0];
        let out = env.step(&[1.0, 0.0]).unwrap();
        assert_eq!(out.next_state, vec![0.1, 0.0]);
        // reward = -|| (0.1, 0) - (1, 1) || = -sqrt(0.81 + 1)
        let expected = -(0.81f64 + 1.0).sqrt();
        assert!((out.reward - expected).abs() < 1e-15);
        assert!(!out.terminal);
    }

    #[test]
    fn goal_entry_and_step_cap_both_terminate() {
        let mut env = PointReach2D::<f64>::new(3);
        env.reset(0).unwrap();
        env.position = [0.92, 1.0];
        let out = env.step(&[1.0, 0.0]).unwrap();
        assert!(out.terminal, "inside goal radius");
        assert!(env.step(&[0.0, 0.0]).is_err(), "stepping after terminal must fail");

        let mut env = PointReach2D::<f64>::new(3);
        env.reset(1).unwrap();
        for i in 0..3 {
            let out = env.step(&[0.0, 0.0]).unwrap();
            assert_eq!(out.terminal, i == 2, "terminal only at t_max");
        }
    }

    #[test]
    fn out_of_bounds_actions_are_clamped() {
        let mut env = PointReach2D::<f64>::new(50);
        env.reset(0).unwrap();
        env.position = [0.0, 0.0];
        let out = env.step(&[5.0, -5.0]).unwrap();
        assert_eq!(out.next_state, vec![0.1, -0.1]);
    }

    #[test]
    fn sparse_reward_pays_only_at_goal() {
        let mut env = PointReach2D::<f64>::with_reward(50, true);
        env.reset(0).unwrap();
        env.position = [0.0, 0.0];
        assert_eq!(env.step(&[1.0, 1.0]).unwrap().reward, 0.0);
        env.position = [0.97, 1.0];
        env.done = false;
        let out = env.step(&[0.3, 0.0]).unwrap();
        assert!(out.terminal);
        assert_eq!(out.reward, 1.0);
    }
}
