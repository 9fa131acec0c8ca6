//! Environment abstraction: spec, step interface, the built-in desk-scale
//! task and the adapter protocol for external simulators.

mod external;
mod point_reach;

pub use external::{serve_environment, ExternalEnvClient, Request, Response};
pub use point_reach::PointReach2D;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Public knowledge about a task: dimensions, action bounds, episode cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct EnvSpec<F: Scalar> {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<F>,
    pub action_high: Vec<F>,
    pub t_max: usize,
}

impl<F: Scalar> EnvSpec<F> {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(CoreError::InvalidSpec("state and action dims must be positive".into()));
        }
        if self.t_max == 0 {
            return Err(CoreError::InvalidSpec("t_max must be at least 1".into()));
        }
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            return Err(CoreError::InvalidSpec("action bound lengths must match action_dim".into()));
        }
        for (lo, hi) in self.action_low.iter().zip(&self.action_high) {
            if !(*lo < *hi) {
                return Err(CoreError::InvalidSpec("action_low must be strictly below action_high".into()));
            }
        }
        Ok(())
    }

    /// Clamps an action into the component bounds in place.
    pub fn clamp_action(&self, action: &mut [F]) {
        for ((a, lo), hi) in action.iter_mut().zip(&self.action_low).zip(&self.action_high) {
            if *a < *lo {
                *a = *lo;
            } else if *a > *hi {
                *a = *hi;
            }
        }
    }

    /// Symmetric unit action bounds, the common continuous-control convention.
    pub fn with_unit_actions(name: &str, state_dim: usize, action_dim: usize, t_max: usize) -> Self {
        Self {
            name: name.to_string(),
            state_dim,
            action_dim,
            action_low: vec![F::of_f64(-1.0); action_dim],
            action_high: vec![F::of_f64(1.0); action_dim],
            t_max,
        }
    }

    /// Spec fixture for the Hopper-v2 locomotion task (adapter path only).
    pub fn hopper_v2(t_max: usize) -> Self {
        Self::with_unit_actions("Hopper-v2", 11, 3, t_max)
    }

    /// Spec fixture for the HalfCheetah-v2 locomotion task (adapter path only).
    pub fn half_cheetah_v2(t_max: usize) -> Self {
        Self::with_unit_actions("HalfCheetah-v2", 17, 6, t_max)
    }

    /// Structural compatibility check used by checkpoint and file loaders.
    pub fn compatible_with(&self, other: &Self) -> bool {
        self.state_dim == other.state_dim
            && self.action_dim == other.action_dim
            && self.t_max == other.t_max
            && self.name == other.name
    }

    /// Wire form used by protocols and checkpoints (always `f64`; exact for
    /// both scalar types).
    pub fn to_wire(&self) -> EnvSpec<f64> {
        EnvSpec {
            name: self.name.clone(),
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            action_low: self.action_low.iter().map(|x| x.as_f64()).collect(),
            action_high: self.action_high.iter().map(|x| x.as_f64()).collect(),
            t_max: self.t_max,
        }
    }

    pub fn from_wire(spec: &EnvSpec<f64>) -> Self {
        EnvSpec {
            name: spec.name.clone(),
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
            action_low: spec.action_low.iter().map(|&x| F::of_f64(x)).collect(),
            action_high: spec.action_high.iter().map(|&x| F::of_f64(x)).collect(),
            t_max: spec.t_max,
        }
    }

    /// Uniform symmetric bounds (`[-c, c]` on every component) are required
    /// by the network squashing in the agents; returns `c`.
    pub fn uniform_bound(&self) -> Result<F> {
        let hi = self.action_high[0];
        let ok = self
            .action_high
            .iter()
            .zip(&self.action_low)
            .all(|(h, l)| *h == hi && *l == -hi);
        if ok && hi > F::zero() {
            Ok(hi)
        } else {
            Err(CoreError::InvalidSpec(format!(
                "{}: agents require uniform symmetric action bounds",
                self.name
            )))
        }
    }
}

/// Result of a single environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome<F: Scalar> {
    pub next_state: Vec<F>,
    pub reward: F,
    pub terminal: bool,
}

/// A stateful episodic environment.
///
/// Contract: `reset` with equal seeds yields bitwise-equal initial states on
/// any instance of the same spec, and `step` reports `terminal = true` when
/// an absorbing state is entered or the step counter reaches `t_max`.
pub trait Environment<F: Scalar> {
    fn spec(&self) -> &EnvSpec<F>;
    fn reset(&mut self, seed: u64) -> Result<Vec<F>>;
    fn step(&mut self, action: &[F]) -> Result<StepOutcome<F>>;
}
