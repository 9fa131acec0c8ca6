//! Transitions, trajectories and tagged trajectory batches — the unit of
//! privacy in these experiments is one trajectory.

use crate::env::EnvSpec;
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// One `(state, action, reward, next_state)` tuple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Transition<F: Scalar> {
    pub state: Vec<F>,
    pub action: Vec<F>,
    pub reward: F,
    pub next_state: Vec<F>,
    /// Absorbing-state flag; only the last transition of a trajectory may set it.
    pub terminal: bool,
}

/// Where a batch of trajectories comes from.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Member,
    NonMember,
    ModelOutput,
}

impl std::fmt::Display for SourceTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceTag::Member => write!(f, "member"),
            SourceTag::NonMember => write!(f, "nonmember"),
            SourceTag::ModelOutput => write!(f, "model_output"),
        }
    }
}

/// An ordered chain of transitions produced by one episode.
///
/// `Trajectory::new` enforces chain consistency (`next_state[i] == state[i+1]`)
/// and terminal placement. Synthetic trajectories assembled from shuffled
/// tuples use [`Trajectory::from_resampled`], which skips the chain check but
/// still validates dimensions and terminal placement.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<F: Scalar> {
    transitions: Vec<Transition<F>>,
    chained: bool,
}

impl<F: Scalar> Trajectory<F> {
    pub fn new(transitions: Vec<Transition<F>>) -> Result<Self> {
        Self::validate_common(&transitions)?;
        Self::validate_chain(&transitions)?;
        Ok(Self { transitions, chained: true })
    }

    /// Builds a trajectory from tuples that do not form a physical chain
    /// (e.g. uniformly resampled from a pooled buffer).
    pub fn from_resampled(transitions: Vec<Transition<F>>) -> Result<Self> {
        Self::validate_common(&transitions)?;
        Ok(Self { transitions, chained: false })
    }

    fn validate_common(transitions: &[Transition<F>]) -> Result<()> {
        if transitions.is_empty() {
            return Err(CoreError::EmptyTrajectory);
        }
        let state_dim = transitions[0].state.len();
        let action_dim = transitions[0].action.len();
        let last = transitions.len() - 1;
        for (i, t) in transitions.iter().enumerate() {
            if t.state.len() != state_dim || t.next_state.len() != state_dim {
                return Err(CoreError::StateDimMismatch {
                    expected: state_dim,
                    got: t.state.len().max(t.next_state.len()),
                });
            }
            if t.action.len() != action_dim {
                return Err(CoreError::ActionDimMismatch { expected: action_dim, got: t.action.len() });
            }
            if t.terminal && i != last {
                return Err(CoreError::EarlyTerminal { index: i });
            }
        }
        Ok(())
    }

    fn validate_chain(transitions: &[Transition<F>]) -> Result<()> {
        for i in 0..transitions.len().saturating_sub(1) {
            if transitions[i].next_state != transitions[i + 1].state {
                return Err(CoreError::ChainBroken { index: i });
            }
        }
        Ok(())
    }

    /// Re-checks chain consistency; used by test validators.
    pub fn check_chain(&self) -> Result<()> {
        Self::validate_chain(&self.transitions)
    }

    /// Whether this trajectory was produced as a physical chain.
    pub fn is_chained(&self) -> bool {
        self.chained
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition<F>] {
        &self.transitions
    }

    pub fn rewards(&self) -> Vec<F> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn initial_state(&self) -> &[F] {
        &self.transitions[0].state
    }

    pub fn state_dim(&self) -> usize {
        self.transitions[0].state.len()
    }

    pub fn action_dim(&self) -> usize {
        self.transitions[0].action.len()
    }

    pub fn into_transitions(self) -> Vec<Transition<F>> {
        self.transitions
    }
}

/// A list of trajectories sharing one environment spec, tagged by origin and
/// carrying the reset seed of every trajectory (the handle used to match
/// initial states between training and output trajectories).
#[derive(Clone, Debug)]
pub struct TrajectoryBatch<F: Scalar> {
    spec: EnvSpec<F>,
    source_tag: SourceTag,
    trajectories: Vec<Trajectory<F>>,
    seed_record: Vec<u64>,
    decorrelated: bool,
}

impl<F: Scalar> TrajectoryBatch<F> {
    pub fn new(
        spec: EnvSpec<F>,
        source_tag: SourceTag,
        trajectories: Vec<Trajectory<F>>,
        seed_record: Vec<u64>,
    ) -> Result<Self> {
        Self::with_decorrelated(spec, source_tag, trajectories, seed_record, false)
    }

    pub fn with_decorrelated(
        spec: EnvSpec<F>,
        source_tag: SourceTag,
        trajectories: Vec<Trajectory<F>>,
        seed_record: Vec<u64>,
        decorrelated: bool,
    ) -> Result<Self> {
        if trajectories.len() != seed_record.len() {
            return Err(CoreError::SeedRecordMismatch {
                trajectories: trajectories.len(),
                seeds: seed_record.len(),
            });
        }
        for t in &trajectories {
            if t.state_dim() != spec.state_dim {
                return Err(CoreError::StateDimMismatch { expected: spec.state_dim, got: t.state_dim() });
            }
            if t.action_dim() != spec.action_dim {
                return Err(CoreError::ActionDimMismatch {
                    expected: spec.action_dim,
                    got: t.action_dim(),
                });
            }
            if t.len() > spec.t_max {
                return Err(CoreError::TrajectoryTooLong { len: t.len(), t_max: spec.t_max });
            }
        }
        Ok(Self { spec, source_tag, trajectories, seed_record, decorrelated })
    }

    pub fn spec(&self) -> &EnvSpec<F> {
        &self.spec
    }

    pub fn source_tag(&self) -> SourceTag {
        self.source_tag
    }

    pub fn trajectories(&self) -> &[Trajectory<F>] {
        &self.trajectories
    }

    pub fn seed_record(&self) -> &[u64] {
        &self.seed_record
    }

    /// Whether the batch was rebuilt from pooled, shuffled tuples.
    pub fn is_decorrelated(&self) -> bool {
        self.decorrelated
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Iterates `(seed, trajectory)` pairs.
    pub fn entries(&self) -> impl Iterator<Item = (u64, &Trajectory<F>)> {
        self.seed_record.iter().copied().zip(self.trajectories.iter())
    }

    /// Total number of transitions across all trajectories.
    pub fn tuple_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(s: f64, next: f64, terminal: bool) -> Transition<f64> {
        Transition {
            state: vec![s, 0.0],
            action: vec![0.1],
            reward: -1.0,
            next_state: vec![next, 0.0],
            terminal,
        }
    }

    #[test]
    fn chain_consistency_is_enforced() {
        let good = vec![tr(0.0, 1.0, false), tr(1.0, 2.0, true)];
        assert!(Trajectory::new(good).is_ok());

        let broken = vec![tr(0.0, 1.0, false), tr(1.5, 2.0, true)];
        match Trajectory::new(broken) {
            Err(CoreError::ChainBroken { index: 0 }) => {}
            other => panic!("expected ChainBroken, got {other:?}"),
        }
    }

    #[test]
    fn early_terminal_is_rejected_even_when_resampled() {
        let bad = vec![tr(0.0, 1.0, true), tr(1.0, 2.0, false)];
        assert!(matches!(
            Trajectory::from_resampled(bad),
            Err(CoreError::EarlyTerminal { index: 0 })
        ));
    }

    #[test]
    fn resampled_skips_chain_check() {
        let shuffled = vec![tr(5.0, 9.0, false), tr(1.0, 2.0, false)];
        let t = Trajectory::from_resampled(shuffled).unwrap();
        assert!(!t.is_chained());
        assert!(t.check_chain().is_err());
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        assert!(matches!(
            Trajectory::<f64>::new(Vec::new()),
            Err(CoreError::EmptyTrajectory)
        ));
    }
}
