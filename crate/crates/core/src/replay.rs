//! The decorrelating replay buffer: trajectories go in, order-free tuples
//! come out.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::seeding::{self, streams};
use crate::trajectory::{Trajectory, Transition};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

/// Flat tuple store with FIFO eviction and uniform sampling with
/// replacement. Inserting a trajectory breaks it into its constituent
/// transitions; the sampling interface retains no trajectory ordering.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<F: Scalar> {
    tuples: VecDeque<Transition<F>>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl<F: Scalar> ReplayBuffer<F> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self {
            tuples: VecDeque::with_capacity(capacity.min(1 << 20)),
            capacity,
            rng: seeding::rng(seed, streams::BUFFER_SAMPLE),
        }
    }

    /// Adds one transition, evicting the oldest when full.
    pub fn push(&mut self, transition: Transition<F>) {
        if self.tuples.len() == self.capacity {
            self.tuples.pop_front();
        }
        self.tuples.push_back(transition);
    }

    /// Breaks `trajectory` into tuples and stores them.
    pub fn insert(&mut self, trajectory: &Trajectory<F>) {
        for t in trajectory.transitions() {
            self.push(t.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Draws `n` tuples uniformly at random with replacement.
    pub fn sample(&mut self, n: usize) -> Result<Vec<Transition<F>>> {
        if self.tuples.is_empty() {
            return Err(CoreError::EmptyBuffer);
        }
        let len = self.tuples.len();
        Ok((0..n)
            .map(|_| self.tuples[self.rng.random_range(0..len)].clone())
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<F>> {
        self.tuples.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(len: usize, offset: f64) -> Trajectory<f64> {
        let transitions = (0..len)
            .map(|i| Transition {
                state: vec![offset + i as f64],
                action: vec![offset + i as f64 + 0.5],
                reward: -1.0,
                next_state: vec![offset + i as f64 + 1.0],
                terminal: i == len - 1,
            })
            .collect();
        Trajectory::new(transitions).unwrap()
    }

    #[test]
    fn insert_adds_exactly_t_tuples() {
        let mut buf = ReplayBuffer::new(100, 0);
        buf.insert(&traj(5, 0.0));
        assert_eq!(buf.len(), 5);
    }

    #[test]
    fn eviction_is_oldest_first() {
        let mut buf = ReplayBuffer::new(10, 0);
        buf.insert(&traj(10, 0.0));
        buf.insert(&traj(3, 100.0));
        assert_eq!(buf.len(), 10);
        // The three oldest tuples (states 0, 1, 2) are gone.
        let states: Vec<f64> = buf.iter().map(|t| t.state[0]).collect();
        assert_eq!(&states[..7], &[3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        assert_eq!(&states[7..], &[100.0, 101.0, 102.0]);
    }

    #[test]
    fn stored_actions_form_the_union_multiset() {
        let mut buf = ReplayBuffer::new(100, 0);
        buf.insert(&traj(4, 0.0));
        buf.insert(&traj(6, 50.0));
        assert_eq!(buf.len(), 10);
        let mut got: Vec<u64> = buf.iter().map(|t| t.action[0].to_bits()).collect();
        let mut expected: Vec<u64> = traj(4, 0.0)
            .transitions()
            .iter()
            .chain(traj(6, 50.0).transitions())
            .map(|t| t.action[0].to_bits())
            .collect();
        got.sort_unstable();
        expected.sort_unstable();
        assert_eq!(got, expected);
    }

    #[test]
    fn sampling_single_tuple_buffer_repeats_it() {
        let mut buf = ReplayBuffer::new(10, 0);
        buf.insert(&traj(1, 7.0));
        let s = buf.sample(3).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|t| t.state[0] == 7.0));
    }

    #[test]
    fn sampling_is_deterministic_on_clones() {
        let mut a = ReplayBuffer::new(100, 42);
        a.insert(&traj(20, 0.0));
        let mut b = a.clone();
        assert_eq!(a.sample(50).unwrap(), b.sample(50).unwrap());
    }

    #[test]
    fn empty_buffer_sampling_fails() {
        let mut buf = ReplayBuffer::<f64>::new(10, 0);
        assert!(matches!(buf.sample(1), Err(CoreError::EmptyBuffer)));
    }

    #[test]
    fn sampling_frequency_is_near_uniform() {
        // Over 10^5 draws from 20 tuples, the empirical frequency of every
        // tuple stays within 0.01 of 1/20.
        let mut buf = ReplayBuffer::new(100, 11);
        buf.insert(&traj(20, 0.0));
        let draws = buf.sample(100_000).unwrap();
        let mut counts = [0usize; 20];
        for t in &draws {
            counts[t.state[0] as usize] += 1;
        }
        for c in counts {
            let freq = c as f64 / 100_000.0;
            assert!((freq - 0.05).abs() < 0.01, "freq {freq}");
        }
    }
}
