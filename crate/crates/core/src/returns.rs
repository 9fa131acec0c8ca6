//! Discounted-return computations over finite reward sequences.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

/// Finite-horizon discounted return: the weighted sum of `rewards[k]` by
/// `gamma^k`. Episodes terminate, so the infinite sum truncates at the
/// trajectory end.
pub fn discounted_return<F: Scalar>(rewards: &[F], gamma: F) -> Result<F> {
    let g = gamma.as_f64();
    if !(0.0..=1.0).contains(&g) || g.is_nan() {
        return Err(CoreError::InvalidDiscount(g));
    }
    let mut total = F::zero();
    let mut weight = F::one();
    for &r in rewards {
        total = total + weight * r;
        weight = weight * gamma;
    }
    Ok(total)
}

/// Monte-Carlo estimate of the start-state value: the mean discounted return
/// over a list of trajectories.
pub fn state_value_estimate<F: Scalar>(trajectories: &[Trajectory<F>], gamma: F) -> Result<F> {
    if trajectories.is_empty() {
        return Err(CoreError::EmptyTrajectoryList);
    }
    let mut total = F::zero();
    for t in trajectories {
        total = total + discounted_return(&t.rewards(), gamma)?;
    }
    Ok(total / F::of_f64(trajectories.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Transition;

    #[test]
    fn gamma_zero_keeps_first_term_only() {
        assert_eq!(discounted_return(&[1.0, 2.0, 3.0], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn gamma_one_is_the_plain_sum() {
        assert_eq!(discounted_return(&[1.0, 2.0, 3.0], 1.0).unwrap(), 6.0);
    }

    #[test]
    fn half_discount_matches_term_by_term_sum() {
        // 1 + 0.5 + 0.25 = 1.75
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.5).unwrap(), 1.75);
    }

    #[test]
    fn out_of_range_gamma_is_rejected() {
        assert!(matches!(
            discounted_return(&[1.0], -0.1),
            Err(CoreError::InvalidDiscount(_))
        ));
        assert!(matches!(
            discounted_return(&[1.0], 1.1),
            Err(CoreError::InvalidDiscount(_))
        ));
    }

    fn traj_with_rewards(rewards: &[f64]) -> Trajectory<f64> {
        let transitions = rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| Transition {
                state: vec![i as f64],
                action: vec![0.0],
                reward: r,
                next_state: vec![i as f64 + 1.0],
                terminal: i == rewards.len() - 1,
            })
            .collect();
        Trajectory::new(transitions).unwrap()
    }

    #[test]
    fn value_estimate_is_the_mean_return() {
        let a = traj_with_rewards(&[2.0]);
        assert_eq!(state_value_estimate(&[a.clone()], 0.9).unwrap(), 2.0);

        let b = traj_with_rewards(&[1.0]);
        let c = traj_with_rewards(&[3.0]);
        assert_eq!(state_value_estimate(&[b, c], 1.0).unwrap(), 2.0);
    }

    #[test]
    fn empty_list_is_rejected() {
        assert!(matches!(
            state_value_estimate::<f64>(&[], 0.9),
            Err(CoreError::EmptyTrajectoryList)
        ));
    }
}
