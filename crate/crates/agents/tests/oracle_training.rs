//! Behaviour-oracle training and batch collection.

use trajmia_core::env::PointReach2D;
use trajmia_core::policy::{ConstantPolicy, HashedUniformPolicy};
use trajmia_core::{Environment, Policy, SourceTag};
use trajmia_agents::{collect_batch, evaluate_policy, train_behavior_policy, DdpgConfig};

fn desk_config() -> DdpgConfig {
    DdpgConfig { warmup_steps: 500, ..DdpgConfig::default() }
}

#[test]
fn trained_policy_beats_the_uniform_random_baseline() {
    let start = std::time::Instant::now();
    let mut env = PointReach2D::<f32>::new(30);
    let spec = env.spec().clone();
    let policy = train_behavior_policy(&mut env, 6_000, &desk_config(), 7).unwrap();

    let random = HashedUniformPolicy::new(3, spec.action_low.clone(), spec.action_high.clone());
    let (r_rand, _) = evaluate_policy(&mut env, &random, 20, 1.0, 9_000).unwrap();
    let (r_learned, _) = evaluate_policy(&mut env, &policy, 20, 1.0, 9_000).unwrap();
    println!("learned {r_learned:.3} vs random {r_rand:.3} in {:?}", start.elapsed());
    assert!(
        r_learned > r_rand,
        "trained return {r_learned} must beat random {r_rand}"
    );
}

#[test]
fn zero_steps_returns_a_valid_untrained_policy() {
    let mut env = PointReach2D::<f32>::new(10);
    let policy = train_behavior_policy(&mut env, 0, &desk_config(), 1).unwrap();
    let s = env.reset(0).unwrap();
    let a = policy.act(&s);
    assert_eq!(a.len(), 2);
    assert!(a.iter().all(|x| x.is_finite() && (-1.0..=1.0).contains(x)));
}

#[test]
fn equal_seeds_give_identical_policies() {
    let cfg = DdpgConfig { warmup_steps: 100, ..desk_config() };
    let mut env = PointReach2D::<f32>::new(10);
    let p1 = train_behavior_policy(&mut env, 400, &cfg, 42).unwrap();
    let p2 = train_behavior_policy(&mut env, 400, &cfg, 42).unwrap();
    let (r1, s1) = evaluate_policy(&mut env, &p1, 5, 1.0, 77).unwrap();
    let (r2, s2) = evaluate_policy(&mut env, &p2, 5, 1.0, 77).unwrap();
    assert_eq!((r1, s1), (r2, s2));

    let s = env.reset(5).unwrap();
    assert_eq!(p1.act(&s), p2.act(&s));
}

#[test]
fn collected_batches_record_seeds_and_stay_consistent() {
    let mut env = PointReach2D::<f32>::new(15);
    let policy = ConstantPolicy::new(vec![0.2f32, 0.1]);

    let single = collect_batch(&mut env, &policy, 1, 0.0, 100, SourceTag::Member).unwrap();
    let again = collect_batch(&mut env, &policy, 1, 0.0, 100, SourceTag::Member).unwrap();
    assert_eq!(single.trajectories()[0], again.trajectories()[0], "noiseless collection is deterministic");

    let batch = collect_batch(&mut env, &policy, 100, 0.15, 1_000, SourceTag::Member).unwrap();
    assert_eq!(batch.len(), 100);
    let mut seeds = batch.seed_record().to_vec();
    seeds.dedup();
    assert_eq!(seeds.len(), 100, "all seeds distinct");
    for t in batch.trajectories() {
        t.check_chain().unwrap();
        for tr in t.transitions() {
            assert!(tr.action.iter().all(|a| (-1.0..=1.0).contains(a)));
        }
    }
}

#[test]
fn member_and_nonmember_ranges_share_no_initial_state() {
    let mut env = PointReach2D::<f32>::new(10);
    let policy = ConstantPolicy::new(vec![0.0f32, 0.0]);
    let members = collect_batch(&mut env, &policy, 50, 0.1, 0, SourceTag::Member).unwrap();
    let nonmembers = collect_batch(&mut env, &policy, 50, 0.1, 1_000_000, SourceTag::NonMember).unwrap();

    let s0 = |b: &trajmia_core::TrajectoryBatch<f32>| {
        b.trajectories()
            .iter()
            .map(|t| t.initial_state().iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            .collect::<std::collections::HashSet<_>>()
    };
    assert!(s0(&members).is_disjoint(&s0(&nonmembers)));
}

#[test]
fn exploration_noise_scale_is_respected() {
    // Constant zero policy, noise 0.1: recorded actions are the clamped
    // noise itself; their standard deviation must sit within 20% of 0.1.
    let mut env = PointReach2D::<f32>::new(20);
    let policy = ConstantPolicy::new(vec![0.0f32, 0.0]);
    let batch = collect_batch(&mut env, &policy, 100, 0.1, 5_000, SourceTag::Member).unwrap();
    let mut values = Vec::new();
    for t in batch.trajectories() {
        for tr in t.transitions() {
            values.extend(tr.action.iter().map(|a| *a as f64));
        }
    }
    assert!(values.len() >= 1_000);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
    assert!((std - 0.1).abs() / 0.1 < 0.2, "std {std}");

    // And zero noise from one seed is bit-identical.
    let a = collect_batch(&mut env, &policy, 3, 0.0, 42, SourceTag::Member).unwrap();
    let b = collect_batch(&mut env, &policy, 3, 0.0, 42, SourceTag::Member).unwrap();
    for (x, y) in a.trajectories().iter().zip(b.trajectories()) {
        assert_eq!(x, y);
    }
}
