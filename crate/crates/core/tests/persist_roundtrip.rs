use proptest::prelude::*;
use trajmia_core::env::PointReach2D;
use trajmia_core::persist::{load_batch, save_batch};
use trajmia_core::policy::ConstantPolicy;
use trajmia_core::{
    rollout, EnvSpec, Environment, SourceTag, Trajectory, TrajectoryBatch, Transition,
};

fn collect_reference_batch(n: usize, t_max: usize) -> TrajectoryBatch<f32> {
    let mut env = PointReach2D::<f32>::new(t_max);
    let policy = ConstantPolicy::new(vec![0.4f32, 0.1]);
    let mut trajectories = Vec::new();
    let mut seeds = Vec::new();
    for i in 0..n {
        let seed = 1000 + i as u64;
        trajectories.push(rollout(&mut env, &policy, seed, 0.2).unwrap());
        seeds.push(seed);
    }
    TrajectoryBatch::new(env.spec().clone(), SourceTag::Member, trajectories, seeds).unwrap()
}

#[test]
fn round_trip_preserves_every_field_bit_exactly() {
    let batch = collect_reference_batch(8, 12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("batch.jsonl");
    save_batch(&path, &batch).unwrap();
    let loaded = load_batch::<f32>(&path, Some(batch.spec())).unwrap();

    assert_eq!(loaded.source_tag(), batch.source_tag());
    assert_eq!(loaded.seed_record(), batch.seed_record());
    assert_eq!(loaded.spec(), batch.spec());
    assert_eq!(loaded.len(), batch.len());
    for (a, b) in loaded.trajectories().iter().zip(batch.trajectories()) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.transitions().iter().zip(b.transitions()) {
            let bits = |v: &[f32]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&x.state), bits(&y.state));
            assert_eq!(bits(&x.action), bits(&y.action));
            assert_eq!(bits(&x.next_state), bits(&y.next_state));
            assert_eq!(x.reward.to_bits(), y.reward.to_bits());
            assert_eq!(x.terminal, y.terminal);
        }
        a.check_chain().unwrap();
    }
}

#[test]
fn loader_rejects_mismatched_dims_and_dtype() {
    let batch = collect_reference_batch(2, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("batch.jsonl");
    save_batch(&path, &batch).unwrap();

    let wrong = EnvSpec::<f32>::with_unit_actions("Other", 3, 2, 5);
    assert!(load_batch::<f32>(&path, Some(&wrong)).is_err(), "dim mismatch must fail");
    assert!(load_batch::<f64>(&path, None).is_err(), "dtype mismatch must fail");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn arbitrary_chained_batches_round_trip(
        lens in prop::collection::vec(1usize..6, 1..5),
        seed0 in 0u64..1_000_000,
    ) {
        let spec = EnvSpec::<f32>::with_unit_actions("Synthetic", 2, 1, 8);
        let mut trajectories = Vec::new();
        let mut seeds = Vec::new();
        for (k, &len) in lens.iter().enumerate() {
            let mut transitions = Vec::new();
            for i in 0..len {
                let base = (k * 31 + i) as f32;
                transitions.push(Transition {
                    state: vec![base * 0.125, -base],
                    action: vec![(base * 0.0625).sin()],
                    reward: -base.sqrt(),
                    next_state: vec![(base + 1.0) * 0.125, -(base + 1.0)],
                    terminal: i == len - 1,
                });
            }
            trajectories.push(Trajectory::new(transitions).unwrap());
            seeds.push(seed0 + k as u64);
        }
        let batch = TrajectoryBatch::new(spec, SourceTag::NonMember, trajectories, seeds).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.jsonl");
        save_batch(&path, &batch).unwrap();
        let loaded = load_batch::<f32>(&path, None).unwrap();
        prop_assert_eq!(loaded.len(), batch.len());
        for (a, b) in loaded.trajectories().iter().zip(batch.trajectories()) {
            prop_assert_eq!(a, b);
        }
    }
}
