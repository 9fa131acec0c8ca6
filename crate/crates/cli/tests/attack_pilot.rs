//! End-to-end pilot of the individual attack at desk scale. Builds the
//! expensive RL artifacts once per config, then scans classifier variants.
//! Run manually:
//! `cargo test -p trajmia-cli --test attack_pilot -- --ignored --nocapture`

#[path = "../src/config.rs"]
mod config;
#[path = "../src/pipeline.rs"]
mod pipeline;

use config::ExperimentConfig;
use pipeline::{build_env, CellSetting, Mode, OraclePolicies, SeedPlan};
use trajmia_agents::{collect_batch_mixed, query_output_trajectories, train_target_policy};
use trajmia_attack::classifier::predict_dataset;
use trajmia_attack::dataset::{AttackDataset, Samples, Split};
use trajmia_attack::{
    apply_threshold, build_individual_dataset, train_attack, ArchConfig, TcnConfig, TrainSpec,
};
use trajmia_core::{SourceTag, TrajectoryBatch};

fn desk_config(noise: f64, bcq_steps: usize, hidden: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.collect_noise = noise;
    cfg.oracle.steps = 3_000;
    cfg.trainer.gradient_steps = bcq_steps;
    cfg.trainer.hidden = hidden;
    cfg.trainer.eval_interval = 0;
    cfg.trainer.eval_episodes = 1;
    cfg
}

fn build_datasets(
    cfg: &ExperimentConfig,
    setting: &CellSetting,
    run_seed: u64,
) -> (AttackDataset<f32>, AttackDataset<f32>) {
    let plan = SeedPlan::new(run_seed);
    let mut env = build_env(cfg, setting.t_max).unwrap();
    let env = env.as_mut();
    let oracles = OraclePolicies::train(cfg, env, &plan).unwrap();

    let mut side = |member_base: u64, nonmember_base: u64, trainer_seed: u64| {
        let members = collect_batch_mixed(
            env,
            &oracles.member_refs(),
            cfg.experiment.members,
            cfg.experiment.collect_noise,
            member_base,
            SourceTag::Member,
        )
        .unwrap();
        let nonmembers = collect_batch_mixed(
            env,
            &oracles.nonmember_refs(),
            cfg.experiment.nonmembers,
            cfg.experiment.collect_noise,
            nonmember_base,
            SourceTag::NonMember,
        )
        .unwrap();
        let (policy, _) =
            train_target_policy(&members, env, &cfg.trainer.to_bcq(), trainer_seed).unwrap();
        let mut seeds = members.seed_record().to_vec();
        seeds.extend_from_slice(nonmembers.seed_record());
        let outputs = query_output_trajectories(env, &policy, &seeds).unwrap();
        (members, nonmembers, outputs)
    };

    let (m, n, o) = side(plan.shadow_member_base, plan.shadow_nonmember_base, plan.shadow_trainer_seed);
    let shadow = build_individual_dataset(&m, &n, &o, setting.clip_len).unwrap();
    let (m2, n2, o2) =
        side(plan.private_member_base, plan.private_nonmember_base, plan.private_trainer_seed);
    let private = build_individual_dataset(&m2, &n2, &o2, setting.clip_len).unwrap();
    let _ = (m, n, o, m2, n2, o2) as (
        TrajectoryBatch<f32>,
        TrajectoryBatch<f32>,
        TrajectoryBatch<f32>,
        TrajectoryBatch<f32>,
        TrajectoryBatch<f32>,
        TrajectoryBatch<f32>,
    );
    (shadow, private)
}

/// Private-pair accuracy of a threshold on the naive top-vs-bottom mean
/// distance, as a floor for what the classifier should find.
fn naive_distance_acc(shadow: &AttackDataset<f32>, private: &AttackDataset<f32>) -> f64 {
    let dist = |ds: &AttackDataset<f32>| -> Vec<(f64, bool)> {
        let Samples::Individual(v) = &ds.samples else { unreachable!() };
        v.iter()
            .map(|s| {
                let (rows, len) = s.matrix.dim();
                let half = rows / 2;
                let mut acc = 0.0;
                for j in 0..len {
                    let mut step = 0.0;
                    for i in 0..half {
                        let d = (s.matrix[[i, j]] - s.matrix[[i + half, j]]) as f64;
                        step += d * d;
                    }
                    acc += step.sqrt();
                }
                (acc / len as f64, s.label)
            })
            .collect()
    };
    // calibrate the threshold on the shadow pairs, apply to private
    let sh = dist(shadow);
    let mut best = (0.0, 0.0f64);
    for &(t, _) in &sh {
        let correct = sh.iter().filter(|&&(d, l)| (d <= t) == l).count();
        let acc = correct as f64 / sh.len() as f64;
        if acc > best.1 {
            best = (t, acc);
        }
    }
    let pr = dist(private);
    pr.iter().filter(|&&(d, l)| (d <= best.0) == l).count() as f64 / pr.len() as f64
}

fn eval_variant(
    shadow: &AttackDataset<f32>,
    private: &AttackDataset<f32>,
    tcn: TcnConfig,
    spec: TrainSpec,
    seed: u64,
) -> (f64, f64, f64) {
    let clf = train_attack(shadow, &ArchConfig::Tcn(tcn), &spec, seed).unwrap();
    let preds = predict_dataset(&clf, private).unwrap();
    let acc_at = |theta: f64| {
        preds
            .iter()
            .filter(|p| apply_threshold(p.probability, theta).unwrap() == p.label)
            .count() as f64
            / preds.len() as f64
    };
    let best = (1..=9).map(|i| acc_at(i as f64 / 10.0)).fold(0.0, f64::max);
    let val = predict_dataset(&clf, shadow)
        .unwrap()
        .iter()
        .filter(|p| p.split == Split::Validation)
        .fold((0usize, 0usize), |(c, n), p| {
            ((c + (apply_threshold(p.probability, 0.5).unwrap() == p.label) as usize), n + 1)
        });
    (acc_at(0.5), best, val.0 as f64 / val.1 as f64)
}

#[test]
#[ignore = "pilot; run manually"]
fn individual_attack_pilot() {
    let setting =
        CellSetting { t_max: 20, clip_len: 20, mode: Mode::Individual, decorrelate: false };
    for (label, noise, steps, hidden) in [("n0.3-16k-h96", 0.3, 16_000usize, 96usize), ("n0.5-16k-h96", 0.5, 16_000, 96)] {
        let t0 = std::time::Instant::now();
        let cfg = desk_config(noise, steps, hidden);
        let (shadow, private) = build_datasets(&cfg, &setting, 1);
        println!(
            "{label}: datasets built in {:?}; naive baseline {:.3}",
            t0.elapsed(),
            naive_distance_acc(&shadow, &private)
        );
        for (tag, dropout, channels, epochs, lr) in [
            ("drop0.1-c16", 0.1, 16usize, 60usize, 1e-3),
            ("drop0.1-c32", 0.1, 32, 60, 1e-3),
            ("drop0.5-c32", 0.5, 32, 60, 1e-3),
        ] {
            let t1 = std::time::Instant::now();
            let tcn = TcnConfig { levels: 4, channels, kernel: 3, dropout };
            let spec = TrainSpec { lr, epochs, patience: 15, ..TrainSpec::default() };
            let (half, best, val) = eval_variant(&shadow, &private, tcn, spec, 3);
            println!(
                "  {tag}: ACC@0.5 {half:.3} best {best:.3} shadow-val {val:.3} ({:?})",
                t1.elapsed()
            );
        }
    }
}
