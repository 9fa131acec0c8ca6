//! The adapter protocol must behave exactly like the in-process environment,
//! including the seeding contract behind initial-state matching.

use std::os::unix::net::UnixStream;
use std::thread;
use trajmia_core::env::{serve_environment, ExternalEnvClient, PointReach2D};
use trajmia_core::policy::ConstantPolicy;
use trajmia_core::{rollout, Environment};

fn spawn_server() -> (ExternalEnvClient<f32>, thread::JoinHandle<()>) {
    let (client_side, server_side) = UnixStream::pair().unwrap();
    let handle = thread::spawn(move || {
        let mut env = PointReach2D::<f32>::new(15);
        let reader = std::io::BufReader::new(server_side.try_clone().unwrap());
        serve_environment(&mut env, reader, server_side).unwrap();
    });
    let reader = client_side.try_clone().unwrap();
    let client = ExternalEnvClient::from_streams(reader, client_side).unwrap();
    (client, handle)
}

#[test]
fn spec_is_fetched_on_connect() {
    let (client, handle) = spawn_server();
    let spec = client.spec().clone();
    assert_eq!(spec.name, "PointReach2D");
    assert_eq!((spec.state_dim, spec.action_dim, spec.t_max), (2, 2, 15));
    drop(client);
    handle.join().unwrap();
}

#[test]
fn remote_rollouts_match_local_ones_bit_exactly() {
    let (mut client, handle) = spawn_server();
    let policy = ConstantPolicy::new(vec![0.35f32, 0.15]);
    let mut local = PointReach2D::<f32>::new(15);

    for seed in [3u64, 99, 1234] {
        let remote_traj = rollout(&mut client, &policy, seed, 0.1).unwrap();
        let local_traj = rollout(&mut local, &policy, seed, 0.1).unwrap();
        assert_eq!(remote_traj, local_traj);
    }
    drop(client);
    handle.join().unwrap();
}

#[test]
fn matched_resets_hold_across_transport() {
    let (mut client, handle) = spawn_server();
    let mut local = PointReach2D::<f32>::new(15);
    for seed in 0..20u64 {
        let a = client.reset(seed).unwrap();
        let b = local.reset(seed).unwrap();
        let bits = |v: &[f32]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
    drop(client);
    handle.join().unwrap();
}

#[test]
fn environment_errors_surface_as_protocol_errors() {
    let (mut client, handle) = spawn_server();
    client.reset(0).unwrap();
    loop {
        let out = client.step(&[0.0, 0.0]).unwrap();
        if out.terminal {
            break;
        }
    }
    assert!(client.step(&[0.0, 0.0]).is_err(), "step after terminal must fail remotely too");
    drop(client);
    handle.join().unwrap();
}
