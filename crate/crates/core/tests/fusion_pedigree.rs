//! Channel-filter fusion over a static scalar shared by a chain of robots.
//! Each robot's information is compared with a bookkeeping oracle that adds
//! up exactly the measurements that can have reached it.

use ddf_core::fusion::{fuse, prepare_message};
use ddf_core::{CanonicalGaussian, ChannelFilter, FactorGraph, FactorKind, FusionMessage, Timestep, VariableKey};
use nalgebra::{dmatrix, dvector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn x() -> VariableKey {
    VariableKey::label(0, Timestep::Static, 1)
}

fn scalar(zeta: f64, lambda: f64) -> CanonicalGaussian {
    CanonicalGaussian::new(vec![x()], dvector![zeta], dmatrix![lambda]).unwrap()
}

struct Robot {
    graph: FactorGraph,
    channels: Vec<ChannelFilter>,
}

fn chain(n: u32, prior: &CanonicalGaussian) -> Vec<Robot> {
    (0..n)
        .map(|i| {
            let mut graph = FactorGraph::new();
            graph.add_variable(x()).unwrap();
            graph.add_factor(FactorKind::Prior, prior.clone()).unwrap();
            let mut channels = Vec::new();
            for j in [i.wrapping_sub(1), i + 1] {
                if j < n {
                    channels.push(ChannelFilter::with_prior(i, j, prior.clone()).unwrap());
                }
            }
            Robot { graph, channels }
        })
        .collect()
}

/// One simultaneous exchange over every edge: all messages are prepared
/// before any is fused.
fn exchange(robots: &mut [Robot]) {
    let outgoing: Vec<FusionMessage> = robots
        .iter()
        .flat_map(|r| r.channels.iter().map(|cf| prepare_message(&r.graph, cf, 0).unwrap()))
        .collect();
    for msg in &outgoing {
        // The channel filter absorbs what the receiver itself sent back on
        // this edge, not its state after other fusions of the same round.
        let sent = outgoing
            .iter()
            .find(|m| m.sender == msg.receiver && m.receiver == msg.sender)
            .unwrap();
        let receiver = &mut robots[msg.receiver as usize];
        let c = receiver
            .channels
            .iter()
            .position(|cf| cf.neighbor() == msg.sender)
            .unwrap();
        fuse(&mut receiver.graph, &receiver.channels[c], msg).unwrap();
        receiver.channels[c].update(&sent.payload, msg).unwrap();
    }
}

#[test]
fn information_matches_pedigree_on_a_chain() {
    let prior = scalar(0.4, 1.0);
    let n = 3u32;
    let mut robots = chain(n, &prior);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    // history[r][k] = (zeta, lambda) contributed by robot r in round k.
    let mut history: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n as usize];

    for round in 0..3usize {
        for (r, robot) in robots.iter_mut().enumerate() {
            let info = rng.random_range(0.5..2.0);
            let zeta = info * rng.random_range(-1.0..1.0);
            robot
                .graph
                .add_factor(FactorKind::LocalMeasurement, scalar(zeta, info))
                .unwrap();
            history[r].push((zeta, info));
        }
        exchange(&mut robots);

        for (r, robot) in robots.iter().enumerate() {
            let (mut zeta, mut info) = (0.4, 1.0);
            for (s, contributions) in history.iter().enumerate() {
                // Information travels one edge per exchange, and each round's
                // measurements are already in that round's messages.
                let hops = r.abs_diff(s);
                for (k, (z, l)) in contributions.iter().enumerate() {
                    if k + hops <= round + 1 {
                        zeta += z;
                        info += l;
                    }
                }
            }
            let joint = robot.graph.joint_canonical();
            assert!(
                (joint.info_matrix()[(0, 0)] - info).abs() < 1e-12,
                "robot {r} round {round}: {} vs {info}",
                joint.info_matrix()[(0, 0)]
            );
            assert!((joint.info_vector()[0] - zeta).abs() < 1e-12);
        }
    }
}

#[test]
fn channel_filter_never_exceeds_own_information() {
    let prior = scalar(0.0, 0.5);
    let mut robots = chain(2, &prior);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        for robot in robots.iter_mut() {
            let info = rng.random_range(0.1..1.0);
            robot
                .graph
                .add_factor(FactorKind::LocalMeasurement, scalar(info * 0.3, info))
                .unwrap();
        }
        exchange(&mut robots);
        for robot in &robots {
            let own = robot.graph.joint_canonical().info_matrix()[(0, 0)];
            let common = robot.channels[0].joint().info_matrix()[(0, 0)];
            assert!(own - common >= -1e-9);
        }
    }
}
