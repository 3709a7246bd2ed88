use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smdpnav_core::eval::{generate_scenario, ScenarioSpec};
use smdpnav_core::nn::Checkpoint;
use smdpnav_core::sim::{propagate_arc, step, ExecutionMode, RewardParams, RobotSpec, StepEvent, WorldMap};
use smdpnav_core::trainer::{initial_checkpoint, TrainConfig};
use smdpnav_core::{ExecutableAction, Pose};

fn cluttered(seed: u64) -> WorldMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = WorldMap::empty(6.0, 6.0, 0.05).unwrap();
    for _ in 0..8 {
        let c = [rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0)];
        if rng.gen_bool(0.5) {
            world.fill_disc(c, rng.gen_range(0.1..0.6));
        } else {
            let h = [rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5)];
            world.fill_rect([c[0] - h[0], c[1] - h[1]], [c[0] + h[0], c[1] + h[1]]);
        }
    }
    world
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn checkpoint_bytes_round_trip_exactly(seed in any::<u64>(), bits in prop::collection::vec(any::<u64>(), 16)) {
        let config = TrainConfig { seed, ..TrainConfig::desk() };
        let mut ckpt = initial_checkpoint(&config).unwrap();
        for (i, b) in bits.iter().enumerate() {
            let x = f64::from_bits(*b);
            let x = if x.is_finite() { x } else { f64::MIN_POSITIVE / 3.0 };
            let k = (*b as usize).wrapping_mul(31).wrapping_add(i) % ckpt.policy.params.len();
            ckpt.policy.params[k] = x;
        }
        ckpt.epoch = seed % 1000;
        let bytes = ckpt.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        let same_bits = back.policy.params.iter().zip(&ckpt.policy.params).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same_bits);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn executed_arcs_never_enter_obstacles(seed in 0u64..10_000) {
        let world = cluttered(seed);
        let robot = RobotSpec::default();
        let params = RewardParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let mut checked = 0;
        while checked < 20 {
            let pose = Pose::new(rng.gen_range(0.3..5.7), rng.gen_range(0.3..5.7), rng.gen_range(-PI..PI));
            if world.disc_collides(pose.x, pose.y, robot.radius) {
                continue;
            }
            let action = ExecutableAction {
                v: rng.gen_range(0.0..0.6),
                omega: rng.gen_range(-0.9..0.9),
                d: rng.gen_range(0.05..4.0),
            };
            let t = step(&world, &robot, pose, [100.0, 100.0], &action, &params, ExecutionMode::Mode1).unwrap();
            for i in 0..=400 {
                let p = propagate_arc(pose, &action, t.tau * i as f64 / 400.0);
                prop_assert!(!world.disc_collides(p.x, p.y, robot.radius), "swept into an obstacle at {:?}", p);
            }
            if t.event == StepEvent::None {
                prop_assert!((t.tau - action.d).abs() < 1e-12);
            }
            checked += 1;
        }
    }

    #[test]
    fn generated_scenarios_start_and_end_clear(seed in 0u64..1_000_000) {
        let spec = ScenarioSpec::small_sparse();
        let s = generate_scenario(&spec, seed).unwrap();
        prop_assert!(!s.world.disc_collides(s.start.x, s.start.y, spec.robot_radius));
        prop_assert!(!s.world.disc_collides(s.goal[0], s.goal[1], spec.robot_radius));
        prop_assert!(s.start.distance_to(s.goal) >= spec.min_separation);
    }
}
