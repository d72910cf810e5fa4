use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uavnav_core::encoder::GoalSpec;
use uavnav_core::geometry::{Pose, Trajectory, Vec3};
use uavnav_core::labels::{Assistance, Difficulty};
use uavnav_core::neural::{PolicyParams, ValueParams};
use uavnav_core::simworld::{
    generate_scenario, run_episode, Env, Episode, GaussianPilot, HoverPilot, Obstacle, OraclePilot, Outcome,
    Scenario,
};
use uavnav_core::config::RunConfig;

fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z)
}

fn straight(obstacles: Vec<Obstacle<f64>>) -> Scenario<f64> {
    let (a, b) = (v(0.0, 0.0, 50.0), v(100.0, 0.0, 50.0));
    Scenario {
        id: "straight".into(),
        seed: 0,
        difficulty: Difficulty::Easy,
        start: Pose::at(a),
        goal: GoalSpec::new(b, 3),
        obstacles,
        oracle_path: Trajectory::from_points([a, b]),
    }
}

fn setup() -> (RunConfig<f64>, Env<f64>, ValueParams<f64>, PolicyParams<f64>) {
    let cfg = RunConfig::<f64>::default();
    let env = Env::from_config(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let value = ValueParams::init(cfg.encoder.encoder_dim, &[16], &mut rng).unwrap();
    let policy = PolicyParams::init(cfg.encoder.encoder_dim, &[16], -0.7, &mut rng).unwrap();
    (cfg, env, value, policy)
}

#[test]
fn oracle_pilot_reaches_goal_in_empty_world() {
    let (cfg, env, value, _) = setup();
    let sc = straight(vec![]);
    let ep = run_episode(&OraclePilot, &value, &sc, Assistance::L1, &env, 1).unwrap();
    assert_eq!(ep.outcome(), Outcome::Success);
    assert!(ep.header.final_distance <= cfg.episode.success_radius);
    // 80 m at 5 m per step
    assert_eq!(ep.records.len(), 16);
    assert!((ep.header.path_length - 80.0).abs() < 1e-9);
}

#[test]
fn hover_times_out_after_max_steps() {
    let (cfg, env, value, _) = setup();
    let sc = straight(vec![]);
    let ep = run_episode(&HoverPilot, &value, &sc, Assistance::L3, &env, 1).unwrap();
    assert_eq!(ep.outcome(), Outcome::Timeout);
    assert_eq!(ep.records.len(), cfg.episode.max_steps);
    assert_eq!(ep.header.final_distance, 100.0);
    assert_eq!(ep.header.path_length, 0.0);
    assert!(ep.records.iter().all(|r| r.hint.is_none()));
}

#[test]
fn flying_into_a_wall_collides() {
    let (_, env, value, _) = setup();
    let wall = Obstacle::cuboid(v(40.0, -100.0, 0.0), v(45.0, 100.0, 120.0)).unwrap();
    let sc = straight(vec![wall]);
    let ep = run_episode(&OraclePilot, &value, &sc, Assistance::L1, &env, 1).unwrap();
    assert_eq!(ep.outcome(), Outcome::Collision);
    let last = ep.records.last().unwrap();
    assert!(last.collided);
    assert!(ep.records[..ep.records.len() - 1].iter().all(|r| !r.collided));
}

#[test]
fn rollouts_are_byte_identical_and_round_trip() {
    let (cfg, env, value, policy) = setup();
    let sc = generate_scenario(17, Difficulty::Easy, &cfg.world).unwrap();
    let pilot = GaussianPilot { policy: &policy, greedy: false };
    let a = run_episode(&pilot, &value, &sc, Assistance::L2, &env, 99).unwrap();
    let b = run_episode(&pilot, &value, &sc, Assistance::L2, &env, 99).unwrap();
    let (ja, jb) = (a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
    assert_eq!(ja, jb);
    assert_eq!(ja.lines().count(), a.records.len() + 1);
    let back = Episode::<f64>::read_jsonl(ja.as_bytes()).unwrap();
    assert_eq!(back, a);
    let c = run_episode(&pilot, &value, &sc, Assistance::L2, &env, 100).unwrap();
    assert_ne!(c.to_jsonl().unwrap(), ja);
}

#[test]
fn header_distances_are_consistent() {
    let (cfg, env, value, policy) = setup();
    for seed in 0..6 {
        let d = if seed % 2 == 0 { Difficulty::Easy } else { Difficulty::Hard };
        let sc = generate_scenario(seed, d, &cfg.world).unwrap();
        for level in Assistance::ALL {
            let pilot = GaussianPilot { policy: &policy, greedy: false };
            let ep = run_episode(&pilot, &value, &sc, level, &env, seed).unwrap();
            let h = &ep.header;
            assert_eq!(h.steps, ep.records.len());
            assert!(h.min_distance <= h.final_distance);
            assert!(h.min_distance <= h.initial_distance);
            assert!(h.path_length >= 0.0);
            assert_eq!(h.encoder_seed, cfg.encoder.encoder_seed);
            assert!(ep.records.iter().enumerate().all(|(i, r)| r.t == i + 1));
            let goal = sc.goal_position();
            let closest = ep
                .records
                .iter()
                .map(|r| r.pose.position().distance(&goal))
                .fold(h.initial_distance, f64::min);
            assert_eq!(closest, h.min_distance);
            if level == Assistance::L1 {
                assert!(ep.records.iter().all(|r| r.hint.is_some()));
            }
            if level == Assistance::L3 {
                assert!(ep.records.iter().all(|r| r.hint.is_none()));
            }
            assert!(ep.records.iter().all(|r| r.reward_verifiable > 0.0 && r.reward_verifiable <= cfg.reward.cap()));
        }
    }
}

#[test]
fn first_record_log_prob_matches_policy_density() {
    let (cfg, env, value, policy) = setup();
    let sc = generate_scenario(3, Difficulty::Easy, &cfg.world).unwrap();
    let pilot = GaussianPilot { policy: &policy, greedy: false };
    let ep = run_episode(&pilot, &value, &sc, Assistance::L1, &env, 4).unwrap();
    for r in &ep.records {
        let mean = policy.net.forward(r.observation.as_slice()).unwrap();
        let lp = uavnav_core::neural::log_prob_with_grad(&mean, &policy.log_std, &r.raw_action).0;
        assert_eq!(lp, r.log_prob);
    }
}
