use cmdp_arena::arena::{BEHAVIORS, SUCCESS};
use cmdp_arena::{ArenaConfig, MiniArena, TrajectoryWriter, OBSERVATION_FIELDS, OBS_DIM};
use cmdp_core::Environment;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_action(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..4).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn same_seed_and_actions_give_identical_trajectories() {
    let run = || {
        let mut env = MiniArena::new(ArenaConfig {
            seed: 11,
            ..Default::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut log = Vec::new();
        for _ in 0..2000 {
            let out = env.step(&random_action(&mut rng));
            log.push((bits(&out.observation), out.reward.to_bits(), out.events.clone()));
            if out.episode_over() {
                env.reset(None);
            }
        }
        log
    };
    assert_eq!(run(), run());
}

#[test]
fn shaping_matches_recomputed_distances() {
    let cfg = ArenaConfig::default();
    let mut env = MiniArena::new(cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dist = |p: [f64; 2], g: [f64; 2]| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt();
    for _ in 0..1000 {
        let before = env.state().clone();
        let out = env.step(&random_action(&mut rng));
        let after = env.state().clone();
        let progress = dist(before.position, before.goal) - dist(after.position, after.goal);
        let bonus = f64::from(out.events[SUCCESS]);
        let shaping = out.reward - bonus;
        assert!((shaping - cfg.shaping_coef * progress).abs() < 1e-12);
        if progress.abs() > 1e-12 {
            assert_eq!(shaping.signum(), progress.signum());
        }
        if out.episode_over() {
            env.reset(None);
        }
    }
}

#[test]
fn energy_follows_conservation_law() {
    let cfg = ArenaConfig::default();
    let mut env = MiniArena::new(cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5000 {
        let e0 = env.state().energy;
        let a = random_action(&mut rng);
        let out = env.step(&a);
        let s = env.state();
        let speed = s.velocity[0].hypot(s.velocity[1]);
        let recharge = if a[3] > 0.0 { cfg.recharge_rate } else { 0.0 };
        let expect = (e0 - cfg.energy_drain * speed + recharge).clamp(0.0, 1.0);
        assert_eq!(s.energy.to_bits(), expect.to_bits());
        if out.episode_over() {
            env.reset(None);
        }
    }
}

#[test]
fn always_recharging_never_drops_below_minimum_and_never_succeeds() {
    let mut env = MiniArena::new(ArenaConfig::default());
    for ep in 0..20 {
        env.reset(Some(ep));
        loop {
            let out = env.step(&[0.3, -0.2, 0.1, 1.0]);
            assert_eq!(out.events[cmdp_arena::arena::BELOW_ENERGY], 0);
            assert_eq!(out.events[SUCCESS], 0);
            if out.episode_over() {
                break;
            }
        }
    }
}

#[test]
fn rate_observations_are_running_means() {
    let mut env = MiniArena::new(ArenaConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rates_at = OBS_DIM - 1 - BEHAVIORS;
    let mut emitted: Vec<Vec<u8>> = Vec::new();
    for _ in 0..3000 {
        let out = env.step(&random_action(&mut rng));
        emitted.push(out.events[..BEHAVIORS].to_vec());
        for k in 0..BEHAVIORS {
            let mean = emitted.iter().map(|e| f64::from(e[k])).sum::<f64>() / emitted.len() as f64;
            assert!((out.observation[rates_at + k] - mean).abs() < 1e-12);
        }
        if out.episode_over() {
            emitted.clear();
            env.reset(None);
        }
    }
}

#[test]
fn observations_stay_in_documented_ranges() {
    let mut env = MiniArena::new(ArenaConfig {
        seed: 1,
        ..Default::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bounds = Vec::new();
    for (_, width, lo, hi) in OBSERVATION_FIELDS {
        bounds.extend(std::iter::repeat_n((lo, hi), width));
    }
    assert_eq!(bounds.len(), OBS_DIM);
    let check = |o: &[f64]| {
        for (i, (x, (lo, hi))) in o.iter().zip(&bounds).enumerate() {
            assert!(x.is_finite() && *x >= *lo && *x <= *hi, "entry {i} = {x}");
        }
    };
    check(&env.reset(None));
    for _ in 0..100_000 {
        let out = env.step(&random_action(&mut rng));
        check(&out.observation);
        assert!(out.reward.is_finite());
        if out.events[SUCCESS] == 1 {
            assert!(out.terminal);
        }
        if out.episode_over() {
            check(&env.reset(None));
        }
    }
}

#[test]
fn trajectory_dump_round_trips() {
    let mut env = MiniArena::new(ArenaConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let file = tempfile::NamedTempFile::new().unwrap();
    let mut writer = TrajectoryWriter::new(file.reopen().unwrap(), &env.event_names()).unwrap();
    let mut rewards = Vec::new();
    for _ in 0..200 {
        let a = random_action(&mut rng);
        let out = env.step(&a);
        writer.record(0, &env, &a, &out).unwrap();
        rewards.push(out.reward);
        if out.episode_over() {
            env.reset(None);
        }
    }
    writer.finish().unwrap();
    let mut reader = csv::Reader::from_path(file.path()).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "reward").unwrap();
    assert!(headers.iter().any(|h| h == "in_lava"));
    let read: Vec<f64> = reader.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    assert_eq!(bits(&read), bits(&rewards));
}

proptest! {
    #[test]
    fn success_implies_done(seed in 0u64..1000, steps in 1usize..300) {
        let mut env = MiniArena::new(ArenaConfig { seed, ..Default::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..steps {
            // Steer toward the goal to make success likely.
            let s = env.state().clone();
            let d = [s.goal[0] - s.position[0], s.goal[1] - s.position[1]];
            let a = vec![d[0].signum(), d[1].signum(), rng.random_range(-1.0..=1.0), -1.0];
            let out = env.step(&a);
            if out.events[SUCCESS] == 1 {
                prop_assert!(out.terminal);
            }
            if out.episode_over() {
                env.reset(None);
            }
        }
    }
}
