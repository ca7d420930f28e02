use curriflow::control::HEAD_SIZES;
use curriflow::curriculum::{CurriculumId, Density, MotionMode};
use curriflow::rl::{load_checkpoint, save_checkpoint, PpoConfig, TrainState, HIDDEN};
use curriflow::sim::{Control, DrivingEnv, ScenarioConfig, OBS_DIM};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [MotionMode; 3] = [MotionMode::Stationary, MotionMode::ConstantVelocity, MotionMode::Interactive];

#[test]
fn empty_road_is_the_same_environment_for_every_mode() {
    for scenario in [ScenarioConfig::overtaking(), ScenarioConfig::merging()] {
        for seed in [0, 1, 99] {
            let mut envs: Vec<DrivingEnv> = MODES
                .iter()
                .map(|&m| DrivingEnv::reset(&scenario, CurriculumId::new(Density::Empty, m), seed).unwrap())
                .collect();
            let first = envs[0].state().clone();
            assert!(envs.iter().all(|e| e.state() == &first));
            assert!(envs.iter().all(|e| e.observe() == envs[0].observe()));
            for t in 0..50 {
                let c = Control::new(1.0, if t % 10 < 5 { 0.05 } else { -0.05 });
                for e in envs.iter_mut() {
                    e.step(c).unwrap();
                }
                let s0 = envs[0].state().clone();
                assert!(envs.iter().all(|e| e.state() == &s0), "diverged at step {t}");
            }
        }
    }
}

#[test]
fn non_empty_modes_differ() {
    let scenario = ScenarioConfig::overtaking();
    let mut a = DrivingEnv::reset(&scenario, CurriculumId::new(Density::Low, MotionMode::Stationary), 3).unwrap();
    let mut b = DrivingEnv::reset(&scenario, CurriculumId::new(Density::Low, MotionMode::ConstantVelocity), 3).unwrap();
    for _ in 0..20 {
        a.step(Control::new(0.0, 0.0)).unwrap();
        b.step(Control::new(0.0, 0.0)).unwrap();
    }
    assert_ne!(a.state(), b.state());
}

#[test]
fn checkpoint_reload_gives_identical_greedy_actions() {
    let state = TrainState::new(OBS_DIM, &HIDDEN, &HEAD_SIZES, &PpoConfig::default(), 11);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    save_checkpoint(&path, &state).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, state);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut scratch = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let obs = Array1::from_shape_fn(OBS_DIM, |_| rng.random_range(-50.0..50.0));
        let a = state.policy.act(obs.view(), true, &mut scratch).unwrap();
        let b = loaded.policy.act(obs.view(), true, &mut scratch).unwrap();
        assert_eq!(a.action, b.action);
        assert_eq!(a.log_prob.to_bits(), b.log_prob.to_bits());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
