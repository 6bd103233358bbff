use dreamer_core::env::reward_upper_bound;
use dreamer_core::harness::{moving_average, read_metrics_csv, write_metrics_csv, EpisodeRow, EvalRow, MetricsLog};
use dreamer_core::replay::{ReplayBuffer, Transition};
use dreamer_core::rng::{stream, Rng64, Stream};
use dreamer_core::{Action, EnvConfig, LawnEnv, LearnerConfig, Observation};
use proptest::prelude::*;
use rand::Rng;

fn small_env() -> impl Strategy<Value = EnvConfig> {
    (2usize..24, 2usize..24, 1usize..6, 1usize..30, 0.0f64..1.0).prop_map(|(w, h, users, horizon, slip)| EnvConfig {
        grid_w: w,
        grid_h: h,
        n_users: users.min(w * h),
        horizon,
        slip_coeff: slip,
        ..EnvConfig::default()
    })
}

fn actions(n: usize) -> impl Strategy<Value = Vec<Action>> {
    prop::collection::vec((0..Action::COUNT).prop_map(Action::from_index), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn observations_and_rewards_stay_in_range(cfg in small_env(), seed in any::<u64>(), acts in actions(30)) {
        let bound = reward_upper_bound(&cfg);
        let mut env = LawnEnv::new(cfg.clone(), seed).unwrap();
        let first = env.reset();
        prop_assert_eq!(first.len(), cfg.observation_len());
        for a in acts.iter().take(cfg.horizon) {
            let out = env.step(*a).unwrap();
            prop_assert_eq!(out.observation.len(), cfg.observation_len());
            prop_assert!(out.observation.as_slice().iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
            prop_assert!(out.reward > 0.0 && out.reward <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn trajectories_are_reproducible(cfg in small_env(), seed in any::<u64>(), acts in actions(30)) {
        let run = || {
            let mut env = LawnEnv::new(cfg.clone(), seed).unwrap();
            let mut trace = vec![env.reset()];
            for a in acts.iter().take(cfg.horizon) {
                let out = env.step(*a).unwrap();
                trace.push(Observation(vec![out.reward]));
                trace.push(out.observation);
            }
            trace
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn epsilon_decays_monotonically_within_bounds(decay in 1usize..50_000, a in 0usize..60_000, b in 0usize..60_000) {
        let cfg = LearnerConfig { epsilon_decay_steps: decay, ..LearnerConfig::default() };
        let (lo, hi) = (a.min(b), a.max(b));
        let (e_lo, e_hi) = (cfg.epsilon(lo), cfg.epsilon(hi));
        prop_assert!(e_hi <= e_lo);
        prop_assert!((0.05..=1.0).contains(&e_lo) && (0.05..=1.0).contains(&e_hi));
        prop_assert_eq!(cfg.epsilon(0), 1.0);
        prop_assert_eq!(cfg.epsilon(decay), 0.05);
    }

    #[test]
    fn replay_sequences_stay_inside_episodes(
        lengths in prop::collection::vec(1usize..12, 1..40),
        capacity in 1usize..200,
        seed in any::<u64>(),
        len in 1usize..6,
    ) {
        let mut buf = ReplayBuffer::new(capacity);
        for (id, &n) in lengths.iter().enumerate() {
            for step in 0..n {
                buf.append(Transition {
                    observation: Observation(vec![id as f64, step as f64]),
                    action: Action::Stay,
                    reward: 0.0,
                    next_observation: Observation(vec![id as f64, step as f64 + 1.0]),
                    done: step + 1 == n,
                    episode: id as u64,
                    step,
                });
            }
        }
        prop_assert!(buf.len() <= capacity);
        let mut rng = stream(seed, Stream::Replay);
        match buf.sample_sequences(16, len, &mut rng) {
            Ok(batch) => {
                for s in &batch.sequences {
                    prop_assert_eq!(s.actions.len(), len);
                    prop_assert!(s.observations.iter().all(|o| o.0[0] == s.episode as f64));
                    prop_assert!(s.observations.windows(2).all(|w| w[1].0[1] == w[0].0[1] + 1.0));
                    prop_assert!(!s.dones[..len - 1].iter().any(|d| *d));
                    prop_assert_eq!(s.starts_episode, s.observations[0].0[1] == 0.0);
                }
            }
            // only when no stored run is long enough
            Err(_) => {
                let mut longest = 0;
                let mut run = 0;
                let mut prev: Option<&Transition> = None;
                for t in buf.iter() {
                    run = match prev {
                        Some(p) if p.episode == t.episode && !p.done => run + 1,
                        _ => 1,
                    };
                    longest = longest.max(run);
                    prev = Some(t);
                }
                prop_assert!(longest < len);
            }
        }
    }

    #[test]
    fn moving_average_lies_within_window_range(series in prop::collection::vec(-1e3f64..1e3, 1..80), window in 1usize..25) {
        let ma = moving_average(&series, window);
        prop_assert_eq!(ma.len(), series.len());
        for (i, m) in ma.iter().enumerate() {
            let lo = (i + 1).saturating_sub(window);
            let w = &series[lo..=i];
            let min = w.iter().copied().fold(f64::INFINITY, f64::min);
            let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*m >= min - 1e-9 && *m <= max + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_round_trip_through_csv(seed in any::<u64>(), episodes in 0usize..12) {
        let mut rng = stream(seed, Stream::Explore);
        let maybe = |rng: &mut Rng64| rng.random_bool(0.7).then(|| rng.random_range(-1e6..1e6));
        let mut log = MetricsLog::default();
        for episode in 0..episodes {
            log.train.push(EpisodeRow {
                seed,
                episode,
                ret: rng.random_range(-1e3..1e3),
                epsilon: rng.random_range(0.0..1.0),
                wm_rec_loss: maybe(&mut rng),
                wm_rew_loss: maybe(&mut rng),
                wm_cons_loss: maybe(&mut rng),
                q_loss: maybe(&mut rng),
                wall_ms: maybe(&mut rng),
            });
            log.eval.push(EvalRow {
                seed,
                episode: episode + 1,
                step: episode,
                real_reward: rng.random_range(0.0..10.0),
                predicted_reward: maybe(&mut rng),
            });
        }
        let dir = tempfile::tempdir().unwrap();
        write_metrics_csv(&log, dir.path()).unwrap();
        prop_assert_eq!(read_metrics_csv(dir.path()).unwrap(), log);
    }
}
