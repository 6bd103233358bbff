//! Fixtures shared by the benchmarks.

use dreamer_core::agent::{Agent, Mode};
use dreamer_core::{DreamerAgent, EnvConfig, ExperimentConfig, LawnEnv};

/// The reduced preset used for quick experiments.
pub fn desk_config() -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.apply_desk_scale();
    config
}

/// A Dreamer agent whose replay holds `steps` transitions of random play,
/// with warmup long enough that no learning happened yet.
pub fn warmed_dreamer(env_config: &EnvConfig, steps: usize) -> (DreamerAgent, LawnEnv) {
    let config = desk_config();
    let mut env = LawnEnv::new(env_config.clone(), 0).expect("valid config");
    let mut agent = DreamerAgent::new(env_config.observation_len(), config.learner, usize::MAX, 0);
    let mut taken = 0;
    while taken < steps {
        let obs = env.reset();
        agent.begin_episode(obs);
        while !env.is_done() && taken < steps {
            agent.step(&mut env, Mode::Train).expect("warmup step");
            taken += 1;
        }
    }
    (agent, env)
}
