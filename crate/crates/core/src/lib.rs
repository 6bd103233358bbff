//! Wireless Dreamer: a latent world model with imagined-rollout Q-learning
//! for UAV positioning over a weather-affected mmWave downlink, together
//! with the simulator, baselines and experiment harness used to evaluate it.

pub mod agent;
pub mod baselines;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod world_model;

pub use agent::{Agent, DreamerAgent, Mode, StepReport};
pub use baselines::{DqnAgent, RandomAgent};
pub use checkpoint::Checkpoint;
pub use env::{Action, EnvConfig, LawnEnv, Observation};
pub use error::{Error, Result};
pub use harness::{AgentKind, ExperimentConfig, LearnerConfig};
pub use world_model::{LatentState, WorldModel, WorldModelConfig};
