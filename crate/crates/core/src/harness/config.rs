//! Flat `key: value` experiment configuration.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored. Keys
//! not listed in [`ExperimentConfig::KEYS`] are rejected. `desk_scale: true`
//! applies the reduced preset first; every explicit key then overrides it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::env::EnvConfig;
use crate::replay::DEFAULT_CAPACITY;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key: value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("{path}: {reason}")]
    Read { path: String, reason: String },
}

impl ConfigError {
    /// The offending key, if the error is about one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey(k) | ConfigError::DuplicateKey(k) => Some(k),
            ConfigError::Type { key, .. } | ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentKind {
    Dreamer,
    Dqn,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Dreamer, AgentKind::Dqn, AgentKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dreamer => "dreamer",
            AgentKind::Dqn => "dqn",
            AgentKind::Random => "random",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dreamer" => Ok(AgentKind::Dreamer),
            "dqn" => Ok(AgentKind::Dqn),
            "random" => Ok(AgentKind::Random),
            other => Err(format!("unknown agent `{other}` (dreamer, dqn, random)")),
        }
    }
}

/// Learning hyperparameters shared by the learned agents.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// env steps over which ε decays linearly
    pub epsilon_decay_steps: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub imagination_horizon: usize,
    /// gradient steps between hard target copies
    pub target_sync_every: usize,
    pub replay_capacity: usize,
    pub wm_lr: f64,
    pub q_lr: f64,
    pub dqn_lr: f64,
    pub latent_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 20_000,
            batch_size: 32,
            seq_len: 16,
            imagination_horizon: 5,
            target_sync_every: 100,
            replay_capacity: DEFAULT_CAPACITY,
            wm_lr: 1e-3,
            q_lr: 5e-4,
            dqn_lr: 5e-4,
            latent_dim: 64,
            embed_dim: 128,
            hidden_dim: 128,
        }
    }
}

impl LearnerConfig {
    /// Linearly decayed exploration rate after `env_steps` steps.
    pub fn epsilon(&self, env_steps: usize) -> f64 {
        if env_steps >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = (env_steps as f64 / self.epsilon_decay_steps as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub agent: AgentKind,
    pub env: EnvConfig,
    pub learner: LearnerConfig,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub warmup_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub out_dir: PathBuf,
    pub desk_scale: bool,
    /// Fill the `wall_ms` column; off by default so outputs are reproducible.
    pub wall_clock: bool,
    /// Worker threads for running seeds; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            agent: AgentKind::Dreamer,
            env: EnvConfig::default(),
            learner: LearnerConfig::default(),
            episodes: 400,
            seeds: vec![0],
            warmup_steps: 1000,
            eval_every: 25,
            eval_episodes: 5,
            out_dir: PathBuf::from("runs"),
            desk_scale: false,
            wall_clock: false,
            threads: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Type {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Type {
            key: key.to_string(),
            value: value.to_string(),
            expected: "a boolean",
        }),
    }
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "agent",
        "episodes",
        "seeds",
        "warmup_steps",
        "eval_every",
        "eval_episodes",
        "out_dir",
        "desk_scale",
        "wall_clock",
        "threads",
        "gamma",
        "epsilon_start",
        "epsilon_end",
        "epsilon_decay_steps",
        "batch_size",
        "seq_len",
        "imagination_horizon",
        "target_sync_every",
        "replay_capacity",
        "wm_lr",
        "q_lr",
        "dqn_lr",
        "latent_dim",
        "embed_dim",
        "hidden_dim",
        "grid_w",
        "grid_h",
        "cell_size",
        "carrier_freq_ghz",
        "total_bandwidth",
        "tx_power_dbm",
        "n_users",
        "horizon",
        "uav_altitude",
        "noise_psd_dbm_hz",
        "noise_figure_db",
        "wind_sigma",
        "wind_amplitude",
        "wind_atten_max_db",
        "wind_drift_x",
        "wind_drift_y",
        "wind_drift_jitter_std",
        "slip_coeff",
        "reward_unit",
    ];

    /// Reduced preset: 32×32 grid, 5 users, 50-step episodes, 300 episodes.
    pub fn apply_desk_scale(&mut self) {
        self.desk_scale = true;
        self.env.grid_w = 32;
        self.env.grid_h = 32;
        self.env.n_users = 5;
        self.env.horizon = 50;
        self.episodes = 300;
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut order = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| ConfigError::Malformed {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if !Self::KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(ConfigError::DuplicateKey(key));
            }
            order.push(key);
        }

        let mut cfg = ExperimentConfig::default();
        if let Some(v) = entries.get("desk_scale") {
            if parse_bool("desk_scale", v)? {
                cfg.apply_desk_scale();
            }
        }
        for key in &order {
            cfg.set(key, &entries[key])?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        const UINT: &str = "a non-negative integer";
        const FLOAT: &str = "a number";
        let l = &mut self.learner;
        let e = &mut self.env;
        match key {
            "agent" => {
                self.agent = v.parse().map_err(|reason| ConfigError::Invalid {
                    key: key.into(),
                    reason,
                })?
            }
            "episodes" => self.episodes = parse(key, v, UINT)?,
            "seeds" => {
                self.seeds = v
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s, "a list of non-negative integers"))
                    .collect::<Result<_, _>>()?
            }
            "warmup_steps" => self.warmup_steps = parse(key, v, UINT)?,
            "eval_every" => self.eval_every = parse(key, v, UINT)?,
            "eval_episodes" => self.eval_episodes = parse(key, v, UINT)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "desk_scale" => self.desk_scale = parse_bool(key, v)?,
            "wall_clock" => self.wall_clock = parse_bool(key, v)?,
            "threads" => self.threads = parse(key, v, UINT)?,
            "gamma" => l.gamma = parse(key, v, FLOAT)?,
            "epsilon_start" => l.epsilon_start = parse(key, v, FLOAT)?,
            "epsilon_end" => l.epsilon_end = parse(key, v, FLOAT)?,
            "epsilon_decay_steps" => l.epsilon_decay_steps = parse(key, v, UINT)?,
            "batch_size" => l.batch_size = parse(key, v, UINT)?,
            "seq_len" => l.seq_len = parse(key, v, UINT)?,
            "imagination_horizon" => l.imagination_horizon = parse(key, v, UINT)?,
            "target_sync_every" => l.target_sync_every = parse(key, v, UINT)?,
            "replay_capacity" => l.replay_capacity = parse(key, v, UINT)?,
            "wm_lr" => l.wm_lr = parse(key, v, FLOAT)?,
            "q_lr" => l.q_lr = parse(key, v, FLOAT)?,
            "dqn_lr" => l.dqn_lr = parse(key, v, FLOAT)?,
            "latent_dim" => l.latent_dim = parse(key, v, UINT)?,
            "embed_dim" => l.embed_dim = parse(key, v, UINT)?,
            "hidden_dim" => l.hidden_dim = parse(key, v, UINT)?,
            "grid_w" => e.grid_w = parse(key, v, UINT)?,
            "grid_h" => e.grid_h = parse(key, v, UINT)?,
            "cell_size" => e.cell_size = parse(key, v, FLOAT)?,
            "carrier_freq_ghz" => e.carrier_freq_ghz = parse(key, v, FLOAT)?,
            "total_bandwidth" => e.total_bandwidth = parse(key, v, FLOAT)?,
            "tx_power_dbm" => e.tx_power_dbm = parse(key, v, FLOAT)?,
            "n_users" => e.n_users = parse(key, v, UINT)?,
            "horizon" => e.horizon = parse(key, v, UINT)?,
            "uav_altitude" => e.uav_altitude = parse(key, v, FLOAT)?,
            "noise_psd_dbm_hz" => e.noise_psd_dbm_hz = parse(key, v, FLOAT)?,
            "noise_figure_db" => e.noise_figure_db = parse(key, v, FLOAT)?,
            "wind_sigma" => e.wind_sigma = parse(key, v, FLOAT)?,
            "wind_amplitude" => e.wind_amplitude = parse(key, v, FLOAT)?,
            "wind_atten_max_db" => e.wind_atten_max_db = parse(key, v, FLOAT)?,
            "wind_drift_x" => e.wind_drift.0 = parse(key, v, FLOAT)?,
            "wind_drift_y" => e.wind_drift.1 = parse(key, v, FLOAT)?,
            "wind_drift_jitter_std" => e.wind_drift_jitter_std = parse(key, v, FLOAT)?,
            "slip_coeff" => e.slip_coeff = parse(key, v, FLOAT)?,
            "reward_unit" => e.reward_unit = parse(key, v, FLOAT)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, reason: &str| {
            Err(ConfigError::Invalid {
                key: key.to_string(),
                reason: reason.to_string(),
            })
        };
        if self.seeds.is_empty() {
            return invalid("seeds", "at least one seed is required");
        }
        if self.eval_every < 1 {
            return invalid("eval_every", "must be at least 1");
        }
        let l = &self.learner;
        if !(l.gamma > 0.0 && l.gamma < 1.0) {
            return invalid("gamma", "must lie in (0, 1)");
        }
        for (key, v) in [("epsilon_start", l.epsilon_start), ("epsilon_end", l.epsilon_end)] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(key, "must lie in [0, 1]");
            }
        }
        for (key, v) in [
            ("batch_size", l.batch_size),
            ("seq_len", l.seq_len),
            ("imagination_horizon", l.imagination_horizon),
            ("target_sync_every", l.target_sync_every),
            ("replay_capacity", l.replay_capacity),
            ("latent_dim", l.latent_dim),
            ("embed_dim", l.embed_dim),
            ("hidden_dim", l.hidden_dim),
        ] {
            if v == 0 {
                return invalid(key, "must be at least 1");
            }
        }
        for (key, v) in [("wm_lr", l.wm_lr), ("q_lr", l.q_lr), ("dqn_lr", l.dqn_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(key, "must be positive");
            }
        }
        match self.env.validate() {
            Ok(()) => {}
            Err(crate::env::EnvError::InvalidConfig { field, reason }) => return invalid(field, &reason),
            Err(other) => return invalid("n_users", &other.to_string()),
        }
        Ok(())
    }
}
