use rand::seq::index;
use rand::Rng;

use super::config::PATCH_SIDE;
use super::link::user_capacity;
use super::weather::WeatherField;
use super::{Action, Cell, EnvConfig, EnvError, Observation};
use crate::rng::{stream, Rng64, Stream};

/// Full simulator ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub uav: Cell,
    pub users: Vec<Cell>,
    pub weather: WeatherField,
    pub t: usize,
    pub rng: Rng64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// The move actually executed after turbulence.
    pub executed: Action,
}

/// One UAV serving static ground users under a drifting wind hotspot.
///
/// Users are placed once per experiment seed; each [`LawnEnv::reset`] starts
/// a new episode with the UAV at the grid center and a fresh hotspot.
#[derive(Clone, Debug)]
pub struct LawnEnv {
    config: EnvConfig,
    state: EnvState,
    started: bool,
}

impl LawnEnv {
    /// Environment for training episodes of experiment `seed`.
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        Self::with_stream(config, seed, Stream::Env)
    }

    /// Same user layout as [`LawnEnv::new`], but episodes draw from
    /// `episodes` instead of the training stream.
    pub fn with_stream(config: EnvConfig, seed: u64, episodes: Stream) -> Result<Self, EnvError> {
        config.validate()?;
        let mut layout = stream(seed, Stream::Layout);
        let users = index::sample(&mut layout, config.grid_w * config.grid_h, config.n_users)
            .into_iter()
            .map(|i| Cell {
                x: i % config.grid_w,
                y: i / config.grid_w,
            })
            .collect();
        let state = EnvState {
            uav: Self::start_cell(&config),
            users,
            weather: WeatherField {
                center: (0.0, 0.0),
                velocity: config.wind_drift,
                sigma: config.wind_sigma,
                amplitude: config.wind_amplitude,
            },
            t: config.horizon,
            rng: stream(seed, episodes),
        };
        Ok(Self {
            config,
            state,
            started: false,
        })
    }

    /// Builds the environment for `seed` and starts its first episode.
    pub fn reset_new(config: EnvConfig, seed: u64) -> Result<(Self, Observation), EnvError> {
        let mut env = Self::new(config, seed)?;
        let obs = env.reset();
        Ok((env, obs))
    }

    fn start_cell(config: &EnvConfig) -> Cell {
        Cell {
            x: config.grid_w / 2,
            y: config.grid_h / 2,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Replaces the ground-truth state. Used by tests and fixtures.
    pub fn set_state(&mut self, state: EnvState) {
        self.started = true;
        self.state = state;
    }

    pub fn reset(&mut self) -> Observation {
        let (w, h) = (self.config.grid_w as f64, self.config.grid_h as f64);
        let rng = &mut self.state.rng;
        let center = (rng.random_range(0.0..=w), rng.random_range(0.0..=h));
        self.state.weather = WeatherField {
            center,
            velocity: self.config.wind_drift,
            sigma: self.config.wind_sigma,
            amplitude: self.config.wind_amplitude,
        };
        self.state.uav = Self::start_cell(&self.config);
        self.state.t = 0;
        self.started = true;
        self.observe()
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.config.horizon
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if !self.started || self.is_done() {
            return Err(EnvError::EpisodeFinished);
        }
        let wind_here = self.state.weather.wind_at(self.state.uav.center());
        let p_slip = (self.config.slip_coeff * wind_here).min(1.0);
        let executed = if p_slip > 0.0 && self.state.rng.random::<f64>() < p_slip {
            Action::from_index(self.state.rng.random_range(0..Action::COUNT))
        } else {
            action
        };
        self.state.uav = executed.apply(self.state.uav, self.config.grid_w, self.config.grid_h);
        let bounds = (self.config.grid_w as f64, self.config.grid_h as f64);
        self.state
            .weather
            .advance(self.config.wind_drift_jitter_std, bounds, &mut self.state.rng);
        self.state.t += 1;
        Ok(StepOutcome {
            observation: self.observe(),
            reward: self.reward(),
            done: self.state.t == self.config.horizon,
            executed,
        })
    }

    /// Sum of user capacities at the current UAV position, in reward units.
    pub fn reward(&self) -> f64 {
        let wind = self.state.weather.wind_at(self.state.uav.center());
        self.state
            .users
            .iter()
            .map(|&u| user_capacity(&self.config, self.state.uav, u, wind))
            .sum::<f64>()
            / self.config.reward_unit
    }

    pub fn observe(&self) -> Observation {
        build_observation(&self.config, &self.state)
    }
}

/// `[uav x, uav y] ∥ 5×5 wind patch ∥ user distances`, each in `[0, 1]`.
///
/// Position is the UAV cell center over the grid size. The patch is sampled
/// at cell centers around the UAV in row-major order (y outer, x inner),
/// clamping out-of-grid cells to the border. Distances are horizontal, in
/// meters, over the grid diagonal.
pub fn build_observation(config: &EnvConfig, state: &EnvState) -> Observation {
    let mut v = Vec::with_capacity(config.observation_len());
    let (cx, cy) = state.uav.center();
    v.push(cx / config.grid_w as f64);
    v.push(cy / config.grid_h as f64);
    let half = (PATCH_SIDE / 2) as i64;
    for dy in -half..=half {
        for dx in -half..=half {
            let x = (state.uav.x as i64 + dx).clamp(0, config.grid_w as i64 - 1) as usize;
            let y = (state.uav.y as i64 + dy).clamp(0, config.grid_h as i64 - 1) as usize;
            v.push(state.weather.wind_at(Cell { x, y }.center()));
        }
    }
    let diag = config.max_diagonal();
    for &u in &state.users {
        v.push(super::link::horizontal_distance(config, state.uav, u) / diag);
    }
    Observation(v)
}
