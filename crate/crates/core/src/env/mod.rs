//! UAV base-station simulator: a grid of static ground users served over a
//! 28 GHz downlink whose quality degrades under a drifting wind hotspot.

mod config;
mod lawn;
mod link;
mod weather;

pub use config::{EnvConfig, PATCH_SIDE};
pub use lawn::{build_observation, EnvState, LawnEnv, StepOutcome};
pub use link::{
    capacity_at_distance, horizontal_distance, path_loss_db, reward_upper_bound, snr_db,
    user_capacity,
};
pub use weather::WeatherField;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("{users} users do not fit on a grid of {cells} cells")]
    TooManyUsers { users: usize, cells: usize },
    #[error("episode is finished; call reset before stepping")]
    EpisodeFinished,
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
}

/// Integer grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    /// Continuous coordinates of the cell center.
    pub fn center(self) -> (f64, f64) {
        (self.x as f64 + 0.5, self.y as f64 + 0.5)
    }
}

/// What the agent perceives each step.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Stay = 0,
    North = 1,
    South = 2,
    East = 3,
    West = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [
        Action::Stay,
        Action::North,
        Action::South,
        Action::East,
        Action::West,
    ];

    /// Panics on indices outside `0..5`.
    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// One-cell move, clamped to the grid. North increases `y`.
    pub fn apply(self, cell: Cell, grid_w: usize, grid_h: usize) -> Cell {
        let Cell { x, y } = cell;
        match self {
            Action::Stay => cell,
            Action::North => Cell {
                x,
                y: (y + 1).min(grid_h - 1),
            },
            Action::South => Cell {
                x,
                y: y.saturating_sub(1),
            },
            Action::East => Cell {
                x: (x + 1).min(grid_w - 1),
                y,
            },
            Action::West => Cell {
                x: x.saturating_sub(1),
                y,
            },
        }
    }
}
