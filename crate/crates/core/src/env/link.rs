//! Downlink budget: free-space path loss, wind attenuation at the UAV, and
//! Shannon capacity over an equal share of the band.

use super::{Cell, EnvConfig, EnvError};

/// Free-space path loss in dB for a 3-D distance in meters.
pub fn path_loss_db(distance_m: f64, carrier_freq_ghz: f64) -> Result<f64, EnvError> {
    if distance_m.is_nan() || distance_m <= 0.0 {
        return Err(EnvError::NonPositiveDistance(distance_m));
    }
    Ok(32.45 + 20.0 * carrier_freq_ghz.log10() + 20.0 * distance_m.log10())
}

/// Horizontal distance in meters between two cell centers.
pub fn horizontal_distance(config: &EnvConfig, a: Cell, b: Cell) -> f64 {
    let dx = a.x as f64 - b.x as f64;
    let dy = a.y as f64 - b.y as f64;
    (dx * dx + dy * dy).sqrt() * config.cell_size
}

/// Received SNR in dB for a user at `horizontal_m` from the UAV's nadir.
pub fn snr_db(config: &EnvConfig, horizontal_m: f64, wind_at_uav: f64) -> f64 {
    let d3 = (config.uav_altitude * config.uav_altitude + horizontal_m * horizontal_m).sqrt();
    // d3 >= altitude > 0 for a validated config
    let loss = path_loss_db(d3, config.carrier_freq_ghz).expect("altitude is positive");
    config.tx_power_dbm - loss - config.wind_atten_max_db * wind_at_uav - config.noise_dbm()
}

/// Capacity in bit/s of one user's link.
pub fn capacity_at_distance(config: &EnvConfig, horizontal_m: f64, wind_at_uav: f64) -> f64 {
    let snr = 10f64.powf(snr_db(config, horizontal_m, wind_at_uav) / 10.0);
    config.per_user_bandwidth() * (1.0 + snr).log2()
}

pub fn user_capacity(config: &EnvConfig, uav: Cell, user: Cell, wind_at_uav: f64) -> f64 {
    capacity_at_distance(config, horizontal_distance(config, uav, user), wind_at_uav)
}

/// Largest possible per-step reward: every user at nadir with no wind.
pub fn reward_upper_bound(config: &EnvConfig) -> f64 {
    config.n_users as f64 * capacity_at_distance(config, 0.0, 0.0) / config.reward_unit
}
