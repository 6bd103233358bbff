use super::EnvError;

/// Simulator parameters. Defaults describe a 64×64 grid of 4 m cells served
/// over a 28 GHz, 100 MHz, 30 dBm downlink to 10 users for 100 steps.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub grid_w: usize,
    pub grid_h: usize,
    /// meters
    pub cell_size: f64,
    pub carrier_freq_ghz: f64,
    /// Hz
    pub total_bandwidth: f64,
    /// dBm
    pub tx_power_dbm: f64,
    pub n_users: usize,
    pub horizon: usize,
    /// meters
    pub uav_altitude: f64,
    /// dBm/Hz
    pub noise_psd_dbm_hz: f64,
    /// dB
    pub noise_figure_db: f64,
    /// cells
    pub wind_sigma: f64,
    pub wind_amplitude: f64,
    /// dB of extra loss at unit wind
    pub wind_atten_max_db: f64,
    /// cells per step
    pub wind_drift: (f64, f64),
    /// cells
    pub wind_drift_jitter_std: f64,
    pub slip_coeff: f64,
    /// bit/s per unit of reward
    pub reward_unit: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid_w: 64,
            grid_h: 64,
            cell_size: 4.0,
            carrier_freq_ghz: 28.0,
            total_bandwidth: 100e6,
            tx_power_dbm: 30.0,
            n_users: 10,
            horizon: 100,
            uav_altitude: 100.0,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 7.0,
            wind_sigma: 8.0,
            wind_amplitude: 1.0,
            wind_atten_max_db: 20.0,
            wind_drift: (0.5, 0.3),
            wind_drift_jitter_std: 0.1,
            slip_coeff: 0.5,
            reward_unit: 1e8,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let invalid = |field: &'static str, reason: &str| {
            Err(EnvError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if self.grid_w < 2 {
            return invalid("grid_w", "must be at least 2");
        }
        if self.grid_h < 2 {
            return invalid("grid_h", "must be at least 2");
        }
        if self.n_users < 1 {
            return invalid("n_users", "must be at least 1");
        }
        if self.n_users > self.grid_w * self.grid_h {
            return Err(EnvError::TooManyUsers {
                users: self.n_users,
                cells: self.grid_w * self.grid_h,
            });
        }
        if self.horizon < 1 {
            return invalid("horizon", "must be at least 1");
        }
        let positive = [
            ("cell_size", self.cell_size),
            ("carrier_freq_ghz", self.carrier_freq_ghz),
            ("total_bandwidth", self.total_bandwidth),
            ("uav_altitude", self.uav_altitude),
            ("wind_sigma", self.wind_sigma),
            ("reward_unit", self.reward_unit),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return invalid(field, "must be positive and finite");
            }
        }
        if !(self.wind_amplitude > 0.0 && self.wind_amplitude <= 1.0) {
            return invalid("wind_amplitude", "must lie in (0, 1]");
        }
        let non_negative = [
            ("wind_atten_max_db", self.wind_atten_max_db),
            ("wind_drift_jitter_std", self.wind_drift_jitter_std),
            ("noise_figure_db", self.noise_figure_db),
        ];
        for (field, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(field, "must be non-negative and finite");
            }
        }
        if !(0.0..=2.0).contains(&self.slip_coeff) {
            return invalid("slip_coeff", "must lie in [0, 2]");
        }
        for (field, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
            ("wind_drift", self.wind_drift.0),
            ("wind_drift", self.wind_drift.1),
        ] {
            if !v.is_finite() {
                return invalid(field, "must be finite");
            }
        }
        Ok(())
    }

    /// Observation length: position (2), 5×5 wind patch (25), one distance
    /// per user.
    pub fn observation_len(&self) -> usize {
        2 + PATCH_SIDE * PATCH_SIDE + self.n_users
    }

    pub fn per_user_bandwidth(&self) -> f64 {
        self.total_bandwidth / self.n_users as f64
    }

    /// Noise power over one user's band, in dBm.
    pub fn noise_dbm(&self) -> f64 {
        self.noise_psd_dbm_hz + 10.0 * self.per_user_bandwidth().log10() + self.noise_figure_db
    }

    /// Grid diagonal in meters.
    pub fn max_diagonal(&self) -> f64 {
        ((self.grid_w * self.grid_w + self.grid_h * self.grid_h) as f64).sqrt() * self.cell_size
    }
}

pub const PATCH_SIDE: usize = 5;
