use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Drifting Gaussian wind hotspot in continuous grid coordinates (cells).
///
/// The center moves by `velocity` plus isotropic Gaussian jitter each step
/// and bounces off the grid walls: the coordinate is mirrored back inside and
/// that velocity component flips sign.
#[derive(Clone, Debug, PartialEq)]
pub struct WeatherField {
    pub center: (f64, f64),
    pub velocity: (f64, f64),
    pub sigma: f64,
    pub amplitude: f64,
}

impl WeatherField {
    /// `amplitude · exp(−‖pos − center‖² / 2σ²)`.
    pub fn wind_at(&self, pos: (f64, f64)) -> f64 {
        let dx = pos.0 - self.center.0;
        let dy = pos.1 - self.center.1;
        self.amplitude * (-(dx * dx + dy * dy) / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, jitter_std: f64, bounds: (f64, f64), rng: &mut R) {
        let (jx, jy) = if jitter_std > 0.0 {
            let n = Normal::new(0.0, jitter_std).expect("jitter std is finite and positive");
            (n.sample(rng), n.sample(rng))
        } else {
            (0.0, 0.0)
        };
        let (x, flip_x) = reflect(self.center.0 + self.velocity.0 + jx, bounds.0);
        let (y, flip_y) = reflect(self.center.1 + self.velocity.1 + jy, bounds.1);
        self.center = (x, y);
        if flip_x {
            self.velocity.0 = -self.velocity.0;
        }
        if flip_y {
            self.velocity.1 = -self.velocity.1;
        }
    }
}

/// Mirrors `v` into `[0, limit]`; the flag reports an odd number of bounces.
fn reflect(mut v: f64, limit: f64) -> (f64, bool) {
    let mut flipped = false;
    while !(0.0..=limit).contains(&v) {
        v = if v > limit { 2.0 * limit - v } else { -v };
        flipped = !flipped;
    }
    (v, flipped)
}
