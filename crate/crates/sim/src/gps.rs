//! GPS error model: constant bias, slow random walk and white noise.

use pvrow_core::{Pose, Vec2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpsModel {
    /// Constant offset, meters.
    pub bias: [f64; 2],
    /// Random-walk intensity per axis, m/sqrt(s).
    pub walk_sigma: f64,
    /// Per-reading noise per axis, meters.
    pub white_sigma: f64,
    /// Random-walk sampling interval, seconds.
    pub walk_dt: f64,
    pub seed: u64,
}

impl Default for GpsModel {
    fn default() -> Self {
        Self { bias: [1.5, -1.0], walk_sigma: 0.01, white_sigma: 0.02, walk_dt: 0.1, seed: 0 }
    }
}

impl GpsModel {
    /// Error-free receiver.
    pub fn perfect() -> Self {
        Self { bias: [0.0; 2], walk_sigma: 0.0, white_sigma: 0.0, ..Self::default() }
    }
}

/// Stateful receiver that extends the random walk on demand, so repeated
/// reads are cheap. Readings depend only on the model and `t`.
#[derive(Clone, Debug)]
pub struct GpsReceiver {
    model: GpsModel,
    walk: Vec<Vec2<f64>>,
    rng: ChaCha8Rng,
}

impl GpsReceiver {
    pub fn new(model: GpsModel) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        rng.set_stream(1);
        Self { model, walk: vec![Vec2::zero()], rng }
    }

    pub fn model(&self) -> &GpsModel {
        &self.model
    }

    /// Random-walk displacement at time `t >= 0`, linear between samples.
    pub fn walk_at(&mut self, t: f64) -> Vec2<f64> {
        let m = self.model;
        if m.walk_sigma == 0.0 || t <= 0.0 {
            return Vec2::zero();
        }
        let k = (t / m.walk_dt).floor() as usize;
        let step = m.walk_sigma * m.walk_dt.sqrt();
        while self.walk.len() < k + 2 {
            let last = *self.walk.last().expect("walk starts at the origin");
            let dx: f64 = StandardNormal.sample(&mut self.rng);
            let dy: f64 = StandardNormal.sample(&mut self.rng);
            self.walk.push(last + Vec2::new(dx * step, dy * step));
        }
        let frac = t / m.walk_dt - k as f64;
        self.walk[k] + (self.walk[k + 1] - self.walk[k]).scale(frac)
    }

    /// Reported pose for the true pose at time `t`. Yaw and height pass
    /// through unchanged.
    pub fn read(&mut self, truth: &Pose, t: f64) -> Pose {
        let m = self.model;
        let walk = self.walk_at(t);
        let (mut nx, mut ny) = (0.0, 0.0);
        if m.white_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(m.seed ^ t.to_bits());
            rng.set_stream(2);
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            nx = a * m.white_sigma;
            ny = b * m.white_sigma;
        }
        Pose::new(truth.x + m.bias[0] + walk.x + nx, truth.y + m.bias[1] + walk.y + ny, truth.theta, truth.z_g)
    }
}

/// One-shot reading; replays the walk from zero, so prefer
/// [`GpsReceiver`] in loops.
pub fn gps_read(truth: &Pose, model: &GpsModel, t: f64) -> Pose {
    GpsReceiver::new(*model).read(truth, t)
}
