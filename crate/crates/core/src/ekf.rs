//! Extended Kalman filter over the world-frame midline `m = (a, b)`.
//!
//! The row does not move, so the process model is the identity with a tiny
//! additive noise `Q`. Observations are camera-frame lines; the observation
//! model is [`world_line_to_camera`] evaluated at the UAV pose.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{world_line_to_camera, CameraLine, Pose2D, WorldLine, WorldPoint, SINGULAR_EPS};
use crate::linalg::{Mat2, Vec2};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    Thermal,
    Rgb,
}

/// A detected line in the camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation<T> {
    pub line: CameraLine<T>,
    pub sensor: Sensor,
    /// Acquisition time, seconds.
    pub timestamp: T,
}

impl<T: Real> Observation<T> {
    pub fn new(line: CameraLine<T>, sensor: Sensor, timestamp: T) -> Self {
        Self { line, sensor, timestamp }
    }

    pub fn is_finite(&self) -> bool {
        self.line.is_finite() && self.timestamp.is_finite()
    }
}

/// Noise model and gate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig<T> {
    /// Process noise added per prediction.
    pub q: Mat2<T>,
    pub r_thermal: Mat2<T>,
    pub r_rgb: Mat2<T>,
    /// Mahalanobis acceptance bound (chi-square, 2 dof).
    pub gate_threshold: T,
    /// Covariance assigned at initialisation.
    pub prior: Mat2<T>,
}

impl<T: Real> Default for NoiseConfig<T> {
    fn default() -> Self {
        Self {
            q: Mat2::diag(T::lit(1e-8), T::lit(1e-8)),
            r_thermal: Mat2::diag(T::lit(4e-4), T::lit(1e-2)),
            r_rgb: Mat2::diag(T::lit(9e-4), T::lit(2e-2)),
            gate_threshold: T::lit(9.21),
            prior: Mat2::diag(T::lit(0.25), T::lit(4.0)),
        }
    }
}

impl<T: Real> NoiseConfig<T> {
    pub fn r_for(&self, sensor: Sensor) -> &Mat2<T> {
        match sensor {
            Sensor::Thermal => &self.r_thermal,
            Sensor::Rgb => &self.r_rgb,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("q", &self.q), ("r_thermal", &self.r_thermal), ("r_rgb", &self.r_rgb), ("prior", &self.prior)] {
            let (lo, _) = m.sym_eigenvalues();
            let sym = (m.m[0][1] - m.m[1][0]).abs() <= T::lit(1e-12);
            let strict = name != "q";
            if !m.is_finite() || !sym || lo < T::zero() || (strict && lo <= T::zero()) {
                return Err(Error::InvalidThresholds(format!("{name} must be symmetric positive definite")));
            }
        }
        if !(self.gate_threshold > T::zero()) {
            return Err(Error::InvalidThresholds("gate threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Midline estimate and its covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MidlineState<T> {
    pub line: WorldLine<T>,
    pub p: Mat2<T>,
}

impl<T: Real> MidlineState<T> {
    pub fn new(line: WorldLine<T>, p: Mat2<T>) -> Self {
        Self { line, p }
    }

    pub fn mean(&self) -> Vec2<T> {
        Vec2::new(self.line.a, self.line.b)
    }
}

/// Line through the row's waypoint pair.
///
/// `prior` is the diagonal covariance of the slope and of the intercept
/// measured at the start waypoint. Mapped to `(a, b)`, whose intercept sits
/// at `x = 0`, it picks up the lever arm `x_s` of the start waypoint.
pub fn init_from_waypoints<T: Real>(start: WorldPoint<T>, end: WorldPoint<T>, prior: Mat2<T>) -> Result<MidlineState<T>> {
    let line = WorldLine::through(start.x, start.y, end.x, end.y)?;
    Ok(MidlineState::new(line, prior_at(prior, start.x)))
}

/// Covariance of `(a, b)` for a covariance `prior` of the slope and of the
/// intercept at abscissa `x`.
pub fn prior_at<T: Real>(prior: Mat2<T>, x: T) -> Mat2<T> {
    let t = Mat2::new(T::one(), T::zero(), -x, T::one());
    (t * prior * t.transpose()).symmetrized()
}

/// Identity motion: `P <- P + Q`.
pub fn predict<T: Real>(s: &MidlineState<T>, noise: &NoiseConfig<T>) -> MidlineState<T> {
    MidlineState::new(s.line, s.p + noise.q)
}

/// Expected observation of the state from `pose`.
pub fn observe<T: Real>(s: &MidlineState<T>, pose: &Pose2D<T>) -> Result<CameraLine<T>> {
    world_line_to_camera(&s.line, pose)
}

/// Jacobian of the observation model with respect to `(a, b)`.
pub fn jacobian_h<T: Real>(s: &MidlineState<T>, pose: &Pose2D<T>) -> Result<Mat2<T>> {
    let (sin, cos) = pose.theta.sin_cos();
    let (a, b) = (s.line.a, s.line.b);
    let den = cos + sin * a;
    if !(den.abs() >= T::lit(SINGULAR_EPS)) {
        return Err(Error::SingularObservation { denominator: den.to_f64_lossy() });
    }
    let den2 = den * den;
    let num = pose.x * a + b - pose.y;
    Ok(Mat2::new(T::one() / den2, T::zero(), (pose.x * den - sin * num) / den2, T::one() / den))
}

/// Result of testing an observation against the prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateOutcome<T> {
    pub accepted: bool,
    /// `o - h(m)`.
    pub innovation: Vec2<T>,
    /// `nu^T S^-1 nu`.
    pub mahalanobis: T,
}

struct Innovation<T> {
    nu: Vec2<T>,
    h: Mat2<T>,
    s_inv: Mat2<T>,
}

fn innovation<T: Real>(
    s: &MidlineState<T>,
    o: &Observation<T>,
    pose: &Pose2D<T>,
    noise: &NoiseConfig<T>,
) -> Result<Innovation<T>> {
    let expected = observe(s, pose)?;
    let h = jacobian_h(s, pose)?;
    let cov = (h * s.p * h.transpose() + *noise.r_for(o.sensor)).symmetrized();
    let s_inv = cov.inverse().ok_or(Error::SingularObservation { denominator: cov.det().to_f64_lossy() })?;
    let nu = Vec2::new(o.line.a - expected.a, o.line.b - expected.b);
    Ok(Innovation { nu, h, s_inv })
}

/// Mahalanobis test of an observation.
pub fn gate<T: Real>(
    s: &MidlineState<T>,
    o: &Observation<T>,
    pose: &Pose2D<T>,
    noise: &NoiseConfig<T>,
) -> Result<GateOutcome<T>> {
    let inn = innovation(s, o, pose, noise)?;
    let d = inn.nu.dot(inn.s_inv.mul_vec(inn.nu));
    // an infinite gate accepts everything, including NaN distances
    let accepted = noise.gate_threshold == T::infinity() || d <= noise.gate_threshold;
    Ok(GateOutcome { accepted, innovation: inn.nu, mahalanobis: d })
}

/// Kalman correction with `o`. The caller is responsible for gating.
pub fn update<T: Real>(
    s: &MidlineState<T>,
    o: &Observation<T>,
    pose: &Pose2D<T>,
    noise: &NoiseConfig<T>,
) -> Result<MidlineState<T>> {
    let inn = innovation(s, o, pose, noise)?;
    let k = s.p * inn.h.transpose() * inn.s_inv;
    let dm = k.mul_vec(inn.nu);
    let p = ((Mat2::identity() - k * inn.h) * s.p).symmetrized();
    Ok(MidlineState::new(WorldLine::new(s.line.a + dm.x, s.line.b + dm.y), p))
}

/// What the filter did with one observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Correction<T> {
    Accepted(GateOutcome<T>),
    Rejected(GateOutcome<T>),
}

/// Stateful filter: one owner, driven by the mission loop.
#[derive(Clone, Debug)]
pub struct MidlineFilter<T> {
    state: MidlineState<T>,
    noise: NoiseConfig<T>,
}

impl<T: Real> MidlineFilter<T> {
    pub fn new(state: MidlineState<T>, noise: NoiseConfig<T>) -> Self {
        Self { state, noise }
    }

    pub fn from_waypoints(start: WorldPoint<T>, end: WorldPoint<T>, noise: NoiseConfig<T>) -> Result<Self> {
        Ok(Self::new(init_from_waypoints(start, end, noise.prior)?, noise))
    }

    /// Restarts the estimate from a new waypoint pair.
    pub fn reinit(&mut self, start: WorldPoint<T>, end: WorldPoint<T>) -> Result<()> {
        self.state = init_from_waypoints(start, end, self.noise.prior)?;
        Ok(())
    }

    pub fn state(&self) -> &MidlineState<T> {
        &self.state
    }

    pub fn noise(&self) -> &NoiseConfig<T> {
        &self.noise
    }

    pub fn predict(&mut self) {
        self.state = predict(&self.state, &self.noise);
    }

    /// Gates and, if accepted, applies one observation. A rejected
    /// observation leaves the state untouched.
    pub fn correct(&mut self, o: &Observation<T>, pose: &Pose2D<T>) -> Result<Correction<T>> {
        let g = gate(&self.state, o, pose, &self.noise)?;
        if !g.accepted {
            return Ok(Correction::Rejected(g));
        }
        self.state = update(&self.state, o, pose, &self.noise)?;
        Ok(Correction::Accepted(g))
    }

    /// Applies the candidate closest to the prediction (nearest neighbour
    /// in Mahalanobis distance), if it passes the gate. Returns its index.
    pub fn correct_nearest(&mut self, candidates: &[Observation<T>], pose: &Pose2D<T>) -> Option<(usize, Correction<T>)> {
        let mut best: Option<(usize, GateOutcome<T>)> = None;
        for (i, o) in candidates.iter().enumerate() {
            if let Ok(g) = gate(&self.state, o, pose, &self.noise) {
                if g.mahalanobis.is_finite() && best.is_none_or(|(_, b)| g.mahalanobis < b.mahalanobis) {
                    best = Some((i, g));
                }
            }
        }
        let (i, g) = best?;
        if !g.accepted {
            return Some((i, Correction::Rejected(g)));
        }
        match update(&self.state, &candidates[i], pose, &self.noise) {
            Ok(s) => {
                self.state = s;
                Some((i, Correction::Accepted(g)))
            }
            Err(_) => Some((i, Correction::Rejected(g))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noise() -> NoiseConfig<f64> {
        NoiseConfig::default()
    }

    fn pose(x: f64, y: f64, t: f64) -> Pose2D<f64> {
        Pose2D::new(x, y, t, 15.0)
    }

    fn assert_psd(p: &Mat2<f64>) {
        assert!((p.m[0][1] - p.m[1][0]).abs() <= 1e-12);
        assert!(p.sym_eigenvalues().0 >= -1e-15, "{p:?}");
    }

    /// Central differences of the observation model.
    fn fd_jacobian(s: &MidlineState<f64>, p: &Pose2D<f64>, h: f64) -> [[f64; 2]; 2] {
        let eval = |a: f64, b: f64| world_line_to_camera(&WorldLine::new(a, b), p).unwrap();
        let (a, b) = (s.line.a, s.line.b);
        let (pa, ma) = (eval(a + h, b), eval(a - h, b));
        let (pb, mb) = (eval(a, b + h), eval(a, b - h));
        [
            [(pa.a - ma.a) / (2.0 * h), (pb.a - mb.a) / (2.0 * h)],
            [(pa.b - ma.b) / (2.0 * h), (pb.b - mb.b) / (2.0 * h)],
        ]
    }

    #[test]
    fn init_examples() {
        let s = init_from_waypoints(WorldPoint::new(0.0, 0.0), WorldPoint::new(10.0, 0.0), noise().prior).unwrap();
        assert_eq!((s.line.a, s.line.b), (0.0, 0.0));
        assert_eq!(s.p, Mat2::diag(0.25, 4.0));
        let s = init_from_waypoints(WorldPoint::new(0.0, 1.0), WorldPoint::new(10.0, 2.0), noise().prior).unwrap();
        assert!((s.line.a - 0.1).abs() < 1e-15 && (s.line.b - 1.0).abs() < 1e-15);
        // prior holds at the start waypoint, whatever its abscissa
        let s = init_from_waypoints(WorldPoint::new(60.0, 3.0), WorldPoint::new(0.0, 3.0), noise().prior).unwrap();
        assert_eq!(s.p, Mat2::new(0.25, -15.0, -15.0, 904.0));
        let g = Vec2::new(60.0, 1.0);
        assert!((g.dot(s.p.mul_vec(g)) - 4.0).abs() < 1e-9);
        let e = init_from_waypoints(WorldPoint::new(0.0, 0.0), WorldPoint::new(0.0, 5.0), noise().prior);
        assert!(matches!(e, Err(Error::NearVerticalLine { .. })));
    }

    #[test]
    fn predict_examples() {
        let s = MidlineState::new(WorldLine::new(0.3, 1.0), Mat2::identity());
        let zero_q = NoiseConfig { q: Mat2::zeros(), ..noise() };
        assert_eq!(predict(&s, &zero_q), s);
        let small = NoiseConfig { q: Mat2::diag(1e-6, 1e-6), ..noise() };
        let p = predict(&s, &small);
        assert_eq!(p.p, Mat2::diag(1.0 + 1e-6, 1.0 + 1e-6));
        assert_eq!(p.line, s.line);
        let mut acc = MidlineState::new(WorldLine::new(0.0, 0.0), Mat2::zeros());
        for _ in 0..1000 {
            acc = predict(&acc, &small);
        }
        assert!((acc.p.m[0][0] - 1e-3).abs() < 1e-15 && (acc.p.m[1][1] - 1e-3).abs() < 1e-15);
        assert_eq!(acc.p.m[0][1], 0.0);
    }

    #[test]
    fn jacobian_examples() {
        let s = MidlineState::new(WorldLine::new(0.4, -2.0), Mat2::identity());
        assert_eq!(jacobian_h(&s, &pose(0.0, 0.0, 0.0)).unwrap(), Mat2::identity());
        let j = jacobian_h(&s, &pose(3.0, 1.0, 0.0)).unwrap();
        assert_eq!(j.m[1][0], 3.0);
        // tangent form of the slope derivative
        let p = pose(1.0, 2.0, 0.3);
        let t = p.theta.tan();
        let j = jacobian_h(&s, &p).unwrap();
        assert!((j.m[0][0] - (1.0 + t * t) / (1.0 + 0.4 * t).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s = MidlineState::new(WorldLine::new(rng.random_range(-2.0..2.0), rng.random_range(-20.0..20.0)), Mat2::identity());
            let p = pose(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-3.1..3.1));
            if (p.theta.cos() + p.theta.sin() * s.line.a).abs() < 0.1 {
                continue;
            }
            let an = jacobian_h(&s, &p).unwrap();
            let fd = fd_jacobian(&s, &p, 1e-6);
            for (r, (arow, frow)) in an.m.iter().zip(&fd).enumerate() {
                for (c, (x, y)) in arow.iter().zip(frow).enumerate() {
                    let err = (x - y).abs() / x.abs().max(1.0);
                    assert!(err < 1e-6, "entry ({r},{c}): {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn gate_examples() {
        let s = MidlineState::new(WorldLine::new(0.05, 1.0), Mat2::diag(1e-3, 1e-2));
        let p = pose(4.0, 0.5, 0.1);
        let exact = Observation::new(observe(&s, &p).unwrap(), Sensor::Thermal, 0.0);
        let g = gate(&s, &exact, &p, &noise()).unwrap();
        assert!(g.accepted);
        assert_eq!(g.innovation, Vec2::zero());

        let neighbour = Observation::new(CameraLine::new(exact.line.a, exact.line.b + 6.0), Sensor::Thermal, 0.0);
        assert!(!gate(&s, &neighbour, &p, &noise()).unwrap().accepted);
        let open = NoiseConfig { gate_threshold: f64::INFINITY, ..noise() };
        assert!(gate(&s, &neighbour, &p, &open).unwrap().accepted);
    }

    #[test]
    fn update_examples() {
        let s = MidlineState::new(WorldLine::new(0.05, 1.0), Mat2::diag(0.25, 4.0));
        let p = pose(2.0, 1.0, -0.2);
        let exact = Observation::new(observe(&s, &p).unwrap(), Sensor::Rgb, 0.0);
        let u = update(&s, &exact, &p, &noise()).unwrap();
        assert!((u.line.a - s.line.a).abs() < 1e-15 && (u.line.b - s.line.b).abs() < 1e-15);
        assert!(u.p.trace() < s.p.trace());
        assert_psd(&u.p);

        let deaf = NoiseConfig { r_rgb: Mat2::diag(1e12, 1e12), ..noise() };
        let off = Observation::new(CameraLine::new(0.4, 3.0), Sensor::Rgb, 0.0);
        let u = update(&s, &off, &p, &deaf).unwrap();
        assert!((u.line.a - s.line.a).abs() < 1e-9 && (u.line.b - s.line.b).abs() < 1e-9);
    }

    #[test]
    fn sensor_tag_only_selects_r() {
        let n = NoiseConfig { r_rgb: noise().r_thermal, ..noise() };
        let s = MidlineState::new(WorldLine::new(0.0, 0.0), Mat2::diag(0.25, 4.0));
        let p = pose(1.0, 0.0, 0.2);
        let line = CameraLine::new(0.1, 0.7);
        let a = update(&s, &Observation::new(line, Sensor::Thermal, 0.0), &p, &n).unwrap();
        let b = update(&s, &Observation::new(line, Sensor::Rgb, 0.0), &p, &n).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejected_observation_leaves_state_bitwise() {
        let mut f = MidlineFilter::new(MidlineState::new(WorldLine::new(0.0, 0.0), Mat2::diag(1e-4, 1e-3)), noise());
        let before = *f.state();
        let p = pose(0.0, 0.0, 0.0);
        let r = f.correct(&Observation::new(CameraLine::new(0.0, 6.0), Sensor::Thermal, 0.0), &p).unwrap();
        assert!(matches!(r, Correction::Rejected(_)));
        assert_eq!(*f.state(), before);
    }

    #[test]
    fn nearest_candidate_is_used() {
        let mut f = MidlineFilter::new(MidlineState::new(WorldLine::new(0.0, 0.0), Mat2::diag(0.01, 0.5)), noise());
        let p = pose(0.0, 0.0, 0.0);
        let cands = [
            Observation::new(CameraLine::new(0.0, 6.1), Sensor::Rgb, 0.0),
            Observation::new(CameraLine::new(0.0, 0.2), Sensor::Rgb, 0.0),
            Observation::new(CameraLine::new(0.0, -5.9), Sensor::Rgb, 0.0),
        ];
        let (i, c) = f.correct_nearest(&cands, &p).unwrap();
        assert_eq!(i, 1);
        assert!(matches!(c, Correction::Accepted(_)));
        assert!(f.state().line.b > 0.0 && f.state().line.b < 0.2);
    }

    #[test]
    fn noiseless_convergence_from_varied_poses() {
        let truth = WorldLine::new(0.1, 2.0);
        let tiny = Mat2::diag(1e-10, 1e-10);
        let n = NoiseConfig { r_thermal: tiny, gate_threshold: f64::INFINITY, ..noise() };
        let mut s = MidlineState::new(WorldLine::new(0.0, 0.0), Mat2::diag(1.0, 25.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = pose(rng.random_range(0.0..60.0), rng.random_range(-3.0..5.0), rng.random_range(-0.5..0.5));
            let o = Observation::new(world_line_to_camera(&truth, &p).unwrap(), Sensor::Thermal, 0.0);
            s = update(&s, &o, &p, &n).unwrap();
            s = predict(&s, &n);
            assert_psd(&s.p);
        }
        assert!((s.line.a - 0.1).abs() < 1e-6 && (s.line.b - 2.0).abs() < 1e-6, "{:?}", s.line);
    }

    #[test]
    fn noisy_estimate_at_fixed_pose() {
        let truth = WorldLine::new(0.1, 2.0);
        let n = NoiseConfig { r_thermal: Mat2::diag(1e-4, 2.5e-3), gate_threshold: f64::INFINITY, ..noise() };
        let p = pose(0.0, 0.0, 0.0);
        let (na, nb) = (Normal::new(0.0, 0.01).unwrap(), Normal::new(0.0, 0.05).unwrap());
        let mut ok = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = MidlineState::new(WorldLine::new(0.0, 0.0), Mat2::diag(1.0, 25.0));
            for _ in 0..50 {
                let o = CameraLine::new(truth.a + na.sample(&mut rng), truth.b + nb.sample(&mut rng));
                s = update(&predict(&s, &n), &Observation::new(o, Sensor::Thermal, 0.0), &p, &n).unwrap();
                assert_psd(&s.p);
            }
            ok += usize::from((s.line.a - 0.1).abs() < 0.02 && (s.line.b - 2.0).abs() < 0.1);
        }
        assert!(ok >= 198, "{ok}/200");
    }

    #[test]
    fn works_in_f32() {
        let mut f = MidlineFilter::<f32>::from_waypoints(WorldPoint::new(0.0, 0.0), WorldPoint::new(60.0, 0.0), NoiseConfig::default()).unwrap();
        let p = Pose2D::new(10.0, 0.5, 0.0, 15.0);
        for _ in 0..10 {
            f.predict();
            f.correct(&Observation::new(CameraLine::new(0.0, -0.3), Sensor::Thermal, 0.0), &p).unwrap();
        }
        assert!((f.state().line.b - 0.2).abs() < 0.05);
    }
}
