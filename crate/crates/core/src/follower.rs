//! Carrot-chasing line follower.
//!
//! The UAV sits at the camera-frame origin. A virtual target is placed `L`
//! meters ahead along the estimated midline and `e` meters across it, and a
//! PID per axis (along-track, cross-track) turns the target displacement
//! into a planar velocity command.

use serde::{Deserialize, Serialize};

use crate::geometry::CameraLine;
use crate::linalg::Vec2;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PidGains<T> {
    pub kp: T,
    pub ki: T,
    pub kd: T,
}

impl<T: Real> PidGains<T> {
    pub fn new(kp: T, ki: T, kd: T) -> Self {
        Self { kp, ki, kd }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }
}

/// Single-axis PID memory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PidState<T> {
    pub integral: T,
    pub prev_error: Option<T>,
}

impl<T: Real> PidState<T> {
    /// Advances the controller by `dt` and returns its output. The
    /// integral is clamped to `[-limit, limit]`.
    pub fn step(&mut self, gains: &PidGains<T>, error: T, dt: T, limit: T) -> T {
        self.integral = (self.integral + error * dt).max(-limit).min(limit);
        let deriv = match self.prev_error {
            Some(p) => (error - p) / dt,
            None => T::zero(),
        };
        self.prev_error = Some(error);
        gains.kp * error + gains.ki * self.integral + gains.kd * deriv
    }

    pub fn reset(&mut self) {
        *self = Self { integral: T::zero(), prev_error: None };
    }
}

/// Follower tuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarrotConfig<T> {
    /// Carrot distance ahead of the UAV along the line, meters.
    pub lookahead: T,
    pub along: PidGains<T>,
    pub cross: PidGains<T>,
    pub max_speed: T,
    pub cruise_speed: T,
    /// Anti-windup bound on each integral, meter-seconds.
    pub integral_limit: T,
}

impl<T: Real> Default for CarrotConfig<T> {
    fn default() -> Self {
        let g = PidGains::new(T::lit(0.8), T::lit(0.02), T::lit(0.1));
        Self {
            lookahead: T::lit(3.0),
            along: g,
            cross: g,
            max_speed: T::lit(1.0),
            cruise_speed: T::lit(0.6),
            integral_limit: T::one(),
        }
    }
}

impl<T: Real> CarrotConfig<T> {
    pub fn is_valid(&self) -> bool {
        self.lookahead > T::zero() && self.cruise_speed > T::zero() && self.max_speed >= self.cruise_speed
    }
}

/// Planar velocity command in the camera frame, m/s.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand<T> {
    pub vx: T,
    pub vy: T,
}

impl<T: Real> VelocityCommand<T> {
    pub fn new(vx: T, vy: T) -> Self {
        Self { vx, vy }
    }

    pub fn speed(&self) -> T {
        self.vx.hypot(self.vy)
    }

    /// Scales the command down to at most `max` in norm.
    pub fn clamped(self, max: T) -> Self {
        let s = self.speed();
        if s > max && s > T::zero() {
            let k = max / s;
            Self::new(self.vx * k, self.vy * k)
        } else {
            self
        }
    }
}

/// Signed distance from the camera origin to the line, `-b / sqrt(a^2 + 1)`.
pub fn cross_track_error<T: Real>(line: &CameraLine<T>) -> T {
    -line.b / (line.a * line.a + T::one()).sqrt()
}

/// Unit vectors along (`+x` side) and across the line.
///
/// The normal is oriented so that stepping `e` along it from the origin
/// lands on the line.
pub fn line_axes<T: Real>(line: &CameraLine<T>) -> (Vec2<T>, Vec2<T>) {
    let n = (line.a * line.a + T::one()).sqrt();
    (Vec2::new(T::one() / n, line.a / n), Vec2::new(line.a / n, -T::one() / n))
}

/// Virtual target `L * t + e * n` in the camera frame.
pub fn carrot_target<T: Real>(line: &CameraLine<T>, e: T, lookahead: T) -> Vec2<T> {
    let (t, n) = line_axes(line);
    t.scale(lookahead) + n.scale(e)
}

/// PID memory for both follower axes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FollowerState<T> {
    pub along: PidState<T>,
    pub cross: PidState<T>,
}

impl<T: Real> FollowerState<T> {
    pub fn reset(&mut self) {
        self.along.reset();
        self.cross.reset();
    }
}

/// One control period of line following.
pub fn follow_step<T: Real>(
    line: &CameraLine<T>,
    cfg: &CarrotConfig<T>,
    dt: T,
    state: &mut FollowerState<T>,
) -> VelocityCommand<T> {
    let e = cross_track_error(line);
    let (t, n) = line_axes(line);
    let target = carrot_target(line, e, cfg.lookahead);
    let along = state.along.step(&cfg.along, target.dot(t), dt, cfg.integral_limit);
    let along = along.max(T::zero()).min(cfg.cruise_speed);
    let cross = state.cross.step(&cfg.cross, target.dot(n), dt, cfg.integral_limit);
    let v = t.scale(along) + n.scale(cross);
    VelocityCommand::new(v.x, v.y).clamped(cfg.max_speed)
}

/// Two-axis PID towards a point, used for GPS transit and position hold.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointController<T> {
    pub x: PidState<T>,
    pub y: PidState<T>,
}

impl<T: Real> PointController<T> {
    /// Command towards `offset` (target minus UAV, camera frame), limited
    /// to `speed`.
    pub fn step(&mut self, gains: &PidGains<T>, offset: Vec2<T>, dt: T, speed: T, limit: T) -> VelocityCommand<T> {
        let vx = self.x.step(gains, offset.x, dt, limit);
        let vy = self.y.step(gains, offset.y, dt, limit);
        VelocityCommand::new(vx, vy).clamped(speed)
    }

    pub fn reset(&mut self) {
        self.x.reset();
        self.y.reset();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use crate::geometry::{world_line_to_camera, WorldLine};
    use proptest::prelude::*;

    #[test]
    fn cross_track_examples() {
        assert_eq!(cross_track_error(&CameraLine::new(0.0, 0.0)), 0.0);
        assert_eq!(cross_track_error(&CameraLine::new(0.0, 2.0)), -2.0);
        assert!((cross_track_error(&CameraLine::new(1.0, 2f64.sqrt())) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn carrot_examples() {
        let on_axis = CameraLine::new(0.0, 0.0);
        assert_eq!(carrot_target(&on_axis, 0.0, 2.0), Vec2::new(2.0, 0.0));
        // pure perpendicular step from the origin lands on the foot point
        let offset = CameraLine::<f64>::new(0.0, 1.0);
        let e = cross_track_error(&offset);
        let t = carrot_target(&offset, e, 0.0);
        assert!(t.x.abs() < 1e-15 && (t.y - 1.0).abs() < 1e-15);
        let diag = CameraLine::new(1.0, 0.0);
        let t = carrot_target(&diag, 0.0, 2f64.sqrt());
        assert!((t.x - 1.0).abs() < 1e-12 && (t.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aligned_flight_runs_at_cruise() {
        let cfg = CarrotConfig::<f64>::default();
        let mut st = FollowerState::default();
        let mut cmd = VelocityCommand::default();
        for _ in 0..10 {
            cmd = follow_step(&CameraLine::new(0.0, 0.0), &cfg, 0.2, &mut st);
        }
        assert!((cmd.vx - 0.6).abs() <= 0.03 && cmd.vy.abs() < 1e-12);
    }

    #[test]
    fn zero_gains_zero_command() {
        let cfg = CarrotConfig { along: PidGains::zero(), cross: PidGains::zero(), ..CarrotConfig::default() };
        let mut st = FollowerState::default();
        let c = follow_step(&CameraLine::new(0.3, -1.2), &cfg, 0.2, &mut st);
        assert_eq!(c, VelocityCommand::new(0.0, 0.0));
    }

    /// Point-mass loop with first-order velocity response, straight world
    /// line `y = 0` and the UAV starting 1 m off it.
    fn closed_loop(seconds: f64) -> Vec<f64> {
        let cfg = CarrotConfig::default();
        let (dt_sim, tau) = (1.0 / 30.0, 0.5);
        let line = WorldLine::new(0.0, 0.0);
        let mut pose = Pose2D::new(0.0, 1.0, 0.0, 15.0);
        let mut vel = Vec2::new(0.0, 0.0);
        let mut cmd = VelocityCommand::default();
        let mut st = FollowerState::default();
        let mut errs = Vec::new();
        let steps = (seconds / dt_sim) as usize;
        for k in 0..steps {
            if k % 6 == 0 {
                let obs = world_line_to_camera(&line, &pose).unwrap();
                errs.push(cross_track_error(&obs));
                cmd = follow_step(&obs, &cfg, 0.2, &mut st);
            }
            let alpha = 1.0 - (-dt_sim / tau).exp();
            vel = vel + (Vec2::new(cmd.vx, cmd.vy) - vel).scale(alpha);
            pose = Pose2D::new(pose.x + vel.x * dt_sim, pose.y + vel.y * dt_sim, 0.0, 15.0);
        }
        errs
    }

    #[test]
    fn step_offset_decays() {
        let errs = closed_loop(20.0);
        let t_settle = errs.iter().position(|e| e.abs() < 0.1).unwrap() as f64 * 0.2;
        assert!(t_settle <= 10.0, "settled after {t_settle} s");
        let mut prev = f64::INFINITY;
        let mut settled = false;
        for &e in &errs[1..] {
            if settled {
                assert!(e.abs() < 0.05);
            } else {
                assert!(e.abs() <= prev + 1e-12, "|e| grew from {prev} to {}", e.abs());
                prev = e.abs();
                settled = e.abs() < 0.05;
            }
        }
        assert!(errs.last().unwrap().abs() < 0.05);
    }

    #[test]
    fn point_controller_limits_speed() {
        let mut pc = PointController::<f64>::default();
        let g = PidGains::new(0.8, 0.0, 0.0);
        let c = pc.step(&g, Vec2::new(30.0, -40.0), 0.2, 0.6, 1.0);
        assert!((c.speed() - 0.6).abs() < 1e-12);
        assert!((c.vx / c.vy + 0.75).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn error_is_origin_distance(a in -5.0..5.0f64, b in -50.0..50.0f64) {
            let l = CameraLine::new(a, b);
            let e = cross_track_error(&l);
            // signed distance of the origin from the line, measured towards +y
            prop_assert!((e - l.signed_distance(0.0, 0.0)).abs() < 1e-12);
            let foot = l.foot_of(0.0, 0.0);
            prop_assert!((e.abs() - foot.norm()).abs() < 1e-9);
        }

        #[test]
        fn carrot_distance(a in -5.0..5.0f64, b in -50.0..50.0f64, lk in 0.0..10.0f64) {
            let l = CameraLine::new(a, b);
            let e = cross_track_error(&l);
            let t = carrot_target(&l, e, lk);
            prop_assert!((t.norm() - (lk * lk + e * e).sqrt()).abs() < 1e-9);
            prop_assert!(l.residual(t.x, t.y).abs() < 1e-9 * (1.0 + a.abs()) * (1.0 + b.abs()));
        }

        #[test]
        fn commands_bounded(a in -5.0..5.0f64, b in -50.0..50.0f64, steps in 1usize..30) {
            let cfg = CarrotConfig::<f64>::default();
            let mut st = FollowerState::default();
            for _ in 0..steps {
                let c = follow_step(&CameraLine::new(a, b), &cfg, 0.2, &mut st);
                prop_assert!(c.speed() <= cfg.max_speed + 1e-12);
            }
        }
    }
}
