//! Filter, follower and mission in a kinematic loop with exact line
//! observations.

use pvrow_core::ekf::{MidlineFilter, NoiseConfig, Observation, Sensor};
use pvrow_core::follower::{follow_step, CarrotConfig, FollowerState, PidGains, PointController};
use pvrow_core::geometry::world_line_to_camera;
use pvrow_core::mission::{Directive, Mission, MissionConfig, MissionController, Phase, Waypoint};
use pvrow_core::{Pose2D, Vec2, WorldLine};

fn track_line<T: pvrow_core::Real>(start_y: T) -> (T, T) {
    // constant-speed kinematic vehicle following a fixed line from an offset
    let truth = WorldLine::new(T::zero(), T::zero());
    let cfg = CarrotConfig::<T>::default();
    let dt = T::lit(0.2);
    let mut st = FollowerState::default();
    let mut pose = Pose2D::new(T::zero(), start_y, T::zero(), T::lit(15.0));
    let mut max_speed = T::zero();
    for _ in 0..300 {
        let line = world_line_to_camera(&truth, &pose).unwrap();
        let c = follow_step(&line, &cfg, dt, &mut st);
        max_speed = max_speed.max(c.speed());
        let v = pose.rotate_to_world(Vec2::new(c.vx, c.vy));
        pose = Pose2D::new(pose.x + v.x * dt, pose.y + v.y * dt, pose.theta, pose.z_g);
    }
    (pose.y, max_speed)
}

#[test]
fn follower_converges_onto_the_line_in_both_precisions() {
    let (y, vmax) = track_line(2.0f64);
    assert!(y.abs() < 0.01, "{y}");
    assert!(vmax <= 1.0 + 1e-12);
    let (y, _) = track_line(-2.0f32);
    assert!(y.abs() < 0.01, "{y}");
}

/// Flies a two-row mission with perfect observations of the true rows and
/// checks the phase sequence and the final position.
#[test]
fn mission_loop_covers_all_rows() {
    let rows = [WorldLine::<f64>::new(0.0, 0.0), WorldLine::new(0.0, 6.0)];
    // waypoints 0.8 m off the rows: relative transit and the filter absorb it
    let wps = vec![
        Waypoint::start(0, 0.0, 0.8),
        Waypoint::end(0, 30.0, 0.8),
        Waypoint::start(1, 30.0, 6.8),
        Waypoint::end(1, 0.0, 6.8),
    ];
    let mission = Mission::new(wps).unwrap();
    let (s, e) = mission.row(0);
    let noise = NoiseConfig::<f64>::default();
    let mut ekf = MidlineFilter::from_waypoints(s, e, noise).unwrap();
    let mut ctl = MissionController::new(mission, MissionConfig::default());
    let carrot = CarrotConfig::default();
    let gains = PidGains::new(0.8, 0.02, 0.1);
    let (mut st, mut point) = (FollowerState::default(), PointController::default());
    let mut pose = Pose2D::new(-3.0, -2.0, 0.0, 15.0);
    let dt = 0.2;
    let mut phases = Vec::new();
    let mut worst_track = 0.0f64;
    for k in 0..3000 {
        let t = k as f64 * dt;
        ekf.predict();
        let row = ctl.state().row;
        if matches!(ctl.state().phase, Phase::Hold | Phase::TrackRow) {
            let o = world_line_to_camera(&rows[row], &pose).unwrap();
            let obs = [Observation::new(o, Sensor::Thermal, t)];
            if let Some((_, pvrow_core::ekf::Correction::Accepted(_))) = ekf.correct_nearest(&obs, &pose) {
                ctl.note_accepted(t);
            }
        }
        let mut v = Vec2::zero();
        for d in ctl.step(t, &pose, ekf.state()) {
            match d {
                Directive::ReinitEkf { start, end } => ekf.reinit(start, end).unwrap(),
                Directive::PhaseChanged { to, .. } => {
                    phases.push(to);
                    st.reset();
                    point.reset();
                }
                Directive::GoTo(p) | Directive::HoldAt(p) => {
                    let c = point.step(&gains, p.to_vec() - pose.position().to_vec(), dt, 0.6, 1.0);
                    v = Vec2::new(c.vx, c.vy);
                }
                Directive::TrackLine => {
                    let (s, e) = ctl.current_row();
                    let heading = if e.x > s.x { 0.0 } else { std::f64::consts::PI };
                    let frame = Pose2D::new(pose.x, pose.y, heading, 15.0);
                    let c = follow_step(&world_line_to_camera(&ekf.state().line, &frame).unwrap(), &carrot, dt, &mut st);
                    v = frame.rotate_to_world(Vec2::new(c.vx, c.vy));
                    if pose.x > 5.0 && pose.x < 25.0 {
                        worst_track = worst_track.max((pose.y - rows[row].b).abs());
                    }
                }
                _ => {}
            }
        }
        if ctl.is_done() {
            break;
        }
        pose = Pose2D::new(pose.x + v.x * dt, pose.y + v.y * dt, 0.0, 15.0);
    }
    use Phase::*;
    assert_eq!(phases, vec![Hold, TrackRow, Transit, Hold, TrackRow, Done]);
    assert!(worst_track < 0.05, "{worst_track}");
    assert!(pose.x < 1.0 && (pose.y - 6.0).abs() < 0.1, "{pose:?}");
}
