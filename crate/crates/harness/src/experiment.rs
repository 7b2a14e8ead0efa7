//! Closed-loop simulation of one inspection flight.
//!
//! A fixed-step clock drives the vehicle dynamics. On its sub-multiples the
//! loop renders and processes camera frames, corrects the midline filter,
//! advances the mission and computes the velocity command.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use log::{debug, info};
use pvrow_core::ekf::{Correction, MidlineFilter, Observation, Sensor};
use pvrow_core::follower::{cross_track_error, follow_step, FollowerState, PointController, VelocityCommand};
use pvrow_core::geometry::world_line_to_camera;
use pvrow_core::lineclust::{ClusterConfig, ObservedLine, PanelSpec};
use pvrow_core::mission::{AbortReason, Directive, Mission, MissionController, Phase};
use pvrow_core::rgb_seg::detect_rgb;
use pvrow_core::thermal_seg::detect_thermal;
use pvrow_core::{Geometry, Pose, Vec2, WorldPoint};
use pvrow_sim::{
    frame_seed, inject_waypoint_error, render_rgb, render_thermal, step_dynamics, GpsModel, GpsReceiver, PlantLayout,
    RowSpec, UavCommand, UavState,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::metrics::{compute_metrics, RunMetrics};
use crate::trace::{Trace, TraceRow};

const STREAM_GPS: u64 = 1;
const STREAM_THERMAL: u64 = 2;
const STREAM_RGB: u64 = 3;
const STREAM_WAYPOINTS: u64 = 4;

/// Row-level events of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub seed: u64,
    pub completed_rows: Vec<usize>,
    pub aborted_rows: Vec<(usize, AbortReason)>,
    pub mission_done: bool,
    /// Simulated flight time, seconds.
    pub sim_time: f64,
    pub thermal_frames: u64,
    pub rgb_frames: u64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub trace: Trace,
    pub summary: RunSummary,
    /// Mission actually flown, after any injected waypoint error.
    pub mission: Mission<f64>,
}

impl ExperimentResult {
    pub fn metrics(&self) -> Result<RunMetrics> {
        let mut m = compute_metrics(&self.trace)?;
        m.wall_time_s = Some(self.summary.wall_time_s);
        Ok(m)
    }

    pub fn wall_time(&self) -> Duration {
        Duration::from_secs_f64(self.summary.wall_time_s)
    }
}

/// Plant row closest to the midpoint of each mission row, oriented along
/// the flight direction.
pub fn truth_rows(plant: &PlantLayout, mission: &Mission<f64>) -> Vec<RowSpec> {
    (0..mission.row_count())
        .map(|k| {
            let (s, e) = mission.row(k);
            let mid = WorldPoint::new(0.5 * (s.x + e.x), 0.5 * (s.y + e.y));
            let mut best = plant.rows[0];
            let mut dist = f64::INFINITY;
            for r in &plant.rows {
                let d = r.segment_distance(mid);
                if d < dist {
                    dist = d;
                    best = *r;
                }
            }
            if best.direction().dot(e.to_vec() - s.to_vec()) < 0.0 {
                std::mem::swap(&mut best.start, &mut best.end);
            }
            best
        })
        .collect()
}

struct Perception {
    geom: Geometry,
    cluster: ClusterConfig,
}

impl Perception {
    fn observations(&self, lines: &[ObservedLine], sensor: Sensor, t: f64) -> Vec<Observation<f64>> {
        lines
            .iter()
            .filter_map(|l| l.to_camera_line(&self.geom).ok())
            .map(|l| Observation::new(l, sensor, t))
            .filter(Observation::is_finite)
            .collect()
    }
}

fn dump(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let io = |e| HarnessError::io(path, e);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write(&mut w).and_then(|()| w.flush()).map_err(io)
}

/// Heading of the filtered midline, pointing along the row's flight
/// direction.
fn line_heading(a: f64, along: Vec2<f64>) -> f64 {
    let h = a.atan();
    if along.x + a * along.y < 0.0 {
        h + std::f64::consts::PI
    } else {
        h
    }
}

/// Runs one experiment to completion or until `max_time`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let started = Instant::now();
    let plant = &cfg.plant;
    let geom = cfg.geometry()?;
    let panel = PanelSpec { width: cfg.segmentation.panel_width, module_length: cfg.segmentation.module_length };
    let perception = Perception { geom, cluster: ClusterConfig::for_panels(&geom, &panel) };
    let base = cfg.base_mission()?;
    let truth = truth_rows(plant, &base);
    let mission = match &cfg.waypoint_error {
        Some(w) => inject_waypoint_error(&base, w.rototranslation(), w.sigma, frame_seed(cfg.seed, STREAM_WAYPOINTS, 0))?,
        None => base.clone(),
    };

    let (s0, e0) = base.row(0);
    let along0 = (e0.to_vec() - s0.to_vec()).normalized().unwrap_or(Vec2::new(1.0, 0.0));
    let start = Pose::new(s0.x + cfg.start_offset[0], s0.y + cfg.start_offset[1], along0.y.atan2(along0.x), cfg.height);
    let mut uav = UavState::at_rest(start, cfg.uav);
    let mut gps = GpsReceiver::new(GpsModel { seed: frame_seed(cfg.seed, STREAM_GPS, cfg.gps.seed), ..cfg.gps });
    let (m0s, m0e) = mission.row(0);
    let mut ekf = MidlineFilter::from_waypoints(m0s, m0e, cfg.ekf.noise())?;
    let mut ctl = MissionController::new(mission.clone(), cfg.mission.config());
    let carrot = cfg.follower.carrot(cfg.cruise_speed);
    let gains = cfg.follower.gains();
    let transit_speed = cfg.follower.transit_speed.unwrap_or(cfg.cruise_speed);
    let mut follower = FollowerState::default();
    let mut point = PointController::default();

    let rates = cfg.rates;
    let dt = 1.0 / rates.tick_hz;
    let dt_ctrl = dt * f64::from(rates.control_every);
    let max_ticks = (cfg.max_time * rates.tick_hz).ceil() as u64;
    let mut summary = RunSummary { mode: cfg.mode.as_str().into(), seed: cfg.seed, ..RunSummary::default() };
    let mut rows = Vec::new();
    let mut command = UavCommand::default();
    let (mut obs_count, mut acc_count) = (0u32, 0u32);
    let mut t = 0.0;

    for tick in 0..=max_ticks {
        t = tick as f64 * dt;
        let control = tick % u64::from(rates.control_every) == 0;
        if control {
            ekf.predict();
        }

        let looking = matches!(ctl.state().phase, Phase::Hold | Phase::TrackRow);
        let truth_pose = Pose::new(uav.pose.x, uav.pose.y, uav.pose.theta, cfg.height);
        let mut frames: Vec<(Sensor, u64)> = Vec::new();
        if looking && cfg.mode.thermal() && tick % u64::from(rates.thermal_every) == 0 {
            frames.push((Sensor::Thermal, tick / u64::from(rates.thermal_every)));
        }
        if looking && cfg.mode.rgb() && tick % u64::from(rates.rgb_every) == 0 {
            frames.push((Sensor::Rgb, tick / u64::from(rates.rgb_every)));
        }
        for (sensor, index) in frames {
            let lines = match sensor {
                Sensor::Thermal => {
                    summary.thermal_frames += 1;
                    let img = render_thermal(plant, &truth_pose, &geom, frame_seed(cfg.seed, STREAM_THERMAL, index));
                    if let Some(dir) = &cfg.dump_frames {
                        dump(&dir.join(format!("thermal_{index:06}.pgm")), |w| img.write_pgm(w))?;
                    }
                    detect_thermal(&img, &cfg.segmentation.thermal, &perception.cluster)?
                }
                Sensor::Rgb => {
                    summary.rgb_frames += 1;
                    let img = render_rgb(plant, &truth_pose, &geom, frame_seed(cfg.seed, STREAM_RGB, index));
                    if let Some(dir) = &cfg.dump_frames {
                        dump(&dir.join(format!("rgb_{index:06}.ppm")), |w| img.write_ppm(w))?;
                    }
                    detect_rgb(&img, &cfg.segmentation.rgb, &perception.cluster)?
                }
            };
            let obs = perception.observations(&lines, sensor, t);
            obs_count += obs.len() as u32;
            let reading = gps.read(&truth_pose, t);
            if let Some((_, Correction::Accepted(_))) = ekf.correct_nearest(&obs, &reading) {
                acc_count += 1;
                ctl.note_accepted(t);
            }
        }

        if control {
            let reading = gps.read(&truth_pose, t);
            let directives = ctl.step(t, &reading, ekf.state());
            let mut target: Option<WorldPoint<f64>> = None;
            let mut track = false;
            for d in &directives {
                match *d {
                    Directive::GoTo(p) | Directive::HoldAt(p) => target = Some(p),
                    Directive::TrackLine => track = true,
                    Directive::ReinitEkf { start, end } => ekf.reinit(start, end)?,
                    Directive::PhaseChanged { from, to, row } => {
                        debug!("t={t:.1} row {row}: {from} -> {to}");
                        follower.reset();
                        point.reset();
                    }
                    Directive::RowCompleted { row, traveled } => {
                        info!("row {row} completed after {traveled:.1} m");
                        summary.completed_rows.push(row);
                    }
                    Directive::RowAborted { row, reason } => {
                        info!("row {row} aborted: {reason:?}");
                        summary.aborted_rows.push((row, reason));
                    }
                    Directive::MissionDone => summary.mission_done = true,
                }
            }
            let (rs, re) = ctl.current_row();
            let along = (re.to_vec() - rs.to_vec()).normalized().unwrap_or(along0);
            let row_heading = along.y.atan2(along.x);
            let state = *ekf.state();
            let heading_ref = line_heading(state.line.a, along);
            let frame = Pose::new(reading.x, reading.y, heading_ref, cfg.height);
            let tracked = world_line_to_camera(&state.line, &frame).ok();
            let e = tracked.map_or(f64::NAN, |l| cross_track_error(&l));

            let (world_v, heading) = if summary.mission_done {
                (Vec2::zero(), None)
            } else if track {
                let line = tracked.ok_or_else(|| HarnessError::Invalid("filtered midline is singular".into()))?;
                let c = follow_step(&line, &carrot, dt_ctrl, &mut follower);
                (frame.rotate_to_world(Vec2::new(c.vx, c.vy)), Some(heading_ref))
            } else if let Some(p) = target {
                let offset = p.to_vec() - reading.position().to_vec();
                let c = point.step(&gains, offset, dt_ctrl, transit_speed, cfg.follower.integral_limit);
                (Vec2::new(c.vx, c.vy), Some(row_heading))
            } else {
                (Vec2::zero(), None)
            };
            let body = uav.pose.rotate_to_camera(world_v);
            command = UavCommand { velocity: VelocityCommand::new(body.x, body.y), heading };

            let k = ctl.state().row.min(truth.len() - 1);
            let true_line = truth[k].midline().ok();
            rows.push(TraceRow {
                t,
                phase: ctl.state().phase.as_str().into(),
                row: ctl.state().row,
                x: uav.pose.x,
                y: uav.pose.y,
                theta: uav.pose.theta,
                gps_x: reading.x,
                gps_y: reading.y,
                speed: uav.speed(),
                ekf_a: state.line.a,
                ekf_b: state.line.b,
                p_trace: state.p.trace(),
                true_a: true_line.map_or(f64::NAN, |l| l.a),
                true_b: true_line.map_or(f64::NAN, |l| l.b),
                e,
                xi: truth[k].offset_of(uav.pose.position()),
                cmd_vx: world_v.x,
                cmd_vy: world_v.y,
                obs: obs_count,
                accepted: acc_count,
            });
            obs_count = 0;
            acc_count = 0;
            if summary.mission_done {
                break;
            }
        }
        uav = step_dynamics(&uav, &command, dt);
    }

    summary.sim_time = t;
    summary.wall_time_s = started.elapsed().as_secs_f64();
    info!(
        "{} seed {}: {} rows completed, {:.0} s simulated in {:.1} s",
        summary.mode,
        summary.seed,
        summary.completed_rows.len(),
        summary.sim_time,
        summary.wall_time_s
    );
    Ok(ExperimentResult { trace: Trace { cruise_speed: cfg.cruise_speed, rows }, summary, mission })
}
