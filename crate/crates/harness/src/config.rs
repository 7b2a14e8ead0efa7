//! Experiment configuration and the plant and mission file formats, all
//! TOML.

use std::path::{Path, PathBuf};

use pvrow_core::ekf::NoiseConfig;
use pvrow_core::follower::{CarrotConfig, PidGains};
use pvrow_core::mission::{Mission, MissionConfig, Waypoint, WaypointLabel};
use pvrow_core::rgb_seg::HsvThresholds;
use pvrow_core::thermal_seg::ThermalThresholds;
use pvrow_core::{Geometry, Mat2};
use pvrow_sim::{GpsModel, PlantLayout, Rototranslation, UavParams};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Cameras whose observations feed the filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraMode {
    Thermal,
    Rgb,
    #[default]
    Both,
}

impl CameraMode {
    pub fn thermal(self) -> bool {
        matches!(self, Self::Thermal | Self::Both)
    }

    pub fn rgb(self) -> bool {
        matches!(self, Self::Rgb | Self::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Thermal => "thermal",
            Self::Rgb => "rgb",
            Self::Both => "both",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSettings {
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
}

impl Default for CameraSettings {
    fn default() -> Self {
        Self { width: 640, height: 512, hfov_deg: 57.12 }
    }
}

/// Filter noise as diagonals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EkfSettings {
    pub q: [f64; 2],
    pub r_thermal: [f64; 2],
    pub r_rgb: [f64; 2],
    pub gate: f64,
    pub prior: [f64; 2],
}

impl Default for EkfSettings {
    fn default() -> Self {
        let d = NoiseConfig::<f64>::default();
        let diag = |m: Mat2<f64>| [m.m[0][0], m.m[1][1]];
        Self { q: diag(d.q), r_thermal: diag(d.r_thermal), r_rgb: diag(d.r_rgb), gate: d.gate_threshold, prior: diag(d.prior) }
    }
}

impl EkfSettings {
    pub fn noise(&self) -> NoiseConfig<f64> {
        let diag = |d: [f64; 2]| Mat2::diag(d[0], d[1]);
        NoiseConfig {
            q: diag(self.q),
            r_thermal: diag(self.r_thermal),
            r_rgb: diag(self.r_rgb),
            gate_threshold: self.gate,
            prior: diag(self.prior),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FollowerSettings {
    pub lookahead: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub max_speed: f64,
    pub integral_limit: f64,
    /// Speed limit while flying to or holding at a waypoint, m/s; the
    /// cruise speed when absent.
    pub transit_speed: Option<f64>,
}

impl Default for FollowerSettings {
    fn default() -> Self {
        let c = CarrotConfig::<f64>::default();
        Self {
            lookahead: c.lookahead,
            kp: c.along.kp,
            ki: c.along.ki,
            kd: c.along.kd,
            max_speed: c.max_speed,
            integral_limit: c.integral_limit,
            transit_speed: None,
        }
    }
}

impl FollowerSettings {
    pub fn gains(&self) -> PidGains<f64> {
        PidGains::new(self.kp, self.ki, self.kd)
    }

    pub fn carrot(&self, cruise: f64) -> CarrotConfig<f64> {
        CarrotConfig {
            lookahead: self.lookahead,
            along: self.gains(),
            cross: self.gains(),
            max_speed: self.max_speed,
            cruise_speed: cruise,
            integral_limit: self.integral_limit,
        }
    }
}

/// Mission state machine tuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionSettings {
    pub hold_threshold: f64,
    pub hold_radius: f64,
    pub arrival_radius: f64,
    pub row_timeout: f64,
    pub hold_timeout: f64,
    pub relative_transit: bool,
}

impl Default for MissionSettings {
    fn default() -> Self {
        let c = MissionConfig::<f64>::default();
        Self {
            hold_threshold: c.hold_threshold,
            hold_radius: c.hold_radius,
            arrival_radius: c.arrival_radius,
            row_timeout: c.row_timeout,
            hold_timeout: c.hold_timeout,
            relative_transit: c.relative_transit,
        }
    }
}

impl MissionSettings {
    pub fn config(&self) -> MissionConfig<f64> {
        MissionConfig {
            hold_threshold: self.hold_threshold,
            hold_radius: self.hold_radius,
            arrival_radius: self.arrival_radius,
            row_timeout: self.row_timeout,
            hold_timeout: self.hold_timeout,
            relative_transit: self.relative_transit,
        }
    }
}

/// Rigid waypoint error plus jitter, angles in degrees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaypointErrorSettings {
    pub dx: f64,
    pub dy: f64,
    pub dtheta_deg: f64,
    pub sigma: f64,
}

impl WaypointErrorSettings {
    pub fn rototranslation(&self) -> Rototranslation {
        Rototranslation { dx: self.dx, dy: self.dy, dtheta: self.dtheta_deg.to_radians() }
    }
}

/// Scheduler, in simulation ticks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateSettings {
    pub tick_hz: f64,
    pub control_every: u32,
    pub rgb_every: u32,
    pub thermal_every: u32,
}

impl Default for RateSettings {
    /// 30 Hz clock, 5 Hz control and RGB, 3 Hz thermal.
    fn default() -> Self {
        Self { tick_hz: 30.0, control_every: 6, rgb_every: 6, thermal_every: 10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationSettings {
    pub thermal: ThermalThresholds,
    pub rgb: HsvThresholds,
    /// Physical panel size used for the pixel-scale clustering defaults.
    pub panel_width: f64,
    pub module_length: f64,
}

impl Default for SegmentationSettings {
    fn default() -> Self {
        Self {
            thermal: ThermalThresholds { th1: 135, th2: 220, th3: 6.0 },
            rgb: HsvThresholds { th4: 190.0, th5: 90.0, th6: 60.0, th7: 250.0, th8: 250.0, th9: 230.0, hue_wrap: false },
            panel_width: 2.0,
            module_length: 4.0,
        }
    }
}

/// One experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: CameraMode,
    pub seed: u64,
    /// Along-row speed set point, m/s.
    pub cruise_speed: f64,
    /// Flight height over the ground, meters.
    pub height: f64,
    /// Simulated time after which the run stops, seconds.
    pub max_time: f64,
    /// Start position relative to the first row's start waypoint.
    pub start_offset: [f64; 2],
    /// Plant file; the inline `plant` table is used when absent.
    pub plant_file: Option<PathBuf>,
    pub plant: PlantLayout,
    /// Mission file; a boustrophedon over the plant is used when absent.
    pub mission_file: Option<PathBuf>,
    pub waypoint_error: Option<WaypointErrorSettings>,
    pub gps: GpsModel,
    pub uav: UavParams,
    pub ekf: EkfSettings,
    pub follower: FollowerSettings,
    pub mission: MissionSettings,
    pub segmentation: SegmentationSettings,
    pub camera: CameraSettings,
    pub rates: RateSettings,
    /// Directory receiving every rendered frame as PGM/PPM, if set.
    pub dump_frames: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: CameraMode::Both,
            seed: 1,
            cruise_speed: 0.6,
            height: 15.0,
            max_time: 1200.0,
            start_offset: [-4.0, -3.0],
            plant_file: None,
            plant: PlantLayout::default(),
            mission_file: None,
            waypoint_error: None,
            gps: GpsModel::default(),
            uav: UavParams::default(),
            ekf: EkfSettings::default(),
            follower: FollowerSettings::default(),
            mission: MissionSettings::default(),
            segmentation: SegmentationSettings::default(),
            camera: CameraSettings::default(),
            rates: RateSettings::default(),
            dump_frames: None,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| HarnessError::Config { path: path.to_owned(), message: e.to_string() })
}

impl ExperimentConfig {
    /// Loads a config file, resolving plant and mission paths against its
    /// directory and loading the plant file if one is named.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = parse(path, &read(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.plant_file, &mut cfg.mission_file, &mut cfg.dump_frames].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        if let Some(p) = &cfg.plant_file {
            cfg.plant = load_plant(p)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Invalid(m.into()));
        if !(self.cruise_speed > 0.0) || self.cruise_speed > self.follower.max_speed {
            return bad("cruise_speed must be positive and at most follower.max_speed");
        }
        if !(self.height > 0.0) || !(self.max_time > 0.0) {
            return bad("height and max_time must be positive");
        }
        let r = &self.rates;
        if !(r.tick_hz > 0.0) || r.control_every == 0 || r.rgb_every == 0 || r.thermal_every == 0 {
            return bad("rates must be positive");
        }
        if !(self.uav.tau >= 0.0) || !(self.uav.max_speed > 0.0) || !(self.uav.max_yaw_rate > 0.0) {
            return bad("uav parameters out of range");
        }
        self.ekf.noise().validate()?;
        self.segmentation.thermal.validate()?;
        self.segmentation.rgb.validate()?;
        self.plant.validate()?;
        self.geometry()?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Ok(Geometry::from_fov(self.camera.width, self.camera.height, self.camera.hfov_deg, self.height)?)
    }

    /// The mission to fly, before any injected waypoint error.
    pub fn base_mission(&self) -> Result<Mission<f64>> {
        match &self.mission_file {
            Some(p) => load_mission(p),
            None => Ok(self.plant.mission()?),
        }
    }
}

pub fn load_plant(path: &Path) -> Result<PlantLayout> {
    let plant: PlantLayout = parse(path, &read(path)?)?;
    plant.validate()?;
    Ok(plant)
}

#[derive(Debug, Serialize, Deserialize)]
struct MissionFile {
    waypoint: Vec<WaypointEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WaypointEntry {
    x: f64,
    y: f64,
    label: WaypointLabel,
}

/// Reads `[[waypoint]]` entries with `x`, `y` and `label` (`"start"` or
/// `"end"`); consecutive start/end pairs form the rows in flight order.
pub fn load_mission(path: &Path) -> Result<Mission<f64>> {
    let file: MissionFile = parse(path, &read(path)?)?;
    let wps = file
        .waypoint
        .iter()
        .enumerate()
        .map(|(i, w)| Waypoint { position: pvrow_core::WorldPoint::new(w.x, w.y), label: w.label, row: i / 2 })
        .collect();
    Ok(Mission::new(wps)?)
}

pub fn mission_to_toml(m: &Mission<f64>) -> String {
    let file = MissionFile {
        waypoint: m.waypoints().iter().map(|w| WaypointEntry { x: w.position.x, y: w.position.y, label: w.label }).collect(),
    };
    toml::to_string(&file).expect("mission serialises")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = toml::to_string(&c).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c: ExperimentConfig = toml::from_str("mode = \"thermal\"\nseed = 4\n[gps]\nbias = [0.0, 0.0]\n").unwrap();
        assert_eq!(c.mode, CameraMode::Thermal);
        assert_eq!(c.seed, 4);
        assert_eq!(c.gps.walk_sigma, GpsModel::default().walk_sigma);
        assert!(toml::from_str::<ExperimentConfig>("speed = 3").is_err());
    }

    #[test]
    fn mission_text_roundtrip() {
        let m = PlantLayout::default().mission().unwrap();
        let dir = std::env::temp_dir().join(format!("pvrow-mission-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("m.toml");
        std::fs::write(&p, mission_to_toml(&m)).unwrap();
        assert_eq!(load_mission(&p).unwrap(), m);
        std::fs::write(&p, "[[waypoint]]\nx = 0.0\ny = 0.0\nlabel = \"end\"\n").unwrap();
        assert!(matches!(load_mission(&p), Err(HarnessError::Core(_))));
    }
}
