//! Plant description, ground truth and mission generation.

use pvrow_core::mission::{Mission, Waypoint};
use pvrow_core::{Error, Result, Vec2, WorldLine, WorldPoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// One straight row of modules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    /// Midline end points, world meters.
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// Extent across the midline, meters.
    pub width: f64,
    /// Module length along the row, meters.
    pub module_length: f64,
    /// Junction gap between consecutive modules, meters.
    pub gap: f64,
    /// Inclusive 8-bit intensity range of the modules in thermal frames.
    pub thermal_band: [u8; 2],
}

impl RowSpec {
    pub fn start_point(&self) -> WorldPoint<f64> {
        WorldPoint::new(self.start[0], self.start[1])
    }

    pub fn end_point(&self) -> WorldPoint<f64> {
        WorldPoint::new(self.end[0], self.end[1])
    }

    pub fn length(&self) -> f64 {
        self.start_point().distance(&self.end_point())
    }

    /// Unit vector from start to end.
    pub fn direction(&self) -> Vec2<f64> {
        (self.end_point().to_vec() - self.start_point().to_vec()).normalized().unwrap_or(Vec2::new(1.0, 0.0))
    }

    /// Midline in slope-intercept form.
    pub fn midline(&self) -> Result<WorldLine<f64>> {
        WorldLine::through(self.start[0], self.start[1], self.end[0], self.end[1])
    }

    /// Signed orthogonal distance of `p` to the infinite midline, positive
    /// to the left of the start-to-end direction.
    pub fn offset_of(&self, p: WorldPoint<f64>) -> f64 {
        let d = self.direction();
        let r = p.to_vec() - self.start_point().to_vec();
        d.x * r.y - d.y * r.x
    }

    /// Distance of `p` to the midline segment.
    pub fn segment_distance(&self, p: WorldPoint<f64>) -> f64 {
        let d = self.direction();
        let r = p.to_vec() - self.start_point().to_vec();
        let s = r.dot(d).clamp(0.0, self.length());
        (r - d.scale(s)).norm()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m| Err(Error::Format(m));
        if !(self.width > 0.0) {
            return bad("row width must be positive".into());
        }
        if !(self.module_length > 0.0) || !(self.gap >= 0.0) {
            return bad("module length must be positive and gap non-negative".into());
        }
        if !(self.length() > 0.0) {
            return bad("row start and end coincide".into());
        }
        if self.thermal_band[0] > self.thermal_band[1] {
            return bad("thermal band is inverted".into());
        }
        Ok(())
    }
}

/// Procedural ground appearance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundSpec {
    /// Thermal intensity range of the ground.
    pub thermal: [u8; 2],
    /// Hue range in degrees.
    pub hue: [f64; 2],
    /// Saturation and value ranges on the 0..255 scale.
    pub saturation: [f64; 2],
    pub value: [f64; 2],
    /// Coarsest texture wavelength, meters.
    pub feature_size: f64,
}

impl Default for GroundSpec {
    fn default() -> Self {
        Self { thermal: [60, 120], hue: [25.0, 95.0], saturation: [70.0, 160.0], value: [60.0, 140.0], feature_size: 3.0 }
    }
}

/// Colour ranges of the modules in RGB frames, sampled once per module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelColor {
    pub hue: [f64; 2],
    pub saturation: [f64; 2],
    pub value: [f64; 2],
}

impl Default for PanelColor {
    fn default() -> Self {
        Self { hue: [205.0, 235.0], saturation: [120.0, 200.0], value: [90.0, 170.0] }
    }
}

/// Specular reflections drawn as bright ellipses on RGB frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlareSpec {
    pub enabled: bool,
    /// Fraction of the image covered by glare.
    pub coverage: f64,
    /// Number of ellipses per frame.
    pub count: usize,
}

impl Default for GlareSpec {
    fn default() -> Self {
        Self { enabled: false, coverage: 0.2, count: 6 }
    }
}

/// A PV plant on flat ground.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantLayout {
    pub rows: Vec<RowSpec>,
    pub ground: GroundSpec,
    pub panel_color: PanelColor,
    /// Standard deviation of per-pixel speckle, intensity levels.
    pub thermal_speckle: f64,
    pub rgb_speckle: f64,
    pub glare: GlareSpec,
    /// Seed of the world-anchored texture and module intensities.
    pub seed: u64,
}

impl Default for PlantLayout {
    /// Four parallel 60 m rows along `x`, 6 m apart, 2 m wide.
    fn default() -> Self {
        let row = |y: f64| RowSpec {
            start: [0.0, y],
            end: [60.0, y],
            width: 2.0,
            module_length: 4.0,
            gap: 0.15,
            thermal_band: [155, 190],
        };
        Self {
            rows: (0..4).map(|k| row(6.0 * f64::from(k))).collect(),
            ground: GroundSpec::default(),
            panel_color: PanelColor::default(),
            thermal_speckle: 5.0,
            rgb_speckle: 4.0,
            glare: GlareSpec::default(),
            seed: 7,
        }
    }
}

impl PlantLayout {
    /// Checks row parameters and that no two rows touch.
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Format("plant has no rows".into()));
        }
        for r in &self.rows {
            r.validate()?;
        }
        for (i, a) in self.rows.iter().enumerate() {
            for b in &self.rows[i + 1..] {
                if segment_gap(a, b) <= 0.5 * (a.width + b.width) {
                    return Err(Error::Format("rows overlap".into()));
                }
            }
        }
        if !(self.thermal_speckle >= 0.0) || !(self.rgb_speckle >= 0.0) {
            return Err(Error::Format("speckle must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.glare.coverage) {
            return Err(Error::Format("glare coverage must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Navigation error of `p` with respect to row `k`.
    pub fn navigation_error(&self, k: usize, p: WorldPoint<f64>) -> f64 {
        self.rows[k].offset_of(p)
    }

    /// Axis-aligned bounds of all rows including their width.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for r in &self.rows {
            for p in [r.start, r.end] {
                for i in 0..2 {
                    lo[i] = lo[i].min(p[i] - r.width);
                    hi[i] = hi[i].max(p[i] + r.width);
                }
            }
        }
        (lo, hi)
    }

    /// Boustrophedon mission over the rows in order, reversing direction on
    /// every other row.
    pub fn mission(&self) -> Result<Mission<f64>> {
        let mut wps = Vec::with_capacity(2 * self.rows.len());
        for (k, r) in self.rows.iter().enumerate() {
            let (s, e) = if k % 2 == 0 { (r.start, r.end) } else { (r.end, r.start) };
            wps.push(Waypoint::start(k, s[0], s[1]));
            wps.push(Waypoint::end(k, e[0], e[1]));
        }
        Mission::new(wps)
    }

    /// Row `k` oriented as flown by [`PlantLayout::mission`].
    pub fn flown_row(&self, k: usize) -> RowSpec {
        let mut r = self.rows[k];
        if k % 2 == 1 {
            std::mem::swap(&mut r.start, &mut r.end);
        }
        r
    }
}

fn segment_gap(a: &RowSpec, b: &RowSpec) -> f64 {
    let d = [
        a.segment_distance(b.start_point()),
        a.segment_distance(b.end_point()),
        b.segment_distance(a.start_point()),
        b.segment_distance(a.end_point()),
    ];
    let min = d.into_iter().fold(f64::INFINITY, f64::min);
    // endpoint distances miss proper crossings
    if crosses(a, b) {
        0.0
    } else {
        min
    }
}

fn crosses(a: &RowSpec, b: &RowSpec) -> bool {
    let side = |r: &RowSpec, p: [f64; 2]| r.offset_of(WorldPoint::new(p[0], p[1]));
    side(a, b.start) * side(a, b.end) < 0.0 && side(b, a.start) * side(b, a.end) < 0.0
}

/// Rigid waypoint error: translation then rotation about the waypoint
/// centroid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rototranslation {
    pub dx: f64,
    pub dy: f64,
    /// Radians.
    pub dtheta: f64,
}

/// Moves every waypoint rigidly, then adds independent Gaussian jitter of
/// standard deviation `sigma` to each coordinate.
pub fn inject_waypoint_error(mission: &Mission<f64>, err: Rototranslation, sigma: f64, seed: u64) -> Result<Mission<f64>> {
    let wps = mission.waypoints();
    let n = wps.len() as f64;
    let cx = wps.iter().map(|w| w.position.x).sum::<f64>() / n;
    let cy = wps.iter().map(|w| w.position.y).sum::<f64>() / n;
    let (s, c) = err.dtheta.sin_cos();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::Format(e.to_string()))?;
    let moved = wps
        .iter()
        .map(|w| {
            let (x, y) = (w.position.x - cx, w.position.y - cy);
            let mut out = *w;
            out.position.x = cx + c * x - s * y + err.dx;
            out.position.y = cy + s * x + c * y + err.dy;
            if sigma > 0.0 {
                out.position.x += jitter.sample(&mut rng);
                out.position.y += jitter.sample(&mut rng);
            }
            out
        })
        .collect();
    Mission::new(moved)
}
