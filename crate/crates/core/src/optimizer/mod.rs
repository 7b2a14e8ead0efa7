//! Segmentation-quality cost over a registered thermal/RGB image pair and
//! bounded minimisation of it over the nine thresholds.
//!
//! Each detected region scores a shape term (how much it looks like a panel
//! of the expected size, elongated along the flight direction) and a
//! correlation term (how much of it the other modality also marks as
//! panel). The cost is the negated sum, so lower is better and an empty
//! detection scores zero.

mod search;
mod shape;

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ImageGeometry;
use crate::lineclust::{fit_region_line, ClusterConfig, PanelSpec};
use crate::raster::{BinaryMask, GrayImage, RgbImage};
use crate::rgb_seg::{threshold_hsv, to_hsv, HsvImage, HsvThresholds};
use crate::thermal_seg::{binarize_distance, distance_transform, extract_regions, threshold_band, DistanceMatrix, Region, ThermalThresholds};

pub use search::{optimize_thresholds, OptimizeOptions, SearchMethod, TuneResult};
pub use shape::{min_area_rect, rectangularity};

/// Names of the nine thresholds, in vector order.
pub const THRESHOLD_NAMES: [&str; 9] = ["th1", "th2", "th3", "th4", "th5", "th6", "th7", "th8", "th9"];

/// Box constraints on the threshold vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: [f64; 9],
    pub upper: [f64; 9],
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            lower: [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            upper: [255.0, 255.0, 30.0, 360.0, 255.0, 255.0, 360.0, 255.0, 255.0],
        }
    }
}

impl Bounds {
    pub fn contains(&self, x: &[f64; 9]) -> bool {
        x.iter().enumerate().all(|(i, &v)| self.lower[i] <= v && v <= self.upper[i])
    }

    pub fn clamp(&self, i: usize, v: f64) -> f64 {
        v.max(self.lower[i]).min(self.upper[i])
    }

    pub fn validate(&self) -> Result<()> {
        for ((lo, hi), name) in self.lower.iter().zip(&self.upper).zip(THRESHOLD_NAMES) {
            if !(lo <= hi) {
                return Err(Error::InvalidThresholds(format!("empty bounds for {name}")));
            }
        }
        Ok(())
    }
}

/// The nine segmentation thresholds with their box constraints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub th1: f64,
    pub th2: f64,
    pub th3: f64,
    pub th4: f64,
    pub th5: f64,
    pub th6: f64,
    pub th7: f64,
    pub th8: f64,
    pub th9: f64,
    #[serde(default)]
    pub hue_wrap: bool,
    #[serde(default)]
    pub bounds: Bounds,
}

impl ThresholdSet {
    pub fn new(thermal: ThermalThresholds, rgb: HsvThresholds) -> Self {
        Self {
            th1: thermal.th1.into(),
            th2: thermal.th2.into(),
            th3: thermal.th3,
            th4: rgb.th4,
            th5: rgb.th5,
            th6: rgb.th6,
            th7: rgb.th7,
            th8: rgb.th8,
            th9: rgb.th9,
            hue_wrap: rgb.hue_wrap,
            bounds: Bounds::default(),
        }
    }

    pub fn to_array(&self) -> [f64; 9] {
        [self.th1, self.th2, self.th3, self.th4, self.th5, self.th6, self.th7, self.th8, self.th9]
    }

    pub fn with_array(&self, x: [f64; 9]) -> Self {
        let [th1, th2, th3, th4, th5, th6, th7, th8, th9] = x;
        Self { th1, th2, th3, th4, th5, th6, th7, th8, th9, ..*self }
    }

    /// All values rounded to integers, the resolution at which the cost is
    /// evaluated.
    pub fn rounded(&self) -> Self {
        self.with_array(self.to_array().map(f64::round))
    }

    pub fn thermal(&self) -> ThermalThresholds {
        let r = self.rounded();
        ThermalThresholds { th1: r.th1.clamp(0.0, 255.0) as u8, th2: r.th2.clamp(0.0, 255.0) as u8, th3: r.th3 }
    }

    pub fn rgb(&self) -> HsvThresholds {
        let r = self.rounded();
        HsvThresholds { th4: r.th4, th5: r.th5, th6: r.th6, th7: r.th7, th8: r.th8, th9: r.th9, hue_wrap: self.hue_wrap }
    }

    pub fn is_within_bounds(&self) -> bool {
        self.bounds.contains(&self.to_array())
    }

    /// Ordering constraints at evaluation resolution, plus the bounds.
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if !self.is_within_bounds() {
            return Err(Error::InvalidThresholds("thresholds outside their bounds".into()));
        }
        let r = self.rounded();
        if !(0.0..=255.0).contains(&r.th1) || !(0.0..=255.0).contains(&r.th2) {
            return Err(Error::InvalidThresholds("th1 and th2 must lie in [0, 255]".into()));
        }
        self.thermal().validate()?;
        self.rgb().validate()
    }
}

/// Weights of the three shape sub-terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeWeights {
    pub rect: f64,
    pub align: f64,
    pub area: f64,
}

impl Default for ShapeWeights {
    fn default() -> Self {
        Self { rect: 1.0 / 3.0, align: 1.0 / 3.0, area: 1.0 / 3.0 }
    }
}

/// Panel-likeness of a region in `[0, 1]`.
///
/// `heading` is the image-plane angle of the flight direction, measured
/// from `+u` towards `+v`; straight ahead is `-pi/2`.
pub fn shape_cost(r: &Region, expected_area: f64, heading: f64) -> f64 {
    shape_cost_weighted(r, expected_area, heading, &ShapeWeights::default())
}

pub fn shape_cost_weighted(r: &Region, expected_area: f64, heading: f64, w: &ShapeWeights) -> f64 {
    let rect = rectangularity(r);
    let align = match fit_region_line(r) {
        Ok(l) => {
            let c = l.direction.0 * heading.cos() + l.direction.1 * heading.sin();
            c * c
        }
        Err(_) => 0.0,
    };
    let ratio = r.area() as f64 / expected_area - 1.0;
    let area = (-ratio * ratio).exp();
    (w.rect * rect + w.align * align + w.area * area).clamp(0.0, 1.0)
}

/// Fraction of the pixels of `r` that are set in `other`. `source` is the
/// size of the raster `r` was extracted from.
pub fn correlation_term(r: &Region, source: (u32, u32), other: &BinaryMask) -> Result<f64> {
    if source != other.dims() {
        return Err(Error::ShapeMismatch { left: source, right: other.dims() });
    }
    let hits = r.pixels().iter().filter(|&&(u, v)| other.get(u, v)).count();
    Ok(hits as f64 / r.area() as f64)
}

/// Static affine map from thermal pixels to RGB pixels:
/// `[u_rgb, v_rgb] = m * [u, v, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub m: [[f64; 3]; 2],
}

impl Default for Registration {
    fn default() -> Self {
        Self { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] }
    }
}

impl Registration {
    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    fn apply(&self, u: f64, v: f64) -> (f64, f64) {
        let m = &self.m;
        (m[0][0] * u + m[0][1] * v + m[0][2], m[1][0] * u + m[1][1] * v + m[1][2])
    }

    fn inverse(&self) -> Option<Self> {
        let m = &self.m;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-12 {
            return None;
        }
        let (a, b, c, d) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
        Some(Self { m: [[a, b, -(a * m[0][2] + b * m[1][2])], [c, d, -(c * m[0][2] + d * m[1][2])]] })
    }

    /// Resamples `mask` (in the target frame of this map) onto a raster of
    /// size `dims` in the source frame, nearest neighbour.
    pub fn pull_back(&self, mask: &BinaryMask, dims: (u32, u32)) -> BinaryMask {
        BinaryMask::from_fn(dims.0, dims.1, |u, v| {
            let (x, y) = self.apply(f64::from(u), f64::from(v));
            let (x, y) = (x.round(), y.round());
            x >= 0.0 && y >= 0.0 && x < f64::from(mask.width()) && y < f64::from(mask.height()) && mask.get(x as u32, y as u32)
        })
    }
}

/// Fixed inputs of the cost besides the thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub heading: f64,
    /// Expected region area in the thermal image, pixels.
    pub expected_area_thermal: f64,
    /// Expected region area in the RGB image, pixels.
    pub expected_area_rgb: f64,
    pub min_area: usize,
    pub weights: ShapeWeights,
    pub registration: Registration,
}

impl CostConfig {
    /// Thermal regions are single modules (junction gaps split the row);
    /// RGB regions are whole rows crossing the frame along `v`.
    pub fn for_panels(g: &ImageGeometry<f64>, panel: &PanelSpec) -> Self {
        Self {
            heading: -FRAC_PI_2,
            expected_area_thermal: panel.module_area_px(g),
            expected_area_rgb: panel.width_px(g) * f64::from(g.height),
            min_area: ClusterConfig::for_panels(g, panel).min_area,
            weights: ShapeWeights::default(),
            registration: Registration::default(),
        }
    }
}

/// Itemised cost.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    /// `c^T_i` per thermal region.
    pub thermal_shape: Vec<f64>,
    /// `r^TR_i` per thermal region.
    pub thermal_corr: Vec<f64>,
    /// `c^R_i` per RGB region.
    pub rgb_shape: Vec<f64>,
    /// `r^RT_i` per RGB region.
    pub rgb_corr: Vec<f64>,
}

impl CostBreakdown {
    pub fn n_thermal(&self) -> usize {
        self.thermal_shape.len()
    }

    pub fn n_rgb(&self) -> usize {
        self.rgb_shape.len()
    }

    /// `-sum(c^T + r^TR)`.
    pub fn thermal_part(&self) -> f64 {
        -(self.thermal_shape.iter().sum::<f64>() + self.thermal_corr.iter().sum::<f64>())
    }

    /// `-sum(c^R + r^RT)`.
    pub fn rgb_part(&self) -> f64 {
        -(self.rgb_shape.iter().sum::<f64>() + self.rgb_corr.iter().sum::<f64>())
    }

    /// `-sum(c^R)`, the first-stage objective.
    pub fn rgb_shape_part(&self) -> f64 {
        -self.rgb_shape.iter().sum::<f64>()
    }
}

const DT_CACHE: usize = 8;

/// Cost evaluator for one image pair with the per-pair work cached: the
/// HSV conversion, and distance transforms keyed by `(th1, th2)`.
pub struct CostModel<'a> {
    thermal: &'a GrayImage,
    rgb_dims: (u32, u32),
    hsv: HsvImage,
    cfg: CostConfig,
    dt_cache: VecDeque<((u8, u8), DistanceMatrix, BinaryMask)>,
    evaluations: usize,
}

impl<'a> CostModel<'a> {
    pub fn new(thermal: &'a GrayImage, rgb: &RgbImage, cfg: CostConfig) -> Result<Self> {
        if cfg.registration.is_identity() && thermal.dims() != rgb.dims() {
            return Err(Error::ShapeMismatch { left: thermal.dims(), right: rgb.dims() });
        }
        if !(cfg.expected_area_thermal > 0.0 && cfg.expected_area_rgb > 0.0) {
            return Err(Error::InvalidThresholds("expected areas must be positive".into()));
        }
        Ok(Self { thermal, rgb_dims: rgb.dims(), hsv: to_hsv(rgb), cfg, dt_cache: VecDeque::new(), evaluations: 0 })
    }

    pub fn config(&self) -> &CostConfig {
        &self.cfg
    }

    /// Number of cost evaluations so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    fn band(&mut self, th1: u8, th2: u8) -> Result<(&DistanceMatrix, &BinaryMask)> {
        let pos = self.dt_cache.iter().position(|(k, _, _)| *k == (th1, th2));
        let idx = match pos {
            Some(i) => i,
            None => {
                let band = threshold_band(self.thermal, th1, th2)?;
                let mask = BinaryMask::nonzero(&band);
                let d = distance_transform(&band);
                if self.dt_cache.len() == DT_CACHE {
                    self.dt_cache.pop_front();
                }
                self.dt_cache.push_back(((th1, th2), d, mask));
                self.dt_cache.len() - 1
            }
        };
        let (_, d, m) = &self.dt_cache[idx];
        Ok((d, m))
    }

    fn thermal_regions(&mut self, th: &ThermalThresholds) -> Result<(Vec<Region>, BinaryMask)> {
        th.validate()?;
        let min_area = self.cfg.min_area;
        let (d, band_mask) = self.band(th.th1, th.th2)?;
        let regions = extract_regions(&binarize_distance(d, th.th3)?, min_area);
        Ok((regions, band_mask.clone()))
    }

    fn rgb_mask(&self, th: &HsvThresholds) -> Result<BinaryMask> {
        threshold_hsv(&self.hsv, th)
    }

    fn score_regions(&self, regions: &[Region], expected: f64, source: (u32, u32), other: Option<&BinaryMask>) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut shape = Vec::with_capacity(regions.len());
        let mut corr = Vec::with_capacity(regions.len());
        for r in regions {
            shape.push(shape_cost_weighted(r, expected, self.cfg.heading, &self.cfg.weights));
            if let Some(o) = other {
                corr.push(correlation_term(r, source, o)?);
            }
        }
        Ok((shape, corr))
    }

    /// Full cost of `th`.
    pub fn evaluate(&mut self, th: &ThresholdSet) -> Result<CostBreakdown> {
        self.evaluate_parts(th, true, true, true)
    }

    /// Evaluates the requested parts; skipped parts are left empty.
    pub fn evaluate_parts(&mut self, th: &ThresholdSet, thermal: bool, rgb: bool, correlations: bool) -> Result<CostBreakdown> {
        self.evaluations += 1;
        let t_dims = self.thermal.dims();
        let reg = self.cfg.registration;
        let mut out = CostBreakdown::default();

        let rgb_mask = if rgb || (thermal && correlations) { Some(self.rgb_mask(&th.rgb())?) } else { None };
        let (thermal_regions, band) = if thermal || (rgb && correlations) {
            let th_t = th.thermal();
            let (regions, band) = self.thermal_regions(&th_t)?;
            (thermal.then_some(regions), Some(band))
        } else {
            (None, None)
        };

        if let Some(regions) = thermal_regions {
            let other = match (&rgb_mask, correlations) {
                (Some(m), true) if reg.is_identity() => Some(m.clone()),
                (Some(m), true) => Some(reg.pull_back(m, t_dims)),
                _ => None,
            };
            let (s, c) = self.score_regions(&regions, self.cfg.expected_area_thermal, t_dims, other.as_ref())?;
            out.thermal_shape = s;
            out.thermal_corr = c;
        }
        if rgb {
            let mask = rgb_mask.as_ref().expect("computed when rgb is requested");
            let regions = extract_regions(mask, self.cfg.min_area);
            let other = match (band, correlations) {
                (Some(b), true) if reg.is_identity() => Some(b),
                (Some(b), true) => {
                    let inv = reg.inverse().ok_or(Error::InvalidThresholds("registration is singular".into()))?;
                    Some(inv.pull_back(&b, self.rgb_dims))
                }
                _ => None,
            };
            let (s, c) = self.score_regions(&regions, self.cfg.expected_area_rgb, self.rgb_dims, other.as_ref())?;
            out.rgb_shape = s;
            out.rgb_corr = c;
        }
        out.total = out.thermal_part() + out.rgb_part();
        Ok(out)
    }
}

/// Full cost of `th` on an image pair.
pub fn segmentation_cost(thermal: &GrayImage, rgb: &RgbImage, th: &ThresholdSet, cfg: &CostConfig) -> Result<CostBreakdown> {
    th.validate()?;
    CostModel::new(thermal, rgb, *cfg)?.evaluate(th)
}
