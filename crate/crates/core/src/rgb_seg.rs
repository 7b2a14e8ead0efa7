//! Colour front-end: RGB to HSV and a three-channel band threshold whose hue
//! band may wrap around 0 degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lineclust::{lines_from_regions, ClusterConfig, ObservedLine};
use crate::raster::{BinaryMask, RgbImage};
use crate::thermal_seg::{extract_regions, Region};

/// Planar HSV raster. Hue in degrees `[0, 360)`, saturation and value in
/// `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsvImage {
    width: u32,
    height: u32,
    h: Vec<f32>,
    s: Vec<f32>,
    v: Vec<f32>,
}

impl HsvImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// `(h, s, v)` at pixel `(u, v)`.
    pub fn get(&self, u: u32, v: u32) -> (f32, f32, f32) {
        let i = v as usize * self.width as usize + u as usize;
        (self.h[i], self.s[i], self.v[i])
    }
}

/// Standard hexcone conversion of one pixel.
pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> (f32, f32, f32) {
    let (rf, gf, bf) = (f32::from(r), f32::from(g), f32::from(b));
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;
    let s = if max > 0.0 { 255.0 * delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == rf {
        60.0 * ((gf - bf) / delta)
    } else if max == gf {
        60.0 * ((bf - rf) / delta) + 120.0
    } else {
        60.0 * ((rf - gf) / delta) + 240.0
    };
    let h = if h < 0.0 { h + 360.0 } else { h };
    (if h >= 360.0 { h - 360.0 } else { h }, s, max)
}

pub fn to_hsv(img: &RgbImage) -> HsvImage {
    let n = img.width() as usize * img.height() as usize;
    let (mut h, mut s, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for px in img.data().chunks_exact(3) {
        let (a, b, c) = rgb_to_hsv([px[0], px[1], px[2]]);
        h.push(a);
        s.push(b);
        v.push(c);
    }
    HsvImage { width: img.width(), height: img.height(), h, s, v }
}

/// Lower (`th4..th6`) and upper (`th7..th9`) bounds for H, S, V.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsvThresholds {
    pub th4: f64,
    pub th5: f64,
    pub th6: f64,
    pub th7: f64,
    pub th8: f64,
    pub th9: f64,
    /// Accept hues outside `[th4, th7]` instead of inside.
    #[serde(default)]
    pub hue_wrap: bool,
}

impl HsvThresholds {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidThresholds(m));
        if !(0.0..=360.0).contains(&self.th4) || !(0.0..=360.0).contains(&self.th7) || self.th4 > self.th7 {
            return bad(format!("hue band [{}, {}] is not inside [0, 360]", self.th4, self.th7));
        }
        if self.th5 > self.th8 {
            return bad(format!("th5 ({}) exceeds th8 ({})", self.th5, self.th8));
        }
        if self.th6 > self.th9 {
            return bad(format!("th6 ({}) exceeds th9 ({})", self.th6, self.th9));
        }
        Ok(())
    }

    #[inline]
    pub fn hue_ok(&self, h: f64) -> bool {
        if self.hue_wrap {
            !(self.th4 <= h && h <= self.th7)
        } else {
            self.th4 < h && h < self.th7
        }
    }

    #[inline]
    pub fn accepts(&self, h: f64, s: f64, v: f64) -> bool {
        self.hue_ok(h) && self.th5 < s && s < self.th8 && self.th6 < v && v < self.th9
    }
}

pub fn threshold_hsv(hsv: &HsvImage, th: &HsvThresholds) -> Result<BinaryMask> {
    th.validate()?;
    let bits = hsv
        .h
        .iter()
        .zip(&hsv.s)
        .zip(&hsv.v)
        .map(|((&h, &s), &v)| th.accepts(f64::from(h), f64::from(s), f64::from(v)) as u8)
        .collect();
    Ok(BinaryMask::from_bits(hsv.width, hsv.height, bits))
}

pub fn segment_rgb(img: &RgbImage, th: &HsvThresholds, min_area: usize) -> Result<Vec<Region>> {
    Ok(extract_regions(&threshold_hsv(&to_hsv(img), th)?, min_area))
}

/// HSV threshold, regions, line fitting, clustering and border clipping.
pub fn detect_rgb(img: &RgbImage, th: &HsvThresholds, cfg: &ClusterConfig) -> Result<Vec<ObservedLine>> {
    let regions = segment_rgb(img, th, cfg.min_area)?;
    Ok(lines_from_regions(&regions, cfg, img.width(), img.height()))
}
