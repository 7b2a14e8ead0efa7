//! Procedural thermal and RGB frames of the plant seen from a nadir camera.
//!
//! Ground texture and module colours are anchored in the world, so they are
//! stable across frames; speckle and glare are drawn per frame from `seed`.
//! Frames use the geometry's ground distance; `pose.z_g` is not consulted.

use pvrow_core::{BinaryMask, Geometry, GrayImage, Pose, RgbImage, Vec2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::layout::{PlantLayout, RowSpec};

/// Spacing of the grid on which the ground texture is evaluated, pixels.
const GRID: u32 = 8;

/// Integer hash of a lattice node, uniform in `[0, 1)`.
fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let mut h = seed ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let a = lattice(seed, ix, iy) + tx * (lattice(seed, ix + 1, iy) - lattice(seed, ix, iy));
    let b = lattice(seed, ix, iy + 1) + tx * (lattice(seed, ix + 1, iy + 1) - lattice(seed, ix, iy + 1));
    a + ty * (b - a)
}

/// Two-octave texture in `[0, 1)` at a world point.
fn ground_noise(seed: u64, p: Vec2<f64>, feature: f64) -> f64 {
    let coarse = value_noise(seed, p.x / feature, p.y / feature);
    let fine = value_noise(seed ^ 0x5555, p.x * 4.0 / feature, p.y * 4.0 / feature);
    0.7 * coarse + 0.3 * fine
}

/// Converts H in degrees and S, V on `0..=255` to RGB.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let (s, v) = (s / 255.0, v / 255.0);
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |t: f64| ((t + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Affine pixel-to-world map of one frame: `p = origin + u du + v dv`.
#[derive(Clone, Copy, Debug)]
pub struct FrameMap {
    origin: Vec2<f64>,
    du: Vec2<f64>,
    dv: Vec2<f64>,
}

impl FrameMap {
    pub fn new(pose: &Pose, geom: &Geometry) -> Self {
        let s = geom.meters_per_pixel();
        let c = geom.center();
        let origin = pose.camera_to_world(Vec2::new(c.v * s, -c.u * s)).to_vec();
        let du = pose.rotate_to_world(Vec2::new(0.0, s));
        let dv = pose.rotate_to_world(Vec2::new(-s, 0.0));
        Self { origin, du, dv }
    }

    pub fn world(&self, u: f64, v: f64) -> Vec2<f64> {
        self.origin + self.du.scale(u) + self.dv.scale(v)
    }
}

/// Pixel span `[u0, u1]` of image row `v` covered by `row`, with the
/// along-row coordinate of pixel `u0` and its increment per pixel.
fn row_span(map: &FrameMap, row: &RowSpec, v: f64, width: u32) -> Option<(u32, u32, f64, f64)> {
    let d = row.direction();
    let n = Vec2::new(-d.y, d.x);
    let p = map.world(0.0, v) - row.start_point().to_vec();
    let (s0, ds) = (p.dot(d), map.du.dot(d));
    let (t0, dt) = (p.dot(n), map.du.dot(n));
    let hw = 0.5 * row.width;
    let (mut lo, mut hi) = (0.0f64, f64::from(width - 1));
    for (c0, dc, a, b) in [(s0, ds, 0.0, row.length()), (t0, dt, -hw, hw)] {
        if dc.abs() < 1e-15 {
            if c0 < a || c0 > b {
                return None;
            }
        } else {
            let (e1, e2) = ((a - c0) / dc, (b - c0) / dc);
            lo = lo.max(e1.min(e2));
            hi = hi.min(e1.max(e2));
        }
    }
    let (u0, u1) = (lo.ceil(), hi.floor());
    (u0 <= u1).then_some((u0 as u32, u1 as u32, s0 + u0 * ds, ds))
}

fn module_hash(seed: u64, row: usize, module: i64, channel: i64) -> f64 {
    lattice(seed ^ 0xA5A5_0000 ^ ((row as u64) << 40), module, channel)
}

/// Standard-normal-like speckle from the sum of four uniform bytes.
#[inline]
fn irwin_hall(word: u32) -> f64 {
    let b = word.to_le_bytes();
    let sum = u32::from(b[0]) + u32::from(b[1]) + u32::from(b[2]) + u32::from(b[3]);
    // mean 510, standard deviation 2 * sqrt((256^2 - 1) / 12)
    (f64::from(sum) - 510.0) / 147.800_541
}

/// Ground texture sampled on a coarse pixel grid, with `channels` values per
/// node.
struct GroundGrid {
    nu: usize,
    values: Vec<f64>,
    channels: usize,
}

impl GroundGrid {
    fn new(map: &FrameMap, geom: &Geometry, channels: usize, f: impl Fn(Vec2<f64>, &mut [f64])) -> Self {
        let nu = (geom.width.div_ceil(GRID) + 1) as usize;
        let nv = (geom.height.div_ceil(GRID) + 1) as usize;
        let mut values = vec![0.0; nu * nv * channels];
        for j in 0..nv {
            for i in 0..nu {
                let p = map.world((i as u32 * GRID) as f64, (j as u32 * GRID) as f64);
                let k = (j * nu + i) * channels;
                f(p, &mut values[k..k + channels]);
            }
        }
        Self { nu, values, channels }
    }

    /// Bilinearly interpolated row `v`, `channels` values per pixel.
    fn row(&self, v: u32, width: u32, out: &mut Vec<f64>) {
        let j = (v / GRID) as usize;
        let ty = f64::from(v % GRID) / f64::from(GRID);
        let c = self.channels;
        let stride = self.nu * c;
        let (top, bot) = (&self.values[j * stride..(j + 1) * stride], &self.values[(j + 1) * stride..(j + 2) * stride]);
        let col: Vec<f64> = top.iter().zip(bot).map(|(a, b)| a + ty * (b - a)).collect();
        out.clear();
        out.resize(width as usize * c, 0.0);
        for (i, px) in out.chunks_mut(GRID as usize * c).enumerate() {
            for ch in 0..c {
                let a = col[i * c + ch];
                let step = (col[(i + 1) * c + ch] - a) / f64::from(GRID);
                for (k, o) in px.iter_mut().skip(ch).step_by(c).enumerate() {
                    *o = a + step * k as f64;
                }
            }
        }
    }
}

/// Rounds half up and saturates to a byte.
#[inline]
fn to_byte(x: f64) -> u8 {
    (x + 0.5).clamp(0.0, 255.0) as u8
}

fn lerp(range: [f64; 2], t: f64) -> f64 {
    range[0] + (range[1] - range[0]) * t
}

/// Row stream of speckle words; rows are drawn in order from one generator.
struct Speckle {
    rng: ChaCha8Rng,
    words: Vec<u32>,
}

impl Speckle {
    fn new(seed: u64, per_row: usize) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), words: vec![0; per_row] }
    }

    fn apply(&mut self, sigma: f64, line: &[f64], out: &mut [u8]) {
        self.rng.fill(&mut self.words[..]);
        for ((o, &b), &n) in out.iter_mut().zip(line).zip(&self.words) {
            *o = to_byte(b + sigma * irwin_hall(n));
        }
    }
}

/// Thermal frame of `layout` from `pose`.
pub fn render_thermal(layout: &PlantLayout, pose: &Pose, geom: &Geometry, seed: u64) -> GrayImage {
    let map = FrameMap::new(pose, geom);
    let g = &layout.ground;
    let band = [f64::from(g.thermal[0]), f64::from(g.thermal[1])];
    let grid = GroundGrid::new(&map, geom, 1, |p, out| out[0] = lerp(band, ground_noise(layout.seed, p, g.feature_size)));
    let (w, h) = (geom.width, geom.height);
    let mut data = vec![0u8; (w * h) as usize];
    let mut line = Vec::with_capacity(w as usize);
    let mut speckle = Speckle::new(seed, w as usize);
    for v in 0..h {
        grid.row(v, w, &mut line);
        for (k, row) in layout.rows.iter().enumerate() {
            let Some((u0, u1, s0, ds)) = row_span(&map, row, f64::from(v), w) else { continue };
            let pitch = row.module_length + row.gap;
            let lo = f64::from(row.thermal_band[0]);
            let span = f64::from(row.thermal_band[1]) - lo;
            let mut cached = (i64::MIN, 0.0);
            for u in u0..=u1 {
                let s = s0 + f64::from(u - u0) * ds;
                let m = (s / pitch).floor();
                if s - m * pitch > row.module_length {
                    continue;
                }
                if m as i64 != cached.0 {
                    cached = (m as i64, lo + span * module_hash(layout.seed, k, m as i64, 0));
                }
                line[u as usize] = cached.1;
            }
        }
        speckle.apply(layout.thermal_speckle, &line, &mut data[(v * w) as usize..((v + 1) * w) as usize]);
    }
    GrayImage::from_raw(w, h, data).expect("buffer matches geometry")
}

/// RGB frame of `layout` from `pose`.
pub fn render_rgb(layout: &PlantLayout, pose: &Pose, geom: &Geometry, seed: u64) -> RgbImage {
    let map = FrameMap::new(pose, geom);
    let g = &layout.ground;
    let grid = GroundGrid::new(&map, geom, 3, |p, out| {
        let hue = lerp(g.hue, ground_noise(layout.seed, p, g.feature_size));
        let sat = lerp(g.saturation, ground_noise(layout.seed ^ 0x1111, p, g.feature_size));
        let val = lerp(g.value, ground_noise(layout.seed ^ 0x2222, p, g.feature_size));
        let rgb = hsv_to_rgb(hue, sat, val);
        for (o, c) in out.iter_mut().zip(rgb) {
            *o = f64::from(c);
        }
    });
    let (w, h) = (geom.width, geom.height);
    let glare = if layout.glare.enabled { glare_ellipses(w, h, layout, seed) } else { Vec::new() };
    let mut data = vec![0u8; (3 * w * h) as usize];
    let mut line = Vec::with_capacity(3 * w as usize);
    let mut speckle = Speckle::new(seed ^ 0x0123_4567_89AB_CDEF, 3 * w as usize);
    let pc = &layout.panel_color;
    for v in 0..h {
        grid.row(v, w, &mut line);
        for (k, row) in layout.rows.iter().enumerate() {
            let Some((u0, u1, s0, ds)) = row_span(&map, row, f64::from(v), w) else { continue };
            let pitch = row.module_length + row.gap;
            let mut cached = (i64::MIN, [0u8; 3]);
            for u in u0..=u1 {
                let m = ((s0 + f64::from(u - u0) * ds) / pitch).floor() as i64;
                if m != cached.0 {
                    let hue = lerp(pc.hue, module_hash(layout.seed, k, m, 1));
                    let sat = lerp(pc.saturation, module_hash(layout.seed, k, m, 2));
                    let val = lerp(pc.value, module_hash(layout.seed, k, m, 3));
                    cached = (m, hsv_to_rgb(hue, sat, val));
                }
                let i = 3 * u as usize;
                for c in 0..3 {
                    line[i + c] = f64::from(cached.1[c]);
                }
            }
        }
        for e in &glare {
            e.blend_row(v, w, &mut line);
        }
        speckle.apply(layout.rgb_speckle, &line, &mut data[(3 * v * w) as usize..(3 * (v + 1) * w) as usize]);
    }
    RgbImage::from_raw(w, h, data).expect("buffer matches geometry")
}

struct Ellipse {
    cu: f64,
    cv: f64,
    ra: f64,
    rb: f64,
    sin: f64,
    cos: f64,
}

impl Ellipse {
    /// Blends the pixels of row `v` inside the ellipse towards white.
    fn blend_row(&self, v: u32, w: u32, line: &mut [f64]) {
        let r = self.ra.max(self.rb);
        let dv = f64::from(v) - self.cv;
        if dv.abs() > r {
            return;
        }
        let u0 = (self.cu - r).max(0.0) as u32;
        let u1 = (self.cu + r).min(f64::from(w - 1)).max(0.0) as u32;
        for u in u0..=u1 {
            let du = f64::from(u) - self.cu;
            let (x, y) = (self.cos * du + self.sin * dv, -self.sin * du + self.cos * dv);
            if (x / self.ra).powi(2) + (y / self.rb).powi(2) <= 1.0 {
                let i = 3 * u as usize;
                for c in &mut line[i..i + 3] {
                    *c += 0.85 * (250.0 - *c);
                }
            }
        }
    }
}

/// Random glare ellipses whose total area is the configured fraction of the
/// frame.
fn glare_ellipses(w: u32, h: u32, layout: &PlantLayout, seed: u64) -> Vec<Ellipse> {
    let n = layout.glare.count.max(1);
    let area = layout.glare.coverage * f64::from(w) * f64::from(h) / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6A09_E667_F3BC_C908);
    (0..n)
        .map(|_| {
            let (cu, cv) = (rng.random_range(0.0..f64::from(w)), rng.random_range(0.0..f64::from(h)));
            let aspect: f64 = rng.random_range(0.5..2.0);
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let ra = (area * aspect / std::f64::consts::PI).sqrt();
            let rb = area / (std::f64::consts::PI * ra);
            let (sin, cos) = angle.sin_cos();
            Ellipse { cu, cv, ra, rb, sin, cos }
        })
        .collect()
}

/// Exact panel coverage of a frame, ignoring noise. Thermal masks leave the
/// junction gaps out.
pub fn panel_mask(layout: &PlantLayout, pose: &Pose, geom: &Geometry, thermal: bool) -> BinaryMask {
    let map = FrameMap::new(pose, geom);
    let mut mask = BinaryMask::new(geom.width, geom.height);
    for row in &layout.rows {
        let pitch = row.module_length + row.gap;
        for v in 0..geom.height {
            let Some((u0, u1, s0, ds)) = row_span(&map, row, f64::from(v), geom.width) else { continue };
            for u in u0..=u1 {
                let s = s0 + f64::from(u - u0) * ds;
                if thermal && s - (s / pitch).floor() * pitch > row.module_length {
                    continue;
                }
                mask.set(u, v, true);
            }
        }
    }
    mask
}

/// Stable per-frame seed from a run seed, a stream tag and a frame index.
pub fn frame_seed(run: u64, stream: u64, frame: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(run);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(frame) * 2);
    rng.next_u64()
}
