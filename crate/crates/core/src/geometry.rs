//! Image (`I`), camera (`C`) and world (`W`) frames and the transforms
//! between them.
//!
//! The camera looks straight down (gimbal-stabilised nadir view). Camera `x`
//! points to the UAV front, which is towards decreasing image rows `v`;
//! camera `y` points towards increasing image columns `u`; `z` points down.
//! Lines are stored in slope-intercept form `y - a x - b = 0` and carry their
//! frame in the type, so a camera line cannot be fed where a world line is
//! expected.

use std::fmt::Debug;
use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::scalar::{wrap_angle, Real};

/// Smallest `|dx|` (meters) accepted when building a line from two points.
pub const NEAR_VERTICAL_EPS: f64 = 1e-6;

/// Smallest denominator magnitude accepted by the frame conversions.
pub const SINGULAR_EPS: f64 = 1e-12;

/// Frame marker for [`LineParams`].
pub trait Frame: Copy + Clone + Debug + Default + PartialEq + Send + Sync + 'static {
    const NAME: &'static str;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Camera;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct World;

impl Frame for Camera {
    const NAME: &'static str = "C";
}

impl Frame for World {
    const NAME: &'static str = "W";
}

/// Intrinsics of the nadir camera and its height over the ground.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGeometry<T> {
    /// Image width `U` in pixels.
    pub width: u32,
    /// Image height `V` in pixels.
    pub height: u32,
    /// Focal length; negative by convention, only `|f|` is used.
    pub focal: T,
    /// Pixel size `k` in the units of `focal`.
    pub pixel_scale: T,
    /// Distance of the ground from the lens, meters.
    pub ground_distance: T,
}

impl<T: Real> ImageGeometry<T> {
    pub fn new(width: u32, height: u32, focal: T, pixel_scale: T, ground_distance: T) -> Result<Self> {
        let g = Self { width, height, focal, pixel_scale, ground_distance };
        g.validate()?;
        Ok(g)
    }

    /// Geometry of a camera with horizontal field of view `hfov_deg` across
    /// `width` pixels, with unit pixel scale.
    pub fn from_fov(width: u32, height: u32, hfov_deg: T, ground_distance: T) -> Result<Self> {
        let half = (hfov_deg * T::lit(0.5)).to_radians();
        let focal = -(T::from_u32(width).unwrap() * T::lit(0.5)) / half.tan();
        Self::new(width, height, focal, T::one(), ground_distance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGeometry("image dimensions must be positive"));
        }
        if !(self.ground_distance > T::zero()) {
            return Err(Error::InvalidGeometry("ground distance must be positive"));
        }
        if !(self.pixel_scale > T::zero()) {
            return Err(Error::InvalidGeometry("pixel scale must be positive"));
        }
        if self.focal == T::zero() || !self.focal.is_finite() {
            return Err(Error::InvalidGeometry("focal length must be nonzero"));
        }
        Ok(())
    }

    /// Ground footprint of one pixel, meters.
    pub fn meters_per_pixel(&self) -> T {
        self.pixel_scale / self.focal.abs() * self.ground_distance
    }

    pub fn with_ground_distance(mut self, z_g: T) -> Self {
        self.ground_distance = z_g;
        self
    }

    pub fn center(&self) -> PixelPoint<T> {
        PixelPoint::new(
            T::from_u32(self.width).unwrap() * T::lit(0.5),
            T::from_u32(self.height).unwrap() * T::lit(0.5),
        )
    }
}

impl ImageGeometry<f64> {
    /// 640x512 thermal core with a 57.12 degree horizontal field of view,
    /// 15 m above the ground.
    pub fn default_thermal() -> Self {
        Self::from_fov(640, 512, 57.12, 15.0).expect("valid default geometry")
    }
}

/// Continuous pixel coordinates; integer values are pixel centres.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint<T> {
    pub u: T,
    pub v: T,
}

impl<T: Real> PixelPoint<T> {
    pub const fn new(u: T, v: T) -> Self {
        Self { u, v }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CameraPoint<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> CameraPoint<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn planar(&self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> WorldPoint<T> {
    pub const fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, o: &Self) -> T {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn to_vec(self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    pub fn from_vec(v: Vec2<T>) -> Self {
        Self::new(v.x, v.y)
    }
}

/// Planar pose of the camera frame in the world frame plus ground distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2D<T> {
    pub x: T,
    pub y: T,
    /// Yaw in `(-pi, pi]`.
    pub theta: T,
    pub z_g: T,
}

impl<T: Real> Pose2D<T> {
    pub fn new(x: T, y: T, theta: T, z_g: T) -> Self {
        Self { x, y, theta: wrap_angle(theta), z_g }
    }

    pub fn position(&self) -> WorldPoint<T> {
        WorldPoint::new(self.x, self.y)
    }

    /// Maps a planar camera-frame point into the world frame.
    pub fn camera_to_world(&self, p: Vec2<T>) -> WorldPoint<T> {
        let (s, c) = self.theta.sin_cos();
        WorldPoint::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    /// Maps a world point into planar camera-frame coordinates.
    pub fn world_to_camera(&self, p: WorldPoint<T>) -> Vec2<T> {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        Vec2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    /// Rotates a camera-frame vector into world axes.
    pub fn rotate_to_world(&self, v: Vec2<T>) -> Vec2<T> {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    /// Rotates a world vector into camera axes.
    pub fn rotate_to_camera(&self, v: Vec2<T>) -> Vec2<T> {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
    }
}

/// Line `y - a x - b = 0` in frame `F`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LineParams<T, F: Frame> {
    pub a: T,
    pub b: T,
    frame: PhantomData<F>,
}

pub type CameraLine<T> = LineParams<T, Camera>;
pub type WorldLine<T> = LineParams<T, World>;

impl<T: Real, F: Frame> LineParams<T, F> {
    pub const fn new(a: T, b: T) -> Self {
        Self { a, b, frame: PhantomData }
    }

    /// Line through two points; rejects `|x2 - x1| < NEAR_VERTICAL_EPS`.
    pub fn through(x1: T, y1: T, x2: T, y2: T) -> Result<Self> {
        let dx = x2 - x1;
        if !(dx.abs() >= T::lit(NEAR_VERTICAL_EPS)) {
            return Err(Error::NearVerticalLine { dx: dx.to_f64_lossy() });
        }
        let a = (y2 - y1) / dx;
        Ok(Self::new(a, y1 - a * x1))
    }

    /// Signed orthogonal distance of `(x, y)`; positive on the `+y` side.
    pub fn signed_distance(&self, x: T, y: T) -> T {
        (y - self.a * x - self.b) / (self.a * self.a + T::one()).sqrt()
    }

    pub fn residual(&self, x: T, y: T) -> T {
        y - self.a * x - self.b
    }

    /// Unit direction `(1, a)/|(1, a)|`.
    pub fn direction(&self) -> Vec2<T> {
        let n = (self.a * self.a + T::one()).sqrt();
        Vec2::new(T::one() / n, self.a / n)
    }

    /// Orthogonal projection of a point onto the line.
    pub fn foot_of(&self, x: T, y: T) -> Vec2<T> {
        let d = self.signed_distance(x, y);
        let n = (self.a * self.a + T::one()).sqrt();
        // unit normal pointing to +y side is (-a, 1)/n
        Vec2::new(x + d * self.a / n, y - d / n)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }

    pub fn frame_name(&self) -> &'static str {
        F::NAME
    }
}

/// Back-projects a pixel onto the ground plane in the camera frame.
pub fn pixel_to_camera<T: Real>(p: PixelPoint<T>, g: &ImageGeometry<T>) -> CameraPoint<T> {
    let scale = g.pixel_scale / g.focal.abs() * g.ground_distance;
    let c = g.center();
    CameraPoint::new((c.v - p.v) * scale, (p.u - c.u) * scale, g.ground_distance)
}

/// Projects a ground point given in the camera frame onto the image.
pub fn camera_to_pixel<T: Real>(p: Vec2<T>, g: &ImageGeometry<T>) -> PixelPoint<T> {
    let inv = g.focal.abs() / (g.pixel_scale * g.ground_distance);
    let c = g.center();
    PixelPoint::new(c.u + p.y * inv, c.v - p.x * inv)
}

pub fn line_from_camera_points<T: Real>(p1: CameraPoint<T>, p2: CameraPoint<T>) -> Result<CameraLine<T>> {
    CameraLine::through(p1.x, p1.y, p2.x, p2.y)
}

/// Expected camera-frame parameters of a world line seen from `pose`.
///
/// Uses `h1 = (a cos t - sin t) / (cos t + a sin t)`, which equals
/// `(a - tan t) / (1 + a tan t)` wherever the tangent is defined, and
/// `h2 = (x a + b - y) / (cos t + a sin t)`.
pub fn world_line_to_camera<T: Real>(m: &WorldLine<T>, pose: &Pose2D<T>) -> Result<CameraLine<T>> {
    let (s, c) = pose.theta.sin_cos();
    let den = c + s * m.a;
    check_denominator(den)?;
    let a = (m.a * c - s) / den;
    let b = (pose.x * m.a + m.b - pose.y) / den;
    Ok(CameraLine::new(a, b))
}

/// Inverse of [`world_line_to_camera`].
pub fn camera_line_to_world<T: Real>(o: &CameraLine<T>, pose: &Pose2D<T>) -> Result<WorldLine<T>> {
    let (s, c) = pose.theta.sin_cos();
    let den = c - s * o.a;
    check_denominator(den)?;
    let a = (o.a * c + s) / den;
    // The camera-frame point (0, b) lies on the line.
    let px = pose.x - o.b * s;
    let py = pose.y + o.b * c;
    Ok(WorldLine::new(a, py - a * px))
}

fn check_denominator<T: Real>(den: T) -> Result<()> {
    if !(den.abs() >= T::lit(SINGULAR_EPS)) {
        return Err(Error::SingularObservation { denominator: den.to_f64_lossy() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn paper_like() -> ImageGeometry<f64> {
        ImageGeometry::new(640, 512, -1000.0, 1.0, 15.0).unwrap()
    }

    #[test]
    fn pixel_to_camera_examples() {
        let g = paper_like();
        assert_eq!(pixel_to_camera(PixelPoint::new(320.0, 256.0), &g), CameraPoint::new(0.0, 0.0, 15.0));
        let p = pixel_to_camera(PixelPoint::new(320.0, 0.0), &g);
        assert!((p.x - 3.84).abs() < 1e-12 && p.y == 0.0 && p.z == 15.0);
        let p = pixel_to_camera(PixelPoint::new(640.0, 256.0), &g);
        assert!(p.x == 0.0 && (p.y - 4.8).abs() < 1e-12);
    }

    #[test]
    fn geometry_validation() {
        assert!(ImageGeometry::new(0, 512, -1000.0, 1.0, 15.0).is_err());
        assert!(ImageGeometry::new(640, 512, 0.0, 1.0, 15.0).is_err());
        assert!(ImageGeometry::new(640, 512, -1000.0, 1.0, 0.0).is_err());
        assert!(ImageGeometry::new(640, 512, -1000.0, -1.0, 15.0).is_err());
        let g = ImageGeometry::default_thermal();
        // 57.12 deg across 640 px at 15 m: about 16.3 m of ground.
        assert!((g.meters_per_pixel() * 640.0 - 16.33).abs() < 0.01);
    }

    #[test]
    fn camera_pixel_inverse() {
        let g = paper_like();
        let p = PixelPoint::new(17.0, 401.5);
        let c = pixel_to_camera(p, &g);
        let back = camera_to_pixel(c.planar(), &g);
        assert!((back.u - p.u).abs() < 1e-9 && (back.v - p.v).abs() < 1e-9);
    }

    #[test]
    fn two_point_lines() {
        let l = line_from_camera_points(CameraPoint::new(0.0, 2.0, 0.0), CameraPoint::new(1.0, 2.0, 0.0)).unwrap();
        assert_eq!((l.a, l.b), (0.0, 2.0));
        let l = line_from_camera_points(CameraPoint::new(0.0, 0.0, 0.0), CameraPoint::new(2.0, 1.0, 0.0)).unwrap();
        assert_eq!((l.a, l.b), (0.5, 0.0));
        let e = line_from_camera_points(CameraPoint::new(0.0, 0.0, 0.0), CameraPoint::new(1e-9, 5.0, 0.0));
        assert!(matches!(e, Err(Error::NearVerticalLine { .. })));
    }

    #[test]
    fn world_to_camera_examples() {
        let m = WorldLine::new(0.3, -1.7);
        let o = world_line_to_camera(&m, &Pose2D::new(0.0, 0.0, 0.0, 15.0)).unwrap();
        assert_eq!((o.a, o.b), (0.3, -1.7));
        let o = world_line_to_camera(&WorldLine::new(1.0, 0.0), &Pose2D::new(0.0, 0.0, FRAC_PI_4, 15.0)).unwrap();
        assert!(o.a.abs() < 1e-15);
        let o = world_line_to_camera(&WorldLine::new(0.0, 1.0), &Pose2D::new(2.0, 1.0, 0.0, 15.0)).unwrap();
        assert_eq!(o.b, 0.0);
    }

    #[test]
    fn tangent_form_agrees() {
        let m = WorldLine::new(0.4, 2.0);
        let pose = Pose2D::<f64>::new(3.0, -1.0, 0.6, 15.0);
        let o = world_line_to_camera(&m, &pose).unwrap();
        let t = pose.theta.tan();
        assert!((o.a - (m.a - t) / (1.0 + m.a * t)).abs() < 1e-14);
    }

    #[test]
    fn singular_pose() {
        // Row along world y seen with zero yaw has no slope-intercept form.
        let m = WorldLine::new(0.0, 0.0);
        let pose = Pose2D::new(0.0, 0.0, PI / 2.0, 15.0);
        assert!(matches!(world_line_to_camera(&m, &pose), Err(Error::SingularObservation { .. })));
    }

    #[test]
    fn camera_to_world_examples() {
        let o = CameraLine::new(0.2, 3.0);
        let m = camera_line_to_world(&o, &Pose2D::new(0.0, 0.0, 0.0, 15.0)).unwrap();
        assert_eq!((m.a, m.b), (0.2, 3.0));
        let m = camera_line_to_world(&CameraLine::new(0.0, 0.0), &Pose2D::new(0.0, 1.0, 0.0, 15.0)).unwrap();
        assert_eq!((m.a, m.b), (0.0, 1.0));
        let pose = Pose2D::<f64>::new(5.0, -3.0, 0.7, 15.0);
        let m0 = WorldLine::new(0.1, 2.0);
        let m = camera_line_to_world(&world_line_to_camera(&m0, &pose).unwrap(), &pose).unwrap();
        assert!((m.a - m0.a).abs() < 1e-9 && (m.b - m0.b).abs() < 1e-9);
    }

    #[test]
    fn f32_conversion() {
        let pose = Pose2D::<f32>::new(5.0, -3.0, 0.7, 15.0);
        let m0 = WorldLine::<f32>::new(0.1, 2.0);
        let m = camera_line_to_world(&world_line_to_camera(&m0, &pose).unwrap(), &pose).unwrap();
        assert!((m.a - m0.a).abs() < 1e-5 && (m.b - m0.b).abs() < 1e-4);
    }

    #[test]
    fn point_transforms_agree_with_lines() {
        let pose = Pose2D::<f64>::new(4.0, 2.0, -2.2, 15.0);
        let o = CameraLine::new(-0.3, 1.5);
        let m = camera_line_to_world(&o, &pose).unwrap();
        for xc in [-3.0, 0.0, 7.5] {
            let w = pose.camera_to_world(Vec2::new(xc, o.a * xc + o.b));
            assert!(m.residual(w.x, w.y).abs() < 1e-12);
            let back = pose.world_to_camera(w);
            assert!((back.x - xc).abs() < 1e-12);
        }
    }

    #[test]
    fn foot_and_distance() {
        let l = CameraLine::new(1.0, 2.0_f64.sqrt());
        assert!((l.signed_distance(0.0, 0.0) + 1.0).abs() < 1e-15);
        let f = l.foot_of(0.0, 0.0);
        assert!(l.residual(f.x, f.y).abs() < 1e-12);
        assert!((f.norm() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn roundtrip_identity(a in -3.0..3.0f64, b in -30.0..30.0f64,
                              x in -100.0..100.0f64, y in -100.0..100.0f64, t in -std::f64::consts::PI..std::f64::consts::PI) {
            let pose = Pose2D::new(x, y, t, 15.0);
            let m = WorldLine::new(a, b);
            prop_assume!((t.cos() + t.sin() * a).abs() > 1e-3);
            let back = camera_line_to_world(&world_line_to_camera(&m, &pose).unwrap(), &pose).unwrap();
            prop_assert!((back.a - a).abs() <= 1e-9 * (1.0 + a.abs()));
            prop_assert!((back.b - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }

        #[test]
        fn pixel_map_is_affine(u in 0.0..640.0f64, v in 0.0..512.0f64, du in -50.0..50.0f64, dv in -50.0..50.0f64, s in 0.5..3.0f64) {
            let g = paper_like();
            let p0 = pixel_to_camera(PixelPoint::new(u, v), &g);
            let p1 = pixel_to_camera(PixelPoint::new(u + du, v + dv), &g);
            let p2 = pixel_to_camera(PixelPoint::new(u + 2.0 * du, v + 2.0 * dv), &g);
            // collinear pixels stay collinear
            let cross = (p1.x - p0.x) * (p2.y - p0.y) - (p1.y - p0.y) * (p2.x - p0.x);
            prop_assert!(cross.abs() < 1e-9);
            // scaling z_g scales the ground coordinates exactly
            let gs = g.with_ground_distance(15.0 * s);
            let q = pixel_to_camera(PixelPoint::new(u, v), &gs);
            prop_assert!((q.x - s * p0.x).abs() <= 1e-12 * (1.0 + q.x.abs()));
            prop_assert!((q.y - s * p0.y).abs() <= 1e-12 * (1.0 + q.y.abs()));
        }
    }
}
