//! Perception, estimation and guidance for autonomous inspection of
//! photovoltaic (PV) module rows from a UAV with a nadir thermal and/or RGB
//! camera.
//!
//! The pipeline: a camera frame is segmented into panel regions
//! ([`thermal_seg`], [`rgb_seg`]), regions are fitted and merged into row
//! midlines ([`lineclust`]), the midlines are fused into a world-frame
//! estimate by an extended Kalman filter ([`ekf`]), and a carrot-chasing PID
//! ([`follower`]) turns the estimate into velocity commands while
//! [`mission`] sequences rows. [`optimizer`] tunes segmentation thresholds
//! offline.
//!
//! Geometry, filtering and guidance are generic over [`Real`] (`f32` or
//! `f64`); image processing works on 8-bit rasters with `f64` pixel
//! geometry.

// `!(x > y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ekf;
pub mod error;
pub mod follower;
pub mod geometry;
pub mod lineclust;
pub mod linalg;
pub mod mission;
pub mod optimizer;
pub mod raster;
pub mod rgb_seg;
pub mod scalar;
pub mod thermal_seg;

pub use error::{Error, MissionRule, Result};
pub use geometry::{Camera, CameraLine, ImageGeometry, PixelPoint, Pose2D, World, WorldLine, WorldPoint};
pub use linalg::{Mat2, Vec2};
pub use raster::{BinaryMask, GrayImage, RgbImage, ThermalImage};
pub use scalar::Real;

/// Double-precision aliases used by the simulator and CLI.
pub type Pose = Pose2D<f64>;
pub type CameraLineF64 = CameraLine<f64>;
pub type WorldLineF64 = WorldLine<f64>;
pub type Geometry = ImageGeometry<f64>;
