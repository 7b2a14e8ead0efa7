//! Regression lines through regions, row clustering and border clipping.
//!
//! Both camera front-ends end in a list of [`Region`]s; everything after
//! that point lives here and is shared verbatim.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{line_from_camera_points, pixel_to_camera, CameraLine, ImageGeometry, PixelPoint};
use crate::scalar::Real;
use crate::thermal_seg::Region;

/// Raw second-order moments of a pixel set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: f64,
    pub su: f64,
    pub sv: f64,
    pub suu: f64,
    pub suv: f64,
    pub svv: f64,
}

impl Moments {
    pub fn of_pixels(pixels: &[(u32, u32)]) -> Self {
        let mut m = Moments::default();
        for &(u, v) in pixels {
            let (u, v) = (f64::from(u), f64::from(v));
            m.n += 1.0;
            m.su += u;
            m.sv += v;
            m.suu += u * u;
            m.suv += u * v;
            m.svv += v * v;
        }
        m
    }

    pub fn merge(&self, o: &Self) -> Self {
        Moments {
            n: self.n + o.n,
            su: self.su + o.su,
            sv: self.sv + o.sv,
            suu: self.suu + o.suu,
            suv: self.suv + o.suv,
            svv: self.svv + o.svv,
        }
    }

    pub fn centroid(&self) -> (f64, f64) {
        (self.su / self.n, self.sv / self.n)
    }

    /// Central covariance entries `(cuu, cuv, cvv)`.
    pub fn covariance(&self) -> (f64, f64, f64) {
        let (mu, mv) = self.centroid();
        (self.suu / self.n - mu * mu, self.suv / self.n - mu * mv, self.svv / self.n - mv * mv)
    }
}

/// Line in the image plane: centroid `p`, unit direction `l`, and the span
/// of the fitted pixels along `l`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionLine {
    pub point: PixelPoint<f64>,
    /// Unit direction `(du, dv)` with `dv > 0`, or `dv == 0` and `du > 0`.
    pub direction: (f64, f64),
    /// Signed offsets of the extreme pixels along `direction`.
    pub extent: (f64, f64),
    pub moments: Moments,
}

impl RegressionLine {
    /// Line through `point` with direction `(du, dv)`; no pixel support.
    pub fn new(point: PixelPoint<f64>, du: f64, dv: f64, extent: (f64, f64)) -> Self {
        let n = du.hypot(dv);
        Self { point, direction: canonical(du / n, dv / n), extent, moments: Moments::default() }
    }

    /// Unsigned orthogonal distance of `(u, v)` from the infinite line.
    pub fn distance(&self, u: f64, v: f64) -> f64 {
        let (du, dv) = self.direction;
        ((u - self.point.u) * dv - (v - self.point.v) * du).abs()
    }

    /// Point at offset `t` along the direction.
    pub fn at(&self, t: f64) -> (f64, f64) {
        (self.point.u + t * self.direction.0, self.point.v + t * self.direction.1)
    }

    /// Mean distance to `other` over unit-spaced samples of this segment.
    pub fn mean_distance_to(&self, other: &RegressionLine) -> f64 {
        let (t0, t1) = self.extent;
        let steps = ((t1 - t0).floor() as usize).max(1);
        let mut acc = 0.0;
        for i in 0..=steps {
            let t = t0 + (t1 - t0) * i as f64 / steps as f64;
            let (u, v) = self.at(t);
            acc += other.distance(u, v);
        }
        acc / (steps + 1) as f64
    }

    /// Angle between the two undirected lines, in `[0, pi/2]`.
    pub fn angle_to(&self, other: &RegressionLine) -> f64 {
        let c = (self.direction.0 * other.direction.0 + self.direction.1 * other.direction.1).abs();
        c.min(1.0).acos()
    }
}

fn canonical(du: f64, dv: f64) -> (f64, f64) {
    if dv < 0.0 || (dv == 0.0 && du < 0.0) {
        (-du, -dv)
    } else {
        (du, dv)
    }
}

fn line_from_moments(m: &Moments, extent_of: impl Fn((f64, f64), (f64, f64)) -> (f64, f64)) -> Result<RegressionLine> {
    let area = m.n as usize;
    if m.n < 2.0 {
        return Err(Error::DegenerateRegion { area });
    }
    let (cuu, cuv, cvv) = m.covariance();
    if !(cuu + cvv > 1e-12) {
        return Err(Error::DegenerateRegion { area });
    }
    let phi = 0.5 * (2.0 * cuv).atan2(cuu - cvv);
    let direction = canonical(phi.cos(), phi.sin());
    let (pu, pv) = m.centroid();
    let extent = extent_of((pu, pv), direction);
    Ok(RegressionLine { point: PixelPoint::new(pu, pv), direction, extent, moments: *m })
}

/// Total-least-squares line through the pixels of `r`.
pub fn fit_region_line(r: &Region) -> Result<RegressionLine> {
    let m = Moments::of_pixels(r.pixels());
    line_from_moments(&m, |(pu, pv), (du, dv)| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(u, v) in r.pixels() {
            let t = (f64::from(u) - pu) * du + (f64::from(v) - pv) * dv;
            lo = lo.min(t);
            hi = hi.max(t);
        }
        (lo, hi)
    })
}

/// Lines merged into one row.
#[derive(Clone, Debug, PartialEq)]
pub struct LineCluster {
    /// Indices into the input line list, ascending.
    pub members: Vec<usize>,
    pub line: RegressionLine,
}

/// Clustering tolerances and the area filter applied before fitting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Maximum angle between member lines, radians.
    pub angle_tol: f64,
    /// Maximum average point-line distance, pixels.
    pub dist_tol: f64,
    /// Smallest region kept, pixels.
    pub min_area: usize,
}

/// Physical size of the panels, used to derive pixel-scale defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    /// Row width across the flight direction, meters.
    pub width: f64,
    /// Length of one module along the row, meters.
    pub module_length: f64,
}

impl Default for PanelSpec {
    fn default() -> Self {
        Self { width: 2.0, module_length: 4.0 }
    }
}

impl PanelSpec {
    pub fn width_px(&self, g: &ImageGeometry<f64>) -> f64 {
        self.width / g.meters_per_pixel()
    }

    /// Expected area of one module in pixels.
    pub fn module_area_px(&self, g: &ImageGeometry<f64>) -> f64 {
        let mpp = g.meters_per_pixel();
        self.width * self.module_length / (mpp * mpp)
    }
}

impl ClusterConfig {
    pub fn for_panels(g: &ImageGeometry<f64>, panel: &PanelSpec) -> Self {
        Self {
            angle_tol: 5f64.to_radians(),
            dist_tol: 0.5 * panel.width_px(g),
            min_area: (0.25 * panel.module_area_px(g)).round().max(1.0) as usize,
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index becomes the root so the result is order-free
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Whether two lines belong to the same row.
pub fn same_row(a: &RegressionLine, b: &RegressionLine, angle_tol: f64, dist_tol: f64) -> bool {
    a.angle_to(b) <= angle_tol && a.mean_distance_to(b).max(b.mean_distance_to(a)) <= dist_tol
}

/// Groups lines by the transitive closure of [`same_row`] and refits each
/// group on the union of its pixel moments. Clusters are ordered by their
/// smallest member index.
pub fn cluster_lines(lines: &[RegressionLine], angle_tol: f64, dist_tol: f64) -> Vec<LineCluster> {
    let n = lines.len();
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        for k in i + 1..n {
            if same_row(&lines[i], &lines[k], angle_tol, dist_tol) {
                ds.union(i, k);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = ds.find(i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups.into_iter().map(|members| merge_members(lines, members)).collect()
}

fn merge_members(lines: &[RegressionLine], members: Vec<usize>) -> LineCluster {
    if members.len() == 1 {
        return LineCluster { line: lines[members[0]], members };
    }
    let moments = members.iter().fold(Moments::default(), |acc, &i| acc.merge(&lines[i].moments));
    let endpoints = |(pu, pv): (f64, f64), (du, dv): (f64, f64)| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &members {
            for t in [lines[i].extent.0, lines[i].extent.1] {
                let (u, v) = lines[i].at(t);
                let s = (u - pu) * du + (v - pv) * dv;
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        (lo, hi)
    };
    let line = if moments.n >= 2.0 {
        line_from_moments(&moments, endpoints).ok()
    } else {
        None
    };
    // Members without pixel support (synthetic lines) keep the first line.
    let line = line.unwrap_or(lines[members[0]]);
    LineCluster { members, line }
}

/// A detected midline given by its two crossings of the image border,
/// ordered by ascending `v`, then `u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedLine {
    pub p1: PixelPoint<f64>,
    pub p2: PixelPoint<f64>,
}

impl ObservedLine {
    /// Camera-frame parameters of this line on the ground plane.
    pub fn to_camera_line<T: Real>(&self, g: &ImageGeometry<T>) -> Result<CameraLine<T>> {
        let cast = |p: PixelPoint<f64>| PixelPoint::new(T::lit(p.u), T::lit(p.v));
        line_from_camera_points(pixel_to_camera(cast(self.p1), g), pixel_to_camera(cast(self.p2), g))
    }
}

/// Intersects the infinite line with the border of the `U x V` image.
pub fn clip_to_border(line: &RegressionLine, width: u32, height: u32) -> Result<ObservedLine> {
    let (w, h) = (f64::from(width), f64::from(height));
    let (pu, pv) = (line.point.u, line.point.v);
    let (du, dv) = line.direction;
    let eps = 1e-9;
    let mut hits: Vec<(f64, f64)> = Vec::with_capacity(4);
    let mut push = |u: f64, v: f64| {
        if u >= -eps && u <= w + eps && v >= -eps && v <= h + eps {
            let p = (u.clamp(0.0, w), v.clamp(0.0, h));
            if !hits.iter().any(|q| (q.0 - p.0).abs() < 1e-7 && (q.1 - p.1).abs() < 1e-7) {
                hits.push(p);
            }
        }
    };
    if du.abs() > 1e-15 {
        for u in [0.0, w] {
            let t = (u - pu) / du;
            push(u, pv + t * dv);
        }
    }
    if dv.abs() > 1e-15 {
        for v in [0.0, h] {
            let t = (v - pv) / dv;
            push(pu + t * du, v);
        }
    }
    if hits.len() < 2 {
        return Err(Error::NoIntersection { width, height });
    }
    hits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
    let (a, b) = (hits[0], hits[hits.len() - 1]);
    Ok(ObservedLine { p1: PixelPoint::new(a.0, a.1), p2: PixelPoint::new(b.0, b.1) })
}

/// Fits, clusters and clips the lines of a region list.
pub fn lines_from_regions(regions: &[Region], cfg: &ClusterConfig, width: u32, height: u32) -> Vec<ObservedLine> {
    let fitted: Vec<RegressionLine> = regions
        .iter()
        .filter(|r| r.area() >= cfg.min_area)
        .filter_map(|r| fit_region_line(r).ok())
        .collect();
    cluster_lines(&fitted, cfg.angle_tol, cfg.dist_tol)
        .iter()
        .filter_map(|c| clip_to_border(&c.line, width, height).ok())
        .collect()
}
