//! Convex hull and minimum-area enclosing rectangle of a pixel region.
//! Pixels are unit squares centred on integer coordinates.

use crate::thermal_seg::Region;

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Corners of the leftmost and rightmost pixel of every row; the hull of
/// the region's squares is the hull of these points.
fn row_extreme_corners(r: &Region) -> Vec<(f64, f64)> {
    let bb = r.bbox();
    let rows = (bb.v_max - bb.v_min + 1) as usize;
    let mut ext = vec![(u32::MAX, 0u32); rows];
    for &(u, v) in r.pixels() {
        let e = &mut ext[(v - bb.v_min) as usize];
        e.0 = e.0.min(u);
        e.1 = e.1.max(u);
    }
    let mut pts = Vec::with_capacity(4 * rows);
    for (k, &(lo, hi)) in ext.iter().enumerate() {
        if lo == u32::MAX {
            continue;
        }
        let v = f64::from(bb.v_min) + k as f64;
        for u in [f64::from(lo) - 0.5, f64::from(hi) + 0.5] {
            pts.push((u, v - 0.5));
            pts.push((u, v + 0.5));
        }
    }
    pts
}

/// Andrew's monotone chain; counter-clockwise, no repeated end point.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in pts.iter().chain(pts.iter().rev().skip(1)) {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Area and orientation (radians) of the smallest rectangle enclosing the
/// region, found by trying every hull edge as a rectangle side.
pub fn min_area_rect(r: &Region) -> (f64, f64) {
    let hull = convex_hull(row_extreme_corners(r));
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..hull.len() {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        if len == 0.0 {
            continue;
        }
        let (dx, dy) = ((b.0 - a.0) / len, (b.1 - a.1) / len);
        let (mut s0, mut s1, mut t0, mut t1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let s = p.0 * dx + p.1 * dy;
            let t = -p.0 * dy + p.1 * dx;
            s0 = s0.min(s);
            s1 = s1.max(s);
            t0 = t0.min(t);
            t1 = t1.max(t);
        }
        let area = (s1 - s0) * (t1 - t0);
        if area < best.0 {
            best = (area, dy.atan2(dx));
        }
    }
    best
}

/// Region area over the area of its minimum enclosing rectangle.
pub fn rectangularity(r: &Region) -> f64 {
    let (area, _) = min_area_rect(r);
    if area.is_finite() && area > 0.0 {
        (r.area() as f64 / area).min(1.0)
    } else {
        0.0
    }
}
