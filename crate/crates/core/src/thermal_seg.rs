//! Thermal front-end: band threshold, exact Euclidean distance transform,
//! distance binarisation and 4-connected region extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lineclust::{lines_from_regions, ClusterConfig, ObservedLine};
use crate::raster::{BinaryMask, GrayImage, ThermalImage};

/// Per-pixel Euclidean distance to the nearest zero pixel.
///
/// Distances are kept as exact squared integers; [`DistanceMatrix::get`]
/// takes the square root on demand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMatrix {
    width: u32,
    height: u32,
    sq: Vec<u64>,
}

impl DistanceMatrix {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Squared distance at `(u, v)`.
    #[inline]
    pub fn squared(&self, u: u32, v: u32) -> u64 {
        self.sq[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> f64 {
        (self.squared(u, v) as f64).sqrt()
    }

    pub fn squared_data(&self) -> &[u64] {
        &self.sq
    }

    /// Distance reported when the source has no zero pixel at all.
    pub fn sentinel(width: u32, height: u32) -> f64 {
        f64::from(width) + f64::from(height)
    }

    /// Builds a matrix from explicit squared distances, mainly for tests.
    pub fn from_squared(width: u32, height: u32, sq: Vec<u64>) -> Result<Self> {
        if sq.len() != width as usize * height as usize {
            return Err(Error::Format(format!("expected {} entries, got {}", width * height, sq.len())));
        }
        Ok(Self { width, height, sq })
    }
}

/// Keeps pixels with `th1 < i < th2`, zeroing the rest.
pub fn threshold_band(img: &ThermalImage, th1: u8, th2: u8) -> Result<ThermalImage> {
    if th1 >= th2 {
        return Err(Error::InvalidThresholds(format!("th1 ({th1}) must be below th2 ({th2})")));
    }
    let data = img.data().iter().map(|&p| if th1 < p && p < th2 { p } else { 0 }).collect();
    GrayImage::from_raw(img.width(), img.height(), data)
}

/// Exact Euclidean distance transform (Meijster et al. linear-time scheme).
///
/// A source without zero pixels maps every entry to the `width + height`
/// sentinel, squared.
pub fn distance_transform(mask: &ThermalImage) -> DistanceMatrix {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let n = w * h;
    if !mask.data().contains(&0) {
        let s = u64::from(mask.width() + mask.height());
        return DistanceMatrix { width: mask.width(), height: mask.height(), sq: vec![s * s; n] };
    }
    let inf = (w + h) as i64;
    let data = mask.data();

    // Column pass: vertical distance to the nearest zero in the same column,
    // swept a whole row at a time.
    let mut g = vec![0i64; n];
    for (gi, &p) in g[..w].iter_mut().zip(&data[..w]) {
        *gi = if p == 0 { 0 } else { inf };
    }
    for v in 1..h {
        let (prev, cur) = g[(v - 1) * w..(v + 1) * w].split_at_mut(w);
        for ((c, &p), &d) in cur.iter_mut().zip(prev.iter()).zip(&data[v * w..(v + 1) * w]) {
            *c = if d == 0 { 0 } else { p + 1 };
        }
    }
    for v in (0..h.saturating_sub(1)).rev() {
        let (cur, next) = g[v * w..(v + 2) * w].split_at_mut(w);
        for (c, &nx) in cur.iter_mut().zip(next.iter()) {
            if nx + 1 < *c {
                *c = nx + 1;
            }
        }
    }

    // Row pass: lower envelope of parabolas.
    let mut sq = vec![0u64; n];
    let mut s = vec![0usize; w];
    let mut t = vec![0i64; w];
    for v in 0..h {
        let row = &g[v * w..(v + 1) * w];
        let f = |x: usize, i: usize| -> i64 {
            let d = x as i64 - i as i64;
            d * d + row[i] * row[i]
        };
        // Separator: first x where the parabola at u beats the one at i.
        // Operands stay below 2^31, so the f64 quotient truncates to the
        // exact integer quotient; the fix-up turns truncation into floor.
        let sep = |i: usize, u: usize| -> i64 {
            let (ii, uu) = (i as i64, u as i64);
            let num = uu * uu - ii * ii + row[u] * row[u] - row[i] * row[i];
            let den = 2 * (uu - ii);
            let q = (num as f64 / den as f64) as i64;
            if q * den > num {
                q - 1
            } else {
                q
            }
        };
        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..w {
            while q >= 0 && f(t[q as usize] as usize, s[q as usize]) > f(t[q as usize] as usize, u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let x = 1 + sep(s[q as usize], u);
                if x < w as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = x;
                }
            }
        }
        for u in (0..w).rev() {
            sq[v * w + u] = f(u, s[q as usize]) as u64;
            if u as i64 == t[q as usize] {
                q -= 1;
            }
        }
    }
    DistanceMatrix { width: mask.width(), height: mask.height(), sq }
}

/// `1` where the distance exceeds `th3` (strictly).
pub fn binarize_distance(d: &DistanceMatrix, th3: f64) -> Result<BinaryMask> {
    if !(th3 > 0.0) {
        return Err(Error::InvalidThresholds(format!("th3 ({th3}) must be positive")));
    }
    let bits = d.sq.iter().map(|&s| ((s as f64).sqrt() > th3) as u8).collect();
    Ok(BinaryMask::from_bits(d.width, d.height, bits))
}

/// Axis-aligned pixel bounds, inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub u_min: u32,
    pub v_min: u32,
    pub u_max: u32,
    pub v_max: u32,
}

impl BoundingBox {
    pub fn width(&self) -> u32 {
        self.u_max - self.u_min + 1
    }

    pub fn height(&self) -> u32 {
        self.v_max - self.v_min + 1
    }
}

/// A 4-connected set of foreground pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pixels: Vec<(u32, u32)>,
    bbox: BoundingBox,
}

impl Region {
    /// Builds a region from `(u, v)` pixels. Connectivity is not checked.
    pub fn from_pixels(pixels: Vec<(u32, u32)>) -> Result<Self> {
        let first = *pixels.first().ok_or(Error::DegenerateRegion { area: 0 })?;
        let mut bbox = BoundingBox { u_min: first.0, v_min: first.1, u_max: first.0, v_max: first.1 };
        for &(u, v) in &pixels {
            bbox.u_min = bbox.u_min.min(u);
            bbox.u_max = bbox.u_max.max(u);
            bbox.v_min = bbox.v_min.min(v);
            bbox.v_max = bbox.v_max.max(v);
        }
        Ok(Self { pixels, bbox })
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }
}

/// 4-connected components of the mask with at least `min_area` pixels,
/// ordered by their first pixel in row-major order.
pub fn extract_regions(mask: &BinaryMask, min_area: usize) -> Vec<Region> {
    const NONE: u32 = u32::MAX;
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let bits = mask.data();
    let mut label = vec![NONE; w * h];
    let mut sizes: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if bits[start] == 0 || label[start] != NONE {
            continue;
        }
        let id = sizes.len() as u32;
        label[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (u, v) = (i % w, i / w);
            let mut visit = |j: usize| {
                if bits[j] != 0 && label[j] == NONE {
                    label[j] = id;
                    stack.push(j);
                }
            };
            if u > 0 {
                visit(i - 1);
            }
            if u + 1 < w {
                visit(i + 1);
            }
            if v > 0 {
                visit(i - w);
            }
            if v + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    // a raster pass collects each kept component in row-major order
    let keep = min_area.max(1);
    let mut slot = vec![NONE; sizes.len()];
    let mut groups: Vec<Vec<(u32, u32)>> = Vec::new();
    for (id, &n) in sizes.iter().enumerate() {
        if n >= keep {
            slot[id] = groups.len() as u32;
            groups.push(Vec::with_capacity(n));
        }
    }
    for (i, &l) in label.iter().enumerate() {
        if l != NONE && slot[l as usize] != NONE {
            groups[slot[l as usize] as usize].push(((i % w) as u32, (i / w) as u32));
        }
    }
    groups.into_iter().map(|p| Region::from_pixels(p).expect("non-empty component")).collect()
}

/// Parameters of the thermal front-end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalThresholds {
    pub th1: u8,
    pub th2: u8,
    /// Minimum distance from the band edge, pixels.
    pub th3: f64,
}

impl ThermalThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.th1 >= self.th2 {
            return Err(Error::InvalidThresholds(format!("th1 ({}) must be below th2 ({})", self.th1, self.th2)));
        }
        if !(self.th3 > 0.0) {
            return Err(Error::InvalidThresholds(format!("th3 ({}) must be positive", self.th3)));
        }
        Ok(())
    }
}

/// Band threshold, distance transform and binarisation in one call.
pub fn thermal_mask(img: &ThermalImage, th: &ThermalThresholds) -> Result<BinaryMask> {
    th.validate()?;
    let band = threshold_band(img, th.th1, th.th2)?;
    binarize_distance(&distance_transform(&band), th.th3)
}

/// Full thermal segmentation down to regions.
pub fn segment_thermal(img: &ThermalImage, th: &ThermalThresholds, min_area: usize) -> Result<Vec<Region>> {
    Ok(extract_regions(&thermal_mask(img, th)?, min_area))
}

/// Thermal segmentation followed by line fitting, clustering and clipping.
pub fn detect_thermal(img: &ThermalImage, th: &ThermalThresholds, cfg: &ClusterConfig) -> Result<Vec<ObservedLine>> {
    let regions = segment_thermal(img, th, cfg.min_area)?;
    Ok(lines_from_regions(&regions, cfg, img.width(), img.height()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(img: &GrayImage) -> Vec<u64> {
        let (w, h) = (img.width() as i64, img.height() as i64);
        let zeros: Vec<(i64, i64)> =
            (0..h).flat_map(|v| (0..w).map(move |u| (u, v))).filter(|&(u, v)| img.get(u as u32, v as u32) == 0).collect();
        (0..h)
            .flat_map(|v| (0..w).map(move |u| (u, v)))
            .map(|(u, v)| zeros.iter().map(|&(zu, zv)| ((zu - u).pow(2) + (zv - v).pow(2)) as u64).min().unwrap())
            .collect()
    }

    fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32, p_zero: f64) -> GrayImage {
        let data = (0..w * h).map(|_| if rng.random_bool(p_zero) { 0 } else { 200 }).collect();
        GrayImage::from_raw(w, h, data).unwrap()
    }

    #[test]
    fn band_threshold_examples() {
        let img = GrayImage::from_raw(3, 1, vec![100, 90, 110]).unwrap();
        let out = threshold_band(&img, 90, 110).unwrap();
        assert_eq!(out.data(), &[100, 0, 0]);
        let flat = GrayImage::filled(4, 4, 128);
        assert_eq!(threshold_band(&flat, 0, 255).unwrap(), flat);
        assert!(threshold_band(&flat, 10, 10).is_err());
        let twice = threshold_band(&threshold_band(&img, 95, 105).unwrap(), 95, 105).unwrap();
        assert_eq!(twice, threshold_band(&img, 95, 105).unwrap());
    }

    #[test]
    fn distance_small_cases() {
        let zero = GrayImage::new(5, 4);
        assert!(distance_transform(&zero).squared_data().iter().all(|&d| d == 0));
        let mut one = GrayImage::new(5, 5);
        one.set(2, 2, 7);
        let d = distance_transform(&one);
        assert_eq!(d.get(2, 2), 1.0);
        assert_eq!(d.get(0, 0), 0.0);
        let full = GrayImage::filled(3, 2, 9);
        assert_eq!(distance_transform(&full).get(1, 1), DistanceMatrix::sentinel(3, 2));
    }

    #[test]
    fn distance_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (i, &(w, h)) in [(1, 1), (1, 9), (9, 1), (17, 5), (32, 32), (64, 64)].iter().enumerate() {
            for p in [0.02, 0.2, 0.7] {
                let mut img = random_mask(&mut rng, w, h, p);
                if i == 0 {
                    img.set(0, 0, 0);
                }
                if !img.data().contains(&0) {
                    continue;
                }
                assert_eq!(distance_transform(&img).squared_data(), &brute_force(&img)[..], "{w}x{h} p={p}");
            }
        }
    }

    #[test]
    fn binarize_examples() {
        let d = DistanceMatrix::from_squared(2, 1, vec![25, 16]).unwrap();
        let b = binarize_distance(&d, 4.0).unwrap();
        assert!(b.get(0, 0));
        assert!(!b.get(1, 0));
        assert!(binarize_distance(&d, 0.0).is_err());
        let z = DistanceMatrix::from_squared(3, 3, vec![0; 9]).unwrap();
        assert_eq!(binarize_distance(&z, 1.5).unwrap().count_ones(), 0);
    }

    #[test]
    fn regions_examples() {
        assert!(extract_regions(&BinaryMask::new(8, 8), 1).is_empty());
        let blocks = BinaryMask::from_fn(40, 20, |u, v| v < 10 && (u < 10 || (20..30).contains(&u)));
        let r = extract_regions(&blocks, 50);
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|r| r.area() == 100));
        assert_eq!(r[0].bbox().u_min, 0);
        assert_eq!(r[1].bbox().u_min, 20);
        let tiny = BinaryMask::from_fn(10, 10, |u, v| v == 3 && u < 3);
        assert!(extract_regions(&tiny, 100).is_empty());
        // diagonal neighbours are separate components
        let diag = BinaryMask::from_fn(3, 3, |u, v| u == v);
        assert_eq!(extract_regions(&diag, 1).len(), 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mask_strategy() -> impl Strategy<Value = (u32, u32, Vec<bool>)> {
            (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(any::<bool>(), (w * h) as usize))
            })
        }

        proptest! {
            #[test]
            fn binarize_monotone_in_th3(seed in any::<u64>(), t1 in 0.1..6.0f64, dt in 0.0..4.0f64) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let img = random_mask(&mut rng, 20, 16, 0.15);
                let d = distance_transform(&img);
                let lo = binarize_distance(&d, t1).unwrap();
                let hi = binarize_distance(&d, t1 + dt).unwrap();
                for (a, b) in lo.data().iter().zip(hi.data()) {
                    prop_assert!(b <= a);
                }
            }

            #[test]
            fn regions_partition_foreground((w, h, bits) in mask_strategy(), min_area in 1usize..6) {
                let mask = BinaryMask::from_fn(w, h, |u, v| bits[(v * w + u) as usize]);
                let all = extract_regions(&mask, 1);
                let total: usize = all.iter().map(Region::area).sum();
                prop_assert_eq!(total, mask.count_ones());
                let kept = extract_regions(&mask, min_area);
                let expect: usize = all.iter().filter(|r| r.area() >= min_area).map(Region::area).sum();
                prop_assert_eq!(kept.iter().map(Region::area).sum::<usize>(), expect);
                let mut seen = std::collections::HashSet::new();
                for r in &all {
                    for p in r.pixels() {
                        prop_assert!(seen.insert(*p));
                        prop_assert!(mask.get(p.0, p.1));
                    }
                }
            }

            #[test]
            fn distance_matches_oracle((w, h, bits) in mask_strategy()) {
                let data = bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
                let img = GrayImage::from_raw(w, h, data).unwrap();
                prop_assume!(img.data().contains(&0));
                let d = distance_transform(&img);
                prop_assert_eq!(d.squared_data(), &brute_force(&img)[..]);
            }
        }
    }
}
