//! Ground-truth mask synthesis from site marks, and a color-threshold
//! baseline segmenter.
//!
//! A region is the convex hull of all diseased-mark points, grown by a
//! dilation radius and clipped to the frame. Inside the region a pixel is
//! diseased when its redness ratio r / (g + b + 1) reaches the configured
//! threshold; 4-connected components below a minimum size are dropped.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{ImageAnnotation, Point, Site, SiteMark};
use crate::error::{Error, Result};
use crate::segmetrics::{encode_png, BinaryMask, ProbabilityMap};
use crate::{FRAME_HEIGHT, FRAME_WIDTH};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || width.checked_mul(height) != Some(pixels.len()) {
            return Err(Error::validation(
                "image",
                format!("{} pixels for {width}x{height}", pixels.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![rgb; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Self {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        encode_png(path, &raw, self.width, self.height, image::ExtendedColorType::Rgb8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorThresholdConfig {
    pub redness_ratio_min: f64,
    pub min_component_px: u32,
    pub dilation_radius_px: u32,
}

impl Default for ColorThresholdConfig {
    fn default() -> Self {
        Self {
            redness_ratio_min: 1.2,
            min_component_px: 16,
            dilation_radius_px: 24,
        }
    }
}

impl ColorThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.redness_ratio_min.is_finite() || self.redness_ratio_min <= 0.0 {
            return Err(Error::validation(
                "redness_ratio_min",
                format!("{} must be > 0", self.redness_ratio_min),
            ));
        }
        let max_r = (FRAME_WIDTH + FRAME_HEIGHT) as u32;
        if self.dilation_radius_px > max_r {
            return Err(Error::validation(
                "dilation_radius_px",
                format!("{} exceeds {max_r}", self.dilation_radius_px),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// A closed polygon in pixel coordinates (pixel centers sit on integers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRegion {
    pub polygon: Vec<(f64, f64)>,
    pub source_marks: Vec<Site>,
}

impl AnnotationRegion {
    pub fn empty() -> Self {
        Self {
            polygon: Vec::new(),
            source_marks: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.polygon.is_empty()
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon)
    }

    pub fn rasterize(&self, width: usize, height: usize) -> BinaryMask {
        rasterize_polygon(&self.polygon, width, height)
    }
}

pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        s += x0 * y1 - x1 * y0;
    }
    s.abs() / 2.0
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

const DILATION_SIDES: usize = 64;

/// Grows a convex polygon (or point set) by `radius` by replacing each
/// vertex with a regular 64-gon inscribed in the radius circle and taking
/// the hull again.
fn dilate(hull: &[(f64, f64)], radius: f64) -> Vec<(f64, f64)> {
    if radius <= 0.0 {
        return hull.to_vec();
    }
    let mut pts = Vec::with_capacity(hull.len() * DILATION_SIDES);
    for &(x, y) in hull {
        for k in 0..DILATION_SIDES {
            let a = std::f64::consts::TAU * k as f64 / DILATION_SIDES as f64;
            pts.push((x + radius * a.cos(), y + radius * a.sin()));
        }
    }
    convex_hull(&pts)
}

/// Sutherland–Hodgman clip against the axis-aligned box [0, w−1]×[0, h−1].
fn clip_to_frame(poly: &[(f64, f64)], width: usize, height: usize) -> Vec<(f64, f64)> {
    let (xmax, ymax) = ((width - 1) as f64, (height - 1) as f64);
    // (axis, bound, keep-if-greater)
    let planes = [(0, 0.0, true), (0, xmax, false), (1, 0.0, true), (1, ymax, false)];
    let mut out = poly.to_vec();
    for (axis, bound, greater) in planes {
        if out.is_empty() {
            break;
        }
        let coord = |p: (f64, f64)| if axis == 0 { p.0 } else { p.1 };
        let inside = |p: (f64, f64)| if greater { coord(p) >= bound } else { coord(p) <= bound };
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci != pi {
                let t = (bound - coord(prev)) / (coord(cur) - coord(prev));
                let mut q = (prev.0 + t * (cur.0 - prev.0), prev.1 + t * (cur.1 - prev.1));
                if axis == 0 {
                    q.0 = bound;
                } else {
                    q.1 = bound;
                }
                out.push(q);
            }
            if ci {
                out.push(cur);
            }
        }
    }
    out
}

/// Region bounding every diseased mark of `marks` in the 640×480 frame.
pub fn bound_annotations(marks: &[SiteMark], dilation_radius_px: u32) -> AnnotationRegion {
    bound_annotations_in(marks, dilation_radius_px, FRAME_WIDTH, FRAME_HEIGHT)
}

/// As [`bound_annotations`] for an arbitrary frame size. No diseased marks
/// gives the empty region.
pub fn bound_annotations_in(
    marks: &[SiteMark],
    dilation_radius_px: u32,
    width: usize,
    height: usize,
) -> AnnotationRegion {
    let diseased: Vec<&SiteMark> = marks
        .iter()
        .filter(|m| m.diseased && !m.points.is_empty())
        .collect();
    if diseased.is_empty() {
        return AnnotationRegion::empty();
    }
    let pts: Vec<(f64, f64)> = diseased
        .iter()
        .flat_map(|m| m.points.iter())
        .map(|p: &Point| (p.x as f64, p.y as f64))
        .collect();
    let hull = convex_hull(&pts);
    let grown = dilate(&hull, dilation_radius_px as f64);
    AnnotationRegion {
        polygon: clip_to_frame(&grown, width, height),
        source_marks: diseased.iter().map(|m| m.site).collect(),
    }
}

const EDGE_EPS: f64 = 1e-9;

/// Even-odd scanline fill sampled at pixel centers, plus every pixel whose
/// center lies on an edge. Zero-area polygons rasterize to nothing.
pub fn rasterize_polygon(poly: &[(f64, f64)], width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::empty(width, height);
    if polygon_area(poly) <= EDGE_EPS {
        return mask;
    }
    let n = poly.len();
    let edges: Vec<((f64, f64), (f64, f64))> = (0..n).map(|i| (poly[i], poly[(i + 1) % n])).collect();
    let mut mark = |x: f64, y: usize| {
        if x >= 0.0 && (x as usize) < width {
            mask.set(x as usize, y, true);
        }
    };
    let mut xs = Vec::new();
    for y in 0..height {
        let yc = y as f64;
        xs.clear();
        for &((x0, y0), (x1, y1)) in &edges {
            // half-open rule so shared vertices count once
            if (y0 <= yc && yc < y1) || (y1 <= yc && yc < y0) {
                xs.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let lo = (pair[0] - EDGE_EPS).ceil().max(0.0);
            let hi = (pair[1] + EDGE_EPS).floor();
            let mut x = lo;
            while x <= hi {
                mark(x, y);
                x += 1.0;
            }
        }
        // centers exactly on an edge
        for &((x0, y0), (x1, y1)) in &edges {
            if (y0 - y1).abs() <= EDGE_EPS {
                if (yc - y0).abs() <= EDGE_EPS {
                    let mut x = (x0.min(x1) - EDGE_EPS).ceil().max(0.0);
                    while x <= x0.max(x1) + EDGE_EPS {
                        mark(x, y);
                        x += 1.0;
                    }
                }
            } else if yc >= y0.min(y1) - EDGE_EPS && yc <= y0.max(y1) + EDGE_EPS {
                let x = x0 + (yc - y0) * (x1 - x0) / (y1 - y0);
                if (x - x.round()).abs() <= EDGE_EPS {
                    mark(x.round(), y);
                }
            }
        }
    }
    mask
}

pub fn redness_ratio(rgb: [u8; 3]) -> f64 {
    rgb[0] as f64 / (rgb[1] as f64 + rgb[2] as f64 + 1.0)
}

/// Region pixels passing the redness threshold, before speckle removal.
pub fn redness_mask(image: &RgbImage, region: &BinaryMask, threshold: f64) -> Result<BinaryMask> {
    if (image.width, image.height) != (region.width(), region.height()) {
        return Err(Error::DimensionMismatch {
            left_w: image.width,
            left_h: image.height,
            right_w: region.width(),
            right_h: region.height(),
        });
    }
    let bits = image
        .pixels
        .iter()
        .zip(region.bits())
        .map(|(&px, &inside)| inside && redness_ratio(px) >= threshold)
        .collect();
    BinaryMask::new(image.width, image.height, bits)
}

/// Clears 4-connected components with fewer than `min_px` pixels.
pub fn remove_small_components(mask: &mut BinaryMask, min_px: u32) {
    if min_px <= 1 {
        return;
    }
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..w * h {
        if seen[start] || !mask.bits()[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        component.clear();
        while let Some(i) = stack.pop() {
            component.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if !seen[j] && mask.bits()[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if component.len() < min_px as usize {
            for &i in &component {
                mask.set(i % w, i / w, false);
            }
        }
    }
}

pub fn color_threshold_mask(
    image: &RgbImage,
    region: &AnnotationRegion,
    config: &ColorThresholdConfig,
) -> Result<BinaryMask> {
    config.validate()?;
    let raster = region.rasterize(image.width, image.height);
    let mut mask = redness_mask(image, &raster, config.redness_ratio_min)?;
    remove_small_components(&mut mask, config.min_component_px);
    Ok(mask)
}

/// Ground truth for one image from one (typically consensus) annotation.
pub fn synthesize_ground_truth(
    image: &RgbImage,
    annotation: &ImageAnnotation,
    config: &ColorThresholdConfig,
) -> Result<BinaryMask> {
    config.validate()?;
    let region = bound_annotations_in(
        &annotation.marks,
        config.dilation_radius_px,
        image.width,
        image.height,
    );
    color_threshold_mask(image, &region, config)
}

/// Whole-frame color threshold, standing in for a learned segmenter.
pub fn baseline_segment(image: &RgbImage, config: &ColorThresholdConfig) -> Result<BinaryMask> {
    config.validate()?;
    let all = BinaryMask::full(image.width, image.height);
    let mut mask = redness_mask(image, &all, config.redness_ratio_min)?;
    remove_small_components(&mut mask, config.min_component_px);
    Ok(mask)
}

/// Soft baseline scores ratio / (1 + ratio), monotone in the redness ratio
/// so thresholding at t / (1 + t) reproduces the ratio threshold t.
pub fn baseline_score_map(image: &RgbImage) -> ProbabilityMap {
    let scores = image
        .pixels
        .iter()
        .map(|&px| {
            let r = redness_ratio(px);
            (r / (1.0 + r)) as f32
        })
        .collect();
    ProbabilityMap::new(image.width, image.height, scores).expect("scores lie in [0, 1)")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mark(points: &[(u32, u32)]) -> SiteMark {
        SiteMark {
            site: Site::GingivalMargin,
            points: points.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            diseased: true,
        }
    }

    #[test]
    fn single_point_disc() {
        let region = bound_annotations(&[mark(&[(320, 240)])], 24);
        let m = region.rasterize(FRAME_WIDTH, FRAME_HEIGHT);
        let disc = std::f64::consts::PI * 24.0 * 24.0;
        let got = m.count() as f64;
        assert!((got - disc).abs() / disc < 0.03, "{got} vs {disc}");
        assert!(m.get(320, 240) && m.get(320 + 23, 240) && !m.get(320 + 26, 240));
    }

    #[test]
    fn disc_clipped_at_corner() {
        let m = bound_annotations(&[mark(&[(0, 0)])], 24).rasterize(FRAME_WIDTH, FRAME_HEIGHT);
        let quarter = std::f64::consts::PI * 24.0 * 24.0 / 4.0;
        assert!(m.get(0, 0));
        assert!((m.count() as f64 - quarter).abs() < 60.0);
    }

    #[test]
    fn degenerate_segment_is_empty() {
        let region = bound_annotations(&[mark(&[(0, 0), (639, 479)])], 0);
        assert_eq!(region.area(), 0.0);
        assert_eq!(region.rasterize(FRAME_WIDTH, FRAME_HEIGHT).count(), 0);
    }

    #[test]
    fn triangle_area_matches_shoelace() {
        let region = bound_annotations(&[mark(&[(100, 100), (400, 120), (250, 380)])], 0);
        let area = region.area();
        let m = region.rasterize(FRAME_WIDTH, FRAME_HEIGHT);
        // boundary pixels: at most one per unit of perimeter
        let perimeter = 300.7 + 301.0 + 296.5;
        assert!((m.count() as f64 - area).abs() <= perimeter, "{} vs {area}", m.count());
        assert!(m.get(100, 100) && m.get(400, 120) && m.get(250, 380));
    }

    #[test]
    fn square_is_exact() {
        let region = bound_annotations(&[mark(&[(10, 10), (19, 10), (19, 19), (10, 19)])], 0);
        let m = region.rasterize(FRAME_WIDTH, FRAME_HEIGHT);
        assert_eq!(m.count(), 100);
    }

    #[test]
    fn healthy_marks_give_empty_region() {
        let mut m = mark(&[(5, 5)]);
        m.diseased = false;
        assert!(bound_annotations(&[m], 24).is_empty());
    }

    #[test]
    fn color_threshold_cases() {
        let region = bound_annotations(&[mark(&[(100, 100), (200, 100), (200, 200), (100, 200)])], 0);
        let red = RgbImage::filled(FRAME_WIDTH, FRAME_HEIGHT, [255, 0, 0]);
        let cfg = ColorThresholdConfig::default();
        let m = color_threshold_mask(&red, &region, &cfg).unwrap();
        assert_eq!(m, region.rasterize(FRAME_WIDTH, FRAME_HEIGHT));
        let gray = RgbImage::filled(FRAME_WIDTH, FRAME_HEIGHT, [128, 128, 128]);
        let cfg = ColorThresholdConfig {
            redness_ratio_min: 0.51,
            ..cfg
        };
        assert_eq!(color_threshold_mask(&gray, &region, &cfg).unwrap().count(), 0);
        assert_eq!(baseline_segment(&gray, &cfg).unwrap().count(), 0);
        assert_eq!(
            baseline_segment(&red, &cfg).unwrap().count(),
            FRAME_WIDTH * FRAME_HEIGHT
        );
        let black = RgbImage::filled(FRAME_WIDTH, FRAME_HEIGHT, [0, 0, 0]);
        assert_eq!(baseline_segment(&black, &cfg).unwrap().count(), 0);
    }

    #[test]
    fn speckles_removed() {
        let mut img = RgbImage::filled(40, 40, [0, 0, 0]);
        img.set(3, 3, [255, 0, 0]);
        for y in 20..25 {
            for x in 20..25 {
                img.set(x, y, [255, 0, 0]);
            }
        }
        let m = baseline_segment(&img, &ColorThresholdConfig::default()).unwrap();
        assert_eq!(m.count(), 25);
        assert!(!m.get(3, 3));
    }

    #[test]
    fn config_json() {
        let cfg = ColorThresholdConfig::from_json(
            r#"{"redness_ratio_min": 1.5, "min_component_px": 0, "dilation_radius_px": 8}"#,
        )
        .unwrap();
        assert_eq!(cfg.dilation_radius_px, 8);
        assert!(ColorThresholdConfig::from_json(
            r#"{"redness_ratio_min": 0, "min_component_px": 0, "dilation_radius_px": 8}"#
        )
        .is_err());
        let round: ColorThresholdConfig =
            serde_json::from_str(&serde_json::to_string(&ColorThresholdConfig::default()).unwrap())
                .unwrap();
        assert_eq!(round, ColorThresholdConfig::default());
    }

    #[test]
    fn score_map_threshold_agrees_with_ratio() {
        let img = RgbImage::from_fn(32, 8, |x, y| [(x * 8) as u8, (y * 20) as u8, 30]);
        let t = 1.2;
        let all = BinaryMask::full(32, 8);
        let hard = redness_mask(&img, &all, t).unwrap();
        let soft = baseline_score_map(&img).threshold((t / (1.0 + t)) as f32);
        let diff = hard.bits().iter().zip(soft.bits()).filter(|(a, b)| a != b).count();
        // f32 rounding may flip pixels sitting exactly at the threshold
        assert!(diff <= 1);
    }

    fn points() -> impl Strategy<Value = Vec<(u32, u32)>> {
        proptest::collection::vec((0u32..640, 0u32..480), 1..6)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn dilation_is_monotone(pts in points(), r1 in 0u32..30, extra in 1u32..30) {
            let small = bound_annotations(&[mark(&pts)], r1).rasterize(FRAME_WIDTH, FRAME_HEIGHT);
            let big = bound_annotations(&[mark(&pts)], r1 + extra).rasterize(FRAME_WIDTH, FRAME_HEIGHT);
            prop_assert!(small.is_subset_of(&big));
        }

        #[test]
        fn threshold_monotone_and_contained(pts in points(), t in 0.2f64..3.0, dt in 0.0f64..1.0, seed in any::<u64>()) {
            let img = RgbImage::from_fn(FRAME_WIDTH, FRAME_HEIGHT, |x, y| {
                let h = (x as u64 * 31 + y as u64 * 17).wrapping_mul(seed | 1);
                [(h >> 8) as u8, (h >> 16) as u8, (h >> 24) as u8]
            });
            let region = bound_annotations(&[mark(&pts)], 12).rasterize(FRAME_WIDTH, FRAME_HEIGHT);
            let strict = redness_mask(&img, &region, t + dt).unwrap();
            let loose = redness_mask(&img, &region, t).unwrap();
            prop_assert!(strict.is_subset_of(&loose));
            prop_assert!(loose.is_subset_of(&region));
        }
    }
}
