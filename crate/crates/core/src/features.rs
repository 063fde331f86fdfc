//! Sparse blob/corner features and circular matching across two stereo pairs.
//!
//! Detection filters the image with a 5×5 blob mask and a 5×5 checkerboard
//! mask and keeps local maxima and minima of each response (four feature
//! classes). Descriptors are 32 Sobel samples taken on a fixed 4×4 grid around
//! the feature. Matching closes a loop
//! `cur_left → prev_left → prev_right → cur_right → cur_left` and keeps only
//! features that come back to where they started.

use nalgebra::Vector2;

use crate::geometry::DISPARITY_MIN;

/// Pixels kept clear of the border so descriptor sampling stays in bounds.
pub const DESCRIPTOR_MARGIN: usize = 8;

pub const DESCRIPTOR_LEN: usize = 32;

/// Offsets of the descriptor sampling grid, in pixels.
const DESCRIPTOR_OFFSETS: [isize; 4] = [-5, -1, 1, 5];

const BLOB_MASK: [[i32; 5]; 5] = [
    [-1, -1, -1, -1, -1],
    [-1, 1, 1, 1, -1],
    [-1, 1, 8, 1, -1],
    [-1, 1, 1, 1, -1],
    [-1, -1, -1, -1, -1],
];

const CORNER_MASK: [[i32; 5]; 5] = [
    [-1, -1, 0, 1, 1],
    [-1, -1, 0, 1, 1],
    [0, 0, 0, 0, 0],
    [1, 1, 0, -1, -1],
    [1, 1, 0, -1, -1],
];

/// 8-bit grayscale image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}x{})", self.width, self.height)
    }
}

impl Image {
    /// Returns `None` if `data.len() != width * height`.
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureClass {
    BlobMax,
    BlobMin,
    CornerMax,
    CornerMin,
}

impl FeatureClass {
    pub const ALL: [FeatureClass; 4] = [
        FeatureClass::BlobMax,
        FeatureClass::BlobMin,
        FeatureClass::CornerMax,
        FeatureClass::CornerMin,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

pub type Descriptor = [i16; DESCRIPTOR_LEN];

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    /// Sub-pixel location.
    pub location: Vector2<f64>,
    pub class: FeatureClass,
    /// Filter response at the integer peak (signed as filtered).
    pub response: i32,
    pub descriptor: Descriptor,
}

/// One feature tracked through all four images of two consecutive stereo pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadMatch {
    pub prev_left: Vector2<f64>,
    pub prev_right: Vector2<f64>,
    pub cur_left: Vector2<f64>,
    pub cur_right: Vector2<f64>,
    pub class: FeatureClass,
}

impl QuadMatch {
    /// The same match with previous and current frames swapped.
    pub fn reversed(&self) -> QuadMatch {
        QuadMatch {
            prev_left: self.cur_left,
            prev_right: self.cur_right,
            cur_left: self.prev_left,
            cur_right: self.prev_right,
            class: self.class,
        }
    }

    /// Epipolar and disparity checks every emitted match satisfies.
    pub fn satisfies_stereo_constraints(&self, epipolar_tol: f64) -> bool {
        (self.prev_left.y - self.prev_right.y).abs() <= epipolar_tol
            && (self.cur_left.y - self.cur_right.y).abs() <= epipolar_tol
            && self.prev_left.x - self.prev_right.x > DISPARITY_MIN
            && self.cur_left.x - self.cur_right.x > DISPARITY_MIN
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub nms_radius: usize,
    pub max_count: usize,
    /// Minimum absolute filter response of a kept extremum.
    pub threshold: i32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            nms_radius: 5,
            max_count: 2000,
            threshold: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Row tolerance of the stereo legs, pixels.
    pub epipolar_tol: f64,
    /// Half-size of the temporal search window in u and v, pixels.
    pub temporal_window: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            epipolar_tol: 1.0,
            temporal_window: 50.0,
        }
    }
}

/// Dense filter response over the image; zero in the 2-pixel border.
pub(crate) fn filter_response(img: &Image, mask: &[[i32; 5]; 5]) -> Vec<i32> {
    let (w, h) = (img.width, img.height);
    let mut out = vec![0i32; w * h];
    if w < 5 || h < 5 {
        return out;
    }
    for y in 2..h - 2 {
        for x in 2..w - 2 {
            let mut acc = 0i32;
            for (dy, row) in mask.iter().enumerate() {
                let base = (y + dy - 2) * w + x - 2;
                let px = &img.data[base..base + 5];
                for (m, &p) in row.iter().zip(px) {
                    acc += m * p as i32;
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Horizontal and vertical 3×3 Sobel responses; zero on the 1-pixel border.
fn sobel(img: &Image) -> (Vec<i16>, Vec<i16>) {
    let (w, h) = (img.width, img.height);
    let mut gx = vec![0i16; w * h];
    let mut gy = vec![0i16; w * h];
    if w < 3 || h < 3 {
        return (gx, gy);
    }
    let p = |x: usize, y: usize| img.data[y * w + x] as i32;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let dx = (p(x + 1, y - 1) + 2 * p(x + 1, y) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2 * p(x - 1, y) + p(x - 1, y + 1));
            let dy = (p(x - 1, y + 1) + 2 * p(x, y + 1) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2 * p(x, y - 1) + p(x + 1, y - 1));
            gx[y * w + x] = dx as i16;
            gy[y * w + x] = dy as i16;
        }
    }
    (gx, gy)
}

/// Non-maximum suppression on `sign * response`, block-based.
///
/// A pixel `p` survives iff every other pixel `q` in its `(2r+1)²` window has
/// a smaller value, or an equal value and a later raster index. Every such
/// pixel is also the first maximum of its `(r+1)²` block, so scanning block
/// winners finds all of them.
fn suppress(
    response: &[i32],
    w: usize,
    h: usize,
    sign: i32,
    radius: usize,
    threshold: i32,
    out: &mut Vec<(usize, usize, i32)>,
) {
    let lo = DESCRIPTOR_MARGIN;
    if w <= 2 * lo || h <= 2 * lo {
        return;
    }
    let (x_end, y_end) = (w - lo, h - lo);
    let block = radius + 1;
    let value = |x: usize, y: usize| sign * response[y * w + x];

    let mut by = lo;
    while by < y_end {
        let mut bx = lo;
        while bx < x_end {
            let mut best = (bx, by);
            let mut best_v = i32::MIN;
            for y in by..(by + block).min(y_end) {
                for x in bx..(bx + block).min(x_end) {
                    let v = value(x, y);
                    if v > best_v {
                        best_v = v;
                        best = (x, y);
                    }
                }
            }
            if best_v >= threshold && is_window_extremum(&value, best, best_v, radius, w, h) {
                out.push((best.0, best.1, sign * best_v));
            }
            bx += block;
        }
        by += block;
    }
}

fn is_window_extremum(
    value: &impl Fn(usize, usize) -> i32,
    (px, py): (usize, usize),
    pv: i32,
    radius: usize,
    w: usize,
    h: usize,
) -> bool {
    // Responses exist on [2, w-3] x [2, h-3].
    let x0 = px.saturating_sub(radius).max(2);
    let x1 = (px + radius).min(w - 3);
    let y0 = py.saturating_sub(radius).max(2);
    let y1 = (py + radius).min(h - 3);
    let p_idx = py * w + px;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let v = value(x, y);
            let idx = y * w + x;
            if v > pv || (v == pv && idx < p_idx) {
                return false;
            }
        }
    }
    true
}

/// Vertex offset of a parabola through `(−1, a)`, `(0, b)`, `(1, c)`.
fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom.abs() < f64::EPSILON {
        return 0.0;
    }
    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

fn sample_descriptor(gx: &[i16], gy: &[i16], w: usize, x: usize, y: usize) -> Descriptor {
    let mut d = [0i16; DESCRIPTOR_LEN];
    let mut k = 0;
    for &oy in &DESCRIPTOR_OFFSETS {
        for &ox in &DESCRIPTOR_OFFSETS {
            let sx = (x as isize + ox) as usize;
            let sy = (y as isize + oy) as usize;
            d[k] = gx[sy * w + sx];
            d[k + 1] = gy[sy * w + sx];
            k += 2;
        }
    }
    d
}

/// Detects blob and corner extrema, strongest `|response|` first.
///
/// Images smaller than twice the descriptor margin yield no features.
pub fn detect_features(img: &Image, cfg: &DetectorConfig) -> Vec<Feature> {
    let (w, h) = (img.width, img.height);
    if w < 2 * DESCRIPTOR_MARGIN + 1 || h < 2 * DESCRIPTOR_MARGIN + 1 {
        return Vec::new();
    }
    let blob = filter_response(img, &BLOB_MASK);
    let corner = filter_response(img, &CORNER_MASK);
    let (gx, gy) = sobel(img);

    let mut features = Vec::new();
    let mut peaks = Vec::new();
    for class in FeatureClass::ALL {
        let (response, sign) = match class {
            FeatureClass::BlobMax => (&blob, 1),
            FeatureClass::BlobMin => (&blob, -1),
            FeatureClass::CornerMax => (&corner, 1),
            FeatureClass::CornerMin => (&corner, -1),
        };
        peaks.clear();
        suppress(response, w, h, sign, cfg.nms_radius, cfg.threshold.max(1), &mut peaks);
        for &(x, y, r) in &peaks {
            let at = |dx: isize, dy: isize| {
                let idx = (y as isize + dy) as usize * w + (x as isize + dx) as usize;
                response[idx] as f64
            };
            let du = parabolic_offset(at(-1, 0), at(0, 0), at(1, 0));
            let dv = parabolic_offset(at(0, -1), at(0, 0), at(0, 1));
            features.push(Feature {
                location: Vector2::new(x as f64 + du, y as f64 + dv),
                class,
                response: r,
                descriptor: sample_descriptor(&gx, &gy, w, x, y),
            });
        }
    }

    // Stable sort keeps class/raster order among equal strengths.
    features.sort_by_key(|f| std::cmp::Reverse(f.response.abs()));
    features.truncate(cfg.max_count);
    features
}

/// Sum of absolute differences between two descriptors.
#[inline]
pub fn sad(a: &Descriptor, b: &Descriptor) -> u32 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as i32 - y as i32).unsigned_abs())
        .sum()
}

const CELL: f64 = 32.0;

/// Per-class uniform grid over feature locations.
struct FeatureGrid<'a> {
    features: &'a [Feature],
    cols: usize,
    rows: usize,
    /// `cells[class][row * cols + col]` holds feature indices in ascending order.
    cells: Vec<Vec<Vec<u32>>>,
}

impl<'a> FeatureGrid<'a> {
    fn new(features: &'a [Feature]) -> Self {
        let max_x = features.iter().map(|f| f.location.x).fold(0.0, f64::max);
        let max_y = features.iter().map(|f| f.location.y).fold(0.0, f64::max);
        let cols = (max_x / CELL) as usize + 1;
        let rows = (max_y / CELL) as usize + 1;
        let mut cells = vec![vec![Vec::new(); cols * rows]; FeatureClass::ALL.len()];
        for (i, f) in features.iter().enumerate() {
            let (c, r) = Self::cell_of(f.location.x, f.location.y);
            cells[f.class.index()][r * cols + c].push(i as u32);
        }
        Self {
            features,
            cols,
            rows,
            cells,
        }
    }

    fn cell_of(x: f64, y: f64) -> (usize, usize) {
        ((x.max(0.0) / CELL) as usize, (y.max(0.0) / CELL) as usize)
    }

    /// Lowest-cost feature of `class` inside the box that passes `accept`;
    /// equal costs resolve to the lowest index.
    fn best_in_box(
        &self,
        class: FeatureClass,
        (u0, u1): (f64, f64),
        (v0, v1): (f64, f64),
        descriptor: &Descriptor,
        accept: impl Fn(&Feature) -> bool,
    ) -> Option<usize> {
        if u1 < 0.0 || v1 < 0.0 {
            return None;
        }
        let (c0, r0) = Self::cell_of(u0, v0);
        let (c1, r1) = Self::cell_of(u1, v1);
        let c1 = c1.min(self.cols - 1);
        let r1 = r1.min(self.rows - 1);
        let cells = &self.cells[class.index()];
        let mut best: Option<(u32, usize)> = None;
        for r in r0..=r1 {
            for c in c0..=c1 {
                for &i in &cells[r * self.cols + c] {
                    let f = &self.features[i as usize];
                    let p = f.location;
                    if p.x < u0 || p.x > u1 || p.y < v0 || p.y > v1 || !accept(f) {
                        continue;
                    }
                    let key = (sad(descriptor, &f.descriptor), i as usize);
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                }
            }
        }
        best.map(|(_, i)| i)
    }

    fn temporal(&self, from: &Feature, window: f64) -> Option<usize> {
        let p = from.location;
        self.best_in_box(
            from.class,
            (p.x - window, p.x + window),
            (p.y - window, p.y + window),
            &from.descriptor,
            |_| true,
        )
    }

    /// Stereo leg. `to_right` searches for candidates left of `from` (positive
    /// disparity when `from` is in the left image); otherwise to its right.
    fn stereo(&self, from: &Feature, tol: f64, to_right: bool) -> Option<usize> {
        let p = from.location;
        let u_range = if to_right { (0.0, p.x) } else { (p.x, f64::INFINITY) };
        self.best_in_box(from.class, u_range, (p.y - tol, p.y + tol), &from.descriptor, |f| {
            if to_right {
                f.location.x < p.x
            } else {
                f.location.x > p.x
            }
        })
    }
}

/// Circular matching returning `[prev_left, prev_right, cur_left, cur_right]`
/// feature indices per accepted loop, ordered by `cur_left` index.
pub fn circular_match_indices(
    prev_left: &[Feature],
    prev_right: &[Feature],
    cur_left: &[Feature],
    cur_right: &[Feature],
    cfg: &MatchConfig,
) -> Vec<[usize; 4]> {
    if [prev_left, prev_right, cur_left, cur_right]
        .iter()
        .any(|s| s.is_empty())
    {
        return Vec::new();
    }
    let g_pl = FeatureGrid::new(prev_left);
    let g_pr = FeatureGrid::new(prev_right);
    let g_cl = FeatureGrid::new(cur_left);
    let g_cr = FeatureGrid::new(cur_right);
    let tol = cfg.epipolar_tol;

    let mut out = Vec::new();
    for (i, f) in cur_left.iter().enumerate() {
        let Some(pl) = g_pl.temporal(f, cfg.temporal_window) else {
            continue;
        };
        let Some(pr) = g_pr.stereo(&prev_left[pl], tol, true) else {
            continue;
        };
        let Some(cr) = g_cr.temporal(&prev_right[pr], cfg.temporal_window) else {
            continue;
        };
        let Some(back) = g_cl.stereo(&cur_right[cr], tol, false) else {
            continue;
        };
        if back != i {
            continue;
        }
        let m = QuadMatch {
            prev_left: prev_left[pl].location,
            prev_right: prev_right[pr].location,
            cur_left: f.location,
            cur_right: cur_right[cr].location,
            class: f.class,
        };
        // Sub-pixel refinement can move points slightly past the gates.
        if m.satisfies_stereo_constraints(tol) {
            out.push([pl, pr, i, cr]);
        }
    }
    out
}

/// Circular matching over the four feature sets of two consecutive stereo
/// pairs. Only loops returning to their starting `cur_left` feature are kept.
pub fn circular_match(
    prev_left: &[Feature],
    prev_right: &[Feature],
    cur_left: &[Feature],
    cur_right: &[Feature],
    cfg: &MatchConfig,
) -> Vec<QuadMatch> {
    circular_match_indices(prev_left, prev_right, cur_left, cur_right, cfg)
        .into_iter()
        .map(|[pl, pr, cl, cr]| QuadMatch {
            prev_left: prev_left[pl].location,
            prev_right: prev_right[pr].location,
            cur_left: cur_left[cl].location,
            cur_right: cur_right[cr].location,
            class: cur_left[cl].class,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Direct 5×5 correlation, no border handling tricks.
    fn brute_response(img: &Image, mask: &[[i32; 5]; 5], x: usize, y: usize) -> i32 {
        let mut acc = 0;
        for (dy, row) in mask.iter().enumerate() {
            for (dx, m) in row.iter().enumerate() {
                acc += m * img.get(x + dx - 2, y + dy - 2) as i32;
            }
        }
        acc
    }

    /// Brute-force NMS over the whole valid region for one class.
    fn brute_extrema(img: &Image, mask: &[[i32; 5]; 5], sign: i32, r: usize, thr: i32) -> Vec<(usize, usize)> {
        let (w, h) = (img.width, img.height);
        let val = |x: usize, y: usize| sign * brute_response(img, mask, x, y);
        let mut out = vec![];
        for y in DESCRIPTOR_MARGIN..h - DESCRIPTOR_MARGIN {
            for x in DESCRIPTOR_MARGIN..w - DESCRIPTOR_MARGIN {
                let v = val(x, y);
                if v < thr {
                    continue;
                }
                let mut keep = true;
                'win: for qy in y.saturating_sub(r).max(2)..=(y + r).min(h - 3) {
                    for qx in x.saturating_sub(r).max(2)..=(x + r).min(w - 3) {
                        let q = val(qx, qy);
                        if q > v || (q == v && (qy, qx) < (y, x)) {
                            keep = false;
                            break 'win;
                        }
                    }
                }
                if keep {
                    out.push((x, y));
                }
            }
        }
        out
    }

    fn dot(img: &mut Image, cx: usize, cy: usize, peak: u8) {
        for dy in 0..3 {
            for dx in 0..3 {
                let v = if dx == 1 && dy == 1 { peak } else { peak / 3 };
                img.set(cx + dx - 1, cy + dy - 1, v);
            }
        }
    }

    fn textured(w: usize, h: usize, seed: u32) -> Image {
        let mut s = seed;
        let data = (0..w * h)
            .map(|_| {
                s = s.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
                (s >> 24) as u8
            })
            .collect();
        Image::new(w, h, data).unwrap()
    }

    #[test]
    fn constant_image_has_no_features() {
        let img = Image::filled(64, 48, 117);
        assert!(detect_features(&img, &DetectorConfig::default()).is_empty());
    }

    #[test]
    fn tiny_image_has_no_features() {
        let img = textured(12, 40, 3);
        assert!(detect_features(&img, &DetectorConfig::default()).is_empty());
    }

    #[test]
    fn single_dot_gives_one_blob_max() {
        let mut img = Image::filled(48, 40, 0);
        dot(&mut img, 20, 17, 240);
        let feats = detect_features(&img, &DetectorConfig::default());
        let blobs: Vec<_> = feats.iter().filter(|f| f.class == FeatureClass::BlobMax).collect();
        assert_eq!(blobs.len(), 1);
        let p = blobs[0].location;
        assert!((p.x - 20.0).abs() <= 1.0 && (p.y - 17.0).abs() <= 1.0, "{p:?}");
        // Brute-force oracle agrees on the integer peak.
        assert_eq!(brute_extrema(&img, &BLOB_MASK, 1, 5, 50), vec![(20, 17)]);
    }

    #[test]
    fn close_dots_keep_the_stronger() {
        let mut img = Image::filled(48, 40, 0);
        dot(&mut img, 20, 17, 240);
        dot(&mut img, 24, 18, 120);
        let feats = detect_features(&img, &DetectorConfig::default());
        let blobs: Vec<_> = feats.iter().filter(|f| f.class == FeatureClass::BlobMax).collect();
        assert_eq!(blobs.len(), 1);
        assert!((blobs[0].location.x - 20.0).abs() <= 1.0);
        assert_eq!(brute_extrema(&img, &BLOB_MASK, 1, 5, 50), vec![(20, 17)]);
    }

    #[test]
    fn block_nms_matches_brute_force_on_texture() {
        let img = textured(80, 60, 42);
        let cfg = DetectorConfig {
            max_count: usize::MAX,
            ..DetectorConfig::default()
        };
        let feats = detect_features(&img, &cfg);
        for (class, mask, sign) in [
            (FeatureClass::BlobMax, &BLOB_MASK, 1),
            (FeatureClass::BlobMin, &BLOB_MASK, -1),
            (FeatureClass::CornerMax, &CORNER_MASK, 1),
            (FeatureClass::CornerMin, &CORNER_MASK, -1),
        ] {
            let got: Vec<&Feature> = feats.iter().filter(|f| f.class == class).collect();
            let want = brute_extrema(&img, mask, sign, 5, 50);
            assert_eq!(got.len(), want.len(), "{class:?}");
            // Sub-pixel offsets are clamped to ±0.5 around the integer peak.
            for (x, y) in want {
                assert!(
                    got.iter()
                        .any(|f| (f.location.x - x as f64).abs() <= 0.5 && (f.location.y - y as f64).abs() <= 0.5),
                    "{class:?} peak ({x}, {y}) missing"
                );
            }
        }
        for f in &feats {
            let (x, y) = (f.location.x.round(), f.location.y.round());
            assert!(x >= (DESCRIPTOR_MARGIN - 1) as f64 && y >= (DESCRIPTOR_MARGIN - 1) as f64);
        }
    }

    #[test]
    fn max_count_keeps_strongest() {
        let img = textured(80, 60, 7);
        let all = detect_features(
            &img,
            &DetectorConfig {
                max_count: usize::MAX,
                ..Default::default()
            },
        );
        let few = detect_features(
            &img,
            &DetectorConfig {
                max_count: 10,
                ..Default::default()
            },
        );
        assert_eq!(few.len(), 10);
        assert_eq!(&all[..10], &few[..]);
        assert!(few.windows(2).all(|w| w[0].response.abs() >= w[1].response.abs()));
    }

    fn feature(x: f64, y: f64, seed: i16) -> Feature {
        let mut d = [0i16; DESCRIPTOR_LEN];
        for (k, v) in d.iter_mut().enumerate() {
            *v = seed.wrapping_mul(31).wrapping_add(k as i16 * seed);
        }
        Feature {
            location: Vector2::new(x, y),
            class: FeatureClass::BlobMax,
            response: 100,
            descriptor: d,
        }
    }

    #[test]
    fn identical_sets_match_themselves() {
        // Left features sit 10 px right of their right-image twins so the
        // stereo legs see positive disparity; temporal legs see zero motion.
        let left: Vec<_> = (0..20)
            .map(|i| feature(100.0 + 37.0 * i as f64, 50.0 + 3.0 * i as f64, i as i16 + 1))
            .collect();
        let right: Vec<_> = left
            .iter()
            .map(|f| Feature {
                location: f.location - Vector2::new(10.0, 0.0),
                ..f.clone()
            })
            .collect();
        let idx = circular_match_indices(&left, &right, &left, &right, &MatchConfig::default());
        assert_eq!(idx.len(), 20);
        for (k, m) in idx.iter().enumerate() {
            assert_eq!(*m, [k, k, k, k]);
        }
    }

    #[test]
    fn feature_without_loop_is_not_matched() {
        let pl = vec![feature(100.0, 50.0, 1)];
        let pr = vec![feature(90.0, 50.0, 1)];
        let cl = vec![feature(102.0, 50.0, 1), feature(400.0, 200.0, 9)];
        let cr = vec![feature(92.0, 50.0, 1)];
        let idx = circular_match_indices(&pl, &pr, &cl, &cr, &MatchConfig::default());
        assert_eq!(idx, vec![[0, 0, 0, 0]]);
    }

    #[test]
    fn epipolar_gate_rejects_row_offsets() {
        let pl = vec![feature(100.0, 50.0, 1)];
        let pr = vec![feature(90.0, 51.5, 1)];
        let idx = circular_match_indices(&pl, &pr, &pl, &pr, &MatchConfig::default());
        assert!(idx.is_empty());
    }

    #[test]
    fn matching_on_texture_is_unique_circular_and_deterministic() {
        let a = textured(160, 90, 11);
        // Right image: shift by 4 px (disparity); current frame: shift by 2 px.
        let shift = |img: &Image, dx: isize, dy: isize| {
            let mut out = Image::filled(img.width, img.height, 0);
            for y in 0..img.height {
                for x in 0..img.width {
                    let sx = x as isize + dx;
                    let sy = y as isize + dy;
                    if sx >= 0 && sy >= 0 && (sx as usize) < img.width && (sy as usize) < img.height {
                        out.set(x, y, img.get(sx as usize, sy as usize));
                    }
                }
            }
            out
        };
        let imgs = [a.clone(), shift(&a, 4, 0), shift(&a, -2, 1), shift(&a, 2, 1)];
        let cfg = DetectorConfig::default();
        let f: Vec<_> = imgs.iter().map(|i| detect_features(i, &cfg)).collect();
        let mcfg = MatchConfig::default();
        let idx = circular_match_indices(&f[0], &f[1], &f[2], &f[3], &mcfg);
        assert!(!idx.is_empty());
        for k in 0..4 {
            let set: HashSet<_> = idx.iter().map(|m| m[k]).collect();
            assert_eq!(set.len(), idx.len(), "image {k} index reused");
        }
        for m in circular_match(&f[0], &f[1], &f[2], &f[3], &mcfg) {
            assert!((m.prev_left.y - m.prev_right.y).abs() <= 1.0);
            assert!((m.cur_left.y - m.cur_right.y).abs() <= 1.0);
        }
        let again = circular_match_indices(&f[0], &f[1], &f[2], &f[3], &mcfg);
        assert_eq!(idx, again);
        let correct = circular_match(&f[0], &f[1], &f[2], &f[3], &mcfg)
            .iter()
            .filter(|m| {
                (m.prev_left.x - m.prev_right.x - 4.0).abs() < 1.0 && (m.cur_left.x - m.prev_left.x - 2.0).abs() < 1.0
            })
            .count();
        assert!(correct as f64 >= 0.9 * idx.len() as f64);
    }
}
