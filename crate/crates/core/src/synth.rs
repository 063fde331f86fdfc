//! Synthetic stereo scenarios with exact ground truth.
//!
//! A scenario is a camera trajectory, a field of world landmarks spawned
//! uniformly in each camera's viewing frustum, and per frame pair the
//! [`QuadMatch`]es of every landmark visible in all four images. Pixel noise
//! and outliers are optional. Every random draw comes from a ChaCha stream
//! derived from `rng_seed` and the frame index, so scenarios are reproducible
//! and frames could be generated independently.
//!
//! Scenarios can be dumped to and loaded from a line-oriented text format:
//!
//! ```text
//! # fbvo scenario v1
//! rig <focal> <cu> <cv> <baseline> <width> <height>
//! pose <frame> <r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2>
//! landmark <id> <x> <y> <z>
//! match <frame> <landmark id | -> <pl.u pl.v pr.u pr.v cl.u cl.v cr.u cr.v> <class>
//! ```
//!
//! `pose` lines hold camera-to-world poses. A `match` line with `-` instead
//! of a landmark id is an injected outlier. Reals are written in shortest
//! round-trip form, so dump/load is lossless.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use thiserror::Error;

use crate::features::{FeatureClass, Image, QuadMatch};
use crate::geometry::{so3_exp, Eye, Pose, Rotation, StereoRig, DISPARITY_MIN};
use crate::metrics::Trajectory;

pub const SCENARIO_HEADER: &str = "# fbvo scenario v1";

/// Closest depth at which a landmark is rendered, metres.
const RENDER_NEAR: f64 = 0.1;
/// Range of a rendered dot's Gaussian standard deviation, pixels.
const DOT_SIGMA_RANGE: (f64, f64) = (0.45, 0.65);
/// Largest disparity given to an injected outlier, pixels.
const OUTLIER_MAX_DISPARITY: f64 = 100.0;

const TRAJECTORY_STREAM: u64 = 0;

/// Detector threshold for rendered scenes. The blob peak of any dot is at
/// least 8× its peak intensity (above 1000); ring and corner responses of
/// isolated or overlapping dots stay below the threshold.
pub const RENDERED_DETECTION_THRESHOLD: i32 = 800;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("scenario infeasible: no landmark visible in all four images of frame pair ({prev}, {cur})")]
    Infeasible { prev: usize, cur: usize },
    #[error("scenario dump line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    Straight,
    /// Constant speed and constant yaw rate.
    Arc,
    /// Heading perturbed every frame with yaw std `yaw_rate` (pitch and roll
    /// std a fifth of that).
    RandomWalk,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub frame_count: usize,
    pub trajectory_kind: TrajectoryKind,
    /// Metres per frame.
    pub speed: f64,
    /// Radians per frame.
    pub yaw_rate: f64,
    /// Landmarks spawned per frame before rejecting those already covered.
    pub landmark_count: usize,
    /// Spawn depth range, metres.
    pub depth_range: (f64, f64),
    pub pixel_noise_sigma: f64,
    pub outlier_fraction: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            frame_count: 50,
            trajectory_kind: TrajectoryKind::Straight,
            speed: 1.0,
            yaw_rate: 0.0,
            landmark_count: 300,
            depth_range: (5.0, 50.0),
            pixel_noise_sigma: 0.0,
            outlier_fraction: 0.0,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let (lo, hi) = self.depth_range;
        if self.frame_count < 2 {
            return bad(format!("frame_count must be >= 2, got {}", self.frame_count));
        }
        if self.landmark_count == 0 {
            return bad("landmark_count must be >= 1".into());
        }
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return bad(format!("depth_range must satisfy 0 < min < max, got ({lo}, {hi})"));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return bad(format!(
                "outlier_fraction must be in [0, 1], got {}",
                self.outlier_fraction
            ));
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return bad(format!(
                "pixel_noise_sigma must be >= 0, got {}",
                self.pixel_noise_sigma
            ));
        }
        if !(self.speed.is_finite() && self.yaw_rate.is_finite()) {
            return bad("speed and yaw_rate must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldLandmark {
    pub id: usize,
    pub position: Vector3<f64>,
}

/// Observations of frame pair `(frame - 1, frame)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservations {
    pub frame: usize,
    /// True `prev → cur` point transform.
    pub ground_truth_pose: Pose,
    pub quad_matches: Vec<QuadMatch>,
    /// Source landmark per match; `None` for injected outliers.
    pub landmark_ids: Vec<Option<usize>>,
    /// `true` for genuine matches.
    pub truth_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub rig: StereoRig,
    /// Camera-to-world poses of the left camera.
    pub ground_truth: Trajectory,
    pub landmarks: Vec<WorldLandmark>,
    /// One entry per consecutive frame pair.
    pub frames: Vec<FrameObservations>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn spawn_stream(frame: usize) -> u64 {
    1 + 2 * frame as u64
}

fn observation_stream(frame: usize) -> u64 {
    2 + 2 * frame as u64
}

fn camera_trajectory(cfg: &ScenarioConfig) -> Vec<Pose> {
    let mut rng = stream_rng(cfg.rng_seed, TRAJECTORY_STREAM);
    let forward = Vector3::new(0.0, 0.0, cfg.speed);
    let mut poses = vec![Pose::identity()];
    for i in 1..cfg.frame_count {
        let prev = poses[i - 1];
        let pose = match cfg.trajectory_kind {
            TrajectoryKind::Straight => Pose::from_translation(0.0, 0.0, cfg.speed * i as f64),
            TrajectoryKind::Arc => Pose::new(
                Rotation::ry(cfg.yaw_rate * i as f64),
                prev.translation + prev.rotation.rotate(&forward),
            ),
            TrajectoryKind::RandomWalk => {
                let s = cfg.yaw_rate.abs();
                let w = if s > 0.0 {
                    let yaw = Normal::new(0.0, s).expect("finite std");
                    let tilt = Normal::new(0.0, 0.2 * s).expect("finite std");
                    Vector3::new(tilt.sample(&mut rng), yaw.sample(&mut rng), tilt.sample(&mut rng))
                } else {
                    Vector3::zeros()
                };
                Pose::new(
                    prev.rotation * so3_exp(&w),
                    prev.translation + prev.rotation.rotate(&forward),
                )
            }
        };
        poses.push(pose);
    }
    poses
}

/// Whether a camera-frame point lies inside the spawn frustum.
fn in_frustum(rig: &StereoRig, p: &Vector3<f64>, depth: (f64, f64)) -> bool {
    p.z >= depth.0 && p.z <= depth.1 && rig.contains(&rig.project_eye(p, Eye::Left))
}

fn spawn_landmarks(rig: &StereoRig, cfg: &ScenarioConfig, cameras: &[Pose]) -> Vec<WorldLandmark> {
    let (lo, hi) = cfg.depth_range;
    let (lo3, hi3) = (lo.powi(3), hi.powi(3));
    let mut out = Vec::new();
    for (k, cam) in cameras.iter().enumerate() {
        let mut rng = stream_rng(cfg.rng_seed, spawn_stream(k));
        let prev_world_to_cam = (k > 0).then(|| cameras[k - 1].inverse());
        for _ in 0..cfg.landmark_count {
            // Uniform in volume: depth density grows with z².
            let z = (lo3 + rng.random::<f64>() * (hi3 - lo3)).cbrt();
            let u = rng.random::<f64>() * (rig.width - 1) as f64;
            let v = rng.random::<f64>() * (rig.height - 1) as f64;
            let local = Vector3::new((u - rig.cu) * z / rig.focal, (v - rig.cv) * z / rig.focal, z);
            let world = cam.transform_point(&local);
            if let Some(w2c) = &prev_world_to_cam {
                if in_frustum(rig, &w2c.transform_point(&world), cfg.depth_range) {
                    continue;
                }
            }
            out.push(WorldLandmark {
                id: out.len(),
                position: world,
            });
        }
    }
    out
}

/// Left and right projections of a camera-frame point if it is in front of
/// the camera, inside both images, and triangulable.
fn visible_pair(rig: &StereoRig, p: &Vector3<f64>) -> Option<(Vector2<f64>, Vector2<f64>)> {
    if p.z <= RENDER_NEAR {
        return None;
    }
    let l = rig.project_eye(p, Eye::Left);
    let r = rig.project_eye(p, Eye::Right);
    (rig.contains(&l) && rig.contains(&r) && l.x - r.x > DISPARITY_MIN).then_some((l, r))
}

fn random_stereo_pair(rig: &StereoRig, rng: &mut ChaCha8Rng) -> (Vector2<f64>, Vector2<f64>) {
    let (w, h) = ((rig.width - 1) as f64, (rig.height - 1) as f64);
    loop {
        let left = Vector2::new(rng.random::<f64>() * w, rng.random::<f64>() * h);
        let max_d = left.x.min(OUTLIER_MAX_DISPARITY);
        if max_d <= 1.0 {
            continue;
        }
        let d = rng.random_range(1.0..max_d);
        return (left, Vector2::new(left.x - d, left.y));
    }
}

fn class_for(id: usize) -> FeatureClass {
    FeatureClass::ALL[id % FeatureClass::ALL.len()]
}

fn observe_pair(
    rig: &StereoRig,
    cfg: &ScenarioConfig,
    landmarks: &[WorldLandmark],
    cameras: &[Pose],
    frame: usize,
) -> Result<FrameObservations, SynthError> {
    let prev_w2c = cameras[frame - 1].inverse();
    let cur_w2c = cameras[frame].inverse();
    let ground_truth_pose = cameras[frame].inverse().compose(&cameras[frame - 1]);

    let mut quad_matches = Vec::new();
    let mut landmark_ids = Vec::new();
    for lm in landmarks {
        let Some((pl, pr)) = visible_pair(rig, &prev_w2c.transform_point(&lm.position)) else {
            continue;
        };
        let Some((cl, cr)) = visible_pair(rig, &cur_w2c.transform_point(&lm.position)) else {
            continue;
        };
        quad_matches.push(QuadMatch {
            prev_left: pl,
            prev_right: pr,
            cur_left: cl,
            cur_right: cr,
            class: class_for(lm.id),
        });
        landmark_ids.push(Some(lm.id));
    }
    if quad_matches.is_empty() {
        return Err(SynthError::Infeasible {
            prev: frame - 1,
            cur: frame,
        });
    }

    let mut rng = stream_rng(cfg.rng_seed, observation_stream(frame));
    if cfg.pixel_noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.pixel_noise_sigma).expect("validated sigma");
        for m in &mut quad_matches {
            for p in [&mut m.prev_left, &mut m.prev_right, &mut m.cur_left, &mut m.cur_right] {
                p.x += noise.sample(&mut rng);
                p.y += noise.sample(&mut rng);
            }
        }
    }
    let n_out = (cfg.outlier_fraction * quad_matches.len() as f64).round() as usize;
    if n_out > 0 {
        let mut chosen = index::sample(&mut rng, quad_matches.len(), n_out).into_vec();
        chosen.sort_unstable();
        for i in chosen {
            let (pl, pr) = random_stereo_pair(rig, &mut rng);
            let (cl, cr) = random_stereo_pair(rig, &mut rng);
            let m = &mut quad_matches[i];
            m.prev_left = pl;
            m.prev_right = pr;
            m.cur_left = cl;
            m.cur_right = cr;
            landmark_ids[i] = None;
        }
    }
    let truth_mask = landmark_ids.iter().map(Option::is_some).collect();
    Ok(FrameObservations {
        frame,
        ground_truth_pose,
        quad_matches,
        landmark_ids,
        truth_mask,
    })
}

/// Generates a scenario; deterministic in `cfg.rng_seed`.
pub fn generate_scenario(rig: &StereoRig, cfg: &ScenarioConfig) -> Result<Scenario, SynthError> {
    cfg.validate()?;
    let cameras = camera_trajectory(cfg);
    let landmarks = spawn_landmarks(rig, cfg, &cameras);
    let frames = (1..cameras.len())
        .map(|k| observe_pair(rig, cfg, &landmarks, &cameras, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Scenario {
        rig: *rig,
        ground_truth: Trajectory::from_poses(cameras).expect("first camera is the identity"),
        landmarks,
        frames,
    })
}

fn landmark_hash(id: usize) -> u64 {
    // SplitMix64 finalizer.
    let mut z = (id as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Peak intensity (`128..=255`) and Gaussian width of a landmark's dot.
pub fn dot_profile(id: usize) -> (u8, f64) {
    let h = landmark_hash(id);
    let peak = 128 + (h % 128) as u8;
    let (lo, hi) = DOT_SIGMA_RANGE;
    let sigma = lo + (hi - lo) * ((h >> 32) % 64) as f64 / 63.0;
    (peak, sigma)
}

/// Renders one eye of the rig at camera-to-world pose `camera` (left camera).
///
/// Each landmark in front of the camera becomes a 3×3 Gaussian dot centred on
/// the pixel containing its projection, blended by maximum. Peak and width
/// come from [`dot_profile`], so descriptors differ between landmarks. Dots are not
/// anti-aliased: a dot's appearance depends only on its landmark, so rendered
/// positions carry up to half a pixel of quantization error per axis.
pub fn render_frame(rig: &StereoRig, landmarks: &[WorldLandmark], camera: &Pose, eye: Eye) -> Image {
    let (w, h) = (rig.width as usize, rig.height as usize);
    let mut img = Image::filled(w, h, 0);
    let w2c = camera.inverse();
    for lm in landmarks {
        let p = w2c.transform_point(&lm.position);
        if p.z <= RENDER_NEAR {
            continue;
        }
        let q = rig.project_eye(&p, eye);
        let (cx, cy) = (q.x.round(), q.y.round());
        if !(cx >= 1.0 && cy >= 1.0 && cx <= (w - 2) as f64 && cy <= (h - 2) as f64) {
            continue;
        }
        let (peak, sigma) = dot_profile(lm.id);
        let peak = peak as f64;
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                let d2 = (dx * dx + dy * dy) as f64;
                let v = (peak * (-d2 / (2.0 * sigma * sigma)).exp()).round() as u8;
                let (xi, yi) = ((cx as i32 + dx) as usize, (cy as i32 + dy) as usize);
                if v > img.get(xi, yi) {
                    img.set(xi, yi, v);
                }
            }
        }
    }
    img
}

impl Scenario {
    /// Renders the left and right images of frame `k`.
    pub fn render_stereo(&self, k: usize) -> (Image, Image) {
        let cam = &self.ground_truth.poses()[k];
        (
            render_frame(&self.rig, &self.landmarks, cam, Eye::Left),
            render_frame(&self.rig, &self.landmarks, cam, Eye::Right),
        )
    }

    pub fn frame_count(&self) -> usize {
        self.ground_truth.len()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let r = &self.rig;
        let _ = writeln!(s, "{SCENARIO_HEADER}");
        let _ = writeln!(
            s,
            "rig {} {} {} {} {} {}",
            r.focal, r.cu, r.cv, r.baseline, r.width, r.height
        );
        for (k, p) in self.ground_truth.poses().iter().enumerate() {
            let m = p.to_matrix();
            let _ = write!(s, "pose {k}");
            for row in 0..3 {
                for col in 0..4 {
                    let _ = write!(s, " {}", m[(row, col)]);
                }
            }
            s.push('\n');
        }
        for lm in &self.landmarks {
            let p = &lm.position;
            let _ = writeln!(s, "landmark {} {} {} {}", lm.id, p.x, p.y, p.z);
        }
        for f in &self.frames {
            for (m, id) in f.quad_matches.iter().zip(&f.landmark_ids) {
                let _ = write!(s, "match {} ", f.frame);
                match id {
                    Some(id) => {
                        let _ = write!(s, "{id}");
                    }
                    None => s.push('-'),
                }
                for p in [m.prev_left, m.prev_right, m.cur_left, m.cur_right] {
                    let _ = write!(s, " {} {}", p.x, p.y);
                }
                let _ = writeln!(s, " {}", class_name(m.class));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Scenario, SynthError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, h)) if h == SCENARIO_HEADER => {}
            _ => return Err(parse_err(1, format!("expected header '{SCENARIO_HEADER}'"))),
        }
        let mut rig = None;
        let mut poses = Vec::new();
        let mut landmarks = Vec::new();
        let mut matches: Vec<(usize, QuadMatch, Option<usize>)> = Vec::new();
        for (ln, line) in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tok = line.split_whitespace();
            let kind = tok.next().unwrap_or_default();
            let rest: Vec<&str> = tok.collect();
            match kind {
                "rig" => {
                    expect_len(ln, &rest, 6)?;
                    let f = reals(ln, &rest[..4])?;
                    let w = int(ln, rest[4])?;
                    let h = int(ln, rest[5])?;
                    let r = StereoRig::new(f[0], (f[1], f[2]), f[3], (w as u32, h as u32))
                        .map_err(|e| parse_err(ln, e.to_string()))?;
                    rig = Some(r);
                }
                "pose" => {
                    expect_len(ln, &rest, 13)?;
                    if int(ln, rest[0])? != poses.len() {
                        return Err(parse_err(ln, "pose frames must be consecutive from 0".into()));
                    }
                    let v = reals(ln, &rest[1..])?;
                    poses.push(pose_from_row_major(ln, &v)?);
                }
                "landmark" => {
                    expect_len(ln, &rest, 4)?;
                    let id = int(ln, rest[0])?;
                    let v = reals(ln, &rest[1..])?;
                    landmarks.push(WorldLandmark {
                        id,
                        position: Vector3::new(v[0], v[1], v[2]),
                    });
                }
                "match" => {
                    expect_len(ln, &rest, 11)?;
                    let frame = int(ln, rest[0])?;
                    let id = if rest[1] == "-" { None } else { Some(int(ln, rest[1])?) };
                    let v = reals(ln, &rest[2..10])?;
                    let class =
                        parse_class(rest[10]).ok_or_else(|| parse_err(ln, format!("unknown class '{}'", rest[10])))?;
                    let pt = |i: usize| Vector2::new(v[2 * i], v[2 * i + 1]);
                    matches.push((
                        frame,
                        QuadMatch {
                            prev_left: pt(0),
                            prev_right: pt(1),
                            cur_left: pt(2),
                            cur_right: pt(3),
                            class,
                        },
                        id,
                    ));
                }
                other => return Err(parse_err(ln, format!("unknown record '{other}'"))),
            }
        }
        let rig = rig.ok_or_else(|| parse_err(0, "missing rig line".into()))?;
        let ground_truth = Trajectory::from_poses(poses.clone()).map_err(|e| parse_err(0, e.to_string()))?;
        let mut frames: Vec<FrameObservations> = (1..poses.len())
            .map(|k| FrameObservations {
                frame: k,
                ground_truth_pose: poses[k].inverse().compose(&poses[k - 1]),
                quad_matches: Vec::new(),
                landmark_ids: Vec::new(),
                truth_mask: Vec::new(),
            })
            .collect();
        for (frame, m, id) in matches {
            let f = frame
                .checked_sub(1)
                .and_then(|i| frames.get_mut(i))
                .ok_or_else(|| parse_err(0, format!("match for unknown frame {frame}")))?;
            f.quad_matches.push(m);
            f.landmark_ids.push(id);
            f.truth_mask.push(id.is_some());
        }
        Ok(Scenario {
            rig,
            ground_truth,
            landmarks,
            frames,
        })
    }
}

fn class_name(c: FeatureClass) -> &'static str {
    match c {
        FeatureClass::BlobMax => "blob-max",
        FeatureClass::BlobMin => "blob-min",
        FeatureClass::CornerMax => "corner-max",
        FeatureClass::CornerMin => "corner-min",
    }
}

fn parse_class(s: &str) -> Option<FeatureClass> {
    FeatureClass::ALL.into_iter().find(|&c| class_name(c) == s)
}

fn parse_err(line: usize, message: String) -> SynthError {
    SynthError::Parse { line, message }
}

fn expect_len(line: usize, tok: &[&str], n: usize) -> Result<(), SynthError> {
    if tok.len() == n {
        Ok(())
    } else {
        Err(parse_err(line, format!("expected {n} fields, found {}", tok.len())))
    }
}

fn reals(line: usize, tok: &[&str]) -> Result<Vec<f64>, SynthError> {
    tok.iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(line, format!("not a number: '{t}'")))
        })
        .collect()
}

fn int(line: usize, tok: &str) -> Result<usize, SynthError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("not an index: '{tok}'")))
}

fn pose_from_row_major(line: usize, v: &[f64]) -> Result<Pose, SynthError> {
    let m = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
    let r = Rotation::from_matrix(m).ok_or_else(|| parse_err(line, "rotation block is not a rotation".into()))?;
    Ok(Pose::new(r, Vector3::new(v[3], v[7], v[11])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{reprojection_residuals, StereoObservation};
    use crate::features::{circular_match, detect_features, DetectorConfig, MatchConfig};
    use crate::geometry::{triangulate, Landmark};

    fn rig() -> StereoRig {
        StereoRig::kitti_like()
    }

    fn cfg(frames: usize) -> ScenarioConfig {
        ScenarioConfig {
            frame_count: frames,
            ..Default::default()
        }
    }

    #[test]
    fn straight_poses_are_exact() {
        let s = generate_scenario(&rig(), &cfg(10)).unwrap();
        for (i, p) in s.ground_truth.poses().iter().enumerate() {
            assert_eq!(p.translation, Vector3::new(0.0, 0.0, i as f64));
            assert_eq!(p.rotation, Rotation::identity());
        }
        assert_eq!(s.frames.len(), 9);
    }

    #[test]
    fn noiseless_matches_reproject_exactly() {
        for kind in [
            TrajectoryKind::Straight,
            TrajectoryKind::Arc,
            TrajectoryKind::RandomWalk,
        ] {
            let c = ScenarioConfig {
                frame_count: 8,
                trajectory_kind: kind,
                yaw_rate: 0.02,
                ..Default::default()
            };
            let s = generate_scenario(&rig(), &c).unwrap();
            for f in &s.frames {
                assert!(f.quad_matches.len() > 50);
                let lms: Vec<Landmark> = f
                    .quad_matches
                    .iter()
                    .map(|m| triangulate(&s.rig, &m.prev_left, &m.prev_right).unwrap())
                    .collect();
                let obs: Vec<StereoObservation> = f
                    .quad_matches
                    .iter()
                    .map(|m| StereoObservation {
                        left: m.cur_left,
                        right: m.cur_right,
                    })
                    .collect();
                let r = reprojection_residuals(&s.rig, &f.ground_truth_pose, &lms, &obs).unwrap();
                assert!(r.values.amax() < 1e-9, "{kind:?}: {}", r.values.amax());
                for (m, id) in f.quad_matches.iter().zip(&f.landmark_ids) {
                    assert!(m.satisfies_stereo_constraints(1e-9));
                    assert_eq!(m.class, class_for(id.unwrap()));
                }
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let c = ScenarioConfig {
            frame_count: 6,
            trajectory_kind: TrajectoryKind::RandomWalk,
            yaw_rate: 0.05,
            pixel_noise_sigma: 0.5,
            outlier_fraction: 0.2,
            rng_seed: 42,
            ..Default::default()
        };
        let a = generate_scenario(&rig(), &c).unwrap();
        let b = generate_scenario(&rig(), &c).unwrap();
        assert_eq!(a, b);
        let other = generate_scenario(&rig(), &ScenarioConfig { rng_seed: 43, ..c }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn noise_matches_sigma() {
        let sigma = 0.7;
        let c = ScenarioConfig {
            frame_count: 12,
            pixel_noise_sigma: sigma,
            rng_seed: 5,
            ..Default::default()
        };
        let noisy = generate_scenario(&rig(), &c).unwrap();
        let clean = generate_scenario(
            &rig(),
            &ScenarioConfig {
                pixel_noise_sigma: 0.0,
                ..c
            },
        )
        .unwrap();
        let mut diffs = Vec::new();
        for (fa, fb) in noisy.frames.iter().zip(&clean.frames) {
            for (a, b) in fa.quad_matches.iter().zip(&fb.quad_matches) {
                for (p, q) in [
                    (a.prev_left, b.prev_left),
                    (a.prev_right, b.prev_right),
                    (a.cur_left, b.cur_left),
                    (a.cur_right, b.cur_right),
                ] {
                    diffs.push(p.x - q.x);
                    diffs.push(p.y - q.y);
                }
            }
        }
        assert!(diffs.len() >= 10_000);
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - sigma).abs() < 0.1 * sigma, "{std}");
    }

    #[test]
    fn outliers_follow_fraction_and_mask() {
        let c = ScenarioConfig {
            frame_count: 5,
            outlier_fraction: 0.3,
            rng_seed: 9,
            ..Default::default()
        };
        let s = generate_scenario(&rig(), &c).unwrap();
        for f in &s.frames {
            let n_out = f.truth_mask.iter().filter(|t| !**t).count();
            assert_eq!(n_out, (0.3 * f.quad_matches.len() as f64).round() as usize);
            for (m, truth) in f.quad_matches.iter().zip(&f.truth_mask) {
                if !truth {
                    assert!(s.rig.contains(&m.prev_left) && s.rig.contains(&m.cur_right));
                    assert!(m.satisfies_stereo_constraints(0.0));
                }
            }
        }
    }

    #[test]
    fn infeasible_scenario_names_frame() {
        // Camera leaps 1 km per frame: nothing stays in view.
        let c = ScenarioConfig {
            frame_count: 3,
            speed: 1000.0,
            ..Default::default()
        };
        assert_eq!(
            generate_scenario(&rig(), &c),
            Err(SynthError::Infeasible { prev: 0, cur: 1 })
        );
    }

    #[test]
    fn config_validation() {
        for bad in [
            ScenarioConfig {
                depth_range: (0.0, 10.0),
                ..Default::default()
            },
            ScenarioConfig {
                depth_range: (10.0, 5.0),
                ..Default::default()
            },
            ScenarioConfig {
                outlier_fraction: 1.5,
                ..Default::default()
            },
            ScenarioConfig {
                frame_count: 1,
                ..Default::default()
            },
            ScenarioConfig {
                pixel_noise_sigma: -1.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                generate_scenario(&rig(), &bad),
                Err(SynthError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn landmarks_lie_in_spawn_frustum() {
        let c = cfg(4);
        let s = generate_scenario(&rig(), &c).unwrap();
        // Frame-0 landmarks: ids below landmark_count.
        let first: Vec<_> = s.landmarks.iter().filter(|l| l.id < c.landmark_count).collect();
        assert_eq!(first.len(), c.landmark_count);
        for l in first {
            assert!(in_frustum(
                &s.rig,
                &l.position,
                (c.depth_range.0 - 1e-9, c.depth_range.1 + 1e-9)
            ));
        }
    }

    #[test]
    fn empty_render_is_black() {
        let img = render_frame(&rig(), &[], &Pose::identity(), Eye::Left);
        assert_eq!((img.width, img.height), (1241, 376));
        assert!(img.data.iter().all(|&v| v == 0));
        let behind = [WorldLandmark {
            id: 0,
            position: Vector3::new(0.0, 0.0, -5.0),
        }];
        assert!(render_frame(&rig(), &behind, &Pose::identity(), Eye::Left)
            .data
            .iter()
            .all(|&v| v == 0));
    }

    #[test]
    fn single_dot_detected_at_projection() {
        let r = rig();
        let lm = [WorldLandmark {
            id: 3,
            position: Vector3::new(0.3, -0.1, 12.0),
        }];
        let img = render_frame(&r, &lm, &Pose::identity(), Eye::Left);
        let proj = r.project_eye(&lm[0].position, Eye::Left);
        let feats = detect_features(&img, &DetectorConfig::default());
        let blobs: Vec<_> = feats.iter().filter(|f| f.class == FeatureClass::BlobMax).collect();
        assert_eq!(blobs.len(), 1);
        assert!((blobs[0].location - proj).norm() < 1.0);
    }

    #[test]
    fn dot_profiles_in_range_and_varied() {
        let profiles: Vec<_> = (0..500).map(dot_profile).collect();
        assert!(profiles
            .iter()
            .all(|&(p, s)| p >= 128 && (DOT_SIGMA_RANGE.0..=DOT_SIGMA_RANGE.1).contains(&s)));
        let distinct: std::collections::HashSet<(u8, u64)> = profiles.iter().map(|&(p, s)| (p, s.to_bits())).collect();
        assert!(distinct.len() > 450);
    }

    #[test]
    fn rendered_scene_matches_recover_ground_truth() {
        use crate::features::DESCRIPTOR_MARGIN;
        let mcfg = MatchConfig::default();
        let det = DetectorConfig {
            threshold: RENDERED_DETECTION_THRESHOLD,
            ..Default::default()
        };
        let s = generate_scenario(&rig(), &cfg(10)).unwrap();
        let feats: Vec<_> = (0..s.frame_count())
            .map(|k| {
                let (l, r) = s.render_stereo(k);
                (detect_features(&l, &det), detect_features(&r, &det))
            })
            .collect();
        let corners = |q: &QuadMatch| [q.prev_left, q.prev_right, q.cur_left, q.cur_right];
        let close =
            |a: &QuadMatch, b: &QuadMatch| corners(a).iter().zip(corners(b)).all(|(p, q)| (p - q).norm() <= 1.0);
        let margin = DESCRIPTOR_MARGIN as f64;
        // Features only exist inside the descriptor margin, and temporal
        // search is bounded by the window.
        let detectable = |p: &Vector2<f64>| {
            p.x >= margin
                && p.y >= margin
                && p.x <= s.rig.width as f64 - 1.0 - margin
                && p.y <= s.rig.height as f64 - 1.0 - margin
        };
        let in_window = |a: Vector2<f64>, b: Vector2<f64>| (a - b).amax() <= mcfg.temporal_window;
        let (mut total, mut recovered) = (0, 0);
        for f in &s.frames {
            let (prev, cur) = (&feats[f.frame - 1], &feats[f.frame]);
            let m = circular_match(&prev.0, &prev.1, &cur.0, &cur.1, &mcfg);
            let truth: Vec<_> = f
                .quad_matches
                .iter()
                .filter(|t| {
                    corners(t).iter().all(detectable)
                        && in_window(t.prev_left, t.cur_left)
                        && in_window(t.prev_right, t.cur_right)
                })
                .collect();
            let correct = m.iter().filter(|e| f.quad_matches.iter().any(|t| close(e, t))).count();
            let precision = correct as f64 / m.len() as f64;
            assert!(precision >= 0.9, "frame {}: precision {precision}", f.frame);
            total += truth.len();
            recovered += truth.iter().filter(|t| m.iter().any(|e| close(e, t))).count();
        }
        let recall = recovered as f64 / total as f64;
        assert!(recall >= 0.8, "recall {recall} ({recovered}/{total})");
    }

    #[test]
    fn dump_load_round_trip_is_exact() {
        let c = ScenarioConfig {
            frame_count: 5,
            trajectory_kind: TrajectoryKind::RandomWalk,
            yaw_rate: 0.03,
            pixel_noise_sigma: 0.3,
            outlier_fraction: 0.1,
            rng_seed: 11,
            ..Default::default()
        };
        let s = generate_scenario(&rig(), &c).unwrap();
        let text = s.to_text();
        assert!(text.starts_with(SCENARIO_HEADER));
        let back = Scenario::from_text(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn load_reports_line_numbers() {
        let text = format!("{SCENARIO_HEADER}\nrig 700 600 180 0.5 1241 376\npose 0 1 0 0 0 0 1 0 0 0 0 1\n");
        match Scenario::from_text(&text) {
            Err(SynthError::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Scenario::from_text("nope"),
            Err(SynthError::Parse { line: 1, .. })
        ));
    }
}
