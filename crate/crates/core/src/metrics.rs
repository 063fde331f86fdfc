//! Trajectory containers, forward-backward consistency and ground-truth
//! evaluation.

use thiserror::Error;

use crate::geometry::Pose;

/// Tolerance on the anchor pose of a trajectory (matrix max-abs deviation).
pub const ANCHOR_TOLERANCE: f64 = 1e-6;

/// Default evaluation segment lengths, metres.
pub const DEFAULT_SEGMENT_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

const LENGTH_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trajectories have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("trajectory frame indices differ at position {0}")]
    FrameMismatch(usize),
    #[error("trajectory is empty")]
    Empty,
    #[error("first pose is not the identity")]
    NotAnchored,
    #[error("frame indices must be strictly increasing (position {0})")]
    NonMonotonicFrames(usize),
    #[error("segment lengths must be positive and finite")]
    InvalidLength,
}

/// Camera-to-world poses, one per frame, anchored at the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
    frame_indices: Vec<usize>,
}

impl Default for Trajectory {
    fn default() -> Self {
        Self::new()
    }
}

impl Trajectory {
    /// A trajectory holding only the identity at frame 0.
    pub fn new() -> Self {
        Self {
            poses: vec![Pose::identity()],
            frame_indices: vec![0],
        }
    }

    /// Poses at frames `0, 1, 2, ...`.
    pub fn from_poses(poses: Vec<Pose>) -> Result<Self, MetricsError> {
        let frames = (0..poses.len()).collect();
        Self::with_frames(poses, frames)
    }

    pub fn with_frames(poses: Vec<Pose>, frame_indices: Vec<usize>) -> Result<Self, MetricsError> {
        if poses.len() != frame_indices.len() {
            return Err(MetricsError::LengthMismatch(poses.len(), frame_indices.len()));
        }
        let first = poses.first().ok_or(MetricsError::Empty)?;
        if (first.to_matrix() - Pose::identity().to_matrix()).amax() > ANCHOR_TOLERANCE {
            return Err(MetricsError::NotAnchored);
        }
        if let Some(i) = frame_indices.windows(2).position(|w| w[1] <= w[0]) {
            return Err(MetricsError::NonMonotonicFrames(i + 1));
        }
        Ok(Self { poses, frame_indices })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn frame_indices(&self) -> &[usize] {
        &self.frame_indices
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn last(&self) -> &Pose {
        self.poses.last().expect("trajectory is never empty")
    }

    /// Appends `last · motion⁻¹` for a `prev → cur` point transform `motion`.
    pub fn push_motion(&mut self, motion: &Pose) {
        let next = self.last().compose(&motion.inverse());
        let frame = self.frame_indices.last().map_or(0, |f| f + 1);
        self.poses.push(next);
        self.frame_indices.push(frame);
    }

    /// Per-frame inverses: the trajectory expressed as `world → camera` maps.
    pub fn inverted(&self) -> Trajectory {
        Trajectory {
            poses: self.poses.iter().map(Pose::inverse).collect(),
            frame_indices: self.frame_indices.clone(),
        }
    }

    /// Cumulative travelled distance at each pose.
    pub fn path_lengths(&self) -> Vec<f64> {
        path_lengths(&self.poses)
    }
}

/// Forward-backward discrepancy at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameError {
    pub frame: usize,
    pub error: Pose,
    pub translation: f64,
    /// Radians.
    pub rotation: f64,
}

impl FrameError {
    fn new(frame: usize, error: Pose) -> Self {
        let (rotation, translation) = error.magnitude();
        Self {
            frame,
            error,
            translation,
            rotation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityReport {
    /// One entry per frame from the second on.
    pub relative: Vec<FrameError>,
    /// One entry per frame.
    pub absolute: Vec<FrameError>,
}

impl ReliabilityReport {
    pub fn mean_relative_translation(&self) -> f64 {
        mean(self.relative.iter().map(|e| e.translation))
    }

    pub fn mean_absolute_translation(&self) -> f64 {
        mean(self.absolute.iter().map(|e| e.translation))
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

fn check_paired(a: &Trajectory, b: &Trajectory) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if let Some(i) = a.frame_indices.iter().zip(&b.frame_indices).position(|(x, y)| x != y) {
        return Err(MetricsError::FrameMismatch(i));
    }
    Ok(())
}

/// Relative consistency between a forward trajectory `F` and a backward
/// trajectory `B` accumulated in the opposite sense (so that `B_i ≈ F_i⁻¹`).
///
/// The frame-`i` error is `(B_i·B_{i-1}⁻¹)·(F_{i-1}⁻¹·F_i)`: the backward
/// step undoing the forward step. It is exactly the identity when `B` is the
/// running inverse of `F`.
pub fn fb_rpe(forward: &Trajectory, backward: &Trajectory) -> Result<Vec<FrameError>, MetricsError> {
    check_paired(forward, backward)?;
    let (f, b) = (&forward.poses, &backward.poses);
    Ok((1..f.len())
        .map(|i| {
            let step_b = b[i].compose(&b[i - 1].inverse());
            let step_f = f[i - 1].inverse().compose(&f[i]);
            FrameError::new(forward.frame_indices[i], step_b.compose(&step_f))
        })
        .collect())
}

/// Absolute consistency `B_i·F_i` per frame.
pub fn fb_ape(forward: &Trajectory, backward: &Trajectory) -> Result<Vec<FrameError>, MetricsError> {
    check_paired(forward, backward)?;
    Ok(forward
        .poses
        .iter()
        .zip(&backward.poses)
        .zip(&forward.frame_indices)
        .map(|((f, b), &frame)| FrameError::new(frame, b.compose(f)))
        .collect())
}

pub fn reliability_report(forward: &Trajectory, backward: &Trajectory) -> Result<ReliabilityReport, MetricsError> {
    Ok(ReliabilityReport {
        relative: fb_rpe(forward, backward)?,
        absolute: fb_ape(forward, backward)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthStats {
    pub length: f64,
    /// Percent.
    pub t_rel: f64,
    /// Degrees per 100 m.
    pub r_rel: f64,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentErrors {
    /// Mean over all segments of all lengths, percent. `None` without segments.
    pub t_rel: Option<f64>,
    /// Degrees per 100 m. `None` without segments.
    pub r_rel: Option<f64>,
    /// Lengths with at least one segment, in input order.
    pub per_length: Vec<LengthStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub segments: SegmentErrors,
    /// Unaligned absolute trajectory RMSE, metres.
    pub t_abs: f64,
}

pub fn path_lengths(poses: &[Pose]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(poses.len());
    for (i, p) in poses.iter().enumerate() {
        if i > 0 {
            acc += (p.translation - poses[i - 1].translation).norm();
        }
        out.push(acc);
    }
    out
}

/// Segment errors on raw pose sequences; path length comes from `gt`.
///
/// For every start frame and every length `L`, the segment ends at the first
/// frame whose ground-truth path length is at least `L` further. The error
/// is `(gt_rel)⁻¹·est_rel`; translation is normalized by `L` and rotation is
/// reported in degrees per 100 m.
pub fn segment_errors(gt: &[Pose], est: &[Pose], lengths: &[f64]) -> Result<SegmentErrors, MetricsError> {
    if gt.len() != est.len() {
        return Err(MetricsError::LengthMismatch(gt.len(), est.len()));
    }
    if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(MetricsError::InvalidLength);
    }
    let dist = path_lengths(gt);
    let mut per_length = Vec::new();
    let (mut t_sum, mut r_sum, mut count) = (0.0, 0.0, 0usize);
    for &len in lengths {
        let (mut t_len, mut r_len, mut n) = (0.0, 0.0, 0usize);
        for first in 0..gt.len() {
            let target = dist[first] + len - LENGTH_EPS;
            let last = first + dist[first..].partition_point(|&d| d < target);
            if last >= gt.len() {
                break;
            }
            let gt_rel = gt[first].inverse().compose(&gt[last]);
            let est_rel = est[first].inverse().compose(&est[last]);
            let (r, t) = gt_rel.inverse().compose(&est_rel).magnitude();
            t_len += t / len * 100.0;
            r_len += r.to_degrees() / len * 100.0;
            n += 1;
        }
        if n > 0 {
            per_length.push(LengthStats {
                length: len,
                t_rel: t_len / n as f64,
                r_rel: r_len / n as f64,
                segments: n,
            });
            t_sum += t_len;
            r_sum += r_len;
            count += n;
        }
    }
    let avg = |s: f64| (count > 0).then(|| s / count as f64);
    Ok(SegmentErrors {
        t_rel: avg(t_sum),
        r_rel: avg(r_sum),
        per_length,
    })
}

pub fn kitti_segment_errors(gt: &Trajectory, est: &Trajectory, lengths: &[f64]) -> Result<SegmentErrors, MetricsError> {
    segment_errors(&gt.poses, &est.poses, lengths)
}

/// Root-mean-square position error without any alignment.
pub fn ate_rmse(gt: &Trajectory, est: &Trajectory) -> Result<f64, MetricsError> {
    if gt.len() != est.len() {
        return Err(MetricsError::LengthMismatch(gt.len(), est.len()));
    }
    let sq: f64 = gt
        .poses
        .iter()
        .zip(&est.poses)
        .map(|(g, e)| (g.translation - e.translation).norm_squared())
        .sum();
    Ok((sq / gt.len() as f64).sqrt())
}

pub fn evaluate(gt: &Trajectory, est: &Trajectory, lengths: &[f64]) -> Result<EvaluationReport, MetricsError> {
    Ok(EvaluationReport {
        segments: kitti_segment_errors(gt, est, lengths)?,
        t_abs: ate_rmse(gt, est)?,
    })
}
