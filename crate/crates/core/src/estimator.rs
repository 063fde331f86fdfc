//! Frame-to-frame motion from stereo quad matches.
//!
//! Landmarks are triangulated in one stereo pair and their reprojection error
//! in the other pair is minimized with Gauss-Newton inside a RANSAC loop. The
//! forward direction triangulates in the previous frame and observes in the
//! current one; the backward direction swaps the two. Both fitted poses map
//! points from the triangulation frame into the observation frame, so the
//! forward pose is the `prev → cur` point transform and the inverted backward
//! pose is a second estimate of the same quantity.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Matrix3x6, Matrix6, SymmetricEigen, Vector2, Vector3, Vector6};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::QuadMatch;
use crate::geometry::{fuse_motions, hat, so3_exp, triangulate, Landmark, Pose, StereoRig};
use crate::metrics::Trajectory;

/// Residual assigned to each coordinate of a point that lands behind the camera.
pub const BEHIND_CAMERA_RESIDUAL: f64 = 1e6;

/// Points closer than this (metres) to the camera plane count as behind it.
const MIN_DEPTH: f64 = 1e-6;

/// XOR-ed into the seed of the backward RANSAC run.
pub const BACKWARD_SEED_MASK: u64 = 0x9E37_79B9_7F4A_7C15;

const MINIMAL_SAMPLE: usize = 3;
const MAX_STEP_HALVINGS: usize = 5;

/// Relative eigenvalue floor of the (Jacobi-scaled) normal matrix.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("need at least {required} usable matches, got {actual}")]
    TooFewMatches { required: usize, actual: usize },
    #[error("best hypothesis has {found} inliers, need {required}")]
    TooFewInliers { required: usize, found: usize },
    #[error("landmark/observation count mismatch ({landmarks} vs {observations})")]
    LengthMismatch { landmarks: usize, observations: usize },
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
    #[error("both directions failed (forward: {forward}; backward: {backward})")]
    BothDirectionsFailed {
        forward: Box<EstimationError>,
        backward: Box<EstimationError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub ransac_iterations: usize,
    /// Per-camera residual norm below which a match is an inlier, pixels.
    pub inlier_threshold: f64,
    pub gn_max_iterations: usize,
    pub gn_step_tolerance: f64,
    pub min_matches: usize,
    pub rng_seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            ransac_iterations: 200,
            inlier_threshold: 2.0,
            gn_max_iterations: 20,
            gn_step_tolerance: 1e-9,
            min_matches: 6,
            rng_seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), EstimationError> {
        let bad = |msg: &str| Err(EstimationError::InvalidConfig(msg.to_owned()));
        if self.ransac_iterations == 0 || self.gn_max_iterations == 0 || self.min_matches == 0 {
            return bad("iteration and match counts must be >= 1");
        }
        if !(self.inlier_threshold > 0.0 && self.gn_step_tolerance > 0.0) {
            return bad("thresholds must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Triangulate in the previous frame, observe in the current one.
    Forward,
    /// Triangulate in the current frame, observe in the previous one.
    Backward,
}

impl Direction {
    fn seed(self, base: u64) -> u64 {
        match self {
            Direction::Forward => base,
            Direction::Backward => base ^ BACKWARD_SEED_MASK,
        }
    }
}

/// A left/right pixel pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoObservation {
    pub left: Vector2<f64>,
    pub right: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionEstimate {
    /// Maps points of the triangulation frame into the observation frame.
    pub pose: Pose,
    /// Indices into the input match (or landmark) list.
    pub inliers: Vec<usize>,
    /// RMS over the inliers' residual coordinates, pixels.
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointEstimate {
    pub forward: Option<MotionEstimate>,
    pub backward: Option<MotionEstimate>,
    /// Fused `prev → cur` motion.
    pub fused: Pose,
    /// Set when the fused pose is a single-direction fallback.
    pub fusion_degenerate: bool,
}

/// Stacked residuals `observed − projected`, four per point
/// (left u, left v, right u, right v).
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub values: DVector<f64>,
    /// Points whose transformed depth is not positive; their residuals hold
    /// [`BEHIND_CAMERA_RESIDUAL`].
    pub behind_camera: Vec<usize>,
}

impl Residuals {
    pub fn sum_of_squares(&self) -> f64 {
        self.values.norm_squared()
    }
}

#[inline]
fn point_residual(rig: &StereoRig, pose: &Pose, x: &Vector3<f64>, obs: &StereoObservation) -> Option<[f64; 4]> {
    let p = pose.transform_point(x);
    if p.z <= MIN_DEPTH {
        return None;
    }
    let inv_z = 1.0 / p.z;
    let u_l = rig.focal * p.x * inv_z + rig.cu;
    let u_r = rig.focal * (p.x - rig.baseline) * inv_z + rig.cu;
    let v = rig.focal * p.y * inv_z + rig.cv;
    Some([obs.left.x - u_l, obs.left.y - v, obs.right.x - u_r, obs.right.y - v])
}

/// Stereo reprojection residuals of `landmarks` under `pose`.
pub fn reprojection_residuals(
    rig: &StereoRig,
    pose: &Pose,
    landmarks: &[Landmark],
    observations: &[StereoObservation],
) -> Result<Residuals, EstimationError> {
    if landmarks.len() != observations.len() || landmarks.is_empty() {
        return Err(EstimationError::LengthMismatch {
            landmarks: landmarks.len(),
            observations: observations.len(),
        });
    }
    let mut values = DVector::zeros(4 * landmarks.len());
    let mut behind_camera = Vec::new();
    for (i, (x, obs)) in landmarks.iter().zip(observations).enumerate() {
        let r = point_residual(rig, pose, &x.position, obs).unwrap_or_else(|| {
            behind_camera.push(i);
            [BEHIND_CAMERA_RESIDUAL; 4]
        });
        values.rows_mut(4 * i, 4).copy_from_slice(&r);
    }
    Ok(Residuals { values, behind_camera })
}

/// Jacobian of the projected pixels `(u_l, v, u_r, v)` of one point with
/// respect to the update `(δω, δt)`, where the pose is updated as
/// `R ← exp(δω)·R`, `t ← t + δt`. Zero for points behind the camera.
#[inline]
fn projection_jacobian(rig: &StereoRig, pose: &Pose, x: &Vector3<f64>) -> [[f64; 6]; 4] {
    let rx = pose.rotation.rotate(x);
    let p = rx + pose.translation;
    if p.z <= MIN_DEPTH {
        return [[0.0; 6]; 4];
    }
    let f = rig.focal;
    let inv_z = 1.0 / p.z;
    let inv_z2 = inv_z * inv_z;
    let d_left = Matrix2x3::new(f * inv_z, 0.0, -f * p.x * inv_z2, 0.0, f * inv_z, -f * p.y * inv_z2);
    let d_right_u = [f * inv_z, 0.0, -f * (p.x - rig.baseline) * inv_z2];

    // dp/d(δω, δt) = [ −[R·x]×  I ]
    let mut dp = Matrix3x6::zeros();
    dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-hat(&rx)));
    dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());

    let jl = d_left * dp;
    let mut out = [[0.0; 6]; 4];
    for c in 0..6 {
        out[0][c] = jl[(0, c)];
        out[1][c] = jl[(1, c)];
        out[2][c] = d_right_u[0] * dp[(0, c)] + d_right_u[2] * dp[(2, c)];
        out[3][c] = jl[(1, c)];
    }
    out
}

/// Analytic Jacobian of [`reprojection_residuals`] (4N × 6) with respect to
/// the left-multiplicative rotation increment and additive translation
/// increment `(δω, δt)`.
pub fn reprojection_jacobian(rig: &StereoRig, pose: &Pose, landmarks: &[Landmark]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(4 * landmarks.len(), 6);
    for (i, x) in landmarks.iter().enumerate() {
        let jp = projection_jacobian(rig, pose, &x.position);
        for (r, row) in jp.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                // residual = observed − projected
                j[(4 * i + r, c)] = -v;
            }
        }
    }
    j
}

/// Applies an update `(δω, δt)` in the convention of [`reprojection_jacobian`].
pub fn apply_update(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    let dw = Vector3::new(delta[0], delta[1], delta[2]);
    let dt = Vector3::new(delta[3], delta[4], delta[5]);
    Pose::new(so3_exp(&dw) * pose.rotation, pose.translation + dt)
}

fn objective(
    rig: &StereoRig,
    pose: &Pose,
    points: &[Vector3<f64>],
    obs: &[StereoObservation],
    subset: &[usize],
) -> f64 {
    subset
        .iter()
        .map(|&i| match point_residual(rig, pose, &points[i], &obs[i]) {
            Some(r) => r.iter().map(|v| v * v).sum::<f64>(),
            None => 4.0 * BEHIND_CAMERA_RESIDUAL * BEHIND_CAMERA_RESIDUAL,
        })
        .sum()
}

/// Whether the normal matrix is numerically rank deficient.
fn is_rank_deficient(h: &Matrix6<f64>) -> bool {
    let diag = h.diagonal();
    if diag.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return true;
    }
    let scale = diag.map(|d| 1.0 / d.sqrt());
    let scaled = Matrix6::from_fn(|r, c| h[(r, c)] * scale[r] * scale[c]);
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let (min, max) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    min <= RANK_TOLERANCE * max
}

/// Gauss-Newton on the subset `subset` of `(points, obs)`.
fn gauss_newton(
    rig: &StereoRig,
    points: &[Vector3<f64>],
    obs: &[StereoObservation],
    subset: &[usize],
    initial: Pose,
    cfg: &EstimatorConfig,
) -> (Pose, usize, bool) {
    let mut pose = initial;
    let mut cost = objective(rig, &pose, points, obs, subset);
    for it in 1..=cfg.gn_max_iterations {
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for &i in subset {
            let Some(r) = point_residual(rig, &pose, &points[i], &obs[i]) else {
                continue;
            };
            let jp = projection_jacobian(rig, &pose, &points[i]);
            for k in 0..4 {
                let row = Vector6::from_row_slice(&jp[k]);
                h += row * row.transpose();
                g += row * r[k];
            }
        }
        if is_rank_deficient(&h) {
            return (pose, it, false);
        }
        let Some(chol) = h.cholesky() else {
            return (pose, it, false);
        };
        let delta = chol.solve(&g);
        if !delta.iter().all(|v| v.is_finite()) {
            return (pose, it, false);
        }
        if delta.norm() < cfg.gn_step_tolerance {
            return (pose, it, true);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_STEP_HALVINGS {
            let candidate = apply_update(&pose, &(delta * step));
            let c = objective(rig, &candidate, points, obs, subset);
            if c <= cost {
                accepted = Some((candidate, c));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((p, c)) => {
                pose = p;
                cost = c;
                if delta.norm() * step < cfg.gn_step_tolerance {
                    return (pose, it, true);
                }
            }
            // Halving could not reduce the objective: either the step was
            // already at rounding level (converged) or the model is diverging.
            None => return (pose, it, delta.norm() * step < cfg.gn_step_tolerance),
        }
    }
    (pose, cfg.gn_max_iterations, false)
}

fn rms_over(rig: &StereoRig, pose: &Pose, points: &[Vector3<f64>], obs: &[StereoObservation], subset: &[usize]) -> f64 {
    if subset.is_empty() {
        return 0.0;
    }
    (objective(rig, pose, points, obs, subset) / (4 * subset.len()) as f64).sqrt()
}

/// Minimizes the stereo reprojection error over all given correspondences,
/// starting from `initial`.
///
/// Rank-deficient geometry (e.g. collinear landmarks) yields an estimate with
/// `converged == false` rather than an error.
pub fn gauss_newton_refine(
    rig: &StereoRig,
    landmarks: &[Landmark],
    observations: &[StereoObservation],
    initial: Pose,
    cfg: &EstimatorConfig,
) -> Result<MotionEstimate, EstimationError> {
    if landmarks.len() != observations.len() {
        return Err(EstimationError::LengthMismatch {
            landmarks: landmarks.len(),
            observations: observations.len(),
        });
    }
    if landmarks.len() < MINIMAL_SAMPLE {
        return Err(EstimationError::TooFewMatches {
            required: MINIMAL_SAMPLE,
            actual: landmarks.len(),
        });
    }
    let points: Vec<_> = landmarks.iter().map(|l| l.position).collect();
    let all: Vec<usize> = (0..points.len()).collect();
    let (pose, iterations, converged) = gauss_newton(rig, &points, observations, &all, initial, cfg);
    Ok(MotionEstimate {
        pose,
        rms_residual: rms_over(rig, &pose, &points, observations, &all),
        inliers: all,
        iterations,
        converged,
    })
}

fn inliers_of(
    rig: &StereoRig,
    pose: &Pose,
    points: &[Vector3<f64>],
    obs: &[StereoObservation],
    usable: &[usize],
    threshold: f64,
) -> Vec<usize> {
    let t2 = threshold * threshold;
    usable
        .iter()
        .copied()
        .filter(|&i| match point_residual(rig, pose, &points[i], &obs[i]) {
            Some(r) => r[0] * r[0] + r[1] * r[1] < t2 && r[2] * r[2] + r[3] * r[3] < t2,
            None => false,
        })
        .collect()
}

/// RANSAC over minimal 3-point samples followed by a refit on the consensus set.
///
/// Matches whose triangulation-side disparity is too small to triangulate are
/// never inliers. Deterministic for a fixed `cfg.rng_seed`; the backward
/// direction uses `rng_seed ^ BACKWARD_SEED_MASK`.
pub fn ransac_estimate(
    rig: &StereoRig,
    matches: &[QuadMatch],
    direction: Direction,
    cfg: &EstimatorConfig,
) -> Result<MotionEstimate, EstimationError> {
    cfg.validate()?;
    let required = cfg.min_matches.max(MINIMAL_SAMPLE);
    if matches.len() < required {
        return Err(EstimationError::TooFewMatches {
            required,
            actual: matches.len(),
        });
    }

    let mut points = Vec::with_capacity(matches.len());
    let mut obs = Vec::with_capacity(matches.len());
    let mut usable = Vec::with_capacity(matches.len());
    for (i, m) in matches.iter().enumerate() {
        let m = match direction {
            Direction::Forward => *m,
            Direction::Backward => m.reversed(),
        };
        let x = triangulate(rig, &m.prev_left, &m.prev_right);
        if x.is_ok() {
            usable.push(i);
        }
        points.push(x.map(|l| l.position).unwrap_or_else(|_| Vector3::zeros()));
        obs.push(StereoObservation {
            left: m.cur_left,
            right: m.cur_right,
        });
    }
    if usable.len() < required {
        return Err(EstimationError::TooFewMatches {
            required,
            actual: usable.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(direction.seed(cfg.rng_seed));
    let mut best_inliers: Vec<usize> = Vec::new();
    let mut best_pose = Pose::identity();
    let mut sample = [0usize; MINIMAL_SAMPLE];
    for _ in 0..cfg.ransac_iterations {
        for (slot, k) in sample
            .iter_mut()
            .zip(index::sample(&mut rng, usable.len(), MINIMAL_SAMPLE))
        {
            *slot = usable[k];
        }
        let (pose, _, _) = gauss_newton(rig, &points, &obs, &sample, Pose::identity(), cfg);
        if !pose.translation.iter().all(|v| v.is_finite()) {
            continue;
        }
        let inliers = inliers_of(rig, &pose, &points, &obs, &usable, cfg.inlier_threshold);
        if inliers.len() > best_inliers.len() {
            best_inliers = inliers;
            best_pose = pose;
        }
    }
    if best_inliers.len() < required {
        return Err(EstimationError::TooFewInliers {
            required,
            found: best_inliers.len(),
        });
    }

    let (mut pose, _, mut converged) = gauss_newton(rig, &points, &obs, &best_inliers, best_pose, cfg);
    let mut inliers = inliers_of(rig, &pose, &points, &obs, &usable, cfg.inlier_threshold);
    if inliers != best_inliers && inliers.len() >= required {
        (pose, _, converged) = gauss_newton(rig, &points, &obs, &inliers, pose, cfg);
        inliers = inliers_of(rig, &pose, &points, &obs, &usable, cfg.inlier_threshold);
    }
    if inliers.len() < required {
        return Err(EstimationError::TooFewInliers {
            required,
            found: inliers.len(),
        });
    }
    Ok(MotionEstimate {
        rms_residual: rms_over(rig, &pose, &points, &obs, &inliers),
        pose,
        inliers,
        iterations: cfg.ransac_iterations,
        converged,
    })
}

/// Forward and backward RANSAC on the same matches, fused into one
/// `prev → cur` motion.
///
/// If only one direction succeeds, or the two rotations are a half turn
/// apart, the fused pose falls back to the surviving (or forward) estimate
/// and `fusion_degenerate` is set.
pub fn estimate_joint(
    rig: &StereoRig,
    matches: &[QuadMatch],
    cfg: &EstimatorConfig,
) -> Result<JointEstimate, EstimationError> {
    let forward = ransac_estimate(rig, matches, Direction::Forward, cfg);
    let backward = ransac_estimate(rig, matches, Direction::Backward, cfg);
    match (forward, backward) {
        (Ok(f), Ok(b)) => {
            let (fused, fusion_degenerate) = match fuse_motions(&f.pose, &b.pose.inverse()) {
                Ok(p) => (p, false),
                Err(_) => (f.pose, true),
            };
            Ok(JointEstimate {
                forward: Some(f),
                backward: Some(b),
                fused,
                fusion_degenerate,
            })
        }
        (Ok(f), Err(_)) => Ok(JointEstimate {
            fused: f.pose,
            forward: Some(f),
            backward: None,
            fusion_degenerate: true,
        }),
        (Err(_), Ok(b)) => Ok(JointEstimate {
            fused: b.pose.inverse(),
            forward: None,
            backward: Some(b),
            fusion_degenerate: true,
        }),
        (Err(f), Err(b)) => Err(EstimationError::BothDirectionsFailed {
            forward: Box::new(f),
            backward: Box::new(b),
        }),
    }
}

/// Appends the camera pose reached after `motion`, a `prev → cur` point
/// transform as produced by the estimators.
pub fn accumulate(trajectory: &mut Trajectory, motion: &Pose) {
    trajectory.push_motion(motion);
}
