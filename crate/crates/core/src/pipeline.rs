//! Sequential frame loop: front end, per-mode estimation, trajectory
//! accumulation and per-frame diagnostics.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::estimator::{estimate_joint, ransac_estimate, Direction, EstimationError, EstimatorConfig, MotionEstimate};
use crate::features::{circular_match, detect_features, DetectorConfig, Feature, Image, MatchConfig, QuadMatch};
use crate::geometry::{Pose, StereoRig};
use crate::metrics::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Forward,
    Backward,
    Joint,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Forward, Mode::Backward, Mode::Joint];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Forward => "forward",
            Mode::Backward => "backward",
            Mode::Joint => "joint",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| format!("unknown mode '{s}' (expected forward, backward or joint)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineConfig {
    pub estimator: EstimatorConfig,
    pub detector: DetectorConfig,
    pub matcher: MatchConfig,
}

/// One row of the diagnostics report. Direction fields are empty when the
/// direction was not run or failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub matches: usize,
    pub fwd_inliers: Option<usize>,
    pub bwd_inliers: Option<usize>,
    pub fwd_rms_px: Option<f64>,
    pub bwd_rms_px: Option<f64>,
    pub fusion_degenerate: bool,
    /// No usable motion: identity was accumulated.
    pub failed: bool,
    pub frontend_ms: f64,
    pub estimate_ms: f64,
    pub total_ms: f64,
}

/// Detects features per stereo pair and matches each pair against the
/// previous one.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    detector: DetectorConfig,
    matcher: MatchConfig,
    previous: Option<(Vec<Feature>, Vec<Feature>)>,
}

impl FrontEnd {
    pub fn new(detector: DetectorConfig, matcher: MatchConfig) -> Self {
        Self {
            detector,
            matcher,
            previous: None,
        }
    }

    /// Quad matches between the previous pair and this one; `None` for the
    /// first pair.
    pub fn push(&mut self, left: &Image, right: &Image) -> Option<Vec<QuadMatch>> {
        let cur = (
            detect_features(left, &self.detector),
            detect_features(right, &self.detector),
        );
        let matches = self
            .previous
            .as_ref()
            .map(|(pl, pr)| circular_match(pl, pr, &cur.0, &cur.1, &self.matcher));
        self.previous = Some(cur);
        matches
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Incremental odometry in one of the three modes.
///
/// All trajectories are camera-to-world and in the forward sense. Besides the
/// mode's output, the single-direction trajectories are kept whenever the
/// mode computes them (forward in forward and joint mode, backward in
/// backward and joint mode).
#[derive(Debug, Clone)]
pub struct Odometry {
    rig: StereoRig,
    mode: Mode,
    config: PipelineConfig,
    frontend: FrontEnd,
    trajectory: Trajectory,
    forward: Option<Trajectory>,
    backward: Option<Trajectory>,
    diagnostics: Vec<FrameDiagnostics>,
}

impl Odometry {
    pub fn new(rig: StereoRig, mode: Mode, config: PipelineConfig) -> Result<Self, EstimationError> {
        config.estimator.validate()?;
        Ok(Self {
            rig,
            mode,
            config,
            frontend: FrontEnd::new(config.detector, config.matcher),
            trajectory: Trajectory::new(),
            forward: (mode != Mode::Backward).then(Trajectory::new),
            backward: (mode != Mode::Forward).then(Trajectory::new),
            diagnostics: Vec::new(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn forward_trajectory(&self) -> Option<&Trajectory> {
        self.forward.as_ref()
    }

    pub fn backward_trajectory(&self) -> Option<&Trajectory> {
        self.backward.as_ref()
    }

    pub fn diagnostics(&self) -> &[FrameDiagnostics] {
        &self.diagnostics
    }

    /// Frame pairs for which no motion could be estimated.
    pub fn failed_frames(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.failed).count()
    }

    /// Processes the next stereo pair. The first call only primes the front end.
    pub fn process_images(&mut self, left: &Image, right: &Image) -> Option<&FrameDiagnostics> {
        let t0 = Instant::now();
        let matches = self.frontend.push(left, right)?;
        let frontend_ms = ms_since(t0);
        Some(self.step(&matches, frontend_ms))
    }

    /// Processes the matches between the last frame and a new one.
    pub fn process_matches(&mut self, matches: &[QuadMatch]) -> &FrameDiagnostics {
        self.step(matches, 0.0)
    }

    fn step(&mut self, matches: &[QuadMatch], frontend_ms: f64) -> &FrameDiagnostics {
        let frame = self.trajectory.frame_indices().last().map_or(0, |f| f + 1);
        let cfg = &self.config.estimator;
        let t0 = Instant::now();
        let (fwd, bwd, fused, degenerate): (Option<MotionEstimate>, Option<MotionEstimate>, Option<Pose>, bool) =
            match self.mode {
                Mode::Forward => {
                    let f = ransac_estimate(&self.rig, matches, Direction::Forward, cfg).ok();
                    let p = f.as_ref().map(|e| e.pose);
                    (f, None, p, false)
                }
                Mode::Backward => {
                    let b = ransac_estimate(&self.rig, matches, Direction::Backward, cfg).ok();
                    let p = b.as_ref().map(|e| e.pose.inverse());
                    (None, b, p, false)
                }
                Mode::Joint => match estimate_joint(&self.rig, matches, cfg) {
                    Ok(j) => (j.forward, j.backward, Some(j.fused), j.fusion_degenerate),
                    Err(_) => (None, None, None, false),
                },
            };
        let estimate_ms = ms_since(t0);

        let failed = fused.is_none();
        if failed {
            log::warn!("frame {frame}: motion estimation failed, assuming no motion");
        }
        self.trajectory.push_motion(&fused.unwrap_or_else(Pose::identity));
        if let Some(t) = &mut self.forward {
            t.push_motion(&fwd.as_ref().map_or_else(Pose::identity, |e| e.pose));
        }
        if let Some(t) = &mut self.backward {
            t.push_motion(&bwd.as_ref().map_or_else(Pose::identity, |e| e.pose.inverse()));
        }
        self.diagnostics.push(FrameDiagnostics {
            frame,
            matches: matches.len(),
            fwd_inliers: fwd.as_ref().map(|e| e.inliers.len()),
            bwd_inliers: bwd.as_ref().map(|e| e.inliers.len()),
            fwd_rms_px: fwd.as_ref().map(|e| e.rms_residual),
            bwd_rms_px: bwd.as_ref().map(|e| e.rms_residual),
            fusion_degenerate: degenerate,
            failed,
            frontend_ms,
            estimate_ms,
            total_ms: frontend_ms + estimate_ms,
        });
        self.diagnostics.last().expect("just pushed")
    }
}
