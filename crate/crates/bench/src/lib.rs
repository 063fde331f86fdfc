//! Shared fixtures for the criterion benches.

use fbvo_core::synth::{generate_scenario, Scenario, ScenarioConfig, TrajectoryKind};
use fbvo_core::StereoRig;

/// Default-rig scenario with σ = 0.5 px noise and 20% outliers.
pub fn noisy_scenario(frame_count: usize) -> Scenario {
    let cfg = ScenarioConfig {
        frame_count,
        trajectory_kind: TrajectoryKind::Arc,
        yaw_rate: 0.01,
        pixel_noise_sigma: 0.5,
        outlier_fraction: 0.2,
        rng_seed: 7,
        ..Default::default()
    };
    generate_scenario(&StereoRig::kitti_like(), &cfg).expect("default scenario is feasible")
}
