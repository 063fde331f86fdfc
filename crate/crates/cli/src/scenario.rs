//! Scenario inputs: TOML generator configs and scenario dumps.

use anyhow::{Context, Result};
use fbvo_core::synth::{generate_scenario, Scenario, ScenarioConfig, SCENARIO_HEADER};
use fbvo_core::StereoRig;
use serde::Deserialize;

/// Optional `[rig]` table; missing keys take the KITTI-like defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RigSpec {
    focal: f64,
    cu: f64,
    cv: f64,
    baseline: f64,
    width: u32,
    height: u32,
}

impl Default for RigSpec {
    fn default() -> Self {
        let r = StereoRig::kitti_like();
        Self {
            focal: r.focal,
            cu: r.cu,
            cv: r.cv,
            baseline: r.baseline,
            width: r.width,
            height: r.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub rig: StereoRig,
    pub config: ScenarioConfig,
}

/// Parses a generator config: top-level [`ScenarioConfig`] keys plus an
/// optional `[rig]` table.
pub fn parse_scenario_config(text: &str) -> Result<ScenarioFile> {
    let mut table: toml::Table = toml::from_str(text).context("scenario config is not valid TOML")?;
    let spec: RigSpec = match table.remove("rig") {
        Some(v) => v.try_into().context("invalid [rig] table")?,
        None => RigSpec::default(),
    };
    let rig = StereoRig::new(spec.focal, (spec.cu, spec.cv), spec.baseline, (spec.width, spec.height))?;
    let config: ScenarioConfig = toml::Value::Table(table)
        .try_into()
        .context("invalid scenario config")?;
    config.validate()?;
    Ok(ScenarioFile { rig, config })
}

/// Loads a scenario from either a dump (recognised by its header) or a
/// generator config. `seed` replaces the config's seed; dumps are fixed.
pub fn load_scenario(text: &str, seed: Option<u64>) -> Result<Scenario> {
    if text.lines().next().map(str::trim) == Some(SCENARIO_HEADER) {
        if seed.is_some() {
            log::warn!("--seed does not change a scenario dump");
        }
        return Ok(Scenario::from_text(text)?);
    }
    let mut file = parse_scenario_config(text)?;
    if let Some(s) = seed {
        file.config.rng_seed = s;
    }
    Ok(generate_scenario(&file.rig, &file.config)?)
}
