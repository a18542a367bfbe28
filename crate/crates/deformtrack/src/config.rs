//! Run configuration: every tunable of the pipeline in one JSON document.

use std::path::{Path, PathBuf};

use deformtrack_core::correspond::{DepthRange, Gates};
use deformtrack_core::energy::EnergyWeights;
use deformtrack_core::geom::PinholeCamera;
use deformtrack_core::matching::RansacConfig;
use deformtrack_core::solver::SolverConfig;
use deformtrack_core::synth::SceneSpec;
use deformtrack_core::tracker::TrackerConfig;
use deformtrack_core::warp::{BindingConfig, SamplingConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub template: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub matches: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub camera: PinholeCamera,
    pub depth_range: DepthRange,
    pub sampling: SamplingConfig,
    pub binding: BindingConfig,
    pub gates: Gates,
    pub energy: EnergyWeights,
    pub solver: SolverConfig,
    pub ransac: RansacConfig,
    pub paths: Paths,
    /// Worker threads; results do not depend on it, so it is left out of
    /// reports.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            camera: SceneSpec::default().camera,
            depth_range: DepthRange::default(),
            sampling: SamplingConfig::default(),
            binding: BindingConfig::default(),
            gates: Gates::default(),
            energy: EnergyWeights::default(),
            solver: SolverConfig::default(),
            ransac: RansacConfig::default(),
            paths: Paths::default(),
            threads: None,
        }
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate().map_err(|e| Error::Config(format!("camera: {e}")))?;
        if !(self.sampling.radius > 0.0) {
            return Err(Error::Config("sampling.radius must be positive".into()));
        }
        if self.sampling.connection_sigma.is_some_and(|s| !(s > 0.0)) || self.binding.sigma.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::Config("sigmas must be positive".into()));
        }
        if self.binding.k == 0 {
            return Err(Error::Config("binding.k must be at least 1".into()));
        }
        if !(self.depth_range.min < self.depth_range.max) {
            return Err(Error::Config("depth_range.min must be below depth_range.max".into()));
        }
        let e = &self.energy;
        for (name, v) in [
            ("energy.w_orb", e.w_orb),
            ("energy.w_arap_base", e.w_arap_base),
            ("energy.w_angle", e.w_angle),
            ("energy.w_rotation", e.w_rotation),
            ("energy.data_floor", e.data_floor),
        ] {
            non_negative(name, v)?;
        }
        if !(e.tukey_c > 0.0) {
            return Err(Error::Config("energy.tukey_c must be positive".into()));
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.ransac.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Copy with every derived default written out and the thread count
    /// dropped.
    pub fn materialized(&self) -> Self {
        let mut out = self.clone();
        out.sampling.connection_sigma = Some(self.sampling.connection_sigma());
        out.binding.sigma = Some(self.binding.sigma(&self.sampling));
        out.threads = None;
        out
    }

    pub fn tracker(&self) -> TrackerConfig {
        TrackerConfig {
            sampling: self.sampling,
            binding: self.binding,
            gates: self.gates,
            energy: self.energy,
            solver: self.solver,
            ransac: self.ransac,
        }
    }
}
