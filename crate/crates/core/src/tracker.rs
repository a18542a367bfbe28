//! Frame-by-frame tracking driver: preselects matches, then solves each
//! frame warm-started from the previous one.

use alloc::string::String;

use crate::correspond::{Gates, Observation};
use crate::energy::EnergyWeights;
use crate::matching::{preselect_inliers, MatchSet, RansacConfig};
use crate::solver::{solve_frame, Clock, FrameConfig, FrameResult, SolverConfig};
use crate::warp::{bind_template, sample_control_points, BindingConfig, ControlGraph, SamplingConfig, Template, WarpError};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrackerConfig {
    pub sampling: SamplingConfig,
    pub binding: BindingConfig,
    pub gates: Gates,
    pub energy: EnergyWeights,
    pub solver: SolverConfig,
    pub ransac: RansacConfig,
}

impl TrackerConfig {
    pub fn frame_config(&self) -> FrameConfig {
        FrameConfig {
            k: self.binding.k,
            bind_sigma: self.binding.sigma(&self.sampling),
            gates: self.gates,
            energy: self.energy,
            solver: self.solver,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedFrame {
    pub result: FrameResult,
    /// Matches with their preselection weights, when matches were given.
    pub matches: Option<MatchSet>,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    template: Template,
    graph: ControlGraph,
    cfg: TrackerConfig,
}

impl Tracker {
    /// Samples control points and binds the template.
    pub fn new(template: &Template, cfg: TrackerConfig) -> Result<Self, WarpError> {
        let graph = sample_control_points(template, &cfg.sampling)?;
        let template = bind_template(template, &graph, cfg.binding.k, cfg.binding.sigma(&cfg.sampling))?;
        Ok(Self { template, graph, cfg })
    }

    pub fn template(&self) -> &Template {
        &self.template
    }

    /// Control graph holding the latest frame's warps.
    pub fn graph(&self) -> &ControlGraph {
        &self.graph
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Runs inlier preselection. On failure every weight is 0 and the
    /// error text is returned.
    pub fn preselect(&self, matches: &MatchSet) -> (MatchSet, Option<String>) {
        preselect(matches, &self.cfg.ransac)
    }

    /// Tracks the next frame and keeps its warps as the next warm start.
    pub fn track(&mut self, obs: &Observation, matches: Option<&MatchSet>, clock: &dyn Clock) -> TrackedFrame {
        let (weighted, warning) = match matches {
            Some(m) => {
                let (w, e) = self.preselect(m);
                (Some(w), e)
            }
            None => (None, None),
        };
        let mut result = solve_frame(&self.template, &self.graph, obs, weighted.as_ref(), &self.cfg.frame_config(), clock);
        if let Some(e) = warning {
            result.report.warnings.insert(0, alloc::format!("match preselection failed: {e}"));
        }
        self.graph = result.graph.clone();
        TrackedFrame { result, matches: weighted }
    }
}

/// Preselection with the all-zero fallback; an empty set passes through.
pub fn preselect(matches: &MatchSet, cfg: &RansacConfig) -> (MatchSet, Option<String>) {
    if matches.is_empty() {
        return (matches.clone(), None);
    }
    match preselect_inliers(matches, cfg) {
        Ok(p) => (p.matches, None),
        Err(e) => {
            let mut out = matches.clone();
            out.weights.iter_mut().for_each(|w| *w = 0.0);
            out.preselected.iter_mut().for_each(|p| *p = false);
            (out, Some(alloc::format!("{e}")))
        }
    }
}
