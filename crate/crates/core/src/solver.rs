//! Block-coordinate Levenberg-Marquardt over control-point warps.
//!
//! Every control point solves its own 6x6 system against the others' frozen
//! values; all tentative updates are then accepted or rejected together on
//! the total cost.
//!
//! The per-control systems use a separable upper bound of the Gauss-Newton
//! model: a residual block that depends on several control points is split
//! by each control's share (interpolation weight for blended points), so
//! `(sum_i J_i d_i)^2 <= sum_i (J_i d_i)^2 / share_i`. Stepping all controls
//! at once then never overshoots the joint model, which plain block-Jacobi
//! can.

use alloc::string::String;
use alloc::vec::Vec;

use crate::correspond::{rasterize_correspondences, Gates, Observation};
use crate::energy::{icp_terms, orb_terms, ControlJacobian, EnergyModel, EnergyWeights, ResidualBlock, TermCosts};
use crate::geom::{cholesky_solve, DualQuaternion, Quat, Vec3};
use crate::matching::MatchSet;
use crate::par;
use crate::warp::{warp_all, ControlGraph, Deformed, Template};

pub type Delta = [f64; 6];
pub type NormalMatrix = [[f64; 6]; 6];

/// Diagonal floor for Marquardt damping.
const DIAG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("no decreasing step after {attempts} attempts (lambda reached {lambda:e})")]
    StalledStep { attempts: usize, lambda: f64 },
    #[error("invalid solver config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Largest template point displacement (mm) below which iteration stops.
    pub step_tol: f64,
    /// Relative cost decrease below which iteration stops.
    pub cost_tol: f64,
    /// Rejected attempts retried with a larger damping before stalling.
    pub max_retries: usize,
    /// After an accepted step, how many times to try doubling it while the
    /// cost keeps decreasing.
    pub max_expansions: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 15,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            lambda_min: 1e-9,
            lambda_max: 1e9,
            step_tol: 1e-4,
            cost_tol: 1e-6,
            max_retries: 3,
            max_expansions: 2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            self.lambda_init,
            self.lambda_up,
            self.lambda_down,
            self.lambda_min,
            self.lambda_max,
            self.step_tol,
            self.cost_tol,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(SolverError::InvalidConfig("schedule values must be positive and finite"));
        }
        if self.lambda_min > self.lambda_max || self.lambda_init < self.lambda_min || self.lambda_init > self.lambda_max {
            return Err(SolverError::InvalidConfig("lambda_init outside [lambda_min, lambda_max]"));
        }
        if self.lambda_up <= 1.0 || self.lambda_down <= 1.0 {
            return Err(SolverError::InvalidConfig("lambda_up and lambda_down must exceed 1"));
        }
        Ok(())
    }
}

/// Rigid motion `x -> exp(omega) (x - pivot) + pivot + v`.
pub fn delta_transform(delta: &Delta, pivot: &Vec3) -> DualQuaternion {
    let omega = Vec3::new(delta[0], delta[1], delta[2]);
    let v = Vec3::new(delta[3], delta[4], delta[5]);
    let q = Quat::from_axis_angle(&omega);
    let t = pivot + v - q.rotate(pivot);
    DualQuaternion::from_rotation_translation(q, &t)
}

/// Left-composes the local update (rotation about `pivot`) and renormalizes.
pub fn apply_delta_about(dq: &DualQuaternion, delta: &Delta, pivot: &Vec3) -> DualQuaternion {
    if delta.iter().all(|&d| d == 0.0) {
        return *dq;
    }
    (delta_transform(delta, pivot) * *dq).normalize()
}

/// [`apply_delta_about`] with the pivot at the origin.
pub fn apply_delta(dq: &DualQuaternion, delta: &Delta) -> DualQuaternion {
    apply_delta_about(dq, delta, &Vec3::zeros())
}

/// Local coordinates of `dq` relative to `reference`, inverse of
/// [`apply_delta_about`].
pub fn parametrize_about(dq: &DualQuaternion, reference: &DualQuaternion, pivot: &Vec3) -> Delta {
    if dq == reference {
        return [0.0; 6];
    }
    let d = (*dq * reference.inverse()).normalize();
    let omega = d.real.to_axis_angle();
    let v = d.translation() - pivot + d.real.rotate(pivot);
    [omega.x, omega.y, omega.z, v.x, v.y, v.z]
}

pub fn parametrize(dq: &DualQuaternion, reference: &DualQuaternion) -> Delta {
    parametrize_about(dq, reference, &Vec3::zeros())
}

/// Undamped upper-bound system `(M, g)` for one control point; `g` is the
/// exact negative half-gradient `-sum w J^T r`.
fn accumulate<'a>(entries: impl Iterator<Item = (&'a ResidualBlock, &'a ControlJacobian)>) -> (NormalMatrix, Delta) {
    let mut m = [[0.0; 6]; 6];
    let mut g = [0.0; 6];
    for (block, jac) in entries {
        if jac.share <= 0.0 {
            continue;
        }
        let share = block.weight / jac.share;
        for r in 0..block.dim {
            let row = &jac.rows[r];
            for a in 0..6 {
                g[a] -= block.weight * row[a] * block.values[r];
                for b in 0..=a {
                    m[a][b] += share * row[a] * row[b];
                }
            }
        }
    }
    for a in 0..6 {
        for b in 0..a {
            m[b][a] = m[a][b];
        }
    }
    (m, g)
}

fn damp(m: &NormalMatrix, lambda: f64) -> NormalMatrix {
    let mut a = *m;
    for k in 0..6 {
        a[k][k] += lambda * m[k][k].max(DIAG_FLOOR);
    }
    a
}

/// Damped normal equations `(A, b)` for `control` from every block that
/// depends on it.
pub fn build_normal_equations(blocks: &[ResidualBlock], control: usize, lambda: f64) -> (NormalMatrix, Delta) {
    let entries = blocks
        .iter()
        .flat_map(|b| b.jacobians.iter().filter(move |j| j.control == control).map(move |j| (b, j)));
    let (m, g) = accumulate(entries);
    (damp(&m, lambda), g)
}

/// Solves a damped system; a failed factorization yields a zero step.
pub fn solve_step(a: &NormalMatrix, b: &Delta) -> Delta {
    if b.iter().all(|&v| v == 0.0) {
        return [0.0; 6];
    }
    cholesky_solve(a, b).unwrap_or([0.0; 6])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub graph: ControlGraph,
    pub lambdas: Vec<f64>,
    pub iteration: usize,
    pub last_costs: TermCosts,
    pub stalled: bool,
}

impl SolverState {
    pub fn new(graph: ControlGraph, cfg: &SolverConfig) -> Self {
        let lambdas = alloc::vec![cfg.lambda_init; graph.len()];
        Self {
            graph,
            lambdas,
            iteration: 0,
            last_costs: TermCosts::default(),
            stalled: false,
        }
    }
}

/// Outcome of one accepted LM step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOutcome {
    pub cost_before: f64,
    pub cost_after: f64,
    pub attempts: usize,
    pub costs: TermCosts,
}

/// One LM step with the model frozen. On success the warps and damping are
/// updated in place; a stall leaves the warps untouched.
pub fn lm_step(state: &mut SolverState, template: &Template, model: &EnergyModel, cfg: &SolverConfig) -> Result<LmOutcome, SolverError> {
    let n = state.graph.len();
    let pivots = state.graph.positions();
    let blocks = model.blocks(template, &state.graph, Some(&pivots));
    let before = crate::energy::total_cost(&blocks);

    let mut bins: Vec<Vec<(usize, usize)>> = alloc::vec![Vec::new(); n];
    for (bi, block) in blocks.iter().enumerate() {
        for (ji, jac) in block.jacobians.iter().enumerate() {
            bins[jac.control].push((bi, ji));
        }
    }
    let systems = par::map_indexed(n, |i| accumulate(bins[i].iter().map(|&(bi, ji)| (&blocks[bi], &blocks[bi].jacobians[ji]))));
    drop(blocks);

    let mut attempts = 0;
    loop {
        attempts += 1;
        let lambdas = &state.lambdas;
        let steps = par::map_indexed(n, |i| {
            let (m, g) = &systems[i];
            solve_step(&damp(m, lambdas[i]), g)
        });
        let try_steps = |scale: f64| {
            let mut trial = state.graph.clone();
            trial.warps = par::map_indexed(n, |i| {
                let step = steps[i].map(|d| d * scale);
                apply_delta_about(&state.graph.warps[i], &step, &pivots[i])
            });
            let cost = model.cost(template, &trial);
            (trial, cost)
        };
        let (mut trial, mut after) = try_steps(1.0);
        if after.total <= before.total {
            let mut scale = 1.0;
            for _ in 0..cfg.max_expansions {
                scale *= 2.0;
                let (t, c) = try_steps(scale);
                if c.total >= after.total {
                    break;
                }
                trial = t;
                after = c;
            }
            state.graph = trial;
            for l in &mut state.lambdas {
                *l = (*l / cfg.lambda_down).max(cfg.lambda_min);
            }
            state.iteration += 1;
            state.last_costs = after;
            state.stalled = false;
            return Ok(LmOutcome {
                cost_before: before.total,
                cost_after: after.total,
                attempts,
                costs: after,
            });
        }
        for l in &mut state.lambdas {
            *l = (*l * cfg.lambda_up).min(cfg.lambda_max);
        }
        if attempts > cfg.max_retries {
            state.stalled = true;
            state.last_costs = before;
            let lambda = state.lambdas.iter().cloned().fold(0.0, f64::max);
            return Err(SolverError::StalledStep { attempts, lambda });
        }
    }
}

/// Monotonic time source for phase timings; the core never reads a clock
/// on its own.
pub trait Clock {
    fn now_seconds(&self) -> f64;
}

/// Clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}

/// Everything [`solve_frame`] needs besides the inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    /// Nearest control points per match binding.
    pub k: usize,
    /// Gaussian scale of match bindings (mm).
    pub bind_sigma: f64,
    pub gates: Gates,
    pub energy: EnergyWeights,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    MaxIterations,
    StepTolerance,
    CostTolerance,
    Stalled,
    NoData,
}

/// Per-frame solver diagnostics, free of wall-clock data so that reports
/// are reproducible.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyReport {
    pub frame: usize,
    pub initial: TermCosts,
    #[cfg_attr(feature = "serde", serde(rename = "final"))]
    pub final_costs: TermCosts,
    pub iterations: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub stop_reason: StopReason,
    pub valid_correspondences: usize,
    pub icp_terms: usize,
    pub match_count: usize,
    pub match_weight_sum: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `(before, after)` total cost of every accepted step.
    pub accepted_steps: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Wall-clock seconds per phase, summed over iterations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhaseTimings {
    pub correspond: f64,
    pub solve: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub graph: ControlGraph,
    pub deformed: Deformed,
    pub report: EnergyReport,
    pub timings: PhaseTimings,
}

/// Tracks one frame, warm-started from `graph`'s warps.
///
/// Each outer iteration re-links correspondences, freezes the robust and
/// ARAP weights, and takes one LM step. A frame with neither valid
/// correspondences nor weighted matches keeps the previous warps.
pub fn solve_frame(
    template: &Template,
    graph: &ControlGraph,
    obs: &Observation,
    matches: Option<&MatchSet>,
    cfg: &FrameConfig,
    clock: &dyn Clock,
) -> FrameResult {
    let start = clock.now_seconds();
    let mut timings = PhaseTimings::default();
    let orb = matches
        .map(|m| orb_terms(graph, m, cfg.k, cfg.bind_sigma))
        .unwrap_or_default();
    let mut state = SolverState::new(graph.clone(), &cfg.solver);
    let mut report = EnergyReport {
        frame: obs.frame_id,
        initial: TermCosts::default(),
        final_costs: TermCosts::default(),
        iterations: 0,
        accepted: 0,
        rejected: 0,
        stop_reason: StopReason::MaxIterations,
        valid_correspondences: 0,
        icp_terms: 0,
        match_count: matches.map_or(0, |m| m.len()),
        match_weight_sum: matches.map_or(0.0, |m| m.weight_sum()),
        lambda_min: cfg.solver.lambda_init,
        lambda_max: cfg.solver.lambda_init,
        accepted_steps: Vec::new(),
        warnings: Vec::new(),
    };

    let mut deformed = warp_all(template, &state.graph);
    let linearize = |deformed: &Deformed, state: &SolverState, timings: &mut PhaseTimings| {
        let t0 = clock.now_seconds();
        let corr = rasterize_correspondences(&deformed.points, &deformed.normals, obs, &cfg.gates);
        let icp = icp_terms(&deformed.points, &corr, cfg.energy.tukey_c);
        timings.correspond += clock.now_seconds() - t0;
        (corr.valid_count(), EnergyModel::new(template, &state.graph, icp, orb.clone(), cfg.energy))
    };

    for iter in 0..cfg.solver.max_outer_iters {
        let (valid, model) = linearize(&deformed, &state, &mut timings);
        if iter == 0 {
            report.initial = model.cost(template, &state.graph);
            if model.icp.is_empty() && model.orb.is_empty() {
                report.stop_reason = StopReason::NoData;
                report.warnings.push(String::from("no valid correspondences or matches; warps kept"));
                break;
            }
        }
        report.valid_correspondences = valid;
        let t0 = clock.now_seconds();
        let outcome = lm_step(&mut state, template, &model, &cfg.solver);
        timings.solve += clock.now_seconds() - t0;
        report.iterations += 1;
        match outcome {
            Ok(step) => {
                report.accepted += 1;
                report.rejected += step.attempts - 1;
                report.accepted_steps.push((step.cost_before, step.cost_after));
                track_lambda(&mut report, &state);
                let next = warp_all(template, &state.graph);
                let moved = next
                    .points
                    .iter()
                    .zip(&deformed.points)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                deformed = next;
                if moved < cfg.solver.step_tol {
                    report.stop_reason = StopReason::StepTolerance;
                    break;
                }
                if step.cost_before - step.cost_after <= cfg.solver.cost_tol * step.cost_before {
                    report.stop_reason = StopReason::CostTolerance;
                    break;
                }
            }
            Err(SolverError::StalledStep { attempts, .. }) => {
                report.rejected += attempts;
                track_lambda(&mut report, &state);
                report.stop_reason = StopReason::Stalled;
                report.warnings.push(alloc::format!("stalled step at iteration {iter}"));
                break;
            }
            Err(e) => {
                report.warnings.push(alloc::format!("{e}"));
                break;
            }
        }
    }

    let (valid, model) = linearize(&deformed, &state, &mut timings);
    report.valid_correspondences = valid;
    report.icp_terms = model.icp.len();
    report.final_costs = model.cost(template, &state.graph);
    timings.total = clock.now_seconds() - start;
    FrameResult {
        graph: state.graph,
        deformed,
        report,
        timings,
    }
}

fn track_lambda(report: &mut EnergyReport, state: &SolverState) {
    for &l in &state.lambdas {
        report.lambda_min = report.lambda_min.min(l);
        report.lambda_max = report.lambda_max.max(l);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspond::{DepthImage, DepthRange};
    use crate::energy::{OrbTerm, Term};
    use crate::geom::PinholeCamera;
    use crate::warp::{bind_template, sample_control_points, Binding, SamplingConfig};
    use core::f64::consts::FRAC_PI_2;
    use proptest::prelude::*;

    #[test]
    fn zero_delta_is_identity_map() {
        let dq = DualQuaternion::from_rotation_translation(Quat::from_axis_angle(&Vec3::new(0.3, -0.2, 0.9)), &Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(apply_delta(&dq, &[0.0; 6]), dq);
        assert_eq!(parametrize(&dq, &dq), [0.0; 6]);
    }

    #[test]
    fn quarter_turn_about_z() {
        let dq = apply_delta(&DualQuaternion::IDENTITY, &[0.0, 0.0, FRAC_PI_2, 0.0, 0.0, 0.0]);
        let p = dq.apply(&Vec3::new(1.0, 0.0, 0.0));
        assert!((p - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pivot_is_rotation_centre() {
        let pivot = Vec3::new(10.0, -4.0, 200.0);
        let dq = apply_delta_about(&DualQuaternion::IDENTITY, &[0.2, 0.5, -0.1, 0.0, 0.0, 0.0], &pivot);
        assert!((dq.apply(&pivot) - pivot).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn delta_round_trip(
            d in prop::array::uniform6(-0.5f64..0.5),
            base in prop::array::uniform6(-2.0f64..2.0),
            pivot in prop::array::uniform3(-50.0f64..50.0),
        ) {
            let reference = apply_delta(&DualQuaternion::IDENTITY, &base);
            let pivot = Vec3::from(pivot);
            let moved = apply_delta_about(&reference, &d, &pivot);
            prop_assert!(moved.is_unit(1e-12));
            let back = parametrize_about(&moved, &reference, &pivot);
            for k in 0..6 {
                prop_assert!((back[k] - d[k]).abs() < 1e-9, "{:?} vs {:?}", back, d);
            }
        }
    }

    fn linear_block(x0: f64) -> ResidualBlock {
        let mut rows = [[0.0; 6]; 4];
        rows[0][3] = 1.0;
        ResidualBlock {
            term: Term::Orb,
            weight: 1.0,
            dim: 1,
            values: [x0, 0.0, 0.0, 0.0],
            jacobians: alloc::vec![ControlJacobian { control: 0, share: 1.0, rows }],
        }
    }

    #[test]
    fn normal_equations_of_one_linear_residual() {
        let lambda = 1e-3;
        let (a, b) = build_normal_equations(&[linear_block(2.5)], 0, lambda);
        for i in 0..6 {
            for j in 0..6 {
                let expected = match (i, j) {
                    (3, 3) => 1.0 + lambda,
                    _ if i == j => lambda * DIAG_FLOOR,
                    _ => 0.0,
                };
                assert_eq!(a[i][j], expected);
            }
        }
        assert_eq!(b, [0.0, 0.0, 0.0, -2.5, 0.0, 0.0]);
        let step = solve_step(&a, &b);
        assert!((step[3] + 2.5 / (1.0 + lambda)).abs() < 1e-12);

        let (_, b) = build_normal_equations(&[linear_block(0.0)], 0, lambda);
        assert_eq!(b, [0.0; 6]);
        let (a, b) = build_normal_equations(&[], 0, lambda);
        assert_eq!(solve_step(&a, &b), [0.0; 6]);
    }

    #[test]
    fn shared_row_is_split_by_jacobian_norm() {
        let mut block = linear_block(1.0);
        block.jacobians[0].share = 0.25;
        let mut rows = [[0.0; 6]; 4];
        rows[0][3] = 3.0;
        block.jacobians.push(ControlJacobian { control: 1, share: 0.75, rows });
        let (a0, _) = build_normal_equations(core::slice::from_ref(&block), 0, 0.0);
        let (a1, _) = build_normal_equations(core::slice::from_ref(&block), 1, 0.0);
        // A_i = J_i^2 / share_i
        assert_eq!(a0[3][3], 4.0);
        assert_eq!(a1[3][3], 12.0);
    }

    fn single_control(points: Vec<Vec3>) -> (Template, ControlGraph) {
        let normals = alloc::vec![Vec3::z(); points.len()];
        let graph = ControlGraph::new(alloc::vec![Vec3::zeros()], Vec::new());
        let t = bind_template(&Template::new(points, normals).unwrap(), &graph, 1, 5.0).unwrap();
        (t, graph)
    }

    #[test]
    fn translation_toy_problem_converges() {
        let pts = alloc::vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, 0.0, -1.5)];
        let (t, graph) = single_control(pts.clone());
        let shift = Vec3::new(3.0, -2.0, 5.0);
        let orb = pts
            .iter()
            .map(|p| OrbTerm {
                binding: Binding { controls: alloc::vec![(0, 1.0)] },
                source: *p,
                target: p + shift,
                match_weight: 1.0,
            })
            .collect();
        let cfg = SolverConfig::default();
        let model = EnergyModel::new(&t, &graph, Vec::new(), orb, EnergyWeights::default());
        let mut state = SolverState::new(graph, &cfg);
        let mut iterations = 0;
        loop {
            let before = state.graph.warps[0];
            let out = lm_step(&mut state, &t, &model, &cfg).unwrap();
            assert!(out.cost_after <= out.cost_before);
            iterations += 1;
            let moved = pts.iter().map(|p| (state.graph.warps[0].apply(p) - before.apply(p)).norm()).fold(0.0, f64::max);
            if moved < cfg.step_tol {
                break;
            }
            assert!(iterations < 5);
        }
        assert!((state.graph.warps[0].translation() - shift).norm() < cfg.step_tol);
    }

    #[test]
    fn zero_residual_step_is_accepted_and_zero() {
        let (t, graph) = single_control(alloc::vec![Vec3::new(1.0, 0.0, 0.0)]);
        let orb = alloc::vec![OrbTerm {
            binding: Binding { controls: alloc::vec![(0, 1.0)] },
            source: Vec3::new(1.0, 0.0, 0.0),
            target: Vec3::new(1.0, 0.0, 0.0),
            match_weight: 1.0,
        }];
        let cfg = SolverConfig::default();
        let model = EnergyModel::new(&t, &graph, Vec::new(), orb, EnergyWeights::default());
        let mut state = SolverState::new(graph, &cfg);
        let out = lm_step(&mut state, &t, &model, &cfg).unwrap();
        assert_eq!(out.cost_before, 0.0);
        assert_eq!(out.cost_after, 0.0);
        assert_eq!(state.graph.warps[0], DualQuaternion::IDENTITY);
    }

    /// Flat patch at z = 200 whose template points sit exactly on pixel rays.
    fn plane_scene() -> (Template, ControlGraph, Observation, FrameConfig) {
        let camera = PinholeCamera::new(100.0, 100.0, 31.5, 31.5, 64, 64).unwrap();
        let mut pts = Vec::new();
        for row in (4..60).step_by(3) {
            for col in (4..60).step_by(3) {
                pts.push(camera.back_project(col as f64, row as f64, 200.0));
            }
        }
        let normals = alloc::vec![Vec3::new(0.0, 0.0, -1.0); pts.len()];
        let t = Template::new(pts, normals).unwrap();
        let g = sample_control_points(&t, &SamplingConfig { radius: 25.0, connection_sigma: None }).unwrap();
        let t = bind_template(&t, &g, 4, 25.0).unwrap();
        let obs = Observation::new(DepthImage::filled(64, 64, 200.0), camera, DepthRange::default(), 1);
        let cfg = FrameConfig {
            k: 4,
            bind_sigma: 25.0,
            gates: Gates::default(),
            energy: EnergyWeights::default(),
            solver: SolverConfig::default(),
        };
        (t, g, obs, cfg)
    }

    #[test]
    fn observation_equal_to_template_is_a_fixed_point() {
        let (t, g, obs, cfg) = plane_scene();
        let out = solve_frame(&t, &g, &obs, None, &cfg, &NoClock);
        assert_eq!(out.report.valid_correspondences, t.len());
        assert!(out.report.final_costs.total < 1e-10);
        for w in &out.graph.warps {
            let a = w.to_array();
            let id = DualQuaternion::IDENTITY.to_array();
            assert!(a.iter().zip(&id).all(|(x, y)| (x - y).abs() < 1e-10));
        }
    }

    #[test]
    fn plane_shift_is_recovered() {
        let (t, g, _, cfg) = plane_scene();
        let camera = PinholeCamera::new(100.0, 100.0, 31.5, 31.5, 64, 64).unwrap();
        let obs = Observation::new(DepthImage::filled(64, 64, 197.0), camera, DepthRange::default(), 1);
        let out = solve_frame(&t, &g, &obs, None, &cfg, &NoClock);
        assert!(out.report.accepted_steps.iter().all(|(before, after)| after <= before));
        let worst = out.deformed.points.iter().map(|p| (p.z - 197.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-2, "{worst} {:?}", out.report);
    }

    #[test]
    fn occluded_frame_keeps_previous_warps() {
        let (t, mut g, obs, cfg) = plane_scene();
        for (i, w) in g.warps.iter_mut().enumerate() {
            *w = apply_delta(w, &[0.01 * i as f64, 0.0, 0.02, 1.0, -0.5 * i as f64, 0.3]);
        }
        let empty = Observation::new(DepthImage::filled(64, 64, 0.0), obs.camera, obs.range, 2);
        let out = solve_frame(&t, &g, &empty, Some(&MatchSet::new(Vec::new())), &cfg, &NoClock);
        assert_eq!(out.report.stop_reason, StopReason::NoData);
        assert_eq!(out.graph.warps, g.warps);
    }
}
