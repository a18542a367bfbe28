//! Shared fixtures: random warp-field states and a finite-difference
//! Jacobian oracle.
#![allow(dead_code, clippy::needless_range_loop)]

use deformtrack_core::energy::{EnergyModel, EnergyWeights, IcpTerm, OrbTerm};
use deformtrack_core::geom::{DualQuaternion, RigidTransform, Vec3};
use deformtrack_core::solver::apply_delta_about;
use deformtrack_core::warp::{bind_point, bind_template, build_connections, ControlGraph, Template};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_rigid(rng: &mut impl Rng, max_angle: f64, max_shift: f64) -> RigidTransform {
    let axis = unit_vector(rng) * rng.random_range(0.0..max_angle);
    let t = unit_vector(rng) * rng.random_range(0.0..max_shift);
    RigidTransform::from_axis_angle(&axis, &t)
}

/// Random control graph with `n` control points in a 30 mm box.
pub fn random_graph(rng: &mut impl Rng, n: usize) -> ControlGraph {
    let rest: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0), rng.random_range(-3.0..3.0)))
        .collect();
    let connections = build_connections(&rest, 12.0).unwrap();
    ControlGraph::new(rest, connections)
}

/// Random bumpy template, warps, data terms and ARAP weights.
pub fn random_state(seed: u64) -> (Template, ControlGraph, EnergyModel) {
    let mut rng = rng(seed);
    let mut graph = random_graph(&mut rng, 12);
    let base = random_rigid(&mut rng, 0.5, 5.0);
    for w in &mut graph.warps {
        let local = random_rigid(&mut rng, 0.3, 2.0);
        *w = DualQuaternion::from_transform(&base.compose(&local));
        if rng.random_bool(0.3) {
            *w = DualQuaternion { real: -w.real, dual: -w.dual };
        }
    }
    let points: Vec<Vec3> = (0..40)
        .map(|_| Vec3::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0), rng.random_range(-2.0..2.0)))
        .collect();
    let normals = (0..points.len()).map(|_| unit_vector(&mut rng)).collect();
    let template = bind_template(&Template::new(points, normals).unwrap(), &graph, 4, 8.0).unwrap();

    let icp = (0..template.len())
        .map(|i| IcpTerm {
            point: i,
            target: template.points[i] + unit_vector(&mut rng) * 3.0,
            normal: unit_vector(&mut rng),
            robust_weight: rng.random_range(0.1..1.0),
        })
        .collect();
    let orb = (0..10)
        .map(|_| {
            let source = Vec3::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0), 0.0);
            OrbTerm {
                binding: bind_point(&graph, &source, 4, 8.0),
                source,
                target: source + unit_vector(&mut rng) * 4.0,
                match_weight: rng.random_range(0.2..1.0),
            }
        })
        .collect();
    let weights = EnergyWeights {
        w_arap_base: 0.5,
        ..EnergyWeights::default()
    };
    let model = EnergyModel::new(&template, &graph, icp, orb, weights);
    (template, graph, model)
}

/// Largest relative deviation between analytic and central-difference
/// Jacobians over every block and every control it depends on.
///
/// Each (block, control) Jacobian is compared as a whole:
/// `max |J - J_fd| / max(max |J_fd|, floor)`.
pub fn max_jacobian_error(template: &Template, graph: &ControlGraph, model: &EnergyModel) -> f64 {
    const H: f64 = 1e-6;
    const FLOOR: f64 = 1e-6;
    let pivots = graph.positions();
    let blocks = model.blocks(template, graph, Some(&pivots));
    let mut fd: Vec<Vec<[[f64; 6]; 4]>> = blocks.iter().map(|b| vec![[[0.0; 6]; 4]; b.jacobians.len()]).collect();
    for i in 0..graph.len() {
        for k in 0..6 {
            let eval = |sign: f64| {
                let mut delta = [0.0; 6];
                delta[k] = sign * H;
                let mut g = graph.clone();
                g.warps[i] = apply_delta_about(&graph.warps[i], &delta, &pivots[i]);
                model.blocks(template, &g, None)
            };
            let plus = eval(1.0);
            let minus = eval(-1.0);
            for (b, block) in blocks.iter().enumerate() {
                for (j, jac) in block.jacobians.iter().enumerate() {
                    if jac.control == i {
                        for r in 0..block.dim {
                            fd[b][j][r][k] = (plus[b].values[r] - minus[b].values[r]) / (2.0 * H);
                        }
                    }
                }
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (b, block) in blocks.iter().enumerate() {
        for (j, jac) in block.jacobians.iter().enumerate() {
            let mut diff: f64 = 0.0;
            let mut scale: f64 = FLOOR;
            for r in 0..block.dim {
                for k in 0..6 {
                    diff = diff.max((jac.rows[r][k] - fd[b][j][r][k]).abs());
                    scale = scale.max(fd[b][j][r][k].abs());
                }
            }
            worst = worst.max(diff / scale);
        }
    }
    worst
}
