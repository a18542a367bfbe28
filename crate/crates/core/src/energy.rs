//! Residuals of the tracking energy
//!
//! `f = f_icp + w_orb f_orb + w_arap f_arap`
//!
//! with exact first derivatives for the solver.
//!
//! Jacobians are taken with respect to the local 6-vector `(omega, v)` of a
//! control point `i`: its warp is updated as `D(delta) * W_i`, where
//! `D(delta)` rotates by `omega` about the control point's current position
//! `W_i(rest_i)` and then translates by `v` (see
//! [`crate::solver::apply_delta_about`]).

use alloc::vec::Vec;

use crate::correspond::CorrespondenceSet;
use crate::geom::{skew, DualQuaternion, Mat3, Quat, Vec3};
use crate::matching::MatchSet;
use crate::math::atan2;
use crate::par;
use crate::warp::{bind_point, Binding, ControlGraph, Template};

/// Angle residuals are zeroed when either edge vector is shorter than this (mm).
const MIN_EDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EnergyWeights {
    pub w_orb: f64,
    /// Base ARAP weight before per-control-point balancing.
    pub w_arap_base: f64,
    pub w_angle: f64,
    pub w_rotation: f64,
    /// Tukey biweight cutoff (mm).
    pub tukey_c: f64,
    /// Minimum data support used when balancing the ARAP weight.
    pub data_floor: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            w_orb: 10.0,
            w_arap_base: 0.1,
            w_angle: 20.0,
            w_rotation: 100.0,
            tukey_c: 10.0,
            data_floor: 1.0,
        }
    }
}

/// Tukey biweight `(1 - (r/c)^2)^2` inside the cutoff, 0 outside.
pub fn tukey_weight(r: f64, c: f64) -> f64 {
    if r.abs() < c {
        let u = r / c;
        let t = 1.0 - u * u;
        t * t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Term {
    Icp,
    Orb,
    ArapLength,
    ArapAngle,
    ArapRotation,
}

pub type Row = [f64; 6];

/// Derivative of a block's residual rows with respect to one control point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlJacobian {
    pub control: usize,
    /// This control's share of the block in the separable solver bound;
    /// shares of one block sum to 1.
    pub share: f64,
    pub rows: [Row; 4],
}

/// One residual vector (up to four rows) and its cost weight.
///
/// Cost contribution is `weight * |values|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub term: Term,
    pub weight: f64,
    pub dim: usize,
    pub values: [f64; 4],
    pub jacobians: Vec<ControlJacobian>,
}

impl ResidualBlock {
    pub fn cost(&self) -> f64 {
        self.weight * self.values[..self.dim].iter().map(|r| r * r).sum::<f64>()
    }
}

/// Frozen point-to-plane target for one template point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpTerm {
    pub point: usize,
    pub target: Vec3,
    pub normal: Vec3,
    /// Tukey weight at the linearization point.
    pub robust_weight: f64,
}

/// Feature match with its template-side binding.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbTerm {
    pub binding: Binding,
    pub source: Vec3,
    pub target: Vec3,
    pub match_weight: f64,
}

/// ICP targets from valid correspondences, Tukey weights evaluated on the
/// current signed normal distance.
pub fn icp_terms(deformed: &[Vec3], corr: &CorrespondenceSet, tukey_c: f64) -> Vec<IcpTerm> {
    corr.valid()
        .map(|c| {
            let r = c.observed_normal.dot(&(deformed[c.template_index] - c.observed_point));
            IcpTerm {
                point: c.template_index,
                target: c.observed_point,
                normal: c.observed_normal,
                robust_weight: tukey_weight(r, tukey_c),
            }
        })
        .collect()
}

/// Binds each match with positive weight on its template side.
pub fn orb_terms(graph: &ControlGraph, matches: &MatchSet, k: usize, sigma: f64) -> Vec<OrbTerm> {
    matches
        .pairs
        .iter()
        .zip(&matches.weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&(source, target), &w)| OrbTerm {
            binding: bind_point(graph, &source, k, sigma),
            source,
            target,
            match_weight: w,
        })
        .collect()
}

/// Generators of the local update at `pivot`, as dual quaternions.
fn generators(pivot: &Vec3) -> [DualQuaternion; 6] {
    core::array::from_fn(|k| {
        let e = Vec3::ith(k % 3, 0.5);
        if k < 3 {
            DualQuaternion {
                real: Quat::pure(&e),
                dual: Quat::pure(&-e.cross(pivot)),
            }
        } else {
            DualQuaternion {
                real: Quat::ZERO,
                dual: Quat::pure(&e),
            }
        }
    })
}

/// `d x / d b` for `x = apply(normalize(b), p)` with `b` an unnormalized
/// dual quaternion, columns ordered `(r.w, r.x, r.y, r.z, d.w, d.x, d.y, d.z)`.
fn apply_jacobian(b: &DualQuaternion, p: &Vec3, x: &Vec3) -> [[f64; 8]; 3] {
    let w = b.real.w;
    let v = b.real.vector();
    let dw = b.dual.w;
    let dv = b.dual.vector();
    let rho2 = b.real.norm_squared();
    let inv = 1.0 / rho2;

    let d_w = (p * (2.0 * w) + v.cross(p) * 2.0 + dv * 2.0 - x * (2.0 * w)) * inv;
    let d_v: Mat3 = (p * v.transpose() * -2.0 + Mat3::identity() * (2.0 * v.dot(p)) + v * p.transpose() * 2.0
        - skew(p) * (2.0 * w)
        - Mat3::identity() * (2.0 * dw)
        - skew(&dv) * 2.0
        - x * v.transpose() * 2.0)
        * inv;
    let d_dw = v * (-2.0 * inv);
    let d_dv: Mat3 = (Mat3::identity() * w + skew(&v)) * (2.0 * inv);

    let mut out = [[0.0; 8]; 3];
    for r in 0..3 {
        out[r][0] = d_w[r];
        for c in 0..3 {
            out[r][1 + c] = d_v[(r, c)];
            out[r][5 + c] = d_dv[(r, c)];
        }
        out[r][4] = d_dw[r];
    }
    out
}

/// Blended warp of `p` and, optionally, `d x / d delta_i` (3x6) for every
/// bound control point.
fn blended_point(
    warps: &[DualQuaternion],
    pivots: Option<&[Vec3]>,
    binding: &Binding,
    p: &Vec3,
) -> (Vec3, Vec<(usize, f64, [Row; 3])>) {
    let reference = warps[binding.controls[0].0];
    let mut b = DualQuaternion {
        real: Quat::ZERO,
        dual: Quat::ZERO,
    };
    for &(i, w) in &binding.controls {
        let s = w * warps[i].hemisphere_sign(&reference);
        b.real = b.real + warps[i].real.scale(s);
        b.dual = b.dual + warps[i].dual.scale(s);
    }
    let x = b.normalize().apply(p);
    let Some(pivots) = pivots else {
        return (x, Vec::new());
    };
    let dx_db = apply_jacobian(&b, p, &x);
    let jac = binding
        .controls
        .iter()
        .map(|&(i, w)| {
            let s = w * warps[i].hemisphere_sign(&reference);
            let gens = generators(&pivots[i]);
            let mut rows = [[0.0; 6]; 3];
            for (k, g) in gens.iter().enumerate() {
                let db = (*g * warps[i]).to_array();
                for r in 0..3 {
                    rows[r][k] = s * (0..8).map(|c| dx_db[r][c] * db[c]).sum::<f64>();
                }
            }
            (i, w, rows)
        })
        .collect();
    (x, jac)
}

fn pad_rows<const N: usize>(rows: [Row; N]) -> [Row; 4] {
    let mut out = [[0.0; 6]; 4];
    out[..N].copy_from_slice(&rows);
    out
}

/// Point-to-plane residuals `n . (x - target)`.
pub fn icp_residuals(template: &Template, graph: &ControlGraph, terms: &[IcpTerm], pivots: Option<&[Vec3]>) -> Vec<ResidualBlock> {
    par::map_indexed(terms.len(), |t| {
        let term = &terms[t];
        let (x, jac) = blended_point(&graph.warps, pivots, &template.bindings[term.point], &template.points[term.point]);
        let jacobians = jac
            .into_iter()
            .map(|(control, share, d)| {
                let row: Row = core::array::from_fn(|k| (0..3).map(|r| term.normal[r] * d[r][k]).sum());
                ControlJacobian {
                    control,
                    share,
                    rows: pad_rows([row]),
                }
            })
            .collect();
        ResidualBlock {
            term: Term::Icp,
            weight: term.robust_weight,
            dim: 1,
            values: [term.normal.dot(&(x - term.target)), 0.0, 0.0, 0.0],
            jacobians,
        }
    })
}

/// Match residuals `warp(source) - target`, weighted by `w_orb * w_k`.
pub fn orb_residuals(graph: &ControlGraph, terms: &[OrbTerm], w_orb: f64, pivots: Option<&[Vec3]>) -> Vec<ResidualBlock> {
    par::map_indexed(terms.len(), |t| {
        let term = &terms[t];
        let (x, jac) = blended_point(&graph.warps, pivots, &term.binding, &term.source);
        let r = x - term.target;
        ResidualBlock {
            term: Term::Orb,
            weight: w_orb * term.match_weight,
            dim: 3,
            values: [r.x, r.y, r.z, 0.0],
            jacobians: jac
                .into_iter()
                .map(|(control, share, rows)| ControlJacobian {
                    control,
                    share,
                    rows: pad_rows(rows),
                })
                .collect(),
        }
    })
}

/// Per-control ARAP weight `w_arap_base * max(data_i, data_floor)`, where
/// `data_i` sums Tukey-times-interpolation weights of ICP terms and
/// `w_orb * w_k`-times-interpolation weights of match terms bound to `i`.
pub fn balance_arap_weight(
    template: &Template,
    n_controls: usize,
    icp: &[IcpTerm],
    orb: &[OrbTerm],
    weights: &EnergyWeights,
) -> (Vec<f64>, Vec<f64>) {
    let mut data = alloc::vec![0.0; n_controls];
    for t in icp {
        for &(i, w) in &template.bindings[t.point].controls {
            data[i] += t.robust_weight * w;
        }
    }
    for t in orb {
        for &(i, w) in &t.binding.controls {
            data[i] += weights.w_orb * t.match_weight * w;
        }
    }
    let arap = data
        .iter()
        .map(|&d| weights.w_arap_base * d.max(weights.data_floor))
        .collect();
    (arap, data)
}

fn row_norm(row: &Row) -> f64 {
    crate::math::sqrt(row.iter().map(|v| v * v).sum())
}

fn angle_block(
    a_dir: Vec3,
    b_dir: Vec3,
    from: usize,
    to: usize,
    weight: f64,
    with_jacobians: bool,
) -> ResidualBlock {
    let na = a_dir.norm();
    let nb = b_dir.norm();
    let mut block = ResidualBlock {
        term: Term::ArapAngle,
        weight,
        dim: 1,
        values: [0.0; 4],
        jacobians: Vec::new(),
    };
    if na < MIN_EDGE || nb < MIN_EDGE {
        return block;
    }
    let cross = a_dir.cross(&b_dir);
    let sin_n = cross.norm();
    let theta = atan2(sin_n, a_dir.dot(&b_dir));
    block.values[0] = theta;
    if !with_jacobians {
        return block;
    }
    let ua = a_dir / na;
    let ub = b_dir / nb;
    let sin_t = sin_n / (na * nb);
    let (ga, gb) = if sin_t > 1e-12 {
        let c = ua.dot(&ub);
        ((ub - ua * c) / (-na * sin_t), (ua - ub * c) / (-nb * sin_t))
    } else {
        (Vec3::zeros(), Vec3::zeros())
    };
    // a = W_from(rest_to) - p_from, b = p_to - p_from
    let rot = a_dir.cross(&ga);
    let from_row = [rot.x, rot.y, rot.z, -gb.x, -gb.y, -gb.z];
    let to_row = [0.0, 0.0, 0.0, gb.x, gb.y, gb.z];
    let (nf, nt) = (row_norm(&from_row), row_norm(&to_row));
    let share = if nf + nt > 0.0 { nf / (nf + nt) } else { 0.5 };
    block.jacobians = alloc::vec![
        ControlJacobian {
            control: from,
            share,
            rows: pad_rows([from_row]),
        },
        ControlJacobian {
            control: to,
            share: 1.0 - share,
            rows: pad_rows([to_row]),
        },
    ];
    block
}

/// Dense-connection ARAP residuals: per connection one length, two angle
/// (both directions) and one 4-row rotation block.
///
/// Each connection uses the mean of its endpoints' balanced ARAP weights.
pub fn arap_residuals(
    graph: &ControlGraph,
    arap_weights: &[f64],
    weights: &EnergyWeights,
    pivots: Option<&[Vec3]>,
) -> Vec<ResidualBlock> {
    let with_jacobians = pivots.is_some();
    let per_edge = par::map_indexed(graph.connections().len(), |e| {
        let c = graph.connections()[e];
        let (a, b) = (c.a, c.b);
        let wa = &graph.warps[a];
        let wb = &graph.warps[b];
        let pa = wa.apply(&graph.rest[a]);
        let pb = wb.apply(&graph.rest[b]);
        let base = c.weight * 0.5 * (arap_weights[a] + arap_weights[b]);

        let edge = pb - pa;
        let len = edge.norm();
        let rest_len = (graph.rest[b] - graph.rest[a]).norm();
        let mut length = ResidualBlock {
            term: Term::ArapLength,
            weight: base,
            dim: 1,
            values: [len - rest_len, 0.0, 0.0, 0.0],
            jacobians: Vec::new(),
        };
        if with_jacobians && len > 0.0 {
            let u = edge / len;
            length.jacobians = alloc::vec![
                ControlJacobian {
                    control: a,
                    share: 0.5,
                    rows: pad_rows([[0.0, 0.0, 0.0, -u.x, -u.y, -u.z]]),
                },
                ControlJacobian {
                    control: b,
                    share: 0.5,
                    rows: pad_rows([[0.0, 0.0, 0.0, u.x, u.y, u.z]]),
                },
            ];
        }

        let w_angle = base * weights.w_angle;
        let ab = angle_block(wa.apply(&graph.rest[b]) - pa, pb - pa, a, b, w_angle, with_jacobians);
        let ba = angle_block(wb.apply(&graph.rest[a]) - pb, pa - pb, b, a, w_angle, with_jacobians);

        let s = wb.hemisphere_sign(wa);
        let diff = wa.real - wb.real.scale(s);
        let mut rotation = ResidualBlock {
            term: Term::ArapRotation,
            weight: base * weights.w_rotation,
            dim: 4,
            values: diff.to_array(),
            jacobians: Vec::new(),
        };
        if with_jacobians {
            let mut ja = [[0.0; 6]; 4];
            let mut jb = [[0.0; 6]; 4];
            for k in 0..3 {
                let g = Quat::pure(&Vec3::ith(k, 0.5));
                let da = (g * wa.real).to_array();
                let db = (g * wb.real).to_array();
                for r in 0..4 {
                    ja[r][k] = da[r];
                    jb[r][k] = -s * db[r];
                }
            }
            rotation.jacobians = alloc::vec![
                ControlJacobian {
                    control: a,
                    share: 0.5,
                    rows: ja,
                },
                ControlJacobian {
                    control: b,
                    share: 0.5,
                    rows: jb,
                },
            ];
        }
        [length, ab, ba, rotation]
    });
    per_edge.into_iter().flatten().collect()
}

/// Per-term costs, each already multiplied by its weights.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TermCosts {
    pub icp: f64,
    pub orb: f64,
    pub arap_length: f64,
    pub arap_angle: f64,
    pub arap_rotation: f64,
    pub arap: f64,
    pub total: f64,
}

/// Sums block costs in order.
pub fn total_cost(blocks: &[ResidualBlock]) -> TermCosts {
    let mut c = TermCosts::default();
    for b in blocks {
        let v = b.cost();
        match b.term {
            Term::Icp => c.icp += v,
            Term::Orb => c.orb += v,
            Term::ArapLength => c.arap_length += v,
            Term::ArapAngle => c.arap_angle += v,
            Term::ArapRotation => c.arap_rotation += v,
        }
    }
    c.arap = c.arap_length + c.arap_angle + c.arap_rotation;
    c.total = c.icp + c.orb + c.arap;
    c
}

/// Every term of one linearization, with data targets and ARAP weights frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    pub icp: Vec<IcpTerm>,
    pub orb: Vec<OrbTerm>,
    pub arap_weights: Vec<f64>,
    /// Per-control data support before flooring.
    pub data_support: Vec<f64>,
    pub weights: EnergyWeights,
}

impl EnergyModel {
    pub fn new(template: &Template, graph: &ControlGraph, icp: Vec<IcpTerm>, orb: Vec<OrbTerm>, weights: EnergyWeights) -> Self {
        let (arap_weights, data_support) = balance_arap_weight(template, graph.len(), &icp, &orb, &weights);
        Self {
            icp,
            orb,
            arap_weights,
            data_support,
            weights,
        }
    }

    /// All blocks in a fixed order: ICP, matches, ARAP. Jacobians are
    /// computed when `pivots` (current control positions) are given.
    pub fn blocks(&self, template: &Template, graph: &ControlGraph, pivots: Option<&[Vec3]>) -> Vec<ResidualBlock> {
        let mut out = icp_residuals(template, graph, &self.icp, pivots);
        out.extend(orb_residuals(graph, &self.orb, self.weights.w_orb, pivots));
        out.extend(arap_residuals(graph, &self.arap_weights, &self.weights, pivots));
        out
    }

    pub fn cost(&self, template: &Template, graph: &ControlGraph) -> TermCosts {
        total_cost(&self.blocks(template, graph, None))
    }
}
