//! Control points, their warps, dense connections, and template warping.

use alloc::vec::Vec;

use crate::geom::{DualQuaternion, Vec3};
use crate::math::exp;
use crate::par;

/// Connections whose kernel weight falls below this are dropped.
pub const CONNECTION_PRUNE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WarpError {
    #[error("template has no points")]
    EmptyTemplate,
    #[error("template has {points} points but {normals} normals")]
    LengthMismatch { points: usize, normals: usize },
    #[error("normal {0} has zero length")]
    ZeroNormal(usize),
    #[error("sampling radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("a single control point has no connections")]
    SingleControlPoint,
    #[error("binding needs k >= 1 and a non-empty control graph")]
    InvalidBinding,
}

/// Control points influencing one template point, nearest first.
/// Weights are positive and sum to one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Binding {
    pub controls: Vec<(usize, f64)>,
}

/// Frame-0 surface with per-point control-point bindings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Template {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub bindings: Vec<Binding>,
}

impl Template {
    /// Unbound template; normals are rescaled to unit length.
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self, WarpError> {
        if points.len() != normals.len() {
            return Err(WarpError::LengthMismatch {
                points: points.len(),
                normals: normals.len(),
            });
        }
        let normals = normals
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                let len = n.norm();
                if len > 0.0 && len.is_finite() {
                    Ok(n / len)
                } else {
                    Err(WarpError::ZeroNormal(i))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            points,
            normals,
            bindings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_bound(&self) -> bool {
        self.bindings.len() == self.points.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Connection {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Control points with their current warps and dense connection graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGraph {
    /// Frame-0 positions.
    pub rest: Vec<Vec3>,
    pub warps: Vec<DualQuaternion>,
    connections: Vec<Connection>,
    adjacency: Vec<Vec<usize>>,
}

impl ControlGraph {
    /// Graph with identity warps.
    pub fn new(rest: Vec<Vec3>, connections: Vec<Connection>) -> Self {
        let mut adjacency = alloc::vec![Vec::new(); rest.len()];
        for (e, c) in connections.iter().enumerate() {
            adjacency[c.a].push(e);
            adjacency[c.b].push(e);
        }
        let warps = alloc::vec![DualQuaternion::IDENTITY; rest.len()];
        Self {
            rest,
            warps,
            connections,
            adjacency,
        }
    }

    pub fn len(&self) -> usize {
        self.rest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    /// Indices into [`ControlGraph::connections`] touching control `i`.
    pub fn incident(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Current position `W_i(rest_i)` of control `i`.
    pub fn position(&self, i: usize) -> Vec3 {
        self.warps[i].apply(&self.rest[i])
    }

    pub fn positions(&self) -> Vec<Vec3> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }

    /// Every control point is reachable from control 0.
    pub fn is_connected(&self) -> bool {
        if self.rest.is_empty() {
            return true;
        }
        let mut seen = alloc::vec![false; self.len()];
        let mut stack = alloc::vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &e in &self.adjacency[i] {
                let c = self.connections[e];
                let j = if c.a == i { c.b } else { c.a };
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Control-point sampling parameters (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SamplingConfig {
    /// Minimum spacing between control points.
    pub radius: f64,
    /// Connection kernel width; `None` means twice the radius.
    pub connection_sigma: Option<f64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            radius: 6.0,
            connection_sigma: None,
        }
    }
}

impl SamplingConfig {
    pub fn connection_sigma(&self) -> f64 {
        self.connection_sigma.unwrap_or(2.0 * self.radius)
    }
}

/// Template-to-control binding parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BindingConfig {
    /// Nearest control points per template point.
    pub k: usize,
    /// Gaussian kernel width (mm); `None` means the sampling radius.
    pub sigma: Option<f64>,
}

impl Default for BindingConfig {
    fn default() -> Self {
        Self { k: 4, sigma: None }
    }
}

impl BindingConfig {
    pub fn sigma(&self, sampling: &SamplingConfig) -> f64 {
        self.sigma.unwrap_or(sampling.radius)
    }
}

/// Greedy thinning in template order: a point becomes a control point when
/// no earlier control point lies closer than `radius`.
///
/// Warps start at identity. With a single control point the graph has no
/// connections.
pub fn sample_control_points(template: &Template, cfg: &SamplingConfig) -> Result<ControlGraph, WarpError> {
    if template.is_empty() {
        return Err(WarpError::EmptyTemplate);
    }
    if !(cfg.radius > 0.0) {
        return Err(WarpError::InvalidRadius(cfg.radius));
    }
    let r2 = cfg.radius * cfg.radius;
    let mut rest: Vec<Vec3> = Vec::new();
    for p in &template.points {
        if rest.iter().all(|c| (c - p).norm_squared() >= r2) {
            rest.push(*p);
        }
    }
    let connections = match build_connections(&rest, cfg.connection_sigma()) {
        Ok(c) => c,
        Err(WarpError::SingleControlPoint) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(ControlGraph::new(rest, connections))
}

/// All pairs `a < b` with `w = exp(-d^2 / (2 sigma^2))` on frame-0 distance,
/// keeping `w >= 0.01`.
pub fn build_connections(points: &[Vec3], sigma: f64) -> Result<Vec<Connection>, WarpError> {
    if points.len() < 2 {
        return Err(WarpError::SingleControlPoint);
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut out = Vec::new();
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let w = exp(-(points[a] - points[b]).norm_squared() * inv);
            if w >= CONNECTION_PRUNE {
                out.push(Connection { a, b, weight: w });
            }
        }
    }
    Ok(out)
}

/// Binds an arbitrary point to its `k` nearest control points with
/// normalized Gaussian weights.
pub fn bind_point(graph: &ControlGraph, p: &Vec3, k: usize, sigma: f64) -> Binding {
    let mut d2: Vec<(f64, usize)> = graph
        .rest
        .iter()
        .enumerate()
        .map(|(i, c)| ((c - p).norm_squared(), i))
        .collect();
    let k = k.min(d2.len());
    if k == 0 {
        return Binding::default();
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d2.len() {
        d2.select_nth_unstable_by(k - 1, cmp);
        d2.truncate(k);
    }
    d2.sort_unstable_by(cmp);
    // shifted by the nearest distance so far-away points do not underflow
    let d0 = d2[0].0;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut controls: Vec<(usize, f64)> = d2.iter().map(|&(d, i)| (i, exp(-(d - d0) * inv))).collect();
    let total: f64 = controls.iter().map(|c| c.1).sum();
    controls.iter_mut().for_each(|c| c.1 /= total);
    controls.retain(|c| c.1 > 0.0);
    Binding { controls }
}

/// Returns a copy of `template` bound to `graph`.
pub fn bind_template(template: &Template, graph: &ControlGraph, k: usize, sigma: f64) -> Result<Template, WarpError> {
    if k == 0 || graph.is_empty() {
        return Err(WarpError::InvalidBinding);
    }
    let bindings = par::map_indexed(template.len(), |i| bind_point(graph, &template.points[i], k, sigma));
    Ok(Template {
        points: template.points.clone(),
        normals: template.normals.clone(),
        bindings,
    })
}

/// Blend of the warps named by `binding`.
pub fn blend_binding(warps: &[DualQuaternion], binding: &Binding) -> DualQuaternion {
    DualQuaternion::blend_iter(binding.controls.iter().map(|&(i, w)| (warps[i], w)))
        .expect("bindings carry positive weights")
}

pub fn warp_point(template: &Template, graph: &ControlGraph, index: usize) -> (Vec3, Vec3) {
    let dq = blend_binding(&graph.warps, &template.bindings[index]);
    (
        dq.apply(&template.points[index]),
        dq.rotate_vector(&template.normals[index]),
    )
}

/// Warped template points and normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Deformed {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

pub fn warp_all(template: &Template, graph: &ControlGraph) -> Deformed {
    let pairs = par::map_indexed(template.len(), |i| warp_point(template, graph, i));
    let (points, normals) = pairs.into_iter().unzip();
    Deformed { points, normals }
}
