//! Synthetic deforming scenes with exact ground truth.
//!
//! The template is a height field `z = f(x, y)` over a square patch in
//! camera coordinates. Frame `t` moves the template point `(x, y, f)` to
//! `G_t (x, y, f + D_t(x, y))`, where `D_t` is an out-of-plane deformation
//! and `G_t` a rigid motion about the patch centre. Depth is rendered by
//! intersecting each pixel ray with that surface.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::correspond::{DepthImage, DepthRange, Observation, PixelRect};
use crate::geom::{DualQuaternion, PinholeCamera, Quat, RigidTransform, Vec3};
use crate::matching::MatchSet;
use crate::math::{cos, exp, round, sin, sqrt};
use crate::par;
use crate::warp::Template;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("size mismatch: {recovered} recovered vs {truth} truth points")]
    SizeMismatch { recovered: usize, truth: usize },
    #[error("invalid scene: {0}")]
    InvalidSpec(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum Surface {
    Plane,
    /// Curved along x; `radius` must exceed half the extent.
    CylinderPatch { radius: f64 },
    /// `relief * sin(2 pi x / 70) * cos(2 pi y / 90)`.
    HeightField { relief: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum Deformation {
    None,
    /// Rotation (axis-angle, radians) about the patch centre, then
    /// translation (mm). Reached at `ramp_frames` and held afterwards.
    GlobalRigid {
        axis_angle: [f64; 3],
        translation: [f64; 3],
        ramp_frames: usize,
    },
    /// `amplitude * sin(2 pi t / period) * sin(pi (x + L/2) / L)` along z.
    SinusoidalBend { amplitude: f64, period: f64 },
    /// Gaussian dent of `depth * sin(pi t / period)^2`, pushing away from the
    /// camera.
    GaussianPoke {
        depth: f64,
        sigma: f64,
        center: [f64; 2],
        period: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SceneSpec {
    pub surface: Surface,
    /// Template grid points per side.
    pub resolution: usize,
    /// Side length of the square patch (mm).
    pub extent: f64,
    /// Depth of the patch centre (mm).
    pub distance: f64,
    pub deformation: Deformation,
    /// Standard deviation of depth and match noise (mm).
    pub noise_sigma: f64,
    pub match_count: usize,
    pub outlier_fraction: f64,
    /// Pixels with no depth; matches observed inside are dropped.
    pub occlusion: Option<PixelRect>,
    pub camera: PinholeCamera,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            surface: Surface::HeightField { relief: 4.0 },
            resolution: 40,
            extent: 100.0,
            distance: 200.0,
            deformation: Deformation::SinusoidalBend {
                amplitude: 10.0,
                period: 20.0,
            },
            noise_sigma: 0.0,
            match_count: 100,
            outlier_fraction: 0.0,
            occlusion: None,
            camera: PinholeCamera {
                fx: 170.0,
                fy: 170.0,
                cx: 47.5,
                cy: 47.5,
                width: 96,
                height: 96,
            },
            seed: 1,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.resolution < 2 {
            return Err(SynthError::InvalidSpec("resolution must be at least 2"));
        }
        if !(self.extent > 0.0) || !(self.distance > 0.0) {
            return Err(SynthError::InvalidSpec("extent and distance must be positive"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(SynthError::InvalidSpec("noise_sigma must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(SynthError::InvalidSpec("outlier_fraction must lie in [0, 1)"));
        }
        if let Surface::CylinderPatch { radius } = self.surface {
            if !(radius > 0.5 * self.extent) {
                return Err(SynthError::InvalidSpec("cylinder radius must exceed half the extent"));
            }
        }
        match self.deformation {
            Deformation::SinusoidalBend { amplitude, period } if amplitude < 0.0 || !(period > 0.0) => {
                Err(SynthError::InvalidSpec("bend needs amplitude >= 0 and period > 0"))
            }
            Deformation::GaussianPoke { depth, sigma, period, .. } if depth < 0.0 || !(sigma > 0.0) || !(period > 0.0) => {
                Err(SynthError::InvalidSpec("poke needs depth >= 0, sigma > 0, period > 0"))
            }
            _ => self.camera.validate().map_err(|_| SynthError::InvalidSpec("invalid camera")),
        }
    }

    fn half(&self) -> f64 {
        0.5 * self.extent
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let h = self.half();
        x.abs() <= h && y.abs() <= h
    }

    /// Template height and its gradient.
    fn base(&self, x: f64, y: f64) -> (f64, f64, f64) {
        match self.surface {
            Surface::Plane => (self.distance, 0.0, 0.0),
            Surface::CylinderPatch { radius } => {
                let s = sqrt(radius * radius - x * x);
                (self.distance + radius - s, x / s, 0.0)
            }
            Surface::HeightField { relief } => {
                let (kx, ky) = (2.0 * PI / 70.0, 2.0 * PI / 90.0);
                (
                    self.distance + relief * sin(kx * x) * cos(ky * y),
                    relief * kx * cos(kx * x) * cos(ky * y),
                    -relief * ky * sin(kx * x) * sin(ky * y),
                )
            }
        }
    }

    /// Out-of-plane displacement at frame `t` and its gradient.
    fn displacement(&self, t: usize, x: f64, y: f64) -> (f64, f64, f64) {
        let t = t as f64;
        match self.deformation {
            Deformation::SinusoidalBend { amplitude, period } => {
                let l = self.extent;
                let a = amplitude * sin(2.0 * PI * t / period);
                let phase = PI * (x + 0.5 * l) / l;
                (a * sin(phase), a * PI / l * cos(phase), 0.0)
            }
            Deformation::GaussianPoke { depth, sigma, center, period } => {
                let s = sin(PI * t / period);
                let (dx, dy) = (x - center[0], y - center[1]);
                let d = depth * s * s * exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                (d, -d * dx / (sigma * sigma), -d * dy / (sigma * sigma))
            }
            _ => (0.0, 0.0, 0.0),
        }
    }

    /// Rigid part of frame `t`.
    pub fn rigid_motion(&self, t: usize) -> RigidTransform {
        match self.deformation {
            Deformation::GlobalRigid {
                axis_angle,
                translation,
                ramp_frames,
            } => {
                let s = if ramp_frames == 0 { 1.0 } else { (t as f64 / ramp_frames as f64).min(1.0) };
                let rot = Quat::from_axis_angle(&(Vec3::from(axis_angle) * s));
                let centre = Vec3::new(0.0, 0.0, self.distance);
                let shift = centre - rot.rotate(&centre) + Vec3::from(translation) * s;
                RigidTransform::from_parts_unchecked(rot.to_rotation_matrix(), shift)
            }
            _ => RigidTransform::identity(),
        }
    }

    /// Height of the deformed surface before the rigid motion, with gradient.
    fn height(&self, t: usize, x: f64, y: f64) -> (f64, f64, f64) {
        let (f, fx, fy) = self.base(x, y);
        let (d, dx, dy) = self.displacement(t, x, y);
        (f + d, fx + dx, fy + dy)
    }

    /// Surface point and camera-facing unit normal of template coordinate
    /// `(x, y)` at frame `t`.
    pub fn surface_point(&self, t: usize, x: f64, y: f64) -> (Vec3, Vec3) {
        let (h, hx, hy) = self.height(t, x, y);
        let g = self.rigid_motion(t);
        let n = Vec3::new(hx, hy, -1.0).normalize();
        (g.apply(&Vec3::new(x, y, h)), g.rotation * n)
    }

    /// Depth of the frame-`t` surface along the ray of pixel `(col, row)`, or
    /// 0 where the ray misses the patch.
    pub fn ray_depth(&self, t: usize, col: usize, row: usize) -> f64 {
        let g = self.rigid_motion(t);
        let inv = g.inverse();
        let dir = self.camera.back_project(col as f64, row as f64, 1.0);
        // ray s -> s * dir in camera space is o + s d in template space
        let o = inv.translation;
        let d = inv.rotation * dir;
        if d.z.abs() < 1e-12 {
            return 0.0;
        }
        let mut s = (self.distance - o.z) / d.z;
        for _ in 0..50 {
            let p = o + d * s;
            let (h, hx, hy) = self.height(t, p.x, p.y);
            let residual = p.z - h;
            let slope = d.z - hx * d.x - hy * d.y;
            if slope.abs() < 1e-12 {
                return 0.0;
            }
            let step = residual / slope;
            s -= step;
            if step.abs() < 1e-13 * s.abs().max(1.0) {
                break;
            }
        }
        let p = o + d * s;
        let (h, _, _) = self.height(t, p.x, p.y);
        if !(s > 0.0) || !self.contains(p.x, p.y) || (p.z - h).abs() > 1e-9 {
            return 0.0;
        }
        s
    }

    /// Template-space `(x, y)` coordinates of the template grid.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        let n = self.resolution;
        let step = self.extent / (n - 1) as f64;
        let h = self.half();
        (0..n * n)
            .map(|i| (-h + step * (i % n) as f64, -h + step * (i / n) as f64))
            .collect()
    }

    pub fn template(&self) -> Template {
        let (points, normals) = self.grid().iter().map(|&(x, y)| self.surface_point(0, x, y)).unzip();
        Template::new(points, normals).expect("grid is non-empty with unit normals")
    }
}

/// One rendered frame with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub observation: Observation,
    pub matches: MatchSet,
    /// True when the match is an exact (possibly noisy) correspondence.
    pub inliers: Vec<bool>,
    /// Index-aligned with the template.
    pub truth_points: Vec<Vec3>,
    pub truth_normals: Vec<Vec3>,
    /// Per-template-point rigid motion carrying point and normal to their
    /// ground-truth positions.
    pub truth_warps: Vec<DualQuaternion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub template: Template,
    pub frames: Vec<SynthFrame>,
}

fn frame_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64);
    rng
}

/// Smallest rotation taking unit `a` to unit `b`.
fn minimal_rotation(a: &Vec3, b: &Vec3) -> Quat {
    let axis = a.cross(b);
    let s = axis.norm();
    let angle = crate::math::atan2(s, a.dot(b));
    if s < 1e-15 {
        return Quat::IDENTITY;
    }
    Quat::from_axis_angle(&(axis * (angle / s)))
}

/// Renders frame `t` (0 reproduces the template).
pub fn generate_frame(spec: &SceneSpec, template: &Template, t: usize) -> SynthFrame {
    let mut rng = frame_rng(spec.seed, t);
    let cam = spec.camera;
    let grid = spec.grid();

    let (truth_points, truth_normals): (Vec<Vec3>, Vec<Vec3>) = grid.iter().map(|&(x, y)| spec.surface_point(t, x, y)).unzip();
    let rigid = matches!(spec.deformation, Deformation::GlobalRigid { .. });
    let g = DualQuaternion::from_transform(&spec.rigid_motion(t));
    let truth_warps = (0..grid.len())
        .map(|i| {
            if rigid {
                return g;
            }
            let q = minimal_rotation(&template.normals[i], &truth_normals[i]);
            let shift = truth_points[i] - q.rotate(&template.points[i]);
            DualQuaternion::from_rotation_translation(q, &shift)
        })
        .collect();

    let mut depth = par::map_indexed(cam.width * cam.height, |i| spec.ray_depth(t, i % cam.width, i / cam.width));
    if let Some(rect) = spec.occlusion {
        for (i, z) in depth.iter_mut().enumerate() {
            if rect.contains(i % cam.width, i / cam.width) {
                *z = 0.0;
            }
        }
    }
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("validated sigma"));
    if let Some(noise) = &noise {
        for z in depth.iter_mut().filter(|z| **z > 0.0) {
            *z += noise.sample(&mut rng);
        }
    }
    let observation = Observation::new(DepthImage::new(cam.width, cam.height, depth), cam, DepthRange::default(), t);

    let h = spec.half();
    let n = spec.match_count;
    let mut pairs: Vec<(Vec3, Vec3)> = (0..n)
        .map(|_| {
            let (x, y) = (rng.random_range(-h..=h), rng.random_range(-h..=h));
            (spec.surface_point(0, x, y).0, spec.surface_point(t, x, y).0)
        })
        .collect();
    if let Some(noise) = &noise {
        for (_, o) in pairs.iter_mut() {
            *o += Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
        }
    }
    let n_out = round(spec.outlier_fraction * n as f64) as usize;
    let mut inliers = alloc::vec![true; n];
    for i in index::sample(&mut rng, n, n_out).into_vec() {
        inliers[i] = false;
        pairs[i].1 = Vec3::new(
            rng.random_range(-h..=h),
            rng.random_range(-h..=h),
            rng.random_range(spec.distance - h..=spec.distance + h),
        );
    }
    if let Some(rect) = spec.occlusion {
        let keep: Vec<bool> = pairs
            .iter()
            .map(|(_, o)| match cam.project(o).ok().and_then(|(u, v)| cam.nearest_pixel(u, v)) {
                Some((col, row)) => !rect.contains(col, row),
                None => true,
            })
            .collect();
        let mut k = keep.iter();
        pairs.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        inliers.retain(|_| *k.next().unwrap());
    }

    SynthFrame {
        observation,
        matches: MatchSet::new(pairs),
        inliers,
        truth_points,
        truth_normals,
        truth_warps,
    }
}

/// Template plus frames `1..=n_frames`.
pub fn generate_sequence(spec: &SceneSpec, n_frames: usize) -> Result<Sequence, SynthError> {
    spec.validate()?;
    let template = spec.template();
    let frames = (1..=n_frames).map(|t| generate_frame(spec, &template, t)).collect();
    Ok(Sequence { template, frames })
}

/// Rigid-motion match set with labeled uniform outliers.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatches {
    pub matches: MatchSet,
    pub inliers: Vec<bool>,
    pub motion: RigidTransform,
}

/// `n` sources uniform in a cube of side `box_size` centred at the origin,
/// targets moved by a rigid motion of `angle` radians about a random axis
/// plus a random `shift`-mm translation. A `round(outlier_fraction * n)`
/// subset of targets is replaced by uniform points in the cube.
pub fn rigid_matches(rng: &mut impl Rng, n: usize, outlier_fraction: f64, box_size: f64, angle: f64, shift: f64) -> LabeledMatches {
    let h = 0.5 * box_size;
    let uniform = |rng: &mut dyn rand::RngCore| Vec3::new(rng.random_range(-h..h), rng.random_range(-h..h), rng.random_range(-h..h));
    let axis = loop {
        let v = uniform(rng);
        if v.norm() > 1e-3 * h {
            break v.normalize();
        }
    };
    let direction = loop {
        let v = uniform(rng);
        if v.norm() > 1e-3 * h {
            break v.normalize();
        }
    };
    let motion = RigidTransform::from_axis_angle(&(axis * angle), &(direction * shift));
    let mut pairs: Vec<(Vec3, Vec3)> = (0..n)
        .map(|_| {
            let p = uniform(rng);
            (p, motion.apply(&p))
        })
        .collect();
    let mut inliers = alloc::vec![true; n];
    let n_out = round(outlier_fraction * n as f64) as usize;
    for i in index::sample(rng, n, n_out).into_vec() {
        inliers[i] = false;
        pairs[i].1 = uniform(rng);
    }
    LabeledMatches {
        matches: MatchSet::new(pairs),
        inliers,
        motion,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    pub rmse: f64,
    pub mean: f64,
    pub max: f64,
    /// Population standard deviation.
    pub std: f64,
    pub distances: Vec<f64>,
}

/// Point-to-point error statistics over index-aligned surfaces.
pub fn evaluate(recovered: &[Vec3], truth: &[Vec3]) -> Result<Metrics, SynthError> {
    if recovered.len() != truth.len() {
        return Err(SynthError::SizeMismatch {
            recovered: recovered.len(),
            truth: truth.len(),
        });
    }
    let distances: Vec<f64> = recovered.iter().zip(truth).map(|(a, b)| (a - b).norm()).collect();
    Ok(metrics_of(distances))
}

/// Statistics of the given distances; all zero when empty.
pub fn metrics_of(distances: Vec<f64>) -> Metrics {
    let n = distances.len().max(1) as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let rmse = sqrt(distances.iter().map(|d| d * d).sum::<f64>() / n);
    let var = distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    Metrics {
        rmse,
        mean,
        max: distances.iter().cloned().fold(0.0, f64::max),
        std: sqrt(var),
        distances,
    }
}

/// Marks points whose projection falls in `rect`.
pub fn in_region(points: &[Vec3], camera: &PinholeCamera, rect: &PixelRect) -> Vec<bool> {
    points
        .iter()
        .map(|p| {
            camera
                .project(p)
                .ok()
                .and_then(|(u, v)| camera.nearest_pixel(u, v))
                .is_some_and(|(c, r)| rect.contains(c, r))
        })
        .collect()
}
