//! Depth observations and raster correspondences.
//!
//! Deformed template points are projected into the observed depth image and
//! paired with the back-projected surface point at the nearest pixel, which
//! replaces a 3D nearest-neighbour search.

use alloc::vec::Vec;

use crate::geom::{PinholeCamera, Vec3};
use crate::math::cos;
use crate::par;

/// Row-major depth image in mm. `0`, NaN and out-of-range values are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "depth buffer size");
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, alloc::vec![value; width * height])
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// Accepted depth interval `(min, max)`, exclusive, in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self { min: 0.0, max: 1.0e4 }
    }
}

impl DepthRange {
    pub fn contains(&self, z: f64) -> bool {
        z > self.min && z < self.max
    }
}

/// Rectangle of pixels: columns `x..x + width`, rows `y..y + height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.x && col < self.x + self.width && row >= self.y && row < self.y + self.height
    }
}

/// One frame of observed geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub depth: DepthImage,
    /// Per-pixel unit normals facing the camera; `None` where undefined.
    pub normals: Vec<Option<Vec3>>,
    pub camera: PinholeCamera,
    pub range: DepthRange,
    pub frame_id: usize,
}

impl Observation {
    /// Validates the image size against the camera and derives normals.
    pub fn new(depth: DepthImage, camera: PinholeCamera, range: DepthRange, frame_id: usize) -> Self {
        assert!(
            depth.width == camera.width && depth.height == camera.height,
            "depth image {}x{} does not match camera {}x{}",
            depth.width,
            depth.height,
            camera.width,
            camera.height
        );
        let normals = compute_observation_normals(&depth, &camera, &range);
        Self {
            depth,
            normals,
            camera,
            range,
            frame_id,
        }
    }

    /// Back-projected point at a pixel with valid depth.
    pub fn point(&self, col: usize, row: usize) -> Option<Vec3> {
        let z = self.depth.get(col, row);
        self.range
            .contains(z)
            .then(|| self.camera.back_project(col as f64, row as f64, z))
    }

    pub fn normal(&self, col: usize, row: usize) -> Option<Vec3> {
        self.normals[row * self.depth.width + col]
    }

    pub fn valid_pixel_count(&self) -> usize {
        self.depth.data.iter().filter(|&&z| self.range.contains(z)).count()
    }
}

/// Normals from central differences of back-projected neighbours, oriented
/// toward the camera. Border pixels and pixels with any invalid neighbour
/// get `None`.
pub fn compute_observation_normals(depth: &DepthImage, camera: &PinholeCamera, range: &DepthRange) -> Vec<Option<Vec3>> {
    let (w, h) = (depth.width, depth.height);
    let point = |col: usize, row: usize| {
        let z = depth.get(col, row);
        range.contains(z).then(|| camera.back_project(col as f64, row as f64, z))
    };
    par::map_indexed(w * h, |idx| {
        let (col, row) = (idx % w, idx / w);
        if col == 0 || row == 0 || col + 1 >= w || row + 1 >= h {
            return None;
        }
        let centre = point(col, row)?;
        let du = point(col + 1, row)? - point(col - 1, row)?;
        let dv = point(col, row + 1)? - point(col, row - 1)?;
        let n = du.cross(&dv);
        let len = n.norm();
        if !(len > 0.0) {
            return None;
        }
        let n = n / len;
        Some(if n.dot(&centre) > 0.0 { -n } else { n })
    })
}

/// Correspondence gates; `None` disables a gate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Gates {
    /// Maximum point distance (mm).
    pub max_distance: Option<f64>,
    /// Maximum normal disagreement (degrees).
    pub max_angle_deg: Option<f64>,
}

impl Default for Gates {
    fn default() -> Self {
        Self {
            max_distance: Some(20.0),
            max_angle_deg: Some(60.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub template_index: usize,
    pub observed_point: Vec3,
    pub observed_normal: Vec3,
    pub valid: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub entries: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn valid(&self) -> impl Iterator<Item = &Correspondence> {
        self.entries.iter().filter(|c| c.valid)
    }

    pub fn valid_count(&self) -> usize {
        self.valid().count()
    }
}

/// Pairs every deformed template point with the observation at its nearest
/// pixel, then applies the gates. Several points may share a pixel.
pub fn rasterize_correspondences(points: &[Vec3], normals: &[Vec3], obs: &Observation, gates: &Gates) -> CorrespondenceSet {
    let cos_gate = gates.max_angle_deg.map(|deg| cos(deg.to_radians()));
    let entries = par::map_indexed(points.len(), |i| {
        let invalid = Correspondence {
            template_index: i,
            observed_point: Vec3::zeros(),
            observed_normal: Vec3::zeros(),
            valid: false,
        };
        let p = &points[i];
        let Ok((u, v)) = obs.camera.project(p) else {
            return invalid;
        };
        let Some((col, row)) = obs.camera.nearest_pixel(u, v) else {
            return invalid;
        };
        let (Some(q), Some(n)) = (obs.point(col, row), obs.normal(col, row)) else {
            return invalid;
        };
        let mut valid = true;
        if let Some(max_d) = gates.max_distance {
            valid &= (q - p).norm() < max_d;
        }
        if let Some(c) = cos_gate {
            valid &= normals[i].dot(&n) > c;
        }
        Correspondence {
            template_index: i,
            observed_point: q,
            observed_normal: n,
            valid,
        }
    });
    CorrespondenceSet { entries }
}

/// Copy of `obs` with depth invalidated inside `region` and normals
/// recomputed.
pub fn occlusion_mask(obs: &Observation, region: &PixelRect) -> Observation {
    let mut depth = obs.depth.clone();
    for row in 0..depth.height {
        for col in 0..depth.width {
            if region.contains(col, row) {
                depth.data[row * depth.width + col] = 0.0;
            }
        }
    }
    Observation::new(depth, obs.camera, obs.range, obs.frame_id)
}
