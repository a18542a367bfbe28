use super::{GeomError, Vec3};
use crate::math::round;

/// Distortion-free pinhole camera looking down `+z`.
///
/// Pixel `(col, row)` has its centre at continuous image coordinates
/// `(u, v) = (col, row)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, GeomError> {
        let cam = Self { fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeomError::InvalidCamera("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeomError::InvalidCamera("image size must be non-zero"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeomError::InvalidCamera("principal point outside the image"));
        }
        Ok(())
    }

    pub fn project(&self, p: &Vec3) -> Result<(f64, f64), GeomError> {
        if !(p.z > 0.0) {
            return Err(GeomError::BehindCamera(p.z));
        }
        Ok((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Camera-frame point at image coordinates `(u, v)` and depth `z`.
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Nearest pixel `(col, row)` to `(u, v)`, if inside the image.
    pub fn nearest_pixel(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let col = round(u);
        let row = round(v);
        if col >= 0.0 && row >= 0.0 && col < self.width as f64 && row < self.height as f64 {
            Some((col as usize, row as usize))
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> PinholeCamera {
        PinholeCamera::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    #[test]
    fn projects_known_points() {
        assert_eq!(cam().project(&Vec3::new(0.0, 0.0, 1.0)).unwrap(), (50.0, 50.0));
        assert_eq!(cam().project(&Vec3::new(1.0, 0.0, 2.0)).unwrap(), (100.0, 50.0));
        assert_eq!(cam().project(&Vec3::new(0.0, 0.0, -1.0)), Err(GeomError::BehindCamera(-1.0)));
    }

    #[test]
    fn back_projection_inverts_projection() {
        let p = Vec3::new(12.5, -7.25, 230.0);
        let (u, v) = cam().project(&p).unwrap();
        assert!((cam().back_project(u, v, p.z) - p).norm() < 1e-9);
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(PinholeCamera::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(PinholeCamera::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
    }

    #[test]
    fn nearest_pixel_bounds() {
        let c = cam();
        assert_eq!(c.nearest_pixel(0.4, 100.49), Some((0, 100)));
        assert_eq!(c.nearest_pixel(-0.6, 3.0), None);
        assert_eq!(c.nearest_pixel(3.0, 100.5), None);
    }
}
