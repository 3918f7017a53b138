//! Weak-perspective (scaled orthographic) camera.
//!
//! Points are first mapped to normalized image coordinates
//! `(u, v) = (s * x + tx, s * y + ty)`, where `[-1, 1]` spans the full image,
//! and then to pixels with `px = (u + 1) / 2 * width`, `py = (v + 1) / 2 * height`.
//! The z-coordinate never affects the projection.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Point2, Point3, Result};

/// Smallest depth a foreground point can have; `0` is reserved for background.
pub const DEFAULT_DEPTH_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeakPerspectiveCamera {
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl WeakPerspectiveCamera {
    pub fn new(scale: f64, tx: f64, ty: f64, image_width: u32, image_height: u32) -> Result<Self> {
        let cam = Self {
            scale,
            tx,
            ty,
            image_width,
            image_height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "camera scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.tx.is_finite() && self.ty.is_finite()) {
            return Err(Error::NonFinite("camera translation"));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::InvalidParameter("camera image size must be positive".into()));
        }
        Ok(())
    }

    /// Same camera targeting an image of a different resolution.
    pub fn with_image_size(&self, width: u32, height: u32) -> Self {
        Self {
            image_width: width,
            image_height: height,
            ..*self
        }
    }

    pub fn project_point(&self, p: &Point3) -> Point2 {
        let u = self.scale * p[0] + self.tx;
        let v = self.scale * p[1] + self.ty;
        [
            (u + 1.0) / 2.0 * self.image_width as f64,
            (v + 1.0) / 2.0 * self.image_height as f64,
        ]
    }

    /// Projects points to pixel coordinates.
    pub fn project(&self, points: &[Point3]) -> Result<Vec<Point2>> {
        if !points.iter().flatten().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("projected points"));
        }
        Ok(points.iter().map(|p| self.project_point(p)).collect())
    }
}

/// Depth channel for `points`: z shifted so the nearest point sits at
/// [`DEFAULT_DEPTH_FLOOR`]. Larger values are farther away.
pub fn camera_depth(points: &[Point3]) -> Result<Vec<f64>> {
    camera_depth_with_floor(points, DEFAULT_DEPTH_FLOOR)
}

pub fn camera_depth_with_floor(points: &[Point3], floor: f64) -> Result<Vec<f64>> {
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter(format!("depth floor must be positive, got {floor}")));
    }
    let min_z = points
        .iter()
        .map(|p| p[2])
        .fold(None, |acc: Option<f64>, z| Some(acc.map_or(z, |m| m.min(z))))
        .ok_or(Error::EmptyPointSet)?;
    if !min_z.is_finite() {
        return Err(Error::NonFinite("point depths"));
    }
    Ok(points.iter().map(|p| p[2] - min_z + floor).collect())
}
