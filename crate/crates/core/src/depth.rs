//! Z-buffered depth rasterization of projected meshes.
//!
//! Coverage: pixel `(col, row)` has its center at `(col + 0.5, row + 0.5)` and
//! is covered by a triangle iff the center is strictly inside it or lies on a
//! top or left edge (top-left rule). Depth is interpolated affinely from the
//! vertex depths, which is exact for a weak-perspective camera, and the
//! nearest (smallest) depth wins. Back faces are kept; degenerate (zero-area)
//! triangles draw nothing.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::camera::{camera_depth, WeakPerspectiveCamera};
use crate::{Error, Mesh, Point2, Result};

/// Conditioning value of the nearest foreground pixel.
pub const CONDITIONING_NEAR: f64 = 1.0;
/// Conditioning value of the farthest foreground pixel.
pub const CONDITIONING_FAR: f64 = 0.05;

/// Row-major depth raster. `0` marks background, positive values are
/// camera depths.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::Shape {
                what: "depth map data",
                expected,
                got: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "depth values must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, col: u32, row: u32) -> f32 {
        self.data[(row * self.width + col) as usize]
    }

    /// `d > 0` per pixel.
    pub fn silhouette(&self) -> Vec<bool> {
        self.data.iter().map(|&d| d > 0.0).collect()
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }

    pub fn max_depth(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }
}

/// A conditioning map ready for a depth-to-image backend.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub map: DepthMap,
    /// Set when the input had no foreground; `map` is then returned unchanged.
    pub all_background: bool,
}

fn edge(a: &Point2, b: &Point2, p: &Point2) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Whether the edge `a -> b` of a positively oriented triangle is a top or
/// left edge in y-down image coordinates.
fn is_top_left(a: &Point2, b: &Point2, sign: f64) -> bool {
    let dx = (b[0] - a[0]) * sign;
    let dy = (b[1] - a[1]) * sign;
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

fn inside(w: f64, top_left: bool) -> bool {
    w > 0.0 || (w == 0.0 && top_left)
}

/// Rasterizes triangles given already-projected pixel coordinates and
/// per-vertex depths.
pub fn rasterize_depth(
    screen: &[Point2],
    depths: &[f64],
    faces: &[[u32; 3]],
    width: u32,
    height: u32,
) -> Result<DepthMap> {
    let mut zbuf = vec![f64::INFINITY; width as usize * height as usize];
    rasterize_into(&mut zbuf, screen, depths, faces, width, height)?;
    Ok(resolve(zbuf, width, height))
}

fn resolve(zbuf: Vec<f64>, width: u32, height: u32) -> DepthMap {
    DepthMap {
        width,
        height,
        data: zbuf
            .into_iter()
            .map(|z| if z.is_finite() { z as f32 } else { 0.0 })
            .collect(),
    }
}

fn rasterize_into(
    zbuf: &mut [f64],
    screen: &[Point2],
    depths: &[f64],
    faces: &[[u32; 3]],
    width: u32,
    height: u32,
) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter("raster size must be positive".into()));
    }
    if screen.len() != depths.len() {
        return Err(Error::Shape {
            what: "per-vertex depths",
            expected: screen.len(),
            got: depths.len(),
        });
    }
    if !screen.iter().flatten().chain(depths).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("rasterizer input"));
    }
    let n = screen.len();
    if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i as usize >= n)) {
        return Err(Error::InvalidModel(format!("face {f:?} out of range for {n} vertices")));
    }

    let (w_px, h_px) = (width as i64, height as i64);
    for f in faces {
        let [a, b, c] = [screen[f[0] as usize], screen[f[1] as usize], screen[f[2] as usize]];
        let [da, db, dc] = [depths[f[0] as usize], depths[f[1] as usize], depths[f[2] as usize]];
        let area = edge(&a, &b, &c);
        if area == 0.0 {
            continue;
        }
        let sign = if area > 0.0 { 1.0 } else { -1.0 };
        let abs_area = area * sign;
        let tl = [
            is_top_left(&b, &c, sign),
            is_top_left(&c, &a, sign),
            is_top_left(&a, &b, sign),
        ];

        // bounding box of candidate pixel centers, padded by one pixel; the
        // exact coverage test below decides
        let min_x = a[0].min(b[0]).min(c[0]);
        let max_x = a[0].max(b[0]).max(c[0]);
        let min_y = a[1].min(b[1]).min(c[1]);
        let max_y = a[1].max(b[1]).max(c[1]);
        let col0 = (libm::floor(min_x - 0.5) as i64 - 1).max(0);
        let col1 = (libm::ceil(max_x - 0.5) as i64 + 1).min(w_px - 1);
        let row0 = (libm::floor(min_y - 0.5) as i64 - 1).max(0);
        let row1 = (libm::ceil(max_y - 0.5) as i64 + 1).min(h_px - 1);

        for row in row0..=row1 {
            for col in col0..=col1 {
                let p = [col as f64 + 0.5, row as f64 + 0.5];
                let w0 = edge(&b, &c, &p) * sign;
                if !inside(w0, tl[0]) {
                    continue;
                }
                let w1 = edge(&c, &a, &p) * sign;
                if !inside(w1, tl[1]) {
                    continue;
                }
                let w2 = edge(&a, &b, &p) * sign;
                if !inside(w2, tl[2]) {
                    continue;
                }
                let z = (w0 * da + w1 * db + w2 * dc) / abs_area;
                let slot = &mut zbuf[(row * w_px + col) as usize];
                if z < *slot {
                    *slot = z;
                }
            }
        }
    }
    Ok(())
}

/// Renders the depth map of `mesh` seen through `cam` at `width x height`.
///
/// The camera's normalized coordinates are resolution independent, so the
/// same camera estimated on a large image renders correctly at a small size.
pub fn render_depth(mesh: &Mesh, cam: &WeakPerspectiveCamera, width: u32, height: u32) -> Result<DepthMap> {
    render_depth_multi(&[(mesh, cam)], width, height)
}

/// Renders several meshes into one z-buffer. Depths are shifted jointly over
/// the union of all vertices.
pub fn render_depth_multi(
    people: &[(&Mesh, &WeakPerspectiveCamera)],
    width: u32,
    height: u32,
) -> Result<DepthMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter("raster size must be positive".into()));
    }
    let all: Vec<_> = people.iter().flat_map(|(m, _)| m.vertices.iter().copied()).collect();
    if all.is_empty() {
        return Ok(DepthMap::zeros(width, height));
    }
    let depths = camera_depth(&all)?;
    let mut zbuf = vec![f64::INFINITY; width as usize * height as usize];
    let mut offset = 0;
    for (mesh, cam) in people {
        mesh.validate()?;
        cam.validate()?;
        let screen = cam.with_image_size(width, height).project(&mesh.vertices)?;
        let n = mesh.vertices.len();
        rasterize_into(&mut zbuf, &screen, &depths[offset..offset + n], &mesh.faces, width, height)?;
        offset += n;
    }
    Ok(resolve(zbuf, width, height))
}

/// Maps foreground depth linearly onto `[CONDITIONING_FAR, CONDITIONING_NEAR]`,
/// nearest pixel brightest, as relative inverse depth. Background stays `0`.
pub fn normalize_for_conditioning(d: &DepthMap) -> Conditioning {
    let fg = d.data.iter().copied().filter(|&v| v > 0.0);
    let (lo, hi) = fg.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return Conditioning {
            map: d.clone(),
            all_background: true,
        };
    }
    let (lo, hi) = (lo as f64, hi as f64);
    let data = d
        .data
        .iter()
        .map(|&v| {
            if v <= 0.0 {
                0.0
            } else if hi == lo {
                CONDITIONING_NEAR as f32
            } else {
                let t = (v as f64 - lo) / (hi - lo);
                (CONDITIONING_NEAR - (CONDITIONING_NEAR - CONDITIONING_FAR) * t) as f32
            }
        })
        .collect();
    Conditioning {
        map: DepthMap {
            width: d.width,
            height: d.height,
            data,
        },
        all_background: false,
    }
}
