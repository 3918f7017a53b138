//! Human mesh recovery metrics: MPJPE, Procrustes-aligned MPJPE and PCK.
//!
//! 3D inputs are in meters; MPJPE values are reported in millimeters.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use crate::rotation::{from_na, mat_vec, Mat3};
use crate::{Error, Joints3D, Point2, Point3, Result};

/// Relative singular-value floor below which a point set is rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

/// `x -> scale * R x + t`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub rotation: [[f64; 3]; 3],
    pub scale: f64,
    pub translation: Point3,
}

impl Similarity {
    pub fn apply(&self, p: &Point3) -> Point3 {
        let r = mat_vec(&self.rotation, p);
        [
            self.scale * r[0] + self.translation[0],
            self.scale * r[1] + self.translation[1],
            self.scale * r[2] + self.translation[2],
        ]
    }

    pub fn apply_all(&self, joints: &Joints3D) -> Joints3D {
        Joints3D {
            joints: joints.joints.iter().map(|p| self.apply(p)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Keypoints2D {
    pub points: Vec<Point2>,
    pub visibility: Vec<bool>,
}

impl Keypoints2D {
    pub fn all_visible(points: Vec<Point2>) -> Self {
        let visibility = alloc::vec![true; points.len()];
        Self { points, visibility }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.visibility.len() {
            return Err(Error::Shape {
                what: "keypoint visibility",
                expected: self.points.len(),
                got: self.visibility.len(),
            });
        }
        let bad = self
            .points
            .iter()
            .zip(&self.visibility)
            .any(|(p, &v)| v && !(p[0].is_finite() && p[1].is_finite()));
        if bad {
            return Err(Error::NonFinite("visible keypoint"));
        }
        Ok(())
    }
}

/// Indices of the joints used to measure torso length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TorsoJoints {
    pub left_shoulder: usize,
    pub right_shoulder: usize,
    pub left_hip: usize,
    pub right_hip: usize,
}

fn check_pair(pred: &Joints3D, gt: &Joints3D) -> Result<()> {
    if pred.joints.len() != gt.joints.len() {
        return Err(Error::Shape {
            what: "joint count",
            expected: gt.joints.len(),
            got: pred.joints.len(),
        });
    }
    if pred.joints.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if !pred.joints.iter().chain(&gt.joints).flatten().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("joints"));
    }
    Ok(())
}

fn dist3(a: &Point3, b: &Point3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    libm::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
}

fn mean_distance_mm(pred: &[Point3], gt: &[Point3]) -> f64 {
    let total: f64 = pred.iter().zip(gt).map(|(p, g)| dist3(p, g)).sum();
    total / pred.len() as f64 * 1000.0
}

/// Mean per-joint position error in millimeters. With `root_aligned`, both
/// sets are first translated so joint 0 sits at the origin.
pub fn mpjpe(pred: &Joints3D, gt: &Joints3D, root_aligned: bool) -> Result<f64> {
    check_pair(pred, gt)?;
    if !root_aligned {
        return Ok(mean_distance_mm(&pred.joints, &gt.joints));
    }
    let center = |js: &[Point3]| -> Vec<Point3> {
        let r = js[0];
        js.iter().map(|p| [p[0] - r[0], p[1] - r[1], p[2] - r[2]]).collect()
    };
    Ok(mean_distance_mm(&center(&pred.joints), &center(&gt.joints)))
}

fn centroid(points: &[Point3]) -> Vector3<f64> {
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + Vector3::new(p[0], p[1], p[2]));
    sum / points.len() as f64
}

fn rank_at_least_two(m: &Matrix3<f64>) -> bool {
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv[0] > 0.0 && sv[1] > RANK_TOLERANCE * sv[0]
}

/// Similarity transform minimizing `sum ||s R pred_i + t - gt_i||^2`, with
/// `det(R) = +1` (Umeyama's closed form).
pub fn procrustes_align(pred: &Joints3D, gt: &Joints3D) -> Result<Similarity> {
    check_pair(pred, gt)?;
    let n = pred.joints.len();
    if n < 3 {
        return Err(Error::Degenerate("procrustes alignment needs at least 3 joints"));
    }
    let mu_x = centroid(&pred.joints);
    let mu_y = centroid(&gt.joints);
    let xs: Vec<Vector3<f64>> = pred.joints.iter().map(|p| Vector3::new(p[0], p[1], p[2]) - mu_x).collect();
    let ys: Vec<Vector3<f64>> = gt.joints.iter().map(|p| Vector3::new(p[0], p[1], p[2]) - mu_y).collect();

    let scatter = xs.iter().fold(Matrix3::zeros(), |acc, x| acc + x * x.transpose());
    if !rank_at_least_two(&scatter) {
        return Err(Error::Degenerate("predicted joints are collinear or coincident"));
    }
    let cov = xs.iter().zip(&ys).fold(Matrix3::zeros(), |acc, (x, y)| acc + y * x.transpose()) / n as f64;
    if !rank_at_least_two(&cov) {
        return Err(Error::Degenerate("cross-covariance has rank < 2"));
    }
    let var_x = xs.iter().map(|x| x.norm_squared()).sum::<f64>() / n as f64;

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Degenerate("SVD did not converge")),
    };
    let d = svd.singular_values;
    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        // flip the direction with the smallest singular value
        let smallest = (0..3).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap_or(2);
        signs[smallest] = -1.0;
    }
    let rot = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = d.component_mul(&signs).sum() / var_x;
    let t = mu_y - rot * mu_x * scale;
    let rotation: Mat3 = from_na(&rot);
    Ok(Similarity {
        rotation,
        scale,
        translation: [t.x, t.y, t.z],
    })
}

/// MPJPE after Procrustes alignment of `pred` onto `gt`, millimeters.
pub fn pa_mpjpe(pred: &Joints3D, gt: &Joints3D) -> Result<f64> {
    let sim = procrustes_align(pred, gt)?;
    let aligned = sim.apply_all(pred);
    Ok(mean_distance_mm(&aligned.joints, &gt.joints))
}

/// Fraction of visible ground-truth keypoints whose prediction lies within
/// `threshold_px` (inclusive).
pub fn pck(pred: &Keypoints2D, gt: &Keypoints2D, threshold_px: f64) -> Result<f64> {
    if pred.points.len() != gt.points.len() {
        return Err(Error::Shape {
            what: "keypoint count",
            expected: gt.points.len(),
            got: pred.points.len(),
        });
    }
    gt.validate()?;
    if !(threshold_px >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "PCK threshold must be non-negative, got {threshold_px}"
        )));
    }
    let mut visible = 0usize;
    let mut hits = 0usize;
    for ((p, g), &vis) in pred.points.iter().zip(&gt.points).zip(&gt.visibility) {
        if !vis {
            continue;
        }
        visible += 1;
        let d = libm::hypot(p[0] - g[0], p[1] - g[1]);
        if d <= threshold_px {
            hits += 1;
        }
    }
    if visible == 0 {
        return Err(Error::NoVisibleJoints);
    }
    Ok(hits as f64 / visible as f64)
}

/// `factor` times the torso length, the mean of the left and right
/// shoulder-to-hip distances. `None` when a torso joint is missing or hidden.
pub fn torso_threshold(gt: &Keypoints2D, torso: &TorsoJoints, factor: f64) -> Option<f64> {
    let idx = [torso.left_shoulder, torso.right_shoulder, torso.left_hip, torso.right_hip];
    if idx.iter().any(|&i| i >= gt.points.len() || !gt.visibility.get(i).copied().unwrap_or(false)) {
        return None;
    }
    let len = |a: usize, b: usize| {
        let (p, q) = (gt.points[a], gt.points[b]);
        libm::hypot(p[0] - q[0], p[1] - q[1])
    };
    let torso_len = (len(torso.left_shoulder, torso.left_hip) + len(torso.right_shoulder, torso.right_hip)) / 2.0;
    Some(factor * torso_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn j(points: &[Point3]) -> Joints3D {
        Joints3D {
            joints: points.to_vec(),
        }
    }

    fn tetra() -> Joints3D {
        j(&[[0.0, 0.0, 0.0], [0.3, 0.0, 0.1], [0.0, 0.5, -0.2], [0.1, 0.2, 0.4], [-0.2, 0.1, 0.3]])
    }

    #[test]
    fn mpjpe_basics() {
        let gt = tetra();
        assert_eq!(mpjpe(&gt, &gt, false).unwrap(), 0.0);
        let shifted = j(&gt.joints.iter().map(|p| [p[0] + 0.003, p[1] + 0.004, p[2]]).collect::<Vec<_>>());
        assert!((mpjpe(&shifted, &gt, false).unwrap() - 5.0).abs() < 1e-9);
        // root alignment removes a global offset entirely
        assert!(mpjpe(&shifted, &gt, true).unwrap() < 1e-9);
        assert!(mpjpe(&j(&[[0.0; 3]]), &gt, false).is_err());
    }

    #[test]
    fn identity_alignment() {
        let gt = tetra();
        let s = procrustes_align(&gt, &gt).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let e = if r == c { 1.0 } else { 0.0 };
                assert!((s.rotation[r][c] - e).abs() < 1e-12);
            }
        }
        assert!((s.scale - 1.0).abs() < 1e-12);
        assert!(s.translation.iter().all(|t| t.abs() < 1e-12));
    }

    #[test]
    fn recovers_scaled_rotation() {
        let pred = tetra();
        // gt = 2 * Rz(90) * pred + (1, 0, 0)
        let gt = j(&pred.joints.iter().map(|p| [2.0 * -p[1] + 1.0, 2.0 * p[0], 2.0 * p[2]]).collect::<Vec<_>>());
        let s = procrustes_align(&pred, &gt).unwrap();
        let rz = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        for r in 0..3 {
            for c in 0..3 {
                assert!((s.rotation[r][c] - rz[r][c]).abs() < 1e-9);
            }
        }
        assert!((s.scale - 2.0).abs() < 1e-9);
        assert!((s.translation[0] - 1.0).abs() < 1e-9);
        assert!(s.translation[1].abs() < 1e-9 && s.translation[2].abs() < 1e-9);
        assert!(pa_mpjpe(&pred, &gt).unwrap() < 1e-6);
    }

    #[test]
    fn reflection_is_not_allowed() {
        let pred = tetra();
        let gt = j(&pred.joints.iter().map(|p| [-p[0], p[1], p[2]]).collect::<Vec<_>>());
        let s = procrustes_align(&pred, &gt).unwrap();
        let det = crate::rotation::to_na(&s.rotation).determinant();
        assert!((det - 1.0).abs() < 1e-9);
        assert!(pa_mpjpe(&pred, &gt).unwrap() > 1.0);
    }

    #[test]
    fn degenerate_sets() {
        let line = j(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        assert!(matches!(procrustes_align(&line, &line), Err(Error::Degenerate(_))));
        let two = j(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert!(procrustes_align(&two, &two).is_err());
    }

    #[test]
    fn pck_counts_visible_joints() {
        let gt = Keypoints2D {
            points: vec![[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [30.0, 0.0], [40.0, 0.0]],
            visibility: vec![true, true, true, true, false],
        };
        assert_eq!(pck(&gt, &gt, 1.0).unwrap(), 1.0);

        let on_boundary = Keypoints2D::all_visible(gt.points.iter().map(|p| [p[0] + 3.0, p[1] + 4.0]).collect());
        assert_eq!(pck(&on_boundary, &gt, 5.0).unwrap(), 1.0);

        let mut half = gt.clone();
        half.points[0][0] += 100.0;
        half.points[1][1] += 100.0;
        half.points[4][0] += 100.0; // invisible, ignored
        assert_eq!(pck(&half, &gt, 5.0).unwrap(), 0.5);

        let hidden = Keypoints2D {
            points: vec![[0.0, 0.0]],
            visibility: vec![false],
        };
        assert_eq!(pck(&hidden, &hidden, 5.0), Err(Error::NoVisibleJoints));
    }

    #[test]
    fn torso_length() {
        let gt = Keypoints2D::all_visible(vec![[0.0, 0.0], [10.0, 0.0], [0.0, 30.0], [10.0, 50.0]]);
        let torso = TorsoJoints {
            left_shoulder: 0,
            right_shoulder: 1,
            left_hip: 2,
            right_hip: 3,
        };
        assert_eq!(torso_threshold(&gt, &torso, 0.5), Some(20.0));
        let mut hidden = gt;
        hidden.visibility[3] = false;
        assert_eq!(torso_threshold(&hidden, &torso, 0.5), None);
    }
}
