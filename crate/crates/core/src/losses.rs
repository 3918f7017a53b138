//! Losses for adapting an HMR model with real and synthetic supervision.
//!
//! * reprojection loss on real images: `|| j_hat - j ||` over visible joints,
//!   `j_hat = Pi(W M(theta_hat, beta_hat))`
//! * parameter loss on synthetic images: `||beta_hat - beta|| + ||theta_hat - theta||`
//!   with `theta` the flattened axis-angle body pose
//! * total: weighted sum, unit weights by default.

use alloc::vec::Vec;

use crate::eval::Keypoints2D;
use crate::{BodyModelSpec, Error, PoseParams, Result, ShapeParams, WeakPerspectiveCamera};

#[derive(Debug, Clone, PartialEq)]
pub struct HmrPrediction {
    pub pose: PoseParams,
    pub shape: ShapeParams,
    pub camera: WeakPerspectiveCamera,
}

/// How per-joint reprojection residuals are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction2d {
    /// Frobenius norm of the visible residual matrix.
    #[default]
    Frobenius,
    /// Mean Euclidean distance per visible joint.
    PerJointMean,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Loss2dOptions {
    pub reduction: Reduction2d,
    /// Regressed-joint index for each ground-truth keypoint. `None` means
    /// identity order.
    pub joint_map: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub reprojection: f64,
    pub parameters: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            reprojection: 1.0,
            parameters: 1.0,
        }
    }
}

/// Predicted 2D keypoints `Pi(W M(theta, beta))`, reordered by `joint_map`.
pub fn reproject(pred: &HmrPrediction, spec: &BodyModelSpec, joint_map: Option<&[usize]>) -> Result<Vec<[f64; 2]>> {
    let joints = spec.posed_joints(&pred.pose, &pred.shape)?;
    pred.camera.validate()?;
    let projected = pred.camera.project(&joints.joints)?;
    match joint_map {
        None => Ok(projected),
        Some(map) => map
            .iter()
            .map(|&i| {
                projected.get(i).copied().ok_or(Error::Shape {
                    what: "joint map index",
                    expected: projected.len(),
                    got: i,
                })
            })
            .collect(),
    }
}

fn visible_residuals(projected: &[[f64; 2]], gt: &Keypoints2D) -> Result<Vec<[f64; 2]>> {
    if projected.len() != gt.points.len() {
        return Err(Error::Shape {
            what: "keypoint count",
            expected: projected.len(),
            got: gt.points.len(),
        });
    }
    gt.validate()?;
    let res: Vec<[f64; 2]> = projected
        .iter()
        .zip(&gt.points)
        .zip(&gt.visibility)
        .filter(|(_, &v)| v)
        .map(|((p, g), _)| [p[0] - g[0], p[1] - g[1]])
        .collect();
    if res.is_empty() {
        return Err(Error::NoVisibleJoints);
    }
    Ok(res)
}

fn reduce(res: &[[f64; 2]], reduction: Reduction2d) -> f64 {
    match reduction {
        Reduction2d::Frobenius => libm::sqrt(res.iter().map(|r| r[0] * r[0] + r[1] * r[1]).sum()),
        Reduction2d::PerJointMean => {
            res.iter().map(|r| libm::hypot(r[0], r[1])).sum::<f64>() / res.len() as f64
        }
    }
}

/// Reprojection loss in pixels against ground-truth 2D keypoints.
pub fn loss_2d(pred: &HmrPrediction, gt: &Keypoints2D, spec: &BodyModelSpec, opts: &Loss2dOptions) -> Result<f64> {
    let projected = reproject(pred, spec, opts.joint_map.as_deref())?;
    Ok(reduce(&visible_residuals(&projected, gt)?, opts.reduction))
}

/// Analytic derivative of [`loss_2d`] with respect to the camera scale.
///
/// Pixel coordinates are affine in the scale: `d px / ds = x * W / 2`,
/// `d py / ds = y * H / 2`. Undefined (returns `NaN`) at zero loss with the
/// Frobenius reduction or at a zero-length residual with the per-joint mean.
pub fn loss_2d_scale_derivative(
    pred: &HmrPrediction,
    gt: &Keypoints2D,
    spec: &BodyModelSpec,
    opts: &Loss2dOptions,
) -> Result<f64> {
    let joints = spec.posed_joints(&pred.pose, &pred.shape)?.joints;
    let projected = reproject(pred, spec, opts.joint_map.as_deref())?;
    let res = visible_residuals(&projected, gt)?;
    let (w, h) = (pred.camera.image_width as f64, pred.camera.image_height as f64);
    let jac: Vec<[f64; 2]> = (0..gt.points.len())
        .filter(|&k| gt.visibility[k])
        .map(|k| {
            let src = opts.joint_map.as_ref().map_or(k, |m| m[k]);
            [joints[src][0] * w / 2.0, joints[src][1] * h / 2.0]
        })
        .collect();
    Ok(match opts.reduction {
        Reduction2d::Frobenius => {
            let norm = reduce(&res, Reduction2d::Frobenius);
            res.iter().zip(&jac).map(|(r, d)| r[0] * d[0] + r[1] * d[1]).sum::<f64>() / norm
        }
        Reduction2d::PerJointMean => {
            res.iter()
                .zip(&jac)
                .map(|(r, d)| (r[0] * d[0] + r[1] * d[1]) / libm::hypot(r[0], r[1]))
                .sum::<f64>()
                / res.len() as f64
        }
    })
}

/// `||beta_hat - beta||_2 + ||theta_hat - theta||_2` on the body pose.
pub fn loss_3d(pred: &HmrPrediction, gt_pose: &PoseParams, gt_shape: &ShapeParams) -> Result<f64> {
    if pred.shape.betas.len() != gt_shape.betas.len() {
        return Err(Error::Shape {
            what: "betas",
            expected: gt_shape.betas.len(),
            got: pred.shape.betas.len(),
        });
    }
    if pred.pose.body_pose.len() != gt_pose.body_pose.len() {
        return Err(Error::Shape {
            what: "body_pose rows",
            expected: gt_pose.body_pose.len(),
            got: pred.pose.body_pose.len(),
        });
    }
    let beta_sq: f64 = pred
        .shape
        .betas
        .iter()
        .zip(&gt_shape.betas)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let theta_sq: f64 = pred
        .pose
        .body_pose
        .iter()
        .flatten()
        .zip(gt_pose.body_pose.iter().flatten())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(libm::sqrt(beta_sq) + libm::sqrt(theta_sq))
}

/// `w_2d * l2d + w_3d * l3d`.
pub fn total_loss(l2d: f64, l3d: f64, weights: &LossWeights) -> f64 {
    weights.reprojection * l2d + weights.parameters * l3d
}

/// Mean over a batch of per-sample losses; `None` for an empty batch.
pub fn batch_mean(losses: &[f64]) -> Option<f64> {
    if losses.is_empty() {
        None
    } else {
        Some(losses.iter().sum::<f64>() / losses.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn loss_3d_examples() {
        let cam = WeakPerspectiveCamera::new(1.0, 0.0, 0.0, 64, 64).unwrap();
        let gt_pose = PoseParams {
            global_orient: [0.0; 3],
            body_pose: vec![[0.1, 0.2, 0.3], [0.0, -0.4, 0.5]],
        };
        let gt_shape = ShapeParams { betas: vec![0.5, -0.5, 1.0] };
        let mut pred = HmrPrediction {
            pose: gt_pose.clone(),
            shape: gt_shape.clone(),
            camera: cam,
        };
        assert_eq!(loss_3d(&pred, &gt_pose, &gt_shape).unwrap(), 0.0);
        pred.shape.betas[0] += 1.0;
        assert_eq!(loss_3d(&pred, &gt_pose, &gt_shape).unwrap(), 1.0);
        pred.shape.betas.pop();
        assert!(loss_3d(&pred, &gt_pose, &gt_shape).is_err());
    }

    #[test]
    fn total_is_weighted_sum() {
        let w = LossWeights::default();
        assert_eq!(total_loss(0.0, 0.0, &w), 0.0);
        assert_eq!(total_loss(2.0, 3.0, &w), 5.0);
        let half = LossWeights {
            reprojection: 0.5,
            parameters: 1.0,
        };
        assert_eq!(total_loss(2.0, 3.0, &half), 4.0);
        assert_eq!(batch_mean(&[1.0, 2.0, 6.0]), Some(3.0));
        assert_eq!(batch_mean(&[]), None);
    }
}
