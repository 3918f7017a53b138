use posegen_core::eval::Keypoints2D;
use posegen_core::losses::{
    batch_mean, loss_2d, loss_2d_scale_derivative, loss_3d, reproject, total_loss, HmrPrediction, Loss2dOptions,
    LossWeights, Reduction2d,
};
use posegen_core::{toy, PoseParams, ShapeParams, WeakPerspectiveCamera};
use proptest::prelude::*;

fn prediction(scale: f64) -> HmrPrediction {
    HmrPrediction {
        pose: PoseParams {
            global_orient: [0.1, -0.2, 0.05],
            body_pose: vec![[0.4, 0.1, -0.3], [-0.2, 0.5, 0.2]],
        },
        shape: ShapeParams { betas: vec![0.5, -1.0] },
        camera: WeakPerspectiveCamera::new(scale, 0.05, -0.1, 256, 192).unwrap(),
    }
}

fn offset(points: &[[f64; 2]], d: &[[f64; 2]], vis: Vec<bool>) -> Keypoints2D {
    Keypoints2D {
        points: points.iter().zip(d).map(|(p, d)| [p[0] + d[0], p[1] + d[1]]).collect(),
        visibility: vis,
    }
}

#[test]
fn reprojection_loss_fixtures() {
    let spec = toy::body_model();
    let pred = prediction(1.2);
    let j = reproject(&pred, &spec, None).unwrap();
    let opts = Loss2dOptions::default();

    let exact = Keypoints2D::all_visible(j.clone());
    assert_eq!(loss_2d(&pred, &exact, &spec, &opts).unwrap(), 0.0);

    let one = offset(&j, &[[3.0, 4.0], [0.0, 0.0], [9.0, 9.0]], vec![true, false, false]);
    assert!((loss_2d(&pred, &one, &spec, &opts).unwrap() - 5.0).abs() < 1e-9);

    // sqrt(1 + 4 + 4 + 9 + 0 + 16) = sqrt(34)
    let three = offset(&j, &[[1.0, 2.0], [2.0, 3.0], [0.0, 4.0]], vec![true; 3]);
    assert!((loss_2d(&pred, &three, &spec, &opts).unwrap() - 34f64.sqrt()).abs() < 1e-9);

    let mean = Loss2dOptions { reduction: Reduction2d::PerJointMean, joint_map: None };
    let want = (5f64.sqrt() + 13f64.sqrt() + 4.0) / 3.0;
    assert!((loss_2d(&pred, &three, &spec, &mean).unwrap() - want).abs() < 1e-9);

    let hidden = offset(&j, &[[0.0, 0.0]; 3], vec![false; 3]);
    assert!(loss_2d(&pred, &hidden, &spec, &opts).is_err());
}

#[test]
fn joint_map_reorders_predictions() {
    let spec = toy::body_model();
    let pred = prediction(1.0);
    let j = reproject(&pred, &spec, None).unwrap();
    let gt = Keypoints2D::all_visible(vec![j[2], j[0]]);
    let opts = Loss2dOptions { reduction: Reduction2d::Frobenius, joint_map: Some(vec![2, 0]) };
    assert_eq!(loss_2d(&pred, &gt, &spec, &opts).unwrap(), 0.0);
}

#[test]
fn parameter_loss_fixtures() {
    let p = prediction(1.0);
    assert_eq!(loss_3d(&p, &p.pose, &p.shape).unwrap(), 0.0);
    let mut shifted = p.shape.clone();
    shifted.betas[0] -= 1.0;
    assert!((loss_3d(&p, &p.pose, &shifted).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(total_loss(0.0, 0.0, &LossWeights::default()), 0.0);
    assert_eq!(total_loss(2.0, 3.0, &LossWeights::default()), 5.0);
    assert_eq!(total_loss(2.0, 3.0, &LossWeights { reprojection: 0.5, parameters: 1.0 }), 4.0);
    assert_eq!(batch_mean(&[1.0, 2.0, 6.0]), Some(3.0));
}

proptest! {
    #[test]
    fn parameter_loss_matches_scalar_loop(
        dp in prop::collection::vec(-1.0f64..1.0, 6),
        db in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let p = prediction(1.0);
        let gt_pose = PoseParams {
            global_orient: [0.0; 3],
            body_pose: vec![
                [p.pose.body_pose[0][0] + dp[0], p.pose.body_pose[0][1] + dp[1], p.pose.body_pose[0][2] + dp[2]],
                [p.pose.body_pose[1][0] + dp[3], p.pose.body_pose[1][1] + dp[4], p.pose.body_pose[1][2] + dp[5]],
            ],
        };
        let gt_shape = ShapeParams { betas: vec![p.shape.betas[0] + db[0], p.shape.betas[1] + db[1]] };
        let mut sb = 0.0;
        for i in 0..2 {
            let d = p.shape.betas[i] - gt_shape.betas[i];
            sb += d * d;
        }
        let mut st = 0.0;
        for j in 0..2 {
            for c in 0..3 {
                let d = p.pose.body_pose[j][c] - gt_pose.body_pose[j][c];
                st += d * d;
            }
        }
        prop_assert!((loss_3d(&p, &gt_pose, &gt_shape).unwrap() - (sb.sqrt() + st.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn reprojection_loss_is_nonnegative(d in prop::collection::vec(-20.0f64..20.0, 6)) {
        let spec = toy::body_model();
        let pred = prediction(1.1);
        let j = reproject(&pred, &spec, None).unwrap();
        let gt = offset(&j, &[[d[0], d[1]], [d[2], d[3]], [d[4], d[5]]], vec![true; 3]);
        let l = loss_2d(&pred, &gt, &spec, &Loss2dOptions::default()).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scale_derivative_matches_central_differences(
        s in 0.5f64..2.0,
        d in prop::collection::vec(-20.0f64..20.0, 6),
        per_joint in any::<bool>(),
    ) {
        prop_assume!(d.chunks(2).all(|c| c[0].hypot(c[1]) > 0.5));
        let spec = toy::body_model();
        let j = reproject(&prediction(1.0), &spec, None).unwrap();
        let gt = offset(&j, &[[d[0], d[1]], [d[2], d[3]], [d[4], d[5]]], vec![true; 3]);
        let opts = Loss2dOptions {
            reduction: if per_joint { Reduction2d::PerJointMean } else { Reduction2d::Frobenius },
            joint_map: None,
        };
        let h = 1e-6;
        let fd = (loss_2d(&prediction(s + h), &gt, &spec, &opts).unwrap()
            - loss_2d(&prediction(s - h), &gt, &spec, &opts).unwrap())
            / (2.0 * h);
        let analytic = loss_2d_scale_derivative(&prediction(s), &gt, &spec, &opts).unwrap();
        prop_assert!((fd - analytic).abs() <= 1e-4 * analytic.abs().max(1.0), "{} vs {}", fd, analytic);
    }
}
