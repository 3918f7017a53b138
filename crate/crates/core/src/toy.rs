//! Small synthetic models used for tests, demos and the bundled assets.
//!
//! Both builders are deterministic: the pseudo-random parts come from a
//! fixed-seed SplitMix64 stream, so the bundled files can be regenerated
//! bit-for-bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::body_model::{BodyModelParts, BodyModelSpec, PoseParams};
use crate::pose_prior::{Activation, DenseLayer, PoseFeatureEncoding, PosePriorVAE, DEFAULT_LEAKY_SLOPE};
use crate::Point3;

pub const TOY_VERTICES: usize = 12;
pub const TOY_JOINTS: usize = 3;
pub const TOY_BETAS: usize = 2;
pub const TOY_LATENT_DIM: usize = 8;
pub const TOY_HIDDEN: usize = 32;

const RING_HEIGHTS: [f64; 4] = [-0.5, -1.0 / 6.0, 1.0 / 6.0, 0.5];
const RADIUS: f64 = 0.12;
/// Target `||mu|| / ||theta||` for the toy encoder.
const TOY_ENCODER_GAIN: f64 = 42.0;

struct SplitMix(u64);

impl SplitMix {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[-1, 1)`.
    fn symmetric(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }
}

/// A three-joint triangular-prism "stick" with 12 vertices and 20 faces.
///
/// Joint 0 sits at the bottom ring, joint 1 in the middle and joint 2 at the
/// top; the two middle rings are shared half-and-half between neighbours.
pub fn body_model_parts() -> BodyModelParts {
    let mut template: Vec<Point3> = Vec::with_capacity(TOY_VERTICES);
    for &y in &RING_HEIGHTS {
        for k in 0..3 {
            let a = k as f64 * 2.0 * core::f64::consts::PI / 3.0;
            template.push([RADIUS * libm::cos(a), y, RADIUS * libm::sin(a)]);
        }
    }

    let mut shape_dirs = vec![0.0; TOY_VERTICES * 3 * TOY_BETAS];
    for (i, v) in template.iter().enumerate() {
        // beta 0 thickens, beta 1 lengthens
        shape_dirs[(i * 3) * TOY_BETAS] = v[0] / RADIUS * 0.02;
        shape_dirs[(i * 3 + 2) * TOY_BETAS] = v[2] / RADIUS * 0.02;
        shape_dirs[(i * 3 + 1) * TOY_BETAS + 1] = v[1] * 0.1;
    }

    let p = 9 * (TOY_JOINTS - 1);
    let mut rng = SplitMix(0x70D1_B0D7);
    let pose_dirs = (0..TOY_VERTICES * 3 * p).map(|_| 0.002 * rng.symmetric()).collect();

    let mut joint_regressor = vec![0.0; TOY_JOINTS * TOY_VERTICES];
    for v in 0..3 {
        joint_regressor[v] = 1.0 / 3.0;
        joint_regressor[TOY_VERTICES + 3 + v] = 1.0 / 6.0;
        joint_regressor[TOY_VERTICES + 6 + v] = 1.0 / 6.0;
        joint_regressor[2 * TOY_VERTICES + 9 + v] = 1.0 / 3.0;
    }

    let mut skinning_weights = vec![0.0; TOY_VERTICES * TOY_JOINTS];
    for ring in 0..4 {
        let w: [f64; 3] = match ring {
            0 => [1.0, 0.0, 0.0],
            1 => [0.5, 0.5, 0.0],
            2 => [0.0, 0.5, 0.5],
            _ => [0.0, 0.0, 1.0],
        };
        for k in 0..3 {
            let v = ring * 3 + k;
            skinning_weights[v * TOY_JOINTS..(v + 1) * TOY_JOINTS].copy_from_slice(&w);
        }
    }

    let mut faces = Vec::with_capacity(20);
    faces.push([0, 2, 1]);
    for ring in 0..3u32 {
        for k in 0..3u32 {
            let a = ring * 3 + k;
            let b = ring * 3 + (k + 1) % 3;
            faces.push([a, b, a + 3]);
            faces.push([b, b + 3, a + 3]);
        }
    }
    faces.push([9, 10, 11]);

    BodyModelParts {
        template,
        shape_dirs,
        num_betas: TOY_BETAS,
        pose_dirs,
        joint_regressor,
        skinning_weights,
        parents: vec![-1, 0, 1],
        faces,
    }
}

pub fn body_model() -> BodyModelSpec {
    BodyModelSpec::new(body_model_parts()).expect("toy body model is valid")
}

fn dense(rng: &mut SplitMix, inputs: usize, outputs: usize, bias: f64, act: Activation) -> DenseLayer {
    let scale = 1.0 / libm::sqrt(inputs as f64);
    let weights = (0..inputs * outputs).map(|_| scale * rng.symmetric()).collect();
    let bias = (0..outputs).map(|_| bias * rng.symmetric()).collect();
    DenseLayer::new(inputs, outputs, weights, bias, act).expect("toy layer")
}

/// Pose prior over the two toy body joints, axis-angle input, `L = 8`, two
/// hidden layers of 32 with leaky ReLU.
///
/// Encoder hidden layers and the `mu` head carry no bias, which makes `mu`
/// positively homogeneous in the pose: scaling a pose by `a >= 0` scales
/// `mu` by `a`. The `mu` head is rescaled so that a reference pose of norm
/// one lands at `||mu|| = 42`, putting the default gate near 0.7 rad.
pub fn pose_prior() -> PosePriorVAE {
    let leaky = Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE);
    let input = (TOY_JOINTS - 1) * 3;
    let l = TOY_LATENT_DIM;
    let mut rng = SplitMix(0x5EED_0F_7A0);

    let e0 = dense(&mut rng, input, TOY_HIDDEN, 0.0, leaky);
    let e1 = dense(&mut rng, TOY_HIDDEN, TOY_HIDDEN, 0.0, leaky);
    let mut e2 = dense(&mut rng, TOY_HIDDEN, 2 * l, 0.0, Activation::Identity);
    for i in 0..l {
        e2.bias[l + i] = -1.0 + 0.25 * rng.symmetric();
    }
    let d0 = dense(&mut rng, l, TOY_HIDDEN, 0.1, leaky);
    let d1 = dense(&mut rng, TOY_HIDDEN, TOY_HIDDEN, 0.1, leaky);
    let d2 = dense(&mut rng, TOY_HIDDEN, input, 0.05, Activation::Identity);

    let reference = PoseParams {
        global_orient: [0.0; 3],
        body_pose: vec![[0.5, -0.5, 0.5], [-0.5, 0.5, -0.5]],
    };
    let mut head = e2.clone();
    let probe = PosePriorVAE::new(
        vec![e0.clone(), e1.clone(), head.clone()],
        vec![d0.clone(), d1.clone(), d2.clone()],
        l,
        TOY_JOINTS - 1,
        PoseFeatureEncoding::AxisAngle,
    )
    .expect("toy prior");
    let mu = probe.encode(&reference).expect("toy encode").mu;
    let gain = libm::sqrt(mu.iter().map(|m| m * m).sum::<f64>()) / libm::sqrt(reference.body_pose_flat().iter().map(|x| x * x).sum::<f64>());
    let k = TOY_ENCODER_GAIN / gain;
    for w in &mut head.weights[..l * TOY_HIDDEN] {
        *w *= k;
    }
    e2 = head;

    PosePriorVAE::new(vec![e0, e1, e2], vec![d0, d1, d2], l, TOY_JOINTS - 1, PoseFeatureEncoding::AxisAngle)
        .expect("toy prior")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::ShapeParams;
    use crate::pose_prior::l2_norm;

    #[test]
    fn toy_body_dimensions() {
        let spec = body_model();
        assert_eq!(spec.vertex_count(), 12);
        assert_eq!(spec.joint_count(), 3);
        assert_eq!(spec.faces().len(), 20);
        assert_eq!(spec.num_pose_features(), 18);
        let mesh = spec.forward(&PoseParams::zeros(2), &ShapeParams::zeros(2)).unwrap();
        let j = spec.regress_joints(&mesh).unwrap();
        assert!((j.joints[0][1] + 0.5).abs() < 1e-12);
        assert!(j.joints[1][1].abs() < 1e-12);
        assert!((j.joints[2][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn toy_prior_gain() {
        let vae = pose_prior();
        let pose = PoseParams {
            global_orient: [0.0; 3],
            body_pose: vec![[0.5, -0.5, 0.5], [-0.5, 0.5, -0.5]],
        };
        let mu = vae.encode(&pose).unwrap().mu;
        assert!((l2_norm(&mu) - 42.0 * l2_norm(&pose.body_pose_flat())).abs() < 1e-9);
        let zero = vae.encode(&PoseParams::zeros(2)).unwrap();
        assert!(zero.mu.iter().all(|m| *m == 0.0));
    }
}
