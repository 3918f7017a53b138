//! Pose-prior VAE: MLP encoder/decoder, difficulty gate and latent-space
//! pose augmentation.
//!
//! The encoder maps pose features to `2L` values, the mean followed by the
//! log standard deviation of a diagonal Gaussian. A pose is considered hard
//! when the norm of its embedding `e ~ N(mu, sigma)` exceeds `tau`.
//! Augmentation draws `z ~ N(mu, sigma)`, perturbs it as
//! `z * (1 + s * eps)` with `eps` uniform on `[-h, h]` per component, and
//! decodes the result.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rotation::{matrix_to_rot6d, rot6d_to_matrix};
use crate::{axis_angle_to_matrix, matrix_to_axis_angle, Error, PoseParams, Result};

/// Difficulty threshold on the embedding norm.
pub const DEFAULT_TAU: f64 = 30.0;
pub const DEFAULT_AUGMENTATION_SCALE: f64 = 0.1;
pub const DEFAULT_EPSILON_HALF_WIDTH: f64 = 1.0;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// `max(x, slope * x)`
    LeakyRelu(f64),
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(slope) => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Identity => x,
        }
    }
}

/// Fully connected layer `y = act(W x + b)`, `W` stored `[outputs][inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.len() != inputs * outputs {
            return Err(Error::Shape {
                what: "layer weights",
                expected: inputs * outputs,
                got: weights.len(),
            });
        }
        if bias.len() != outputs {
            return Err(Error::Shape {
                what: "layer bias",
                expected: outputs,
                got: bias.len(),
            });
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| {
                let acc = row.iter().zip(x).fold(0.0, |acc, (w, v)| acc + w * v);
                self.activation.apply(acc + b)
            })
            .collect()
    }
}

/// How joint rotations are presented to (and read back from) the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PoseFeatureEncoding {
    /// 3 values per joint.
    AxisAngle,
    /// First two rotation-matrix columns, 6 values per joint.
    Rot6d,
}

impl PoseFeatureEncoding {
    pub fn features_per_joint(self) -> usize {
        match self {
            PoseFeatureEncoding::AxisAngle => 3,
            PoseFeatureEncoding::Rot6d => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosePriorVAE {
    encoder: Vec<DenseLayer>,
    decoder: Vec<DenseLayer>,
    latent_dim: usize,
    pose_joints: usize,
    encoding: PoseFeatureEncoding,
}

/// Diagonal Gaussian over the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDistribution {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Whether latent codes are drawn from the posterior or taken at its mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LatentMode {
    #[default]
    Mean,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AugmentationConfig {
    /// `s`, must be non-negative.
    pub scale: f64,
    /// `eps` is uniform on `[-h, h]`.
    pub epsilon_half_width: f64,
    pub latent: LatentMode,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            scale: DEFAULT_AUGMENTATION_SCALE,
            epsilon_half_width: DEFAULT_EPSILON_HALF_WIDTH,
            latent: LatentMode::Mean,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "augmentation scale must be >= 0, got {}",
                self.scale
            )));
        }
        if !(self.epsilon_half_width >= 0.0 && self.epsilon_half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon half-width must be >= 0, got {}",
                self.epsilon_half_width
            )));
        }
        Ok(())
    }
}

impl PosePriorVAE {
    pub fn new(
        encoder: Vec<DenseLayer>,
        decoder: Vec<DenseLayer>,
        latent_dim: usize,
        pose_joints: usize,
        encoding: PoseFeatureEncoding,
    ) -> Result<Self> {
        if latent_dim == 0 || pose_joints == 0 {
            return Err(Error::InvalidModel("latent_dim and pose_joints must be positive".into()));
        }
        let input_dim = pose_joints * encoding.features_per_joint();
        check_chain("encoder", &encoder, input_dim, 2 * latent_dim)?;
        check_chain("decoder", &decoder, latent_dim, input_dim)?;
        Ok(Self {
            encoder,
            decoder,
            latent_dim,
            pose_joints,
            encoding,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Number of body-pose rows the prior reads; trailing rows are ignored.
    pub fn pose_joints(&self) -> usize {
        self.pose_joints
    }

    pub fn input_dim(&self) -> usize {
        self.pose_joints * self.encoding.features_per_joint()
    }

    pub fn encoding(&self) -> PoseFeatureEncoding {
        self.encoding
    }

    pub fn encoder(&self) -> &[DenseLayer] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[DenseLayer] {
        &self.decoder
    }

    fn pose_features(&self, pose: &PoseParams) -> Result<Vec<f64>> {
        if pose.body_pose.len() < self.pose_joints {
            return Err(Error::Shape {
                what: "body_pose rows for pose prior",
                expected: self.pose_joints,
                got: pose.body_pose.len(),
            });
        }
        if !pose.is_finite() {
            return Err(Error::NonFinite("pose"));
        }
        let rows = &pose.body_pose[..self.pose_joints];
        Ok(match self.encoding {
            PoseFeatureEncoding::AxisAngle => rows.iter().flatten().copied().collect(),
            PoseFeatureEncoding::Rot6d => rows
                .iter()
                .flat_map(|r| matrix_to_rot6d(&axis_angle_to_matrix(*r)))
                .collect(),
        })
    }

    /// `{mu, sigma} = E(theta)`.
    pub fn encode(&self, pose: &PoseParams) -> Result<LatentDistribution> {
        let out = run(&self.encoder, self.pose_features(pose)?)?;
        let (mu, log_sigma) = out.split_at(self.latent_dim);
        let sigma: Vec<f64> = log_sigma.iter().map(|&v| libm::exp(v)).collect();
        if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::NonFinite("encoder sigma"));
        }
        Ok(LatentDistribution {
            mu: mu.to_vec(),
            sigma,
        })
    }

    /// `theta = D(z)`. Returns `pose_joints` body rows and a zero global
    /// orientation.
    pub fn decode(&self, z: &[f64]) -> Result<PoseParams> {
        if z.len() != self.latent_dim {
            return Err(Error::Shape {
                what: "latent code",
                expected: self.latent_dim,
                got: z.len(),
            });
        }
        let out = run(&self.decoder, z.to_vec())?;
        let body_pose = match self.encoding {
            PoseFeatureEncoding::AxisAngle => out.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            PoseFeatureEncoding::Rot6d => out
                .chunks_exact(6)
                .map(|c| {
                    rot6d_to_matrix(c)
                        .map(|m| matrix_to_axis_angle(&m))
                        .ok_or(Error::Degenerate("decoded 6D rotation"))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(PoseParams {
            global_orient: [0.0; 3],
            body_pose,
        })
    }

    /// Replaces the first `pose_joints` body rows of `pose` with the decoding
    /// of `z`, keeping the global orientation and any remaining rows.
    pub fn decode_into(&self, z: &[f64], pose: &PoseParams) -> Result<PoseParams> {
        let decoded = self.decode(z)?;
        let mut out = pose.clone();
        out.body_pose[..self.pose_joints].copy_from_slice(&decoded.body_pose);
        Ok(out)
    }
}

impl LatentDistribution {
    /// The mean, or a draw `mu + sigma * n` with `n ~ N(0, I)`.
    pub fn draw<R: Rng + ?Sized>(&self, mode: LatentMode, rng: &mut R) -> Vec<f64> {
        match mode {
            LatentMode::Mean => self.mu.clone(),
            LatentMode::Sampled => self
                .mu
                .iter()
                .zip(&self.sigma)
                .map(|(m, s)| {
                    let n: f64 = rng.sample(StandardNormal);
                    m + s * n
                })
                .collect(),
        }
    }
}

/// `||e||_2` for `e` drawn per `mode`. `rng` is untouched in mean mode.
pub fn difficulty_score<R: Rng + ?Sized>(
    vae: &PosePriorVAE,
    pose: &PoseParams,
    mode: LatentMode,
    rng: &mut R,
) -> Result<f64> {
    let e = vae.encode(pose)?.draw(mode, rng);
    Ok(l2_norm(&e))
}

/// Strict `score > tau`.
pub fn is_hard_pose(score: f64, tau: f64) -> bool {
    score > tau
}

/// `z * (1 + s * eps)`, elementwise.
pub fn augment_latent(z: &[f64], scale: f64, epsilon: &[f64]) -> Vec<f64> {
    z.iter().zip(epsilon).map(|(z, e)| z * (1.0 + scale * e)).collect()
}

/// Samples an augmented pose. Draws the latent code first (sampled mode
/// only), then one uniform `eps` per latent dimension.
pub fn augment_pose<R: Rng + ?Sized>(
    vae: &PosePriorVAE,
    pose: &PoseParams,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> Result<PoseParams> {
    cfg.validate()?;
    let dist = vae.encode(pose)?;
    let z = dist.draw(cfg.latent, rng);
    let h = cfg.epsilon_half_width;
    let eps: Vec<f64> = (0..vae.latent_dim())
        .map(|_| if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 })
        .collect();
    vae.decode_into(&augment_latent(&z, cfg.scale, &eps), pose)
}

/// [`augment_pose`] with a caller-chosen `eps`.
pub fn augment_pose_with_epsilon<R: Rng + ?Sized>(
    vae: &PosePriorVAE,
    pose: &PoseParams,
    scale: f64,
    latent: LatentMode,
    epsilon: &[f64],
    rng: &mut R,
) -> Result<PoseParams> {
    if epsilon.len() != vae.latent_dim() {
        return Err(Error::Shape {
            what: "epsilon",
            expected: vae.latent_dim(),
            got: epsilon.len(),
        });
    }
    let z = vae.encode(pose)?.draw(latent, rng);
    vae.decode_into(&augment_latent(&z, scale, epsilon), pose)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn run(layers: &[DenseLayer], mut x: Vec<f64>) -> Result<Vec<f64>> {
    for layer in layers {
        x = layer.forward(&x);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network activation"));
    }
    Ok(x)
}

fn check_chain(name: &str, layers: &[DenseLayer], input: usize, output: usize) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::InvalidModel(format!("{name} has no layers")));
    }
    let mut dim = input;
    for (i, l) in layers.iter().enumerate() {
        if l.inputs != dim {
            return Err(Error::InvalidModel(format!(
                "{name} layer {i} expects {} inputs but receives {dim}",
                l.inputs
            )));
        }
        dim = l.outputs;
    }
    if dim != output {
        return Err(Error::InvalidModel(format!(
            "{name} outputs {dim} values, expected {output}"
        )));
    }
    Ok(())
}

/// Single identity layer with zero bias; handy for hand-checkable tests.
pub fn identity_layer(dim: usize, activation: Activation) -> DenseLayer {
    let mut w = vec![0.0; dim * dim];
    for i in 0..dim {
        w[i * dim + i] = 1.0;
    }
    DenseLayer {
        inputs: dim,
        outputs: dim,
        weights: w,
        bias: vec![0.0; dim],
        activation,
    }
}
