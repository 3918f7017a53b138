//! Black-box generative and perception backends.
//!
//! [`Backend`] is the contract the pipeline drives. Two implementations ship
//! here: [`mock::MockBackend`], a pure in-process function of its inputs, and
//! [`client::HttpBackend`], which speaks the JSON wire protocol in [`wire`]
//! to any conforming server (including [`server`], which serves the mock).

pub mod client;
pub mod mock;
pub mod server;
pub mod wire;

use std::collections::BTreeMap;

use posegen_core::rle::Rle;
use posegen_core::{DepthMap, PoseParams, ShapeParams, WeakPerspectiveCamera};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_NUM_STEPS: u32 = 50;
pub const DEFAULT_STRENGTH: f64 = 0.8;
pub const DEFAULT_IMAGE_SIZE: u32 = 512;
pub const LATENT_CHANNELS: usize = 4;
/// Image pixels per latent cell along each axis.
pub const LATENT_DOWNSAMPLE: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    /// The request itself is invalid; retrying will not help.
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    /// The backend answered with something that violates the protocol.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// The backend could not be reached, or kept failing, after retries.
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
}

pub type GatewayResult<T> = Result<T, GatewayError>;

/// RGB8 image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> GatewayResult<Self> {
        if width == 0 || height == 0 {
            return Err(GatewayError::InvalidRequest("image dimensions must be positive".into()));
        }
        let want = 3 * width as usize * height as usize;
        if data.len() != want {
            return Err(GatewayError::InvalidRequest(format!(
                "{width}x{height} RGB image needs {want} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            data: rgb.iter().copied().cycle().take(3 * width as usize * height as usize).collect(),
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn is_uniform(&self) -> bool {
        self.data.chunks_exact(3).all(|p| p == &self.data[..3])
    }

    /// SHA-256 over `u32 width`, `u32 height` (little-endian) and the pixels.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        h.update(&self.data);
        h.finalize().into()
    }
}

/// Image latents `(channels, height, width)`, row-major within a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Latents {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Latents {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> GatewayResult<Self> {
        if channels * height * width != data.len() {
            return Err(GatewayError::InvalidRequest(format!(
                "latents of shape ({channels}, {height}, {width}) need {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::InvalidRequest("latents contain non-finite values".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    /// Hex SHA-256 of the little-endian `f32` values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub seed: u64,
    pub num_steps: u32,
    /// Fraction of the noise schedule applied to the input latents.
    pub strength: f64,
    pub width: u32,
    pub height: u32,
    /// Backend-specific knobs, passed through untouched.
    pub guidance: BTreeMap<String, Value>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, seed: u64) -> Self {
        Self {
            prompt: prompt.into(),
            seed,
            num_steps: DEFAULT_NUM_STEPS,
            strength: DEFAULT_STRENGTH,
            width: DEFAULT_IMAGE_SIZE,
            height: DEFAULT_IMAGE_SIZE,
            guidance: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> GatewayResult<()> {
        if self.prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompt must not be empty".into()));
        }
        if self.num_steps == 0 {
            return Err(GatewayError::InvalidRequest("num_steps must be at least 1".into()));
        }
        if !(self.strength > 0.0 && self.strength <= 1.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "strength must be in (0, 1], got {}",
                self.strength
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GatewayError::InvalidRequest("image size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmrPerson {
    pub pose: PoseParams,
    pub shape: ShapeParams,
    pub camera: WeakPerspectiveCamera,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HmrResult {
    pub people: Vec<HmrPerson>,
}

impl HmrResult {
    /// Highest-confidence person; the first one wins ties.
    pub fn most_confident(&self) -> Option<(usize, &HmrPerson)> {
        self.people
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, &HmrPerson)>, (i, p)| match best {
                Some((_, b)) if b.confidence >= p.confidence => best,
                _ => Some((i, p)),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInstance {
    pub class_label: String,
    pub mask: Rle,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentationResult {
    pub instances: Vec<SegmentInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Depth2ImgOutput {
    pub image: ImageBuffer,
    /// Checksum of the latents the backend actually conditioned on.
    pub latent_checksum: String,
}

/// The four black-box models: text-to-image, latent encoder plus
/// depth-conditioned generator, mesh recovery and instance segmentation.
///
/// `seed` arguments on the perception calls are provenance only.
pub trait Backend: Send + Sync {
    fn model_id(&self) -> GatewayResult<String>;
    fn txt2img(&self, req: &GenerationRequest) -> GatewayResult<ImageBuffer>;
    fn encode_latents(&self, img: &ImageBuffer, seed: Option<u64>) -> GatewayResult<Latents>;
    /// `depth` is the normalized conditioning map and must match the latent
    /// grid.
    fn depth2img(&self, z: &Latents, depth: &DepthMap, req: &GenerationRequest) -> GatewayResult<Depth2ImgOutput>;
    fn hmr(&self, img: &ImageBuffer, seed: Option<u64>) -> GatewayResult<HmrResult>;
    fn segment(&self, img: &ImageBuffer, seed: Option<u64>) -> GatewayResult<SegmentationResult>;
}
