//! Deterministic in-process backend.
//!
//! Every output is a pure function of the request, computed with integer
//! arithmetic and a SplitMix64 stream, so the same rules can be re-derived
//! in any language. `docs/mock-backend.md` spells them out.

use std::collections::BTreeMap;
use std::sync::Mutex;

use posegen_core::compose::MaskImage;
use posegen_core::rle;
use posegen_core::{DepthMap, PoseParams, ShapeParams, WeakPerspectiveCamera};
use sha2::{Digest, Sha256};

use super::{
    Backend, Depth2ImgOutput, GatewayError, GatewayResult, GenerationRequest, HmrPerson, HmrResult, ImageBuffer,
    Latents, SegmentInstance, SegmentationResult, LATENT_CHANNELS, LATENT_DOWNSAMPLE,
};

pub const MOCK_MODEL_ID: &str = "posegen-mock-1";
pub const MOCK_PERSON_SCORE: f64 = 0.99;
pub const MOCK_OCCLUDER_LABELS: [&str; 3] = ["chair", "surfboard", "bicycle"];
/// Amplitude of body-pose angles for "hard" and "easy" mock people.
pub const HARD_AMPLITUDE: f64 = 1.2;
pub const EASY_AMPLITUDE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// `(next >> 11) / 2^53`, on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }
}

fn le64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b[..8].try_into().unwrap())
}

/// The procedural txt2img image.
pub fn procedural_image(prompt: &str, seed: u64, num_steps: u32, width: u32, height: u32) -> ImageBuffer {
    let h: [u8; 32] = Sha256::digest(prompt.as_bytes()).into();
    let base = [h[0] as u64, h[1] as u64, h[2] as u64];
    let mut rng = SplitMix64(seed ^ le64(&h[8..16]) ^ ((num_steps as u64) << 32));
    let g: Vec<u64> = (0..6).map(|_| rng.next_u64() % 64).collect();
    let mut data = Vec::with_capacity(3 * width as usize * height as usize);
    for y in 0..height as u64 {
        for x in 0..width as u64 {
            for k in 0..3 {
                let v = base[k].wrapping_add((g[2 * k] * x + g[2 * k + 1] * y) >> 3) & 255;
                data.push(v as u8);
            }
        }
    }
    ImageBuffer { width, height, data }
}

/// Blends `floor(c * 255 + 0.5)` into `bg` wherever the conditioning is
/// positive, with weight `k = floor(strength * 1000 + 0.5)` per mille.
pub fn blend_conditioning(bg: &ImageBuffer, cond: &DepthMap, strength: f64) -> ImageBuffer {
    let k = (strength * 1000.0 + 0.5).floor() as u32;
    let mut out = bg.clone();
    for (i, &c) in cond.data.iter().enumerate() {
        if c > 0.0 {
            let g = ((c as f64 * 255.0 + 0.5).floor()).clamp(0.0, 255.0) as u32;
            for ch in 0..3 {
                let b = bg.data[3 * i + ch] as u32;
                out.data[3 * i + ch] = ((b * (1000 - k) + g * k + 500) / 1000) as u8;
            }
        }
    }
    out
}

#[derive(Debug)]
pub struct MockBackend {
    model_id: String,
    body_joints: usize,
    num_betas: usize,
    canned_hmr: Mutex<BTreeMap<[u8; 32], HmrResult>>,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(posegen_core::toy::TOY_JOINTS - 1, posegen_core::toy::TOY_BETAS)
    }
}

impl MockBackend {
    /// A mock whose HMR emits `body_joints` pose rows and `num_betas` betas.
    pub fn new(body_joints: usize, num_betas: usize) -> Self {
        Self {
            model_id: MOCK_MODEL_ID.into(),
            body_joints,
            num_betas,
            canned_hmr: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    pub fn body_joints(&self) -> usize {
        self.body_joints
    }

    /// Makes `hmr` return `result` for any image with this content hash.
    pub fn set_hmr(&self, img: &ImageBuffer, result: HmrResult) {
        self.canned_hmr.lock().unwrap().insert(img.content_hash(), result);
    }

    fn procedural_hmr(&self, img: &ImageBuffer) -> HmrResult {
        if img.is_uniform() {
            return HmrResult::default();
        }
        let hash = img.content_hash();
        let mut rng = SplitMix64(le64(&hash[0..8]));
        let count = 1 + usize::from(rng.next_u64() % 4 == 0);
        let people = (0..count)
            .map(|_| {
                let hard = rng.next_u64() % 2 == 0;
                let amp = if hard { HARD_AMPLITUDE } else { EASY_AMPLITUDE };
                let global_orient = [0; 3].map(|_| rng.uniform(-0.3, 0.3));
                let body_pose = (0..self.body_joints)
                    .map(|_| [0; 3].map(|_| rng.uniform(-amp, amp)))
                    .collect();
                let betas = (0..self.num_betas).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let scale = rng.uniform(0.9, 1.4);
                let tx = rng.uniform(-0.15, 0.15);
                let ty = rng.uniform(-0.15, 0.15);
                let confidence = rng.uniform(0.5, 1.0);
                HmrPerson {
                    pose: PoseParams {
                        global_orient,
                        body_pose,
                    },
                    shape: ShapeParams { betas },
                    camera: WeakPerspectiveCamera {
                        scale,
                        tx,
                        ty,
                        image_width: img.width,
                        image_height: img.height,
                    },
                    confidence,
                }
            })
            .collect();
        HmrResult { people }
    }
}

fn box_mask(w: u32, h: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> MaskImage {
    let mut m = MaskImage::empty(w, h);
    for y in y0..y1.min(h) {
        for x in x0..x1.min(w) {
            m.data[(y * w + x) as usize] = true;
        }
    }
    m
}

fn invalid(e: impl std::fmt::Display) -> GatewayError {
    GatewayError::InvalidRequest(e.to_string())
}

impl Backend for MockBackend {
    fn model_id(&self) -> GatewayResult<String> {
        Ok(self.model_id.clone())
    }

    fn txt2img(&self, req: &GenerationRequest) -> GatewayResult<ImageBuffer> {
        req.validate()?;
        Ok(procedural_image(&req.prompt, req.seed, req.num_steps, req.width, req.height))
    }

    fn encode_latents(&self, img: &ImageBuffer, _seed: Option<u64>) -> GatewayResult<Latents> {
        let d = LATENT_DOWNSAMPLE;
        if img.width % d != 0 || img.height % d != 0 {
            return Err(invalid(format!(
                "image {}x{} is not a multiple of {d} on both axes",
                img.width, img.height
            )));
        }
        let (lw, lh) = ((img.width / d) as usize, (img.height / d) as usize);
        let mut sums = vec![[0u64; 3]; lw * lh];
        for y in 0..img.height {
            for x in 0..img.width {
                let cell = (y / d) as usize * lw + (x / d) as usize;
                let p = img.pixel(x, y);
                for c in 0..3 {
                    sums[cell][c] += p[c] as u64;
                }
            }
        }
        let cell_max = (d * d) as f64 * 255.0;
        let mut data = vec![0f32; LATENT_CHANNELS * lw * lh];
        for (i, s) in sums.iter().enumerate() {
            for c in 0..3 {
                data[c * lw * lh + i] = (s[c] as f64 / cell_max) as f32;
            }
            data[3 * lw * lh + i] = ((s[0] + s[1] + s[2]) as f64 / (3.0 * cell_max)) as f32;
        }
        Latents::new(LATENT_CHANNELS, lh, lw, data)
    }

    fn depth2img(&self, z: &Latents, depth: &DepthMap, req: &GenerationRequest) -> GatewayResult<Depth2ImgOutput> {
        if (depth.width as usize, depth.height as usize) != (z.width, z.height) {
            return Err(invalid(format!(
                "depth {}x{} does not match latent grid {}x{}",
                depth.width, depth.height, z.width, z.height
            )));
        }
        let (w, h) = (z.width as u32 * LATENT_DOWNSAMPLE, z.height as u32 * LATENT_DOWNSAMPLE);
        let req = GenerationRequest {
            width: w,
            height: h,
            ..req.clone()
        };
        req.validate()?;
        let bg = procedural_image(&req.prompt, req.seed, req.num_steps, w, h);
        // each latent cell conditions its 8x8 pixel block
        let mut up = DepthMap::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                up.data[(y * w + x) as usize] = depth.get(x / LATENT_DOWNSAMPLE, y / LATENT_DOWNSAMPLE);
            }
        }
        Ok(Depth2ImgOutput {
            image: blend_conditioning(&bg, &up, req.strength),
            latent_checksum: z.checksum(),
        })
    }

    fn hmr(&self, img: &ImageBuffer, _seed: Option<u64>) -> GatewayResult<HmrResult> {
        if let Some(r) = self.canned_hmr.lock().unwrap().get(&img.content_hash()) {
            return Ok(r.clone());
        }
        Ok(self.procedural_hmr(img))
    }

    fn segment(&self, img: &ImageBuffer, _seed: Option<u64>) -> GatewayResult<SegmentationResult> {
        let (w, h) = (img.width, img.height);
        let hash = img.content_hash();
        let mut rng = SplitMix64(le64(&hash[8..16]));
        let mut instances = vec![SegmentInstance {
            class_label: "person".into(),
            mask: rle::encode(&box_mask(w, h, 3 * w / 8, h / 4, 5 * w / 8, 3 * h / 4)),
            score: MOCK_PERSON_SCORE,
        }];
        let n = rng.next_u64() % 3;
        for _ in 0..n {
            let label = MOCK_OCCLUDER_LABELS[(rng.next_u64() % 3) as usize];
            let x0 = (rng.next_u64() % w as u64) as u32;
            let y0 = (rng.next_u64() % h as u64) as u32;
            let bw = 1 + (rng.next_u64() % (w / 4).max(1) as u64) as u32;
            let bh = 1 + (rng.next_u64() % (h / 4).max(1) as u64) as u32;
            let score = 0.5 + 0.5 * rng.unit();
            instances.push(SegmentInstance {
                class_label: label.into(),
                mask: rle::encode(&box_mask(w, h, x0, y0, x0 + bw, y0 + bh)),
                score,
            });
        }
        Ok(SegmentationResult { instances })
    }
}
