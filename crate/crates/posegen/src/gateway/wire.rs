//! JSON wire protocol, version `"1"`.
//!
//! Images travel as base64 PNG, latents and depth maps as base64
//! little-endian `f32`, masks as COCO uncompressed RLE. Every response
//! echoes `api_version`, `model_id`, `seed` and `request_id`. The full
//! field list lives in `docs/api.md`.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use posegen_core::rle::{self, Rle};
use posegen_core::{DepthMap, PoseParams, ShapeParams, WeakPerspectiveCamera};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    GatewayError, GatewayResult, GenerationRequest, HmrPerson, HmrResult, ImageBuffer, Latents, SegmentInstance,
    SegmentationResult, DEFAULT_IMAGE_SIZE,
};
use crate::formats;

pub const API_VERSION: &str = "1";

pub const PATH_HEALTH: &str = "/v1/health";
pub const PATH_TXT2IMG: &str = "/v1/txt2img";
pub const PATH_ENCODE: &str = "/v1/encode";
pub const PATH_DEPTH2IMG: &str = "/v1/depth2img";
pub const PATH_HMR: &str = "/v1/hmr";
pub const PATH_SEGMENT: &str = "/v1/segment";

fn default_size() -> u32 {
    DEFAULT_IMAGE_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireImage {
    pub width: u32,
    pub height: u32,
    pub png_base64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireLatents {
    /// `[channels, height, width]`
    pub shape: [usize; 3],
    pub data_base64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDepth {
    pub width: u32,
    pub height: u32,
    pub data_base64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Txt2ImgRequest {
    pub api_version: String,
    pub request_id: String,
    pub prompt: String,
    pub seed: u64,
    pub num_steps: u32,
    pub strength: f64,
    #[serde(default = "default_size")]
    pub width: u32,
    #[serde(default = "default_size")]
    pub height: u32,
    #[serde(default)]
    pub guidance: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResponse {
    pub api_version: String,
    pub model_id: String,
    pub seed: Option<u64>,
    pub request_id: String,
    pub image: WireImage,
}

/// Body of `/v1/encode`, `/v1/hmr` and `/v1/segment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub api_version: String,
    pub request_id: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub image: WireImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub api_version: String,
    pub model_id: String,
    pub seed: Option<u64>,
    pub request_id: String,
    pub latents: WireLatents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Depth2ImgRequest {
    pub api_version: String,
    pub request_id: String,
    pub prompt: String,
    pub seed: u64,
    pub num_steps: u32,
    pub strength: f64,
    #[serde(default)]
    pub guidance: BTreeMap<String, Value>,
    pub latents: WireLatents,
    pub depth: WireDepth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Depth2ImgResponse {
    pub api_version: String,
    pub model_id: String,
    pub seed: Option<u64>,
    pub request_id: String,
    pub image: WireImage,
    pub latent_checksum: String,
}

/// How `theta` is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseConvention {
    /// Global orientation first, then the body joints (72 values for SMPL).
    Full,
    /// Body joints only (69 for SMPL); orientation in `global_orient`.
    Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireCamera {
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePerson {
    /// Flattened axis-angle rotations, radians.
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_convention: Option<PoseConvention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_orient: Option<[f64; 3]>,
    pub betas: Vec<f64>,
    pub camera: WireCamera,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmrResponse {
    pub api_version: String,
    pub model_id: String,
    pub seed: Option<u64>,
    pub request_id: String,
    pub people: Vec<WirePerson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireInstance {
    pub class_label: String,
    pub score: f64,
    pub rle: Rle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub api_version: String,
    pub model_id: String,
    pub seed: Option<u64>,
    pub request_id: String,
    pub instances: Vec<WireInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub api_version: String,
    pub model_id: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// `bad_request`, `version_mismatch`, `invalid_request`, `not_found`,
    /// `method_not_allowed` or `internal`.
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub api_version: String,
    pub error: ErrorBody,
}

pub fn check_version(got: &str) -> GatewayResult<()> {
    if got == API_VERSION {
        Ok(())
    } else {
        Err(GatewayError::Protocol(format!(
            "api_version mismatch: expected \"{API_VERSION}\", got \"{got}\""
        )))
    }
}

fn protocol(e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Protocol(e.to_string())
}

pub fn image_to_wire(img: &ImageBuffer) -> WireImage {
    WireImage {
        width: img.width,
        height: img.height,
        png_base64: B64.encode(formats::image_to_png(img).expect("encoding a valid RGB image")),
    }
}

pub fn image_from_wire(w: &WireImage) -> GatewayResult<ImageBuffer> {
    let bytes = B64.decode(&w.png_base64).map_err(|e| protocol(format!("image base64: {e}")))?;
    let img = formats::image_from_png(&bytes).map_err(|e| protocol(format!("image: {e}")))?;
    if (img.width, img.height) != (w.width, w.height) {
        return Err(protocol(format!(
            "image declared {}x{} but PNG is {}x{}",
            w.width, w.height, img.width, img.height
        )));
    }
    Ok(img)
}

fn f32s_to_b64(v: &[f32]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn f32s_from_b64(s: &str, expected: usize, what: &str) -> GatewayResult<Vec<f32>> {
    let bytes = B64.decode(s).map_err(|e| protocol(format!("{what} base64: {e}")))?;
    if bytes.len() != 4 * expected {
        return Err(protocol(format!(
            "{what}: expected {expected} f32 values, got {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn latents_to_wire(z: &Latents) -> WireLatents {
    WireLatents {
        shape: z.shape(),
        data_base64: f32s_to_b64(&z.data),
    }
}

pub fn latents_from_wire(w: &WireLatents) -> GatewayResult<Latents> {
    let [c, h, wd] = w.shape;
    let data = f32s_from_b64(&w.data_base64, c * h * wd, "latents")?;
    Latents::new(c, h, wd, data).map_err(protocol)
}

pub fn depth_to_wire(d: &DepthMap) -> WireDepth {
    WireDepth {
        width: d.width,
        height: d.height,
        data_base64: f32s_to_b64(&d.data),
    }
}

pub fn depth_from_wire(w: &WireDepth) -> GatewayResult<DepthMap> {
    let data = f32s_from_b64(&w.data_base64, w.width as usize * w.height as usize, "depth")?;
    DepthMap::new(w.width, w.height, data).map_err(protocol)
}

pub fn txt2img_request(req: &GenerationRequest, request_id: &str) -> Txt2ImgRequest {
    Txt2ImgRequest {
        api_version: API_VERSION.into(),
        request_id: request_id.into(),
        prompt: req.prompt.clone(),
        seed: req.seed,
        num_steps: req.num_steps,
        strength: req.strength,
        width: req.width,
        height: req.height,
        guidance: req.guidance.clone(),
    }
}

impl Txt2ImgRequest {
    pub fn to_generation(&self) -> GenerationRequest {
        GenerationRequest {
            prompt: self.prompt.clone(),
            seed: self.seed,
            num_steps: self.num_steps,
            strength: self.strength,
            width: self.width,
            height: self.height,
            guidance: self.guidance.clone(),
        }
    }
}

pub fn depth2img_request(z: &Latents, depth: &DepthMap, req: &GenerationRequest, request_id: &str) -> Depth2ImgRequest {
    Depth2ImgRequest {
        api_version: API_VERSION.into(),
        request_id: request_id.into(),
        prompt: req.prompt.clone(),
        seed: req.seed,
        num_steps: req.num_steps,
        strength: req.strength,
        guidance: req.guidance.clone(),
        latents: latents_to_wire(z),
        depth: depth_to_wire(depth),
    }
}

impl Depth2ImgRequest {
    /// The generation knobs; the output size follows the latent grid.
    pub fn to_generation(&self) -> GenerationRequest {
        GenerationRequest {
            prompt: self.prompt.clone(),
            seed: self.seed,
            num_steps: self.num_steps,
            strength: self.strength,
            width: (self.latents.shape[2] as u32).saturating_mul(super::LATENT_DOWNSAMPLE),
            height: (self.latents.shape[1] as u32).saturating_mul(super::LATENT_DOWNSAMPLE),
            guidance: self.guidance.clone(),
        }
    }
}

pub fn person_to_wire(p: &HmrPerson, convention: PoseConvention) -> WirePerson {
    let (theta, global_orient) = match convention {
        PoseConvention::Full => {
            let mut t = p.pose.global_orient.to_vec();
            t.extend(p.pose.body_pose_flat());
            (t, None)
        }
        PoseConvention::Body => (p.pose.body_pose_flat(), Some(p.pose.global_orient)),
    };
    WirePerson {
        theta,
        pose_convention: Some(convention),
        global_orient,
        betas: p.shape.betas.clone(),
        camera: WireCamera {
            scale: p.camera.scale,
            tx: p.camera.tx,
            ty: p.camera.ty,
        },
        confidence: p.confidence,
    }
}

fn rows(v: &[f64]) -> Vec<[f64; 3]> {
    v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// Normalizes one person into [`HmrPerson`].
///
/// When `pose_convention` is absent the layout is inferred from
/// `expected_body_joints`: `3n` values are body-only, `3(n + 1)` include the
/// global orientation first (69 vs 72 for SMPL).
pub fn person_from_wire(
    w: &WirePerson,
    expected_body_joints: Option<usize>,
    image_size: (u32, u32),
) -> GatewayResult<HmrPerson> {
    if !(0.0..=1.0).contains(&w.confidence) {
        return Err(protocol(format!("confidence {} outside [0, 1]", w.confidence)));
    }
    if w.theta.len() % 3 != 0 {
        return Err(protocol(format!("theta has {} values, not a multiple of 3", w.theta.len())));
    }
    let convention = match (w.pose_convention, expected_body_joints) {
        (Some(c), _) => c,
        (None, Some(n)) if w.theta.len() == 3 * n => PoseConvention::Body,
        (None, Some(n)) if w.theta.len() == 3 * (n + 1) => PoseConvention::Full,
        (None, Some(n)) => {
            return Err(protocol(format!(
                "theta has {} values; expected {} (body) or {} (full) for {n} body joints",
                w.theta.len(),
                3 * n,
                3 * (n + 1)
            )))
        }
        (None, None) => return Err(protocol("theta without pose_convention and no expected joint count")),
    };
    let pose = match convention {
        PoseConvention::Full => {
            if w.theta.len() < 3 {
                return Err(protocol("full-convention theta lacks the global orientation"));
            }
            if w.global_orient.is_some() {
                return Err(protocol("full-convention theta must not also carry global_orient"));
            }
            PoseParams {
                global_orient: [w.theta[0], w.theta[1], w.theta[2]],
                body_pose: rows(&w.theta[3..]),
            }
        }
        PoseConvention::Body => PoseParams {
            global_orient: w.global_orient.unwrap_or([0.0; 3]),
            body_pose: rows(&w.theta),
        },
    };
    if !pose.is_finite() || !w.betas.iter().all(|b| b.is_finite()) {
        return Err(protocol("non-finite pose or shape"));
    }
    if let Some(n) = expected_body_joints {
        if pose.body_pose.len() != n {
            return Err(protocol(format!(
                "person has {} body joints, expected {n}",
                pose.body_pose.len()
            )));
        }
    }
    let camera = WeakPerspectiveCamera::new(w.camera.scale, w.camera.tx, w.camera.ty, image_size.0, image_size.1)
        .map_err(|e| protocol(format!("camera: {e}")))?;
    Ok(HmrPerson {
        pose,
        shape: ShapeParams { betas: w.betas.clone() },
        camera,
        confidence: w.confidence,
    })
}

pub fn hmr_from_wire(
    people: &[WirePerson],
    expected_body_joints: Option<usize>,
    image_size: (u32, u32),
) -> GatewayResult<HmrResult> {
    Ok(HmrResult {
        people: people
            .iter()
            .map(|p| person_from_wire(p, expected_body_joints, image_size))
            .collect::<GatewayResult<_>>()?,
    })
}

pub fn instance_to_wire(i: &SegmentInstance) -> WireInstance {
    WireInstance {
        class_label: i.class_label.clone(),
        score: i.score,
        rle: i.mask.clone(),
    }
}

/// Checks scores and that every mask decodes at the image size.
pub fn segmentation_from_wire(instances: &[WireInstance], image_size: (u32, u32)) -> GatewayResult<SegmentationResult> {
    let mut out = Vec::with_capacity(instances.len());
    for w in instances {
        if !(0.0..=1.0).contains(&w.score) {
            return Err(protocol(format!("instance `{}` score {} outside [0, 1]", w.class_label, w.score)));
        }
        if w.rle.size != [image_size.1, image_size.0] {
            return Err(protocol(format!(
                "mask size {:?} does not match image [{}, {}]",
                w.rle.size, image_size.1, image_size.0
            )));
        }
        rle::decode(&w.rle, w.class_label.clone()).map_err(|e| protocol(format!("mask: {e}")))?;
        out.push(SegmentInstance {
            class_label: w.class_label.clone(),
            mask: w.rle.clone(),
            score: w.score,
        });
    }
    Ok(SegmentationResult { instances: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn person() -> WirePerson {
        WirePerson {
            theta: (0..9).map(|i| i as f64 * 0.1).collect(),
            pose_convention: None,
            global_orient: None,
            betas: vec![0.5],
            camera: WireCamera {
                scale: 1.0,
                tx: 0.0,
                ty: 0.0,
            },
            confidence: 0.9,
        }
    }

    #[test]
    fn infers_pose_convention_from_length() {
        let full = person_from_wire(&person(), Some(2), (64, 64)).unwrap();
        assert_eq!(full.pose.global_orient, [0.0, 0.1, 0.2]);
        assert_eq!(full.pose.body_pose.len(), 2);
        let body = person_from_wire(&person(), Some(3), (64, 64)).unwrap();
        assert_eq!(body.pose.global_orient, [0.0; 3]);
        assert_eq!(body.pose.body_pose.len(), 3);
        assert!(person_from_wire(&person(), Some(5), (64, 64)).is_err());
        assert!(person_from_wire(&person(), None, (64, 64)).is_err());
    }

    #[test]
    fn smpl_69_and_72() {
        let mut p = person();
        p.theta = vec![0.01; 72];
        let r = person_from_wire(&p, Some(23), (512, 512)).unwrap();
        assert_eq!((r.pose.body_pose.len(), r.pose.global_orient), (23, [0.01; 3]));
        p.theta = vec![0.01; 69];
        p.global_orient = Some([1.0, 2.0, 3.0]);
        let r = person_from_wire(&p, Some(23), (512, 512)).unwrap();
        assert_eq!((r.pose.body_pose.len(), r.pose.global_orient), (23, [1.0, 2.0, 3.0]));
    }

    #[test]
    fn rejects_bad_people() {
        let mut p = person();
        p.confidence = 1.5;
        assert!(person_from_wire(&p, Some(2), (8, 8)).is_err());
        let mut p = person();
        p.camera.scale = 0.0;
        assert!(person_from_wire(&p, Some(2), (8, 8)).is_err());
        let mut p = person();
        p.pose_convention = Some(PoseConvention::Body);
        assert!(person_from_wire(&p, Some(2), (8, 8)).is_err());
    }

    #[test]
    fn rejects_bad_instances() {
        let inst = |score: f64, size: [u32; 2], counts: Vec<u32>| WireInstance {
            class_label: "chair".into(),
            score,
            rle: Rle { size, counts },
        };
        assert!(segmentation_from_wire(&[inst(0.5, [2, 3], vec![6])], (3, 2)).is_ok());
        assert!(segmentation_from_wire(&[inst(1.2, [2, 3], vec![6])], (3, 2)).is_err());
        assert!(segmentation_from_wire(&[inst(-0.1, [2, 3], vec![6])], (3, 2)).is_err());
        assert!(segmentation_from_wire(&[inst(0.5, [3, 2], vec![6])], (3, 2)).is_err());
        assert!(segmentation_from_wire(&[inst(0.5, [2, 3], vec![5])], (3, 2)).is_err());
    }

    #[test]
    fn version_check() {
        assert!(check_version("1").is_ok());
        assert!(matches!(check_version("2"), Err(GatewayError::Protocol(_))));
    }
}
