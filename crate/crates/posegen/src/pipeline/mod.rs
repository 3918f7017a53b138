//! Generate, score, rectify and emit.
//!
//! For every input the pipeline obtains an image (text-to-image, or a real
//! photo), encodes its latents, recovers the body, and scores the pose with
//! the prior. Easy poses pass through with their estimated parameters. Hard
//! poses are optionally augmented in latent space, rendered to a depth map,
//! masked by non-human occluders and sent back through the depth-conditioned
//! generator, so the final image agrees with the stored parameters.

pub mod dataset;
pub mod prompt;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use posegen_core::compose::{filter_occluders, union_masks, DEFAULT_PERSON_CLASSES};
use posegen_core::depth::normalize_for_conditioning;
use posegen_core::pose_prior::{
    augment_pose, difficulty_score, is_hard_pose, AugmentationConfig, LatentMode, PosePriorVAE, DEFAULT_AUGMENTATION_SCALE,
    DEFAULT_EPSILON_HALF_WIDTH, DEFAULT_TAU,
};
use posegen_core::{rle, BodyModelSpec, MaskImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::{
    Backend, GatewayError, GenerationRequest, HmrPerson, DEFAULT_NUM_STEPS, DEFAULT_STRENGTH,
    LATENT_DOWNSAMPLE,
};
use crate::{formats, Error, Result};
use dataset::{
    AnnotationRecord, Counts, GeneratedSample, PersonRecord, RejectKind, RejectRecord, SeedRecord, Source, DEPTHS_DIR,
    IMAGES_DIR, SCHEMA_VERSION,
};

pub const DEFAULT_AUGMENTATIONS: u32 = 3;
pub const DEFAULT_DEPTH_SIZE: u32 = 64;
pub const DEFAULT_JOBS: usize = 4;

/// Which detected people drive the depth conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonPolicy {
    /// The most confident person; others are ignored.
    #[default]
    HighestConfidence,
    /// Everyone, rendered into one depth map. Only the most confident person
    /// is scored and augmented.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// JSON has no infinity; `null` reads back as `f64::INFINITY`.
    #[serde(deserialize_with = "tau_from_json")]
    pub tau: f64,
    pub augmentations_per_input: u32,
    pub aug_scale: f64,
    pub aug_epsilon: f64,
    /// Latent code used for both scoring and augmentation.
    pub latent_mode: LatentMode,
    /// Side of the square depth map for text inputs; the generated image is
    /// `8 * depth_size` pixels on a side.
    pub depth_size: u32,
    pub strength: f64,
    pub num_steps: u32,
    pub seed: u64,
    pub person_policy: PersonPolicy,
    pub emit_ungated: bool,
    pub person_classes: Vec<String>,
    pub jobs: usize,
    pub guidance: std::collections::BTreeMap<String, serde_json::Value>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            augmentations_per_input: DEFAULT_AUGMENTATIONS,
            aug_scale: DEFAULT_AUGMENTATION_SCALE,
            aug_epsilon: DEFAULT_EPSILON_HALF_WIDTH,
            latent_mode: LatentMode::Mean,
            depth_size: DEFAULT_DEPTH_SIZE,
            strength: DEFAULT_STRENGTH,
            num_steps: DEFAULT_NUM_STEPS,
            seed: 0,
            person_policy: PersonPolicy::HighestConfidence,
            emit_ungated: true,
            person_classes: DEFAULT_PERSON_CLASSES.iter().map(|s| s.to_string()).collect(),
            jobs: DEFAULT_JOBS,
            guidance: Default::default(),
        }
    }
}

fn tau_from_json<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) {
            return Err(Error::Invalid(format!("tau must be >= 0, got {}", self.tau)));
        }
        if self.depth_size == 0 {
            return Err(Error::Invalid("depth size must be positive".into()));
        }
        if self.depth_size.checked_mul(LATENT_DOWNSAMPLE).is_none() {
            return Err(Error::Invalid(format!("depth size {} is too large", self.depth_size)));
        }
        if self.jobs == 0 {
            return Err(Error::Invalid("jobs must be at least 1".into()));
        }
        self.augmentation().validate()?;
        let mut probe = GenerationRequest::new("probe", 0);
        probe.strength = self.strength;
        probe.num_steps = self.num_steps;
        probe.validate()?;
        Ok(())
    }

    pub fn image_size(&self) -> u32 {
        self.depth_size * LATENT_DOWNSAMPLE
    }

    pub fn augmentation(&self) -> AugmentationConfig {
        AugmentationConfig {
            scale: self.aug_scale,
            epsilon_half_width: self.aug_epsilon,
            latent: self.latent_mode,
        }
    }

    /// Samples emitted for a hard input.
    pub fn gated_count(&self) -> u32 {
        self.augmentations_per_input.max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Text { prompt: String },
    Real { path: PathBuf, prompt: String },
}

impl Input {
    pub fn prompt(&self) -> &str {
        match self {
            Input::Text { prompt } | Input::Real { prompt, .. } => prompt,
        }
    }

    fn input_ref(&self) -> Option<String> {
        match self {
            Input::Text { .. } => None,
            Input::Real { path, .. } => path.file_name().map(|n| n.to_string_lossy().into_owned()),
        }
    }
}

/// Models the pipeline runs against.
pub struct Models<'a> {
    pub body: &'a BodyModelSpec,
    pub prior: &'a PosePriorVAE,
    pub backend: &'a dyn Backend,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub model_id: String,
    pub samples: Vec<GeneratedSample>,
    pub rejects: Vec<RejectRecord>,
    pub counts: Counts,
}

/// SplitMix64 finalizer over `(a, b)`; used to derive independent seeds.
pub fn derive_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SCORE: u64 = 1;
const STREAM_AUG: u64 = 100;
const STREAM_DEPTH2IMG: u64 = 200;

pub fn sample_id(source: Source, index: usize, aug: u32) -> String {
    let tag = match source {
        Source::Text => 't',
        Source::RealImage => 'r',
    };
    format!("{tag}{index:05}-a{aug}")
}

struct InputOutcome {
    samples: Vec<GeneratedSample>,
    rejects: Vec<RejectRecord>,
    hard: bool,
    failed: bool,
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    models: &'a Models<'a>,
    model_id: &'a str,
}

enum Step {
    Reject(RejectKind, String),
}

impl From<GatewayError> for Step {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::InvalidRequest(m) => Step::Reject(RejectKind::InvalidInput, m),
            other => Step::Reject(RejectKind::BackendError, other.to_string()),
        }
    }
}

impl From<Error> for Step {
    fn from(e: Error) -> Self {
        match e {
            Error::Gateway(g) => g.into(),
            other => Step::Reject(RejectKind::InvalidInput, other.to_string()),
        }
    }
}

impl From<posegen_core::Error> for Step {
    fn from(e: posegen_core::Error) -> Self {
        Step::Reject(RejectKind::InvalidInput, e.to_string())
    }
}

fn person_record(p: &HmrPerson) -> PersonRecord {
    PersonRecord {
        theta: p.pose.clone(),
        beta: p.shape.betas.clone(),
        camera: p.camera,
    }
}

impl Ctx<'_> {
    fn check_person(&self, p: &HmrPerson) -> std::result::Result<(), Step> {
        let body = self.models.body;
        if p.pose.body_pose.len() != body.body_joint_count() || p.shape.betas.len() != body.num_betas() {
            return Err(Step::Reject(
                RejectKind::InvalidInput,
                format!(
                    "recovered body has {} joints and {} betas; the body model expects {} and {}",
                    p.pose.body_pose.len(),
                    p.shape.betas.len(),
                    body.body_joint_count(),
                    body.num_betas()
                ),
            ));
        }
        Ok(())
    }

    fn run_input(&self, index: usize, input: &Input) -> InputOutcome {
        let mut out = InputOutcome {
            samples: Vec::new(),
            rejects: Vec::new(),
            hard: false,
            failed: false,
        };
        if let Err(Step::Reject(kind, reason)) = self.try_input(index, input, &mut out) {
            warn!("input {index} dropped ({kind:?}): {reason}");
            out.failed = kind == RejectKind::BackendError;
            out.rejects.push(RejectRecord {
                input_index: index,
                input_ref: input.input_ref(),
                prompt: input.prompt().into(),
                augmentation_index: None,
                kind,
                reason,
            });
        }
        out
    }

    fn try_input(&self, index: usize, input: &Input, out: &mut InputOutcome) -> std::result::Result<(), Step> {
        let cfg = self.cfg;
        let backend = self.models.backend;
        let input_seed = derive_seed(cfg.seed, index as u64);
        let prompt = input.prompt().to_string();
        let mut base_req = GenerationRequest::new(prompt.clone(), input_seed);
        base_req.num_steps = cfg.num_steps;
        base_req.strength = cfg.strength;
        base_req.guidance = cfg.guidance.clone();

        let (source, image, txt2img_seed) = match input {
            Input::Text { .. } => {
                let mut req = base_req.clone();
                req.width = cfg.image_size();
                req.height = cfg.image_size();
                (Source::Text, backend.txt2img(&req)?, Some(input_seed))
            }
            Input::Real { path, .. } => (Source::RealImage, formats::read_image(path)?, None),
        };
        base_req.width = image.width;
        base_req.height = image.height;

        let latents = backend.encode_latents(&image, Some(input_seed))?;
        let (dw, dh) = (latents.width as u32, latents.height as u32);

        let hmr = backend.hmr(&image, Some(input_seed))?;
        let (primary_idx, primary) = hmr
            .most_confident()
            .ok_or_else(|| Step::Reject(RejectKind::NoPerson, "no person detected".into()))?;
        self.check_person(primary)?;
        let extras: Vec<PersonRecord> = match cfg.person_policy {
            PersonPolicy::HighestConfidence => Vec::new(),
            PersonPolicy::All => {
                let others: Vec<&HmrPerson> =
                    hmr.people.iter().enumerate().filter(|(i, _)| *i != primary_idx).map(|(_, p)| p).collect();
                for p in &others {
                    self.check_person(p)?;
                }
                others.into_iter().map(person_record).collect()
            }
        };

        let score_seed = derive_seed(input_seed, STREAM_SCORE);
        let mut score_rng = ChaCha8Rng::seed_from_u64(score_seed);
        let score = difficulty_score(self.models.prior, &primary.pose, cfg.latent_mode, &mut score_rng)?;
        let hard = is_hard_pose(score, cfg.tau);
        out.hard = hard;
        if !hard && !cfg.emit_ungated {
            info!("input {index}: easy pose ({score:.3}), not emitted");
            return Ok(());
        }

        let seg = backend.segment(&image, Some(input_seed))?;
        let masks = seg
            .instances
            .iter()
            .map(|i| rle::decode(&i.mask, i.class_label.clone()))
            .collect::<posegen_core::Result<Vec<MaskImage>>>()?;
        let classes: Vec<&str> = cfg.person_classes.iter().map(String::as_str).collect();
        let occluders: Vec<MaskImage> = filter_occluders(&masks, &classes)
            .iter()
            .map(|m| m.resample_nearest(dw, dh))
            .collect();
        let occlusion = union_masks(&occluders, dw, dh)?;
        let occlusion_rle = rle::encode(&occlusion);

        let input_ref = input.input_ref();
        let make_record = |aug: u32, person: &PersonRecord, gated: bool, seeds: SeedRecord, checksum: Option<String>| {
            let id = sample_id(source, index, aug);
            AnnotationRecord {
                schema_version: SCHEMA_VERSION.into(),
                image: format!("{IMAGES_DIR}/{id}.png"),
                depth: format!("{DEPTHS_DIR}/{id}.bin"),
                sample_id: id,
                source,
                input_index: index,
                input_ref: input_ref.clone(),
                prompt: prompt.clone(),
                depth_size: [dw, dh],
                theta: person.theta.clone(),
                beta: person.beta.clone(),
                camera: person.camera,
                difficulty_score: score,
                gated,
                augmentation_index: aug,
                seeds,
                occlusion_rle: occlusion_rle.clone(),
                latent_checksum: checksum,
                model_id: self.model_id.into(),
                extra_people: extras.clone(),
            }
        };
        let scene = |person: &PersonRecord| -> std::result::Result<_, Step> {
            let mut people = vec![person.clone()];
            people.extend(extras.iter().cloned());
            Ok(dataset::render_scene(self.models.body, &people, &occlusion)?)
        };
        let seeds = |aug: Option<u64>, d2i: Option<u64>| SeedRecord {
            run: cfg.seed,
            input: input_seed,
            txt2img: txt2img_seed,
            score: (cfg.latent_mode == LatentMode::Sampled).then_some(score_seed),
            augmentation: aug,
            depth2img: d2i,
        };

        let estimated = person_record(primary);
        if !hard {
            let depth = scene(&estimated)?;
            out.samples.push(GeneratedSample {
                record: make_record(0, &estimated, false, seeds(None, None), None),
                image,
                depth,
            });
            return Ok(());
        }

        for a in 0..cfg.gated_count() {
            let aug_index = if cfg.augmentations_per_input == 0 { 0 } else { a + 1 };
            let (person, aug_seed) = if aug_index == 0 {
                (estimated.clone(), None)
            } else {
                let s = derive_seed(input_seed, STREAM_AUG + aug_index as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let theta = augment_pose(self.models.prior, &primary.pose, &cfg.augmentation(), &mut rng)?;
                (
                    PersonRecord {
                        theta,
                        ..estimated.clone()
                    },
                    Some(s),
                )
            };
            let depth = scene(&person)?;
            let cond = normalize_for_conditioning(&depth);
            if cond.all_background {
                let reason = "body depth is empty after occlusion masking".to_string();
                warn!("input {index} augmentation {aug_index} dropped: {reason}");
                out.rejects.push(RejectRecord {
                    input_index: index,
                    input_ref: input_ref.clone(),
                    prompt: prompt.clone(),
                    augmentation_index: Some(aug_index),
                    kind: RejectKind::EmptyConditioning,
                    reason,
                });
                continue;
            }
            let d2i_seed = derive_seed(input_seed, STREAM_DEPTH2IMG + aug_index as u64);
            let req = GenerationRequest {
                seed: d2i_seed,
                ..base_req.clone()
            };
            let generated = backend.depth2img(&latents, &cond.map, &req)?;
            if generated.latent_checksum != latents.checksum() {
                return Err(Step::Reject(
                    RejectKind::BackendError,
                    "depth2img conditioned on different latents than were sent".into(),
                ));
            }
            out.samples.push(GeneratedSample {
                record: make_record(
                    aug_index,
                    &person,
                    true,
                    seeds(aug_seed, Some(d2i_seed)),
                    Some(generated.latent_checksum),
                ),
                image: generated.image,
                depth,
            });
        }
        Ok(())
    }
}

/// Runs every input, `cfg.jobs` at a time, and returns samples in input
/// order.
pub fn run(inputs: &[Input], cfg: &PipelineConfig, models: &Models<'_>) -> Result<RunOutput> {
    cfg.validate()?;
    let model_id = models.backend.model_id()?;
    let ctx = Ctx {
        cfg,
        models,
        model_id: &model_id,
    };
    let slots: Vec<Mutex<Option<InputOutcome>>> = inputs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..cfg.jobs.min(inputs.len()).max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(input) = inputs.get(i) else { break };
                let outcome = ctx.run_input(i, input);
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let mut out = RunOutput {
        model_id,
        counts: Counts {
            inputs: inputs.len(),
            ..Counts::default()
        },
        ..RunOutput::default()
    };
    for slot in slots {
        let o = slot.into_inner().unwrap().expect("every input was processed");
        out.counts.hard_inputs += usize::from(o.hard);
        out.counts.failed_inputs += usize::from(o.failed);
        out.rejects.extend(o.rejects);
        out.samples.extend(o.samples);
    }
    out.counts.samples = out.samples.len();
    out.counts.gated = out.samples.iter().filter(|s| s.record.gated).count();
    out.counts.ungated = out.counts.samples - out.counts.gated;
    out.counts.rejected = out.rejects.len();
    Ok(out)
}

/// [`run`] followed by [`dataset::emit_dataset`]; returns the manifest path.
pub fn generate(inputs: &[Input], cfg: &PipelineConfig, models: &Models<'_>, out_dir: &Path) -> Result<(RunOutput, PathBuf)> {
    let result = run(inputs, cfg, models)?;
    let manifest = dataset::emit_dataset(
        &result.samples,
        &result.rejects,
        &result.model_id,
        serde_json::to_value(cfg)?,
        result.counts.clone(),
        out_dir,
    )?;
    Ok((result, manifest))
}

/// Lists `.png` files in `dir`, sorted by name.
pub fn real_inputs(dir: &Path, prompt: &str) -> Result<Vec<Input>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    Ok(paths
        .into_iter()
        .map(|path| Input::Real {
            path,
            prompt: prompt.to_string(),
        })
        .collect())
}
