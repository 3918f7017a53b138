//! Dataset layout and records.
//!
//! ```text
//! out/
//!   images/<sample_id>.png     emitted RGB image
//!   depths/<sample_id>.bin     occlusion-masked body depth, before normalization
//!   annotations.jsonl          one AnnotationRecord per line
//!   rejects.jsonl              one RejectRecord per dropped input or sample
//!   manifest.json              config snapshot and counts
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use posegen_core::compose::{apply_occlusion, MaskImage};
use posegen_core::depth::render_depth_multi;
use posegen_core::rle::{self, Rle};
use posegen_core::{BodyModelSpec, DepthMap, PoseParams, ShapeParams, WeakPerspectiveCamera};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::formats;
use crate::gateway::ImageBuffer;
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "1";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const REJECTS_FILE: &str = "rejects.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_DIR: &str = "images";
pub const DEPTHS_DIR: &str = "depths";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Text,
    RealImage,
}

/// A body in the scene: pose, shape and the camera it was estimated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub theta: PoseParams,
    pub beta: Vec<f64>,
    pub camera: WeakPerspectiveCamera,
}

/// Seeds that fed each stochastic step; `null` when the step did not run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub run: u64,
    pub input: u64,
    pub txt2img: Option<u64>,
    pub score: Option<u64>,
    pub augmentation: Option<u64>,
    pub depth2img: Option<u64>,
}

/// One line of `annotations.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub schema_version: String,
    pub sample_id: String,
    pub source: Source,
    pub input_index: usize,
    /// File name of the real input image, without directories.
    pub input_ref: Option<String>,
    pub prompt: String,
    /// Relative to the dataset root.
    pub image: String,
    pub depth: String,
    /// `[width, height]` of the depth map.
    pub depth_size: [u32; 2],
    pub theta: PoseParams,
    pub beta: Vec<f64>,
    pub camera: WeakPerspectiveCamera,
    pub difficulty_score: f64,
    pub gated: bool,
    /// `0` for the unaugmented pose, `1..=n` for augmented copies.
    pub augmentation_index: u32,
    pub seeds: SeedRecord,
    /// Union of occluder masks at depth resolution.
    pub occlusion_rle: Rle,
    /// Checksum of the latents the image was regenerated from; `null` for
    /// ungated samples.
    pub latent_checksum: Option<String>,
    pub model_id: String,
    /// Other people rendered into the same depth map (all-people policy).
    pub extra_people: Vec<PersonRecord>,
}

impl AnnotationRecord {
    pub fn people(&self) -> Vec<PersonRecord> {
        let mut all = vec![PersonRecord {
            theta: self.theta.clone(),
            beta: self.beta.clone(),
            camera: self.camera,
        }];
        all.extend(self.extra_people.iter().cloned());
        all
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectKind {
    NoPerson,
    EmptyConditioning,
    BackendError,
    InvalidInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub input_index: usize,
    pub input_ref: Option<String>,
    pub prompt: String,
    /// Set when only one augmentation of the input was dropped.
    pub augmentation_index: Option<u32>,
    pub kind: RejectKind,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub inputs: usize,
    pub samples: usize,
    pub gated: usize,
    pub ungated: usize,
    pub hard_inputs: usize,
    pub rejected: usize,
    pub failed_inputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub generator: String,
    pub model_id: String,
    pub config: Value,
    pub counts: Counts,
    pub annotations: String,
    pub rejects: String,
}

/// A sample held in memory before it is written.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub record: AnnotationRecord,
    pub image: ImageBuffer,
    pub depth: DepthMap,
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn jsonl_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_line<T: Serialize>(w: &mut BufWriter<File>, v: &T, path: &Path) -> Result<()> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Writes images, depth maps, `annotations.jsonl`, `rejects.jsonl` and
/// `manifest.json` under `out`, returning the manifest path.
pub fn emit_dataset(
    samples: &[GeneratedSample],
    rejects: &[RejectRecord],
    model_id: &str,
    config: Value,
    counts: Counts,
    out: &Path,
) -> Result<PathBuf> {
    let mut seen = BTreeSet::new();
    for s in samples {
        if !seen.insert(s.record.sample_id.as_str()) {
            return Err(Error::Invalid(format!("duplicate sample id `{}`", s.record.sample_id)));
        }
    }
    create_dir(&out.join(IMAGES_DIR))?;
    create_dir(&out.join(DEPTHS_DIR))?;

    let ann_path = out.join(ANNOTATIONS_FILE);
    let mut ann = jsonl_writer(&ann_path)?;
    for s in samples {
        formats::write_image(&s.image, &out.join(&s.record.image))?;
        formats::write_depth_bin(&s.depth, &out.join(&s.record.depth))?;
        write_line(&mut ann, &s.record, &ann_path)?;
    }
    ann.flush().map_err(|e| Error::io(&ann_path, e))?;

    let rej_path = out.join(REJECTS_FILE);
    let mut rej = jsonl_writer(&rej_path)?;
    for r in rejects {
        write_line(&mut rej, r, &rej_path)?;
    }
    rej.flush().map_err(|e| Error::io(&rej_path, e))?;

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.into(),
        generator: format!("posegen {}", env!("CARGO_PKG_VERSION")),
        model_id: model_id.into(),
        config,
        counts,
        annotations: ANNOTATIONS_FILE.into(),
        rejects: REJECTS_FILE.into(),
    };
    let path = out.join(MANIFEST_FILE);
    formats::write_json(&manifest, &path)?;
    Ok(path)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::File {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn read_annotations(dir: &Path) -> Result<Vec<AnnotationRecord>> {
    let records: Vec<AnnotationRecord> = read_jsonl(&dir.join(ANNOTATIONS_FILE))?;
    if let Some(r) = records.iter().find(|r| r.schema_version != SCHEMA_VERSION) {
        return Err(Error::Format(format!(
            "sample `{}` has schema_version \"{}\", expected \"{SCHEMA_VERSION}\"",
            r.sample_id, r.schema_version
        )));
    }
    Ok(records)
}

pub fn read_rejects(dir: &Path) -> Result<Vec<RejectRecord>> {
    read_jsonl(&dir.join(REJECTS_FILE))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    formats::read_json(&dir.join(MANIFEST_FILE))
}

/// Renders every person of `people` jointly and applies the occlusion mask.
pub fn render_scene(spec: &BodyModelSpec, people: &[PersonRecord], occlusion: &MaskImage) -> Result<DepthMap> {
    let meshes = people
        .iter()
        .map(|p| spec.forward(&p.theta, &ShapeParams { betas: p.beta.clone() }))
        .collect::<posegen_core::Result<Vec<_>>>()?;
    let scene: Vec<_> = meshes.iter().zip(people).map(|(m, p)| (m, &p.camera)).collect();
    let depth = render_depth_multi(&scene, occlusion.width, occlusion.height)?;
    Ok(apply_occlusion(&depth, occlusion)?)
}

/// Re-renders a record from its stored parameters and mask.
pub fn rerender(spec: &BodyModelSpec, record: &AnnotationRecord) -> Result<DepthMap> {
    let mask = rle::decode(&record.occlusion_rle, posegen_core::compose::UNION_LABEL)?;
    if [mask.width, mask.height] != record.depth_size {
        return Err(Error::Format(format!(
            "sample `{}`: occlusion mask is {}x{} but depth_size is {:?}",
            record.sample_id, mask.width, mask.height, record.depth_size
        )));
    }
    render_scene(spec, &record.people(), &mask)
}

/// Whether the stored depth map equals the re-rendered one bit for bit.
pub fn verify_depth_round_trip(spec: &BodyModelSpec, dir: &Path, record: &AnnotationRecord) -> Result<bool> {
    let stored = formats::read_depth_bin(&dir.join(&record.depth))?;
    let again = rerender(spec, record)?;
    Ok(stored.width == again.width
        && stored.height == again.height
        && stored.data.iter().zip(&again.data).all(|(a, b)| a.to_bits() == b.to_bits()))
}
