//! Evaluation of predicted joints against ground truth.
//!
//! Inputs are JSONL files of [`EvalRecord`], matched by `sample_id`. The
//! report has one [`SampleReport`] line per sample followed by a
//! [`Summary`] line.

use std::collections::BTreeMap;
use std::path::Path;

use posegen_core::eval::{mpjpe, pa_mpjpe, pck, torso_threshold, Keypoints2D, TorsoJoints};
use posegen_core::{Joints3D, Point2, Point3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_TORSO_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    /// Meters.
    pub joints3d: Vec<Point3>,
    /// Pixels.
    #[serde(default)]
    pub keypoints2d: Option<Vec<Point2>>,
    #[serde(default)]
    pub visibility: Option<Vec<bool>>,
}

/// Contents of the `--joints` file: either a bare array of joint indices or
/// an object with optional `indices` and `torso`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JointSelection {
    #[serde(default)]
    pub indices: Option<Vec<usize>>,
    /// Indices into the full keypoint list; enables the torso-relative PCK
    /// threshold.
    #[serde(default)]
    pub torso: Option<TorsoJoints>,
}

impl JointSelection {
    pub fn read(path: &Path) -> Result<Self> {
        let v: serde_json::Value = crate::formats::read_json(path)?;
        if v.is_array() {
            let indices: Vec<usize> = serde_json::from_value(v).map_err(|e| Error::from(e).context(path))?;
            return Ok(Self {
                indices: Some(indices),
                torso: None,
            });
        }
        serde_json::from_value(v).map_err(|e| Error::from(e).context(path))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Fixed PCK threshold, used when the torso threshold is unavailable.
    pub pck_thresh: Option<f64>,
    pub torso_factor: f64,
    pub selection: JointSelection,
    pub root_aligned: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            pck_thresh: None,
            torso_factor: DEFAULT_TORSO_FACTOR,
            selection: JointSelection::default(),
            root_aligned: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Torso,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub sample_id: String,
    pub mpjpe_mm: f64,
    /// `null` when the joints are too degenerate to align.
    pub pa_mpjpe_mm: Option<f64>,
    pub pck: Option<f64>,
    pub threshold_px: Option<f64>,
    pub threshold_source: Option<ThresholdSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub summary: bool,
    pub samples: usize,
    pub root_aligned: bool,
    pub mean_mpjpe_mm: Option<f64>,
    pub mean_pa_mpjpe_mm: Option<f64>,
    pub mean_pck: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub samples: Vec<SampleReport>,
    pub summary: Summary,
}

/// Sample ids present in only one of the two files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMismatch {
    pub only_in_pred: Vec<String>,
    pub only_in_gt: Vec<String>,
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::File {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

fn index_by_id(records: &[EvalRecord], what: &str) -> Result<BTreeMap<String, EvalRecord>> {
    let mut map = BTreeMap::new();
    for r in records {
        if map.insert(r.sample_id.clone(), r.clone()).is_some() {
            return Err(Error::Invalid(format!("duplicate sample id `{}` in {what}", r.sample_id)));
        }
    }
    Ok(map)
}

pub fn id_mismatch(pred: &[EvalRecord], gt: &[EvalRecord]) -> Option<IdMismatch> {
    let p: std::collections::BTreeSet<&str> = pred.iter().map(|r| r.sample_id.as_str()).collect();
    let g: std::collections::BTreeSet<&str> = gt.iter().map(|r| r.sample_id.as_str()).collect();
    let m = IdMismatch {
        only_in_pred: p.difference(&g).map(|s| s.to_string()).collect(),
        only_in_gt: g.difference(&p).map(|s| s.to_string()).collect(),
    };
    (!m.only_in_pred.is_empty() || !m.only_in_gt.is_empty()).then_some(m)
}

fn pick<T: Copy>(v: &[T], idx: &Option<Vec<usize>>, what: &str, id: &str) -> Result<Vec<T>> {
    match idx {
        None => Ok(v.to_vec()),
        Some(ix) => ix
            .iter()
            .map(|&i| {
                v.get(i).copied().ok_or_else(|| {
                    Error::Invalid(format!("sample `{id}`: {what} index {i} out of range ({} joints)", v.len()))
                })
            })
            .collect(),
    }
}

fn keypoints(r: &EvalRecord) -> Result<Option<Keypoints2D>> {
    let Some(points) = &r.keypoints2d else { return Ok(None) };
    let visibility = r.visibility.clone().unwrap_or_else(|| vec![true; points.len()]);
    let k = Keypoints2D {
        points: points.clone(),
        visibility,
    };
    k.validate()
        .map_err(|e| Error::Invalid(format!("sample `{}`: {e}", r.sample_id)))?;
    Ok(Some(k))
}

fn evaluate_one(pred: &EvalRecord, gt: &EvalRecord, opts: &EvalOptions) -> Result<SampleReport> {
    let id = &gt.sample_id;
    let ix = &opts.selection.indices;
    let p3 = Joints3D {
        joints: pick(&pred.joints3d, ix, "joints3d", id)?,
    };
    let g3 = Joints3D {
        joints: pick(&gt.joints3d, ix, "joints3d", id)?,
    };
    let err = |e: posegen_core::Error| Error::Invalid(format!("sample `{id}`: {e}"));
    let mpjpe_mm = mpjpe(&p3, &g3, opts.root_aligned).map_err(err)?;
    let pa_mpjpe_mm = pa_mpjpe(&p3, &g3).ok();

    let (mut pck_value, mut threshold_px, mut threshold_source) = (None, None, None);
    if let (Some(pk), Some(gk)) = (keypoints(pred)?, keypoints(gt)?) {
        let torso = opts
            .selection
            .torso
            .as_ref()
            .and_then(|t| torso_threshold(&gk, t, opts.torso_factor));
        let thr = match (torso, opts.pck_thresh) {
            (Some(t), _) => Some((t, ThresholdSource::Torso)),
            (None, Some(t)) => Some((t, ThresholdSource::Fixed)),
            (None, None) => None,
        };
        if let Some((t, src)) = thr {
            let sub = |k: &Keypoints2D| -> Result<Keypoints2D> {
                Ok(Keypoints2D {
                    points: pick(&k.points, ix, "keypoints2d", id)?,
                    visibility: pick(&k.visibility, ix, "visibility", id)?,
                })
            };
            pck_value = Some(pck(&sub(&pk)?, &sub(&gk)?, t).map_err(err)?);
            threshold_px = Some(t);
            threshold_source = Some(src);
        }
    }
    Ok(SampleReport {
        sample_id: id.clone(),
        mpjpe_mm,
        pa_mpjpe_mm,
        pck: pck_value,
        threshold_px,
        threshold_source,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Evaluates every ground-truth sample, in ground-truth order. Id mismatches
/// are an error; see [`id_mismatch`] for the details.
pub fn evaluate(pred: &[EvalRecord], gt: &[EvalRecord], opts: &EvalOptions) -> Result<Report> {
    if let Some(m) = id_mismatch(pred, gt) {
        return Err(Error::Invalid(format!(
            "sample ids differ: only in predictions {:?}, only in ground truth {:?}",
            m.only_in_pred, m.only_in_gt
        )));
    }
    let preds = index_by_id(pred, "predictions")?;
    index_by_id(gt, "ground truth")?;
    let samples = gt
        .iter()
        .map(|g| evaluate_one(&preds[&g.sample_id], g, opts))
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary {
        summary: true,
        samples: samples.len(),
        root_aligned: opts.root_aligned,
        mean_mpjpe_mm: mean(samples.iter().map(|s| s.mpjpe_mm)),
        mean_pa_mpjpe_mm: mean(samples.iter().filter_map(|s| s.pa_mpjpe_mm)),
        mean_pck: mean(samples.iter().filter_map(|s| s.pck)),
    };
    Ok(Report { samples, summary })
}

impl Report {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("report serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.summary).expect("report serializes"));
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, j: Vec<Point3>, k: Option<Vec<Point2>>) -> EvalRecord {
        EvalRecord {
            sample_id: id.into(),
            joints3d: j,
            keypoints2d: k,
            visibility: None,
        }
    }

    fn joints() -> Vec<Point3> {
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    }

    #[test]
    fn identical_inputs() {
        let kp = Some(vec![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]]);
        let r = vec![rec("a", joints(), kp)];
        let opts = EvalOptions {
            pck_thresh: Some(5.0),
            ..Default::default()
        };
        let rep = evaluate(&r, &r, &opts).unwrap();
        assert_eq!(rep.samples[0].mpjpe_mm, 0.0);
        assert!(rep.samples[0].pa_mpjpe_mm.unwrap() < 1e-9);
        assert_eq!(rep.samples[0].pck, Some(1.0));
        assert_eq!(rep.samples[0].threshold_source, Some(ThresholdSource::Fixed));
        assert_eq!(rep.summary.mean_pck, Some(1.0));
        assert_eq!(rep.to_jsonl().lines().count(), 2);
    }

    #[test]
    fn mismatched_ids() {
        let p = vec![rec("a", joints(), None), rec("b", joints(), None)];
        let g = vec![rec("a", joints(), None), rec("c", joints(), None)];
        let m = id_mismatch(&p, &g).unwrap();
        assert_eq!(m.only_in_pred, vec!["b"]);
        assert_eq!(m.only_in_gt, vec!["c"]);
        assert!(evaluate(&p, &g, &EvalOptions::default()).is_err());
    }

    #[test]
    fn torso_threshold_takes_precedence() {
        let kp = vec![[0.0, 0.0], [10.0, 0.0], [0.0, 20.0], [10.0, 20.0]];
        let mut pk = kp.clone();
        pk[0] = [11.0, 0.0];
        let opts = EvalOptions {
            pck_thresh: Some(100.0),
            selection: JointSelection {
                indices: None,
                torso: Some(TorsoJoints {
                    left_shoulder: 0,
                    right_shoulder: 1,
                    left_hip: 2,
                    right_hip: 3,
                }),
            },
            ..Default::default()
        };
        let rep = evaluate(&[rec("a", joints(), Some(pk))], &[rec("a", joints(), Some(kp))], &opts).unwrap();
        assert_eq!(rep.samples[0].threshold_px, Some(10.0));
        assert_eq!(rep.samples[0].threshold_source, Some(ThresholdSource::Torso));
        assert_eq!(rep.samples[0].pck, Some(0.75));
    }

    #[test]
    fn subset_selects_joints() {
        let mut p = joints();
        p[3] = [0.0, 0.0, 2.0];
        let opts = EvalOptions {
            selection: JointSelection {
                indices: Some(vec![0, 1, 2]),
                torso: None,
            },
            ..Default::default()
        };
        let rep = evaluate(&[rec("a", p.clone(), None)], &[rec("a", joints(), None)], &opts).unwrap();
        assert_eq!(rep.samples[0].mpjpe_mm, 0.0);
        let full = evaluate(&[rec("a", p, None)], &[rec("a", joints(), None)], &EvalOptions::default()).unwrap();
        assert_eq!(full.samples[0].mpjpe_mm, 250.0);
        let bad = EvalOptions {
            selection: JointSelection {
                indices: Some(vec![9]),
                torso: None,
            },
            ..Default::default()
        };
        assert!(evaluate(&[rec("a", joints(), None)], &[rec("a", joints(), None)], &bad).is_err());
    }
}
