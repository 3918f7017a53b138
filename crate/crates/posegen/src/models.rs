//! Body-model and pose-prior checkpoints in the container format, plus the
//! bundled toy assets.

use std::path::Path;

use posegen_core::pose_prior::{Activation, DenseLayer, PoseFeatureEncoding, PosePriorVAE, DEFAULT_LEAKY_SLOPE};
use posegen_core::{BodyModelParts, BodyModelSpec, Point3};
use serde_json::{json, Value};

use crate::container::{Array, Container};
use crate::{Error, Result};

pub const BODY_MODEL_KIND: &str = "body_model";
pub const POSE_PRIOR_KIND: &str = "pose_prior";
pub const TOY_BODY_MODEL_NAME: &str = "toy-stick-3";
pub const TOY_POSE_PRIOR_NAME: &str = "toy-prior-8";

/// The 12-vertex, 3-joint toy body model.
pub static TOY_BODY_MODEL: &[u8] = include_bytes!("../assets/toy_body_model.zip");
/// The toy pose prior matching [`TOY_BODY_MODEL`].
pub static TOY_POSE_PRIOR: &[u8] = include_bytes!("../assets/toy_pose_prior.zip");

pub fn bundled_body_model() -> BodyModelSpec {
    body_model_from_container(&Container::from_bytes(TOY_BODY_MODEL).expect("bundled model container"))
        .expect("bundled body model")
}

pub fn bundled_pose_prior() -> PosePriorVAE {
    pose_prior_from_container(&Container::from_bytes(TOY_POSE_PRIOR).expect("bundled prior container"))
        .expect("bundled pose prior")
}

fn points(v: &[f64]) -> Vec<Point3> {
    v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

pub fn body_model_to_container(parts: &BodyModelParts, name: &str) -> Container {
    let v = parts.template.len();
    let k = parts.parents.len();
    let b = parts.num_betas;
    let p = if v == 0 { 0 } else { parts.pose_dirs.len() / (v * 3) };
    let mut c = Container::new(BODY_MODEL_KIND);
    c.insert("v_template", Array::f64(vec![v, 3], parts.template.iter().flatten().copied().collect()));
    c.insert("shapedirs", Array::f64(vec![v, 3, b], parts.shape_dirs.clone()));
    c.insert("posedirs", Array::f64(vec![v, 3, p], parts.pose_dirs.clone()));
    c.insert("J_regressor", Array::f64(vec![k, v], parts.joint_regressor.clone()));
    c.insert("weights", Array::f64(vec![v, k], parts.skinning_weights.clone()));
    c.insert("kintree", Array::i64(vec![k], parts.parents.clone()));
    c.insert(
        "faces",
        Array::i64(vec![parts.faces.len(), 3], parts.faces.iter().flatten().map(|&i| i as i64).collect()),
    );
    c.meta.insert("name".into(), name.into());
    c.meta.insert("vertex_count".into(), v.into());
    c.meta.insert("joint_count".into(), k.into());
    c.meta.insert("num_betas".into(), b.into());
    c.meta.insert("num_pose_features".into(), p.into());
    c
}

/// Validates every body-model invariant while loading.
pub fn body_model_from_container(c: &Container) -> Result<BodyModelSpec> {
    if c.kind != BODY_MODEL_KIND {
        return Err(Error::Format(format!("expected a {BODY_MODEL_KIND} container, found `{}`", c.kind)));
    }
    let (shape, template) = c.floats("v_template", &[None, Some(3)])?;
    let v = shape[0];
    let (shape, shape_dirs) = c.floats("shapedirs", &[Some(v), Some(3), None])?;
    let num_betas = shape[2];
    let (_, pose_dirs) = c.floats("posedirs", &[Some(v), Some(3), None])?;
    let (shape, joint_regressor) = c.floats("J_regressor", &[None, Some(v)])?;
    let k = shape[0];
    let (_, skinning_weights) = c.floats("weights", &[Some(v), Some(k)])?;
    let (_, parents) = c.ints("kintree", &[Some(k)])?;
    let (_, faces) = c.ints("faces", &[None, Some(3)])?;
    let faces = faces
        .chunks_exact(3)
        .map(|f| {
            let mut out = [0u32; 3];
            for (o, &i) in out.iter_mut().zip(f) {
                *o = u32::try_from(i).map_err(|_| Error::Format(format!("face index {i} out of range")))?;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let parts = BodyModelParts {
        template: points(&template),
        shape_dirs,
        num_betas,
        pose_dirs,
        joint_regressor,
        skinning_weights,
        parents,
        faces,
    };
    Ok(BodyModelSpec::new(parts)?)
}

pub fn load_body_model(path: &Path) -> Result<BodyModelSpec> {
    body_model_from_container(&Container::read(path)?).map_err(|e| e.context(path))
}

pub fn save_body_model(parts: &BodyModelParts, name: &str, path: &Path) -> Result<()> {
    body_model_to_container(parts, name).write(path)
}

fn activation_name(a: Activation) -> String {
    match a {
        Activation::LeakyRelu(s) => format!("leaky_relu({s})"),
        Activation::Identity => "identity".into(),
    }
}

fn parse_activation(s: &str) -> Result<Activation> {
    let s = s.trim();
    if s == "identity" || s == "linear" {
        return Ok(Activation::Identity);
    }
    if s == "leaky_relu" {
        return Ok(Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE));
    }
    if let Some(arg) = s.strip_prefix("leaky_relu(").and_then(|r| r.strip_suffix(')')) {
        let slope: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad leaky_relu slope in `{s}`")))?;
        return Ok(Activation::LeakyRelu(slope));
    }
    Err(Error::Format(format!("unknown activation `{s}`")))
}

fn encoding_name(e: PoseFeatureEncoding) -> &'static str {
    match e {
        PoseFeatureEncoding::AxisAngle => "axis_angle",
        PoseFeatureEncoding::Rot6d => "rot6d",
    }
}

pub fn pose_prior_to_container(vae: &PosePriorVAE, name: &str) -> Container {
    let mut c = Container::new(POSE_PRIOR_KIND);
    for (prefix, layers) in [("enc", vae.encoder()), ("dec", vae.decoder())] {
        for (i, l) in layers.iter().enumerate() {
            c.insert(format!("{prefix}_W{i}"), Array::f64(vec![l.outputs, l.inputs], l.weights.clone()));
            c.insert(format!("{prefix}_b{i}"), Array::f64(vec![l.outputs], l.bias.clone()));
        }
    }
    let acts = |ls: &[DenseLayer]| ls.iter().map(|l| activation_name(l.activation)).collect::<Vec<_>>();
    c.meta.insert("name".into(), name.into());
    c.meta.insert("latent_dim".into(), vae.latent_dim().into());
    c.meta.insert("pose_joints".into(), vae.pose_joints().into());
    c.meta.insert("pose_feature_encoding".into(), encoding_name(vae.encoding()).into());
    c.meta.insert(
        "activations".into(),
        json!({"encoder": acts(vae.encoder()), "decoder": acts(vae.decoder())}),
    );
    c
}

fn meta_usize(c: &Container, key: &str) -> Result<Option<usize>> {
    match c.meta.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|n| Some(n as usize))
            .ok_or_else(|| Error::Format(format!("manifest meta `{key}` must be a non-negative integer"))),
    }
}

fn layers(c: &Container, prefix: &str, acts: &[String]) -> Result<Vec<DenseLayer>> {
    let mut out = Vec::new();
    for (i, act) in acts.iter().enumerate() {
        let (shape, w) = c.floats(&format!("{prefix}_W{i}"), &[None, None])?;
        let (_, b) = c.floats(&format!("{prefix}_b{i}"), &[Some(shape[0])])?;
        out.push(DenseLayer::new(shape[1], shape[0], w, b, parse_activation(act)?)?);
    }
    if c.arrays.contains_key(&format!("{prefix}_W{}", acts.len())) {
        return Err(Error::Format(format!(
            "{prefix} has more weight arrays than the {} listed activations",
            acts.len()
        )));
    }
    Ok(out)
}

pub fn pose_prior_from_container(c: &Container) -> Result<PosePriorVAE> {
    if c.kind != POSE_PRIOR_KIND {
        return Err(Error::Format(format!("expected a {POSE_PRIOR_KIND} container, found `{}`", c.kind)));
    }
    let latent = meta_usize(c, "latent_dim")?.ok_or_else(|| Error::Format("manifest meta lacks `latent_dim`".into()))?;
    let encoding = match c.meta.get("pose_feature_encoding").and_then(Value::as_str).unwrap_or("axis_angle") {
        "axis_angle" => PoseFeatureEncoding::AxisAngle,
        "rot6d" => PoseFeatureEncoding::Rot6d,
        other => return Err(Error::Format(format!("unknown pose_feature_encoding `{other}`"))),
    };
    let acts = |side: &str| -> Result<Vec<String>> {
        c.meta
            .get("activations")
            .and_then(|a| a.get(side))
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Format(format!("manifest meta lacks activations.{side}")))?
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| Error::Format("activation names must be strings".into()))
            })
            .collect()
    };
    let encoder = layers(c, "enc", &acts("encoder")?)?;
    let decoder = layers(c, "dec", &acts("decoder")?)?;
    let input = encoder.first().map_or(0, |l| l.inputs);
    let pose_joints = match meta_usize(c, "pose_joints")? {
        Some(n) => n,
        None => input / encoding.features_per_joint(),
    };
    Ok(PosePriorVAE::new(encoder, decoder, latent, pose_joints, encoding)?)
}

pub fn load_pose_prior(path: &Path) -> Result<PosePriorVAE> {
    pose_prior_from_container(&Container::read(path)?).map_err(|e| e.context(path))
}

pub fn save_pose_prior(vae: &PosePriorVAE, name: &str, path: &Path) -> Result<()> {
    pose_prior_to_container(vae, name).write(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use posegen_core::toy;

    #[test]
    fn bundled_assets_match_builders() {
        let body = body_model_to_container(&toy::body_model_parts(), TOY_BODY_MODEL_NAME).to_bytes().unwrap();
        assert_eq!(body, TOY_BODY_MODEL);
        let prior = pose_prior_to_container(&toy::pose_prior(), TOY_POSE_PRIOR_NAME).to_bytes().unwrap();
        assert_eq!(prior, TOY_POSE_PRIOR);
        assert_eq!(bundled_body_model(), toy::body_model());
        assert_eq!(bundled_pose_prior(), toy::pose_prior());
    }

    #[test]
    fn activation_names_round_trip() {
        for a in [Activation::Identity, Activation::LeakyRelu(0.2), Activation::LeakyRelu(0.01)] {
            assert_eq!(parse_activation(&activation_name(a)).unwrap(), a);
        }
        assert_eq!(parse_activation("leaky_relu").unwrap(), Activation::LeakyRelu(0.2));
        assert!(parse_activation("relu6").is_err());
    }

    #[test]
    fn invalid_models_are_rejected_on_load() {
        let mut parts = toy::body_model_parts();
        for w in &mut parts.skinning_weights[..3] {
            *w *= 0.8;
        }
        let err = body_model_from_container(&body_model_to_container(&parts, "bad")).unwrap_err();
        assert!(err.to_string().contains("sum to 0.8"), "{err}");

        let mut parts = toy::body_model_parts();
        parts.parents = vec![-1, 2, 1];
        let err = body_model_from_container(&body_model_to_container(&parts, "bad")).unwrap_err();
        assert!(err.to_string().contains("tree"), "{err}");

        let mut c = body_model_to_container(&toy::body_model_parts(), "bad");
        c.arrays.remove("weights");
        assert!(body_model_from_container(&c).unwrap_err().to_string().contains("weights"));

        let mut c = body_model_to_container(&toy::body_model_parts(), "bad");
        c.insert("shapedirs", Array::f64(vec![11, 3, 2], vec![0.0; 66]));
        assert!(body_model_from_container(&c).is_err());
    }

    #[test]
    fn pose_dirs_may_be_empty() {
        let mut parts = toy::body_model_parts();
        parts.pose_dirs.clear();
        let spec = body_model_from_container(&body_model_to_container(&parts, "nopose")).unwrap();
        assert_eq!(spec.num_pose_features(), 0);
    }
}
