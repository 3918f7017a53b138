//! SMPL-style parametric body model.
//!
//! A posed mesh is produced in four stages:
//!
//! 1. shape blend shapes: `v_shaped = template + shape_dirs * betas`
//! 2. rest joints: `J = joint_regressor * v_shaped`
//! 3. pose blend shapes: `v_posed = v_shaped + pose_dirs * vec(R(theta_j) - I)`
//!    over the non-root joints
//! 4. linear blend skinning with the rigid transforms of the kinematic chain.
//!
//! Vertex, joint and basis counts come from the model data; nothing assumes
//! the 6890-vertex / 24-joint / 10-beta SMPL layout.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::rotation::{axis_angle_to_matrix, mat_mul, mat_vec, Mat3, IDENTITY};
use crate::{Error, Point3, Result};

/// Row sums of the skinning weights must be within this of one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

/// Raw arrays of a body model, laid out C row-major as in the container file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BodyModelParts {
    /// `[V][3]`
    pub template: Vec<Point3>,
    /// `[V][3][B]`, flattened.
    pub shape_dirs: Vec<f64>,
    pub num_betas: usize,
    /// `[V][3][P]`, flattened; `P` is `0` or `9 * (K - 1)`.
    pub pose_dirs: Vec<f64>,
    /// `[K][V]`, flattened.
    pub joint_regressor: Vec<f64>,
    /// `[V][K]`, flattened.
    pub skinning_weights: Vec<f64>,
    /// Kinematic tree, `parents[0] == -1`.
    pub parents: Vec<i64>,
    pub faces: Vec<[u32; 3]>,
}

/// A validated body model. Immutable and cheap to share between workers.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyModelSpec {
    parts: BodyModelParts,
    parents: Vec<Option<usize>>,
    num_pose_features: usize,
}

/// Per-joint axis-angle rotations, radians.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoseParams {
    pub global_orient: [f64; 3],
    /// One axis-angle row per non-root joint.
    pub body_pose: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShapeParams {
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[u32; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Joints3D {
    pub joints: Vec<Point3>,
}

impl PoseParams {
    pub fn zeros(body_joints: usize) -> Self {
        Self {
            global_orient: [0.0; 3],
            body_pose: vec![[0.0; 3]; body_joints],
        }
    }

    /// Body pose flattened to `3 * (K - 1)` values, root excluded.
    pub fn body_pose_flat(&self) -> Vec<f64> {
        self.body_pose.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.global_orient.iter().all(|v| v.is_finite())
            && self.body_pose.iter().flatten().all(|v| v.is_finite())
    }
}

impl ShapeParams {
    pub fn zeros(num_betas: usize) -> Self {
        Self {
            betas: vec![0.0; num_betas],
        }
    }
}

impl Mesh {
    /// Checks that every face indexes an existing vertex and is not collapsed
    /// onto a single vertex.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for f in &self.faces {
            if f.iter().any(|&i| i as usize >= n) {
                return Err(Error::InvalidModel(format!(
                    "face {f:?} references a vertex >= {n}"
                )));
            }
            if f[0] == f[1] && f[1] == f[2] {
                return Err(Error::InvalidModel(format!("degenerate face {f:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Rigid {
    rot: Mat3,
    trans: Point3,
}

impl Rigid {
    const IDENTITY: Rigid = Rigid {
        rot: IDENTITY,
        trans: [0.0; 3],
    };

    fn is_identity(&self) -> bool {
        self.rot == IDENTITY && self.trans == [0.0; 3]
    }

    /// Rotation by `rot` about the point `center`.
    fn about(rot: Mat3, center: &Point3) -> Rigid {
        if rot == IDENTITY {
            return Rigid::IDENTITY;
        }
        let rc = mat_vec(&rot, center);
        Rigid {
            rot,
            trans: [center[0] - rc[0], center[1] - rc[1], center[2] - rc[2]],
        }
    }

    fn then_local(&self, local: &Rigid) -> Rigid {
        if local.is_identity() {
            return *self;
        }
        if self.is_identity() {
            return *local;
        }
        let rt = mat_vec(&self.rot, &local.trans);
        Rigid {
            rot: mat_mul(&self.rot, &local.rot),
            trans: [
                rt[0] + self.trans[0],
                rt[1] + self.trans[1],
                rt[2] + self.trans[2],
            ],
        }
    }

    fn apply(&self, p: &Point3) -> Point3 {
        let r = mat_vec(&self.rot, p);
        [r[0] + self.trans[0], r[1] + self.trans[1], r[2] + self.trans[2]]
    }
}

impl BodyModelSpec {
    /// Validates the raw arrays and builds a model.
    pub fn new(parts: BodyModelParts) -> Result<Self> {
        let v = parts.template.len();
        let k = parts.parents.len();
        if v == 0 {
            return Err(Error::InvalidModel("model has no vertices".into()));
        }
        if k == 0 {
            return Err(Error::InvalidModel("model has no joints".into()));
        }
        check_len("shape_dirs", v * 3 * parts.num_betas, parts.shape_dirs.len())?;
        check_len("joint_regressor", k * v, parts.joint_regressor.len())?;
        check_len("skinning_weights", v * k, parts.skinning_weights.len())?;

        let num_pose_features = if parts.pose_dirs.is_empty() {
            0
        } else {
            let p = 9 * (k - 1);
            check_len("pose_dirs", v * 3 * p, parts.pose_dirs.len())?;
            p
        };

        let finite = parts.template.iter().flatten().all(|x| x.is_finite())
            && parts.shape_dirs.iter().all(|x| x.is_finite())
            && parts.pose_dirs.iter().all(|x| x.is_finite())
            && parts.joint_regressor.iter().all(|x| x.is_finite())
            && parts.skinning_weights.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("body model arrays"));
        }

        if let Some(bad) = parts.joint_regressor.iter().position(|&w| w < 0.0) {
            return Err(Error::InvalidModel(format!(
                "joint_regressor[{}][{}] is negative",
                bad / v,
                bad % v
            )));
        }
        for (i, row) in parts.skinning_weights.chunks_exact(k).enumerate() {
            if row.iter().any(|&w| w < 0.0) {
                return Err(Error::InvalidModel(format!(
                    "skinning weights of vertex {i} contain a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(Error::InvalidModel(format!(
                    "skinning weights of vertex {i} sum to {sum}, expected 1"
                )));
            }
        }

        let parents = parse_kintree(&parts.parents)?;
        Mesh {
            vertices: parts.template.clone(),
            faces: parts.faces.clone(),
        }
        .validate()?;

        Ok(Self {
            parts,
            parents,
            num_pose_features,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.parts.template.len()
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    /// Number of non-root joints, i.e. rows of [`PoseParams::body_pose`].
    pub fn body_joint_count(&self) -> usize {
        self.joint_count() - 1
    }

    pub fn num_betas(&self) -> usize {
        self.parts.num_betas
    }

    /// `P`, zero when pose blend shapes are disabled.
    pub fn num_pose_features(&self) -> usize {
        self.num_pose_features
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parts(&self) -> &BodyModelParts {
        &self.parts
    }

    pub fn template(&self) -> &[Point3] {
        &self.parts.template
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.parts.faces
    }

    pub fn into_parts(self) -> BodyModelParts {
        self.parts
    }

    fn check_params(&self, pose: &PoseParams, shape: &ShapeParams) -> Result<()> {
        check_len("betas", self.num_betas(), shape.betas.len())?;
        check_len("body_pose rows", self.body_joint_count(), pose.body_pose.len())?;
        if !pose.is_finite() {
            return Err(Error::NonFinite("pose"));
        }
        if !shape.betas.iter().all(|b| b.is_finite()) {
            return Err(Error::NonFinite("betas"));
        }
        Ok(())
    }

    /// Template deformed by the shape blend shapes only.
    pub fn shaped_template(&self, shape: &ShapeParams) -> Result<Vec<Point3>> {
        check_len("betas", self.num_betas(), shape.betas.len())?;
        let b = self.num_betas();
        let mut verts = self.parts.template.clone();
        for (i, v) in verts.iter_mut().enumerate() {
            for (c, coord) in v.iter_mut().enumerate() {
                let dirs = &self.parts.shape_dirs[(i * 3 + c) * b..(i * 3 + c + 1) * b];
                for (d, &beta) in dirs.iter().zip(&shape.betas) {
                    // zero coefficients are skipped so the rest shape is reproduced bit-exactly
                    if beta != 0.0 {
                        *coord += d * beta;
                    }
                }
            }
        }
        Ok(verts)
    }

    /// Posed mesh `M(theta, beta)`.
    pub fn forward(&self, pose: &PoseParams, shape: &ShapeParams) -> Result<Mesh> {
        self.check_params(pose, shape)?;
        let k = self.joint_count();

        let mut verts = self.shaped_template(shape)?;
        let rest_joints = regress(&self.parts.joint_regressor, &verts, k);

        let rotations: Vec<Mat3> = core::iter::once(&pose.global_orient)
            .chain(pose.body_pose.iter())
            .map(|r| axis_angle_to_matrix(*r))
            .collect();

        if self.num_pose_features > 0 {
            let mut features = Vec::with_capacity(self.num_pose_features);
            for rot in &rotations[1..] {
                for (i, row) in rot.iter().enumerate() {
                    for (j, x) in row.iter().enumerate() {
                        features.push(x - IDENTITY[i][j]);
                    }
                }
            }
            let p = self.num_pose_features;
            for (i, v) in verts.iter_mut().enumerate() {
                for (c, coord) in v.iter_mut().enumerate() {
                    let dirs = &self.parts.pose_dirs[(i * 3 + c) * p..(i * 3 + c + 1) * p];
                    for (d, &f) in dirs.iter().zip(&features) {
                        if f != 0.0 {
                            *coord += d * f;
                        }
                    }
                }
            }
        }

        // Rest-relative transform of each joint: the chain of rotations, each
        // taken about its joint's rest position.
        let mut transforms: Vec<Rigid> = Vec::with_capacity(k);
        for j in 0..k {
            let local = Rigid::about(rotations[j], &rest_joints[j]);
            let world = match self.parents[j] {
                None => local,
                Some(p) => transforms[p].then_local(&local),
            };
            transforms.push(world);
        }

        let weights = &self.parts.skinning_weights;
        for (i, v) in verts.iter_mut().enumerate() {
            let rest = *v;
            let mut delta = [0.0; 3];
            let mut moved = false;
            for (t, &w) in transforms.iter().zip(&weights[i * k..(i + 1) * k]) {
                if w == 0.0 || t.is_identity() {
                    continue;
                }
                let p = t.apply(&rest);
                for c in 0..3 {
                    delta[c] += w * (p[c] - rest[c]);
                }
                moved = true;
            }
            if moved {
                for c in 0..3 {
                    v[c] += delta[c];
                }
            }
        }

        Ok(Mesh {
            vertices: verts,
            faces: self.parts.faces.clone(),
        })
    }

    /// `X = W * vertices`.
    pub fn regress_joints(&self, mesh: &Mesh) -> Result<Joints3D> {
        check_len("mesh vertices", self.vertex_count(), mesh.vertices.len())?;
        Ok(Joints3D {
            joints: regress(&self.parts.joint_regressor, &mesh.vertices, self.joint_count()),
        })
    }

    /// Convenience for `regress_joints(forward(pose, shape))`.
    pub fn posed_joints(&self, pose: &PoseParams, shape: &ShapeParams) -> Result<Joints3D> {
        let mesh = self.forward(pose, shape)?;
        self.regress_joints(&mesh)
    }
}

fn regress(regressor: &[f64], verts: &[Point3], k: usize) -> Vec<Point3> {
    let v = verts.len();
    (0..k)
        .map(|j| {
            let mut acc = [0.0; 3];
            for (w, p) in regressor[j * v..(j + 1) * v].iter().zip(verts) {
                if *w != 0.0 {
                    acc[0] += w * p[0];
                    acc[1] += w * p[1];
                    acc[2] += w * p[2];
                }
            }
            acc
        })
        .collect()
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Parent indices must form a tree rooted at joint 0 with `parent < child`,
/// which rules out cycles.
fn parse_kintree(raw: &[i64]) -> Result<Vec<Option<usize>>> {
    raw.iter()
        .enumerate()
        .map(|(j, &p)| match (j, p) {
            (0, -1) => Ok(None),
            (0, _) => Err(Error::InvalidModel(format!(
                "kintree[0] must be -1 (root), got {p}"
            ))),
            (_, p) if p >= 0 && (p as usize) < j => Ok(Some(p as usize)),
            (_, p) => Err(Error::InvalidModel(format!(
                "kintree is not a tree: joint {j} has parent {p} (parents must precede children)"
            ))),
        })
        .collect()
}
