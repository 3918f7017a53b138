//! Numerical core for generating pose-rectified synthetic humans.
//!
//! Everything in this crate is a pure function over immutable inputs and
//! only needs an allocator, so it builds without `std`:
//!
//! * [`body_model`]: SMPL-style shape/pose blend shapes, forward kinematics,
//!   linear blend skinning and joint regression.
//! * [`camera`]: weak-perspective projection and the depth channel.
//! * [`depth`]: z-buffered triangle rasterizer producing person depth maps.
//! * [`compose`]: occluder mask union and occlusion masking of depth maps.
//! * [`rle`]: COCO-style run-length mask codec.
//! * [`pose_prior`]: pose-prior VAE forward passes, difficulty gate and
//!   latent-space pose augmentation.
//! * [`eval`]: MPJPE, Procrustes-aligned MPJPE and PCK.
//! * [`losses`]: reprojection and parameter losses for HMR finetuning.
//! * [`toy`]: small deterministic body model and pose prior.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod body_model;
pub mod camera;
pub mod compose;
pub mod depth;
mod error;
pub mod eval;
pub mod losses;
pub mod pose_prior;
pub mod rle;
mod rotation;
pub mod toy;

pub use body_model::{BodyModelParts, BodyModelSpec, Joints3D, Mesh, PoseParams, ShapeParams};
pub use camera::WeakPerspectiveCamera;
pub use compose::MaskImage;
pub use depth::DepthMap;
pub use error::{Error, Result};
pub use rotation::{axis_angle_to_matrix, matrix_to_axis_angle};

/// A point in 3D, meters.
pub type Point3 = [f64; 3];
/// A point in 2D, pixels.
pub type Point2 = [f64; 2];
