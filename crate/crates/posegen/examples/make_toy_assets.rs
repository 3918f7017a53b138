//! Regenerates `assets/toy_*.zip` from the builders in `posegen_core::toy`.
//!
//! cargo run -p posegen --example make_toy_assets

use std::path::Path;

fn main() -> posegen::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let body = posegen::models::body_model_to_container(&posegen_core::toy::body_model_parts(), posegen::models::TOY_BODY_MODEL_NAME);
    body.write(&dir.join("toy_body_model.zip"))?;
    let prior = posegen::models::pose_prior_to_container(&posegen_core::toy::pose_prior(), posegen::models::TOY_POSE_PRIOR_NAME);
    prior.write(&dir.join("toy_pose_prior.zip"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
