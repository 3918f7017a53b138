//! Synthetic human data generation around the `posegen-core` numerics.
//!
//! * [`container`]: the zip+JSON array container used for model checkpoints.
//! * [`models`]: body-model and pose-prior checkpoints, and the bundled toy
//!   assets.
//! * [`formats`]: depth-map files, PNG images and JSON helpers.
//! * [`gateway`]: the black-box backend contract, its wire protocol, an HTTP
//!   client and server, and a deterministic mock.
//! * [`pipeline`]: the generate-score-augment-render-compose loop and dataset
//!   emission.
//! * [`report`]: evaluation of predictions against ground truth.

pub mod container;
mod error;
pub mod formats;
pub mod gateway;
pub mod models;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
