pub mod cv;
pub mod episode_store;
pub mod error;
pub mod fairness;
pub mod features;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod policy;
pub mod synth;

pub use error::{Error, Result};
