//! Patient travel-distance prediction pipeline: claims-shaped ingestion,
//! residence estimation, 25-feature engineering, dataset preparation, a 1-D
//! convolutional network plus conventional baselines, multiclass evaluation,
//! and Integrated Gradients attribution — all runnable on the bundled
//! synthetic-corpus generator.

pub mod attribution;
pub mod baselines;
pub mod data_model;
pub mod dataset;
pub mod error;
pub mod features;
pub mod geo;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod synth;

pub use error::{CoreError, Result};
