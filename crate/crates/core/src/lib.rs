//! Acoustic topic-model based selection of training data.
//!
//! Frames are quantized against a diagonal GMM into acoustic words, each
//! utterance becomes a tf-idf weighted bag of words, an LDA model maps
//! documents to topic posteriors, and pool utterances are picked
//! round-robin against k-means centroids of the in-domain posteriors.

pub mod cluster;
pub mod config;
pub mod corpus;
pub mod docmodel;
pub mod error;
pub mod lda;
pub mod pipeline;
pub mod quantizer;
pub mod report;
pub mod selector;
pub mod special;
pub mod synth;
mod util;

pub use error::{Error, Result};
pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, sweep_lambda, PipelineOutcome};
