//! Radiomics feature extraction and radiomic-conditioned prompt
//! classification for lung nodule malignancy.
//!
//! The library has two halves. The imaging half loads volumetric nodule
//! images with annotation masks, resamples them to isotropic spacing, crops
//! around the nodule, and extracts a fixed-order feature vector (first-order
//! statistics, 2D shape, and five texture-matrix families over a bank of
//! filtered channels). The learning half trains a small prompt head: a
//! frozen text encoder maps learnable context tokens plus a class token to an
//! embedding, a bottleneck MetaNet conditions the context on each instance's
//! radiomics vector, and classification is a temperature-scaled cosine
//! softmax against precomputed image embeddings.
//!
//! Everything is deterministic for a fixed seed: the crate ships its own
//! splittable PRNG and all serialized outputs are byte-stable.

pub mod config;
pub mod discretize;
pub mod encoders;
pub mod error;
pub mod filters;
pub mod grid;
pub mod metrics;
pub mod preprocess;
pub mod prompt;
pub mod radiomics;
pub mod rng;
pub mod synth;
pub mod texture;
pub mod trainer;
pub mod volume;

pub use error::{Error, Result};
