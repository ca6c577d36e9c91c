//! Multimodal adversarially learned inference at desk scale.
//!
//! The crate trains per-modality encoders and decoders against a factorized
//! ensemble of binary density-ratio discriminators and checks the pieces
//! against closed-form Gaussian oracles.

pub mod cli;
pub mod data;
pub mod diffnet;
pub mod error;
pub mod eval;
pub mod gaussians;
pub mod kv;
pub mod model;
pub mod oracles;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use rng::Rng;
