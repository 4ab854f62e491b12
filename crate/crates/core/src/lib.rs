//! Equivariant neural fields for operator learning on point clouds.
//!
//! An encoder fits per-sample latent features on a fixed grid of anchor
//! points by a few gradient steps on an input-reconstruction loss. A
//! decoder appends global parameters to every latent, mixes latents with
//! self-attention and evaluates a translation-equivariant cross-attention
//! field at arbitrary query coordinates.

pub mod autodiff;
mod binio;
pub mod cli;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod field;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{FieldOperator, ModelConfig};
pub use tensor::Tensor;
