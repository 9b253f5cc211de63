//! Functional-map refinement toolkit.
//!
//! The crate covers the full refinement stack: triangle-mesh ingestion and
//! Laplace–Beltrami eigenanalysis ([`mesh`], [`laplace`], [`spectral`]),
//! spectral shape descriptors ([`descriptors`]), functional-map algebra with
//! point-to-point extraction and evaluation metrics ([`fmap`], [`metrics`]),
//! a conditional EDM denoiser trained on map matrices treated as images
//! ([`diffusion`]), and a deterministic guided sampler that refines initial
//! maps at inference time ([`sampler`]).

pub mod descriptors;
pub mod diffusion;
pub mod error;
pub mod fmap;
pub mod geodesics;
pub mod laplace;
pub mod mesh;
pub mod metrics;
pub mod sampler;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
