//! Training-free, confidence-gated scene text recognition engine.
//!
//! The pipeline turns a binary text segmentation mask into ranked text
//! blocks ([`localizer`]), asks a lightweight recognizer to read the full
//! image and each block, compares both readings with a scene caption
//! ([`lexsem`], [`gate`]) and sends the image to an expensive end-to-end
//! recognizer only when the combined confidence falls below a threshold.
//! All models sit behind the traits in [`adapters`]; the replay backend
//! makes every run deterministic and model-free. [`harness`] evaluates
//! whole manifests.

pub mod adapters;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod gate;
pub mod harness;
pub mod lexsem;
pub mod localizer;
pub mod maskio;

pub use error::{Error, Result};
