//! Training-free non-rigid editing on small diffusion backends.
//!
//! The pipeline fits the target prompt embedding to the input, inverts the input to
//! noise with DDIM (optionally with per-step null-embedding tuning), then samples back
//! with the source embedding on the early steps and an interpolated embedding after.

pub mod backends;
pub mod checkpoint;
pub mod data;
pub mod embedding;
pub mod embedopt;
pub mod error;
pub mod eval;
pub mod inversion;
pub mod optim;
pub mod pipeline;
pub mod sampling;
pub mod schedule;

pub use error::{Error, Result};
