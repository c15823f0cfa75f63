//! Targeted deep architectures.
//!
//! Debiases plug-in estimates computed from small neural networks by
//! projecting an influence function onto per-sample loss gradients of a
//! chosen parameter subset and nudging that subset until the projected
//! influence function has (near) zero empirical mean.

pub mod ate;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod survival;
pub mod targeting;

pub use error::{Result, TdaError};
