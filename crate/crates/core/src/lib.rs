//! Weak-attention suppression (WAS) for multi-head self-attention.
//!
//! WAS thresholds every query's attention distribution at
//! `θ = 1/L − γ·δ`, where `δ` is the sample deviation of the row around the
//! uniform value `1/L`, and re-normalizes the surviving probabilities by a
//! second softmax over logits with the suppressed positions set to `−∞`.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, a seeded RNG and a tape-based reverse-mode
//!   autodiff engine.
//! - [`attention`]: the threshold, row suppression, scaled dot-product and
//!   multi-head attention with WAS.
//! - [`encoder`]: a toy transformer acoustic encoder, synthetic corpus,
//!   tri-stage learning-rate schedule, Adam training loop and checkpoints.
//! - [`analysis`]: suppression statistics `f(j)`, `fᵢ(j)` and per-layer
//!   fractions, with CSV/SVG export.
//! - [`oracle`]: independent reference implementations used by the
//!   verification battery.

pub mod analysis;
pub mod attention;
pub mod encoder;
mod error;
pub mod numerics;
pub mod oracle;

pub use error::{Result, WasError};
