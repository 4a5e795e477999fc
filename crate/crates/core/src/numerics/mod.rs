//! Dense linear algebra, a seeded RNG and reverse-mode autodiff.

mod matrix;
mod rng;
mod tape;

pub use matrix::{layer_norm, Matrix};
pub(crate) use matrix::softmax_in_place;
pub use rng::Rng;
pub use tape::{Gradients, Tape, Var};
