//! Minimal dense neural-network machinery: a parameter store, a reverse-mode
//! tape over `f64` batch matrices, and an Adam optimizer.
//!
//! Everything runs in `f64` so analytic gradients can be validated against
//! central finite differences at tight tolerances. Checkpoints round-trip
//! through little-endian `f32` (see [`params`]).

pub mod optim;
pub mod params;
pub mod tape;

pub use optim::Adam;
pub use params::{GradStore, ParamId, ParamStore};
pub use tape::{Tape, Var};
