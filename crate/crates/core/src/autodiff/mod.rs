//! Reverse-mode differentiation substrate: matrices, the tape, parameters and Adam.

mod adam;
mod matrix;
mod params;
mod tape;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use params::{Param, ParamId, ParamStore};
pub use tape::{Pointwise, Tape, TapeTensor};
