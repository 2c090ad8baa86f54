//! Tensor values, the differentiable primitive set, Adam and a
//! finite-difference oracle.

mod adam;
mod adjacency;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use adjacency::Adjacency;
pub use gradcheck::{finite_difference, max_relative_error, relative_error, ridders_derivative, DEFAULT_STEP};
pub use params::{ParamId, ParamStore};
pub use tape::{Attrs, Primitive, Tape, Var, DEFAULT_LOG_FLOOR};
pub use tensor::Tensor;
