pub mod approx;
pub mod data;
pub mod error;
pub mod graph;
pub mod kv;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod rng;
pub mod spatial;
pub mod temporal;

pub use error::{Error, Result};
