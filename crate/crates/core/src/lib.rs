pub mod error;
pub mod geometry;
pub mod helmholtz;
pub mod kernels;
pub mod normlab;
pub mod operators;
pub mod phase;

pub use error::{Error, Result};
