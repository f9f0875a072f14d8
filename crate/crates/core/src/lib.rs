//! Grassmannian G(m, n) sigma models on 1+1 dimensional Minkowski space and
//! the surfaces their solutions induce in the Lie algebra su(N), N = m + n.

pub mod cli_io;
pub mod error;
pub mod field_model;
pub mod frame;
pub mod geometry;
pub mod immersion;
pub mod linalg;
pub mod solutions;
pub mod sun_algebra;

pub use error::{Error, Result};
