//! Quasiprobabilities of observation sequences on finite-dimensional quantum
//! systems, their convolution with classical noise, and positivity tests.

pub mod error;
pub mod exec;
pub mod linalg;
pub mod models;
pub mod moments;
pub mod noise;
pub mod quasiprob;
pub mod weakmeas;

pub use error::{Error, Result};
pub use exec::Exec;
