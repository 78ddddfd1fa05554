//! Dynamic computerized tomography with elastic motion estimation.
//!
//! The crate simulates parallel-beam Radon data of a deforming ellipse
//! phantom, estimates the interior deformation by solving the Navier-Cauchy
//! equation from boundary observations, and reconstructs the initial state
//! with a motion-compensated filtered backprojection.

pub mod config;
pub mod elastic;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod phantom;
pub mod pipeline;
pub mod projection;
pub mod recon;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{Mat2, Vec2};
