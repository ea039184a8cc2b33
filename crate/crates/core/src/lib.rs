//! Joint stereo and optical-flow estimation over stereo-video cycles by
//! direct optimization of an unsupervised photometric objective.

pub mod cycle;
pub mod error;
pub mod field;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod occlusion;
pub mod optimize;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
