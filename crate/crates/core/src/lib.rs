//! Simulation toolkit for enrollment-stage ultrasonic backdoor triggers
//! against speaker recognition systems.

pub mod audio;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod forge;
pub mod io;
pub mod oracle;

pub use audio::AudioClip;
pub use error::{Error, Result};
