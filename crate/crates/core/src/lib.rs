pub mod audio;
pub mod augment;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod features;
pub mod render;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod vad;

pub use error::{Error, Result};
