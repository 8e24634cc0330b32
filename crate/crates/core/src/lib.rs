pub mod audio_io;
pub mod cli;
pub mod detection;
pub mod error;
pub mod features;
pub mod harness;
pub mod neural;
mod parallel;
pub mod speed;
pub mod stats;
pub mod svr;
pub mod synthgen;

pub use error::{Error, Result};
