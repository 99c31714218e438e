pub mod artifact;
pub mod dsp;
pub mod edf;
pub mod epoch;
pub mod error;
pub mod eval;
pub mod features;
pub mod ica;
pub mod learn;
pub mod linalg;
pub mod pipeline;
pub mod spectrum;

pub use error::{Error, ErrorKind, Result};
