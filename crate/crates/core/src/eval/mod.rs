mod grid;
mod protocol;
mod report;
mod splits;
mod synth;

pub use grid::*;
pub use protocol::*;
pub use report::*;
pub use splits::*;
pub use synth::*;
