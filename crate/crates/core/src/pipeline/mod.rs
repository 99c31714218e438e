mod cache;
mod config;
mod run;
mod stages;

pub use cache::*;
pub use config::*;
pub use run::*;
pub use stages::*;
