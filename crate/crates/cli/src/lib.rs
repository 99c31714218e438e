//! Command-line front end for the eegfist pipeline.

pub mod app;
pub mod fetch;
