//! File formats, threaded training, sweep export, trajectory logs and the
//! command-line driver around `graspweb-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod policy;
pub mod replay;
pub mod sweep;
pub mod train;

pub use error::Error;
