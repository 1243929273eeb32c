//! File formats, checkpoints, the training driver and the `facerep`
//! command-line tool, on top of the algorithms in `facerep-core`.

pub mod checkpoint;
pub mod cli;
pub mod driver;
pub mod error;
pub mod executor;
pub mod formats;

pub use error::{Error, Result};
pub use executor::RayonExecutor;
