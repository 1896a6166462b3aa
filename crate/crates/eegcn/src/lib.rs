//! Training, evaluation and tooling around the `eegcn-core` model: corpus
//! and embedding files, checkpoints, configuration and the command line.

pub mod ablate;
pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod inspect;
pub mod io;
pub mod settings;
pub mod train;

pub use eegcn_core as core;
pub use error::{Error, Result};
