//! Edge-enhanced graph convolution for event-trigger tagging.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, training
//! orchestration and the command line live in the `eegcn` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod numkit;

pub mod corpus;
pub mod eval;
pub mod graph;
pub mod loss;
pub mod model;

pub use error::{Error, Result};
