//! File formats, the experiment runner and the command line around
//! [`setr_core`].

pub mod codec;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod report;
pub mod runner;

pub use error::{Result, SetrError};
