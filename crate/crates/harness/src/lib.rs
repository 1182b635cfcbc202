//! Experiment harness for `seqmargin-core`: JSON experiment configs,
//! dataset sources, long-format CSV traces, JSON summaries, the acceptance
//! suite and the `seqmargin` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod source;
pub mod suite;
pub mod trace;

pub use cli::cli_main;
pub use error::{HarnessError, Result};
