//! File formats, remote-model clients, configuration and the pipeline
//! stages behind the `chainqa` command.

pub mod config;
pub mod formats;
pub mod llm;
pub mod pipeline;

pub use chainqa_core as core;
