//! Library surface of the experiment runner: command implementations and
//! the JSON experiment-config schema (exposed for fuzzing and reuse).

pub mod commands;
pub mod config;
pub mod logging;
