//! Library half of the `cbi` binary: config parsing, command
//! implementations, and the verification suite, exposed so integration
//! tests can drive them in-process.

pub mod commands;
pub mod config;
pub mod suite;
