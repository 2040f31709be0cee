//! Command-line entry points and the HTTP API of the `fealm` tool.

pub mod commands;
pub mod server;
