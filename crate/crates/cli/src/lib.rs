//! Command-line front end: configuration, run directories, the session
//! server and the `rtgen` subcommands.

pub mod app;
pub mod config;
pub mod output;
pub mod server;
