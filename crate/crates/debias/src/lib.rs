//! Command-line front end and std services for `debias-core`: JSON-lines
//! formats, PNG IO, HTTP providers and the `debias` subcommands.

#![forbid(unsafe_code)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod io;
pub mod providers;
pub mod remote;

pub use cli::run;
pub use error::Error;
