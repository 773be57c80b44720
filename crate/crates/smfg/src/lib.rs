//! Command-line front end for `smfg-core`: JSON model configs, report
//! serialization and the `smfg` subcommands.

pub mod cli;
pub mod config;
pub mod report;
