//! Command-line driver and replay server for the orchard localizer.

pub mod cli;
pub mod commands;
pub mod manifest;
pub mod server;
