//! Command-line front end: configuration files, seeded batch runs and
//! tabular output.

pub mod commands;
pub mod config;
pub mod records;
