//! Library surface of the CLI: config parsing and study runners, exposed
//! for the integration tests.

pub mod config;
pub mod studies;
