//! Files, configuration, parallel orchestration and the `slwr` command-line
//! tool built on `slwr-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;
pub mod triangle;
