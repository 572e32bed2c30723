//! Device files, report formats, parallel drivers and the `cqed` command
//! line on top of `cqed-core`.

pub mod cli;
pub mod config;
pub mod exec;
pub mod manifest;
pub mod report;
