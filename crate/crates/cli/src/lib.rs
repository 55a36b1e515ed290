//! Config parsing, batch execution and report output for the `ispso`
//! binary.

pub mod config;
pub mod execute;
pub mod report;
