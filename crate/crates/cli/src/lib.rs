//! Command implementations behind the `vitals` binary.

use std::fmt;

pub mod commands;
pub mod config;
pub mod report;

pub use config::{DatasetKind, RunConfig};
pub use report::ReportTable;

/// Bad invocation or configuration. Maps to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 2 for usage/config errors, 1 for anything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|c| c.is::<UsageError>()) {
        2
    } else {
        1
    }
}
