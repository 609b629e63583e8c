//! Library behind the `privml` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod params_file;

pub use commands::{cmd_audit, cmd_predict, cmd_serve, cmd_train, format_audit, AuditQuery, AuditReport, AuditTarget};
pub use config::{Overrides, RunConfig};
pub use error::{CliError, Result};
