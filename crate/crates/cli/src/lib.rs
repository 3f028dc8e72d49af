//! Configuration-driven experiments over the `flexw-core` library.
//!
//! Each subcommand reads a TOML file, resolves it into a [`config::RunConfig`],
//! writes JSON and CSV reports into an output directory and records a
//! [`manifest::RunManifest`] from which the run can be repeated exactly.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;

use config::SchemaErrors;
use flexw_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

/// Process exit status for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<SchemaErrors>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_)
                | Error::Domain(_)
                | Error::Shape(_)
                | Error::GridMismatch(_)
                | Error::LengthMismatch { .. } => EXIT_CONFIG,
                Error::Singular(_)
                | Error::DegenerateBatch
                | Error::DegenerateTraining { .. }
                | Error::NonFinite
                | Error::AmbiguousCurve { .. }
                | Error::Empty(_) => EXIT_DEGENERATE,
            };
        }
    }
    EXIT_FAILURE
}
