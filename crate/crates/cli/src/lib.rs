//! Experiment driver for the `pleijel` command-line tool: configuration,
//! the end-to-end Pleijel pipeline, the invariant suite and plotting.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod svg;
pub mod verify;

pub use config::{ConfigError, ExperimentConfig, Mode};
pub use pipeline::{run_pipeline, Summary};
pub use verify::{verify_suite, VerifyReport};

/// Exit status for a failed check run.
pub const EXIT_CHECK_FAILURE: i32 = 1;
/// Exit status for an invalid configuration.
pub const EXIT_CONFIG: i32 = 2;

/// Raised when a command ran to completion but some check failed.
#[derive(Debug)]
pub struct ChecksFailed(pub String);

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ChecksFailed {}

/// Maps an error to the process exit code: configuration problems (bad
/// config files, domain or configuration errors from the library) give 2,
/// everything else 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<pleijel::Error>() {
            if matches!(e, pleijel::Error::Configuration(_) | pleijel::Error::Domain(_)) {
                return EXIT_CONFIG;
            }
        }
    }
    EXIT_CHECK_FAILURE
}
