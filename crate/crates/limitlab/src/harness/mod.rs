//! Fixtures, corpora, the exhaustive oracle, and experiment orchestration.

use thiserror::Error;

pub mod experiment;
pub mod fixtures;
pub mod oracle;
pub mod random;
pub mod textgen;

/// Errors from harness-level operations.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("language element {element} exceeds the universe bound {universe}")]
    LanguageOutOfUniverse { element: u32, universe: u32 },
    #[error("{sequences} sequences exceed the enumeration guard of {guard}")]
    ExplosionGuard { sequences: usize, guard: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("check error: {0}")]
    Check(String),
}

impl From<crate::restrictions::CheckError> for HarnessError {
    fn from(e: crate::restrictions::CheckError) -> Self {
        HarnessError::Check(e.to_string())
    }
}
