//! Library half of the `tta-sr` binary: config, verbs and artifact writers.

pub mod commands;
pub mod config;
pub mod lock;
pub mod plot;

use tta_sr::{Error, ErrorCategory};

/// Exit status for a failed command: 2 bad input, 3 incompatible artifacts, 4 divergence.
pub fn exit_code(err: &Error) -> i32 {
    match err.category() {
        ErrorCategory::Input => 2,
        ErrorCategory::Compatibility => 3,
        ErrorCategory::Divergence => 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_map_to_distinct_codes() {
        assert_eq!(exit_code(&Error::EmptyDataset), 2);
        assert_eq!(exit_code(&Error::FingerprintMismatch { expected: "a".into(), found: "b".into() }), 3);
        assert_eq!(exit_code(&Error::Divergence { step: 1, loss: f64::NAN }), 4);
    }
}
