use std::fmt;

/// A failure reported as a single `error[kind]: message` line.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new("usage", message)
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::new("io", format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.message.replace(['\n', '\r'], " ");
        write!(f, "error[{}]: {one_line}", self.kind)
    }
}

impl From<subcap_core::Error> for CliError {
    fn from(e: subcap_core::Error) -> Self {
        use subcap_core::Error as E;
        let kind = match &e {
            E::Io { .. } => "io",
            E::Malformed { .. } | E::Json(_) => "malformed",
            E::EmptyCorpus => "empty-corpus",
            E::OutOfInventory { .. } => "out-of-inventory",
            E::UnknownPiece(_) => "unknown-piece",
            E::OrphanContinuation(_) => "orphan-continuation",
            E::InvalidConfig(_) => "invalid-config",
            E::Shape(_) | E::TokenOutOfRange { .. } | E::SequenceTooLong { .. } => "shape",
            E::EmptyBatch => "empty-batch",
            E::NonFiniteLoss { .. } => "non-finite-loss",
            E::Checkpoint(_) => "checkpoint",
        };
        CliError::new(kind, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
