use scribe::Error;

/// Process exit statuses.
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Data(Error),
}

impl CliError {
    pub fn config(message: impl ToString) -> Self {
        CliError::Config(message.to_string())
    }

    pub fn is_broken_pipe(&self) -> bool {
        matches!(self, CliError::Data(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Data(Error::Divergence { .. }) => EXIT_DIVERGENCE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_error_class() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::config("x").exit_code(), 1);
        assert_eq!(CliError::from(Error::Checksum).exit_code(), 2);
        let diverged = Error::Divergence {
            epoch: 3,
            sample_id: "s".into(),
            message: "nan".into(),
        };
        assert_eq!(CliError::from(diverged).exit_code(), 3);
    }
}
