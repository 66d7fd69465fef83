use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] tcforge::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 4 for resource caps, 1 otherwise.
    pub fn exit_code(&self) -> ExitCode {
        use tcforge::Error as E;
        let code = match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(E::ResourceCap(_)) => 4,
            CliError::Core(E::InvalidParams { .. } | E::InvalidGrid(_) | E::Manifold(_)) => 2,
            CliError::Core(_) => 1,
        };
        ExitCode::from(code)
    }
}
