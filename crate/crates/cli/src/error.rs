use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config: missing `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] delaystab::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
