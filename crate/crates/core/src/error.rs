use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown TAP id {0}")]
    UnknownTap(usize),
    #[error("unknown name `{name}`; valid names: {}", valid.join(", "))]
    UnknownName { name: String, valid: Vec<String> },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training diverged at update {update}: {detail}")]
    Diverged { update: usize, detail: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("replay refused: {0}")]
    ReplayRefused(String),
    #[error("missing weights for policy `{policy}` at {path}")]
    MissingWeights { policy: String, path: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
