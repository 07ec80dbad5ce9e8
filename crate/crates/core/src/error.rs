use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("window of {frames} frames exceeds denoiser capability of {capability}")]
    WindowTooLong { frames: usize, capability: usize },

    #[error("window {index}: {source}")]
    Window {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("construction failure: {0}")]
    Construction(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("remote denoiser error (code {code}): {message}")]
    Remote { code: u16, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Strips window annotations so callers can match on the underlying kind.
    pub fn root(&self) -> &Error {
        match self {
            Error::Window { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short stable identifier, used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidState(_) => "invalid-state",
            Error::Numerical(_) => "numerical-failure",
            Error::WindowTooLong { .. } => "window-too-long",
            Error::Window { .. } => unreachable!(),
            Error::Format(_) => "format-error",
            Error::Unsupported(_) => "unsupported",
            Error::Construction(_) => "construction-failure",
            Error::Transport(_) => "transport-error",
            Error::Protocol(_) => "protocol-error",
            Error::Remote { .. } => "remote-denoiser-error",
            Error::Config(_) => "config-error",
            Error::Io(_) => "io-error",
            Error::Json(_) => "json-error",
        }
    }
}
