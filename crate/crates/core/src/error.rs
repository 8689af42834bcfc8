use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A drift, diffusion, policy or cost map returned a non-finite or
    /// wrongly sized value.
    #[error("evaluation of `{map}` failed: {detail}")]
    Evaluation { map: &'static str, detail: String },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown {kind} `{name}` (available: {})", available.join(", "))]
    Registry {
        kind: &'static str,
        name: String,
        available: Vec<String>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported problem: {0}")]
    Unsupported(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("state sample checksum mismatch (stored {stored}, computed {computed})")]
    Checksum { stored: String, computed: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the error (or its innermost cause) is a configuration
    /// validation failure.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Step { source, .. } | Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
