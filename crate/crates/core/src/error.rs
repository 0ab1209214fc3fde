use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("single-class outcome: both 0 and 1 must be present")]
    SingleClass,

    #[error("quasi-separation detected: coefficient norm {norm:.2} after {iterations} iterations")]
    QuasiSeparation { iterations: usize, norm: f64 },

    #[error("singular hessian: no ridge damping up to {max_ridge:e} gave a usable Newton step")]
    SingularHessian { max_ridge: f64 },

    #[error("optimizer did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("degenerate model: every non-intercept coefficient is zero")]
    DegenerateModel,

    #[error("protocol error: {0}")]
    Protocol(String),

    /// Any of the above, tagged with the pipeline stage that raised it.
    #[error("[{stage}] {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::SingleClass
            | Error::QuasiSeparation { .. }
            | Error::SingularHessian { .. }
            | Error::NonConvergence(_)
            | Error::DegenerateModel
            | Error::Protocol(_) => 4,
            Error::Io { .. } | Error::Json(_) => 5,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }

    pub fn at_stage(self, stage: impl Into<String>) -> Self {
        match self {
            tagged @ Error::Stage { .. } => tagged,
            other => Error::Stage {
                stage: stage.into(),
                source: Box::new(other),
            },
        }
    }

    /// The error underneath any stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerical fit (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        self.exit_code() == 4
    }
}
