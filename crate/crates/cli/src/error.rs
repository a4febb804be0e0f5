use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config file: {0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] polcap::Error),

    /// A sweep stopped early; the rows before `cell` were written.
    #[error("sweep incomplete at {cell}: {source}")]
    Partial {
        cell: String,
        #[source]
        source: polcap::Error,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for bad input, 3 for a failed optimality certificate, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Model(e) | CliError::Partial { source: e, .. } => model_code(e),
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 1,
        }
    }
}

fn model_code(e: &polcap::Error) -> u8 {
    match e {
        polcap::Error::Certificate { .. } | polcap::Error::Convergence { .. } => 3,
        polcap::Error::Io(_) | polcap::Error::Csv(_) => 1,
        _ => 2,
    }
}
