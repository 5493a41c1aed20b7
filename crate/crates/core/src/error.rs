use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("no labeled positives: moving {moved} of {positives} positives leaves P empty")]
    NoLabeledPositives { moved: usize, positives: usize },

    #[error("invalid prior: {0} is outside [0, 1)")]
    InvalidPrior(f64),

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("unknown class {0} requested as positive; it does not occur in the labels")]
    UnknownClass(u32),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unlabeled part required")]
    UnlabeledRequired,

    #[error("empty batch: {0}")]
    EmptyBatch(String),

    #[error("diverged: {0}")]
    Diverged(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}
