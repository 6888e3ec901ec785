use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
///
/// The variants are coarse on purpose: the CLI maps each one to a distinct
/// exit code, so callers mostly care about the category.
#[derive(Debug, Error)]
pub enum Error {
    /// Input could not be read as the expected table layout.
    #[error("schema error: {0}")]
    Schema(String),

    /// A single input row failed to parse.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// Values parsed but violate a domain rule (negative volume, unknown day, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Bad parameter or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Not enough usable data for the requested computation.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Matrix shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Autoencoder training failed.
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// Operation requested on the wrong kind of model.
    #[error("model mode error: {0}")]
    Mode(String),

    /// Currency columns missing, so the k-means baseline cannot run.
    #[error("baseline unavailable: {0}")]
    BaselineUnavailable(String),

    /// A latent-dimension scan failed at a particular K.
    #[error("scan failed at K = {k}: {source}")]
    AtK {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
