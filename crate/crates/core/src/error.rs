use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition (pose outside the world,
    /// mismatched image sizes, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pixel ({m}, {n}) is outside the {width}x{height} image")]
    PixelOutOfBounds {
        m: usize,
        n: usize,
        width: usize,
        height: usize,
    },

    #[error("model parameters contain non-finite values")]
    NonFiniteParameters,

    #[error("loss is non-finite on frame {frame_id}")]
    NonFiniteLoss { frame_id: u64 },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("confusion matrix is empty")]
    EmptyConfusionMatrix,

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than a
    /// runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::TomlDe(_) | Error::Format { .. }
        )
    }
}
