use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance matrix is singular (regularization skipped?)")]
    SingularCovariance,

    #[error("matrix is not positive semi-definite: pivot {pivot} = {value}")]
    NotPsd { pivot: usize, value: f64 },

    #[error("unsupported block partition: size {size} with block {cb}")]
    UnsupportedPartition { size: usize, cb: usize },

    #[error("interval {interval} violates parallax bound (max offset {max_offset}); max legal interval is {max_interval}")]
    IntervalTooLarge {
        interval: usize,
        max_offset: u8,
        max_interval: usize,
    },

    #[error("gap {axis} {line}:{from}->{to}: offsets sum to {offset_sum}, exceeding EI size {ei_size}")]
    InconsistentOffsets {
        axis: &'static str,
        line: usize,
        from: usize,
        to: usize,
        offset_sum: usize,
        ei_size: usize,
    },

    #[error("missing model for block (gop {gop}, row {block_row}, col {block_col})")]
    MissingBlock {
        gop: usize,
        block_row: usize,
        block_col: usize,
    },

    #[error("container error: {0}")]
    Container(String),

    #[error("payload error in section {section}: {reason}")]
    Payload { section: String, reason: String },

    #[error("arithmetic decoder overran the payload at byte offset {offset}")]
    CorruptStream { offset: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn payload(section: &str, reason: impl Into<String>) -> Self {
        Error::Payload {
            section: section.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by a damaged section body rather than the
    /// container framing.
    pub fn is_payload(&self) -> bool {
        matches!(self, Error::Payload { .. } | Error::CorruptStream { .. })
    }
}
