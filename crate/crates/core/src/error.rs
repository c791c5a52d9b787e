use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("PLY parse error at line {line}: {msg}")]
    PlyParse { line: usize, msg: String },

    #[error("attributes required: {0}")]
    AttributesRequired(String),

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("bitstream format error: {0}")]
    Format(String),

    #[error("encode error: {0}")]
    Encode(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
