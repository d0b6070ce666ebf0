use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data is empty")]
    Empty,
    #[error("training rows contain a single class ({0}); at least two are required")]
    SingleClass(usize),
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("feature width mismatch: model expects {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("row count {rows} does not match label count {labels}")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("unknown model spec `{0}`")]
    UnknownSpec(String),
    #[error("model dump: {0}")]
    Dump(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
