use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("invalid landmark schema: {0}")]
    Schema(String),
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("missing landmark `{0}`")]
    MissingLandmark(String),
    #[error("landmarks `{0}` and `{1}` coincide")]
    CoincidentLandmarks(String, String),
    #[error("degenerate shape {0}: all points coincide")]
    DegenerateShape(String),
    #[error("measurement `{name}`: {source}")]
    Measurement {
        name: String,
        #[source]
        source: Box<CoreError>,
    },
    #[error("zero-length direction vector")]
    ZeroLengthVector,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("not enough data: {0}")]
    NotEnoughData(String),
    #[error("group selected by {0} is empty")]
    EmptyGroup(String),
    #[error("class {class} has {count} members, fewer than {folds} folds")]
    ClassTooSmall { class: String, count: usize, folds: usize },
    #[error(transparent)]
    Model(#[from] facegrowth_models::ModelError),
}

pub type Result<T> = std::result::Result<T, CoreError>;
