use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no student logs to build from")]
    EmptyCorpus,

    #[error("no data in range {from} .. {to}")]
    EmptyRange { from: String, to: String },

    #[error("invalid date range: {from} is after {to}")]
    InvertedRange { from: String, to: String },

    #[error("student {student}: event #{index} references unknown action {action:?}")]
    UnknownAction { student: String, index: usize, action: String },

    #[error("unknown student {0:?}")]
    UnknownStudent(String),

    #[error("unknown state {0:?}")]
    UnknownState(String),

    #[error("unknown edge {0:?}")]
    UnknownEdge(String),

    #[error("invalid replay input: {0}")]
    InvalidReplay(String),

    #[error("student {student}: duration must be positive, got {seconds}s")]
    NonPositiveDuration { student: String, seconds: f64 },

    #[error("cluster size must be positive")]
    ZeroPopulation,

    #[error("frequency {0} is outside (0, 100]")]
    FrequencyOutOfRange(f64),

    #[error("requested {k} clusters from {n} points")]
    TooManyClusters { k: usize, n: usize },

    #[error("invalid clustering parameters: {0}")]
    InvalidParams(String),

    #[error("unknown {what} {value:?}")]
    UnknownName { what: &'static str, value: String },
}
