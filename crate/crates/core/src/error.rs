use chrono::NaiveDate;
use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("malformed date {0:?}")]
    BadDate(String),

    #[error("negative value {value} on {date}")]
    NegativeValue { date: NaiveDate, value: f64 },

    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),

    #[error("gap in dates: {missing} is missing")]
    Gap { missing: NaiveDate },

    #[error("series {label:?} does not cover {start}..={end}")]
    Coverage {
        label: String,
        start: NaiveDate,
        end: NaiveDate,
    },

    #[error("unknown location {0:?}")]
    UnknownLocation(String),

    #[error("mobility out of location {location:?} totals {total}, exceeding population {population}")]
    MobilityRowSum {
        location: String,
        total: f64,
        population: u64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("http error: {0}")]
    Http(String),

    #[error("authorization rejected by count endpoint (status {0})")]
    AuthRejected(u16),

    #[error("bucket gap: no count for {0}")]
    BucketGap(NaiveDate),

    #[error("training diverged for {member}: loss is {loss} at epoch {epoch}")]
    NonFiniteLoss {
        member: String,
        epoch: usize,
        loss: f64,
    },

    #[error("no calibratable window for location {0:?}")]
    NoCalibratableWindow(String),

    #[error("empty {kind} set for location {location:?}")]
    EmptyPartition { kind: String, location: String },

    #[error("change point on {date} is inconsistent with the current {current} trend")]
    DirectionInconsistency { date: NaiveDate, current: String },

    #[error("schedule has no value for {0}")]
    ScheduleGap(NaiveDate),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that come from invalid numbers produced during
    /// training rather than from bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
