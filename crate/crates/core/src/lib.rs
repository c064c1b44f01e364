//! Trend-change prediction from paired daily count series and stochastic
//! multi-location SEIR simulation driven by the predicted change timings.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counts;
pub mod error;
pub mod evaluation;
pub mod forecast;
pub mod lstm;
pub mod scenario;
pub mod seed;
pub mod seir;
pub mod series;
pub mod synthetic;
pub mod trend;

pub use error::{Error, Result};
pub use forecast::{ChangePoint, Direction, Ensemble, EnsembleConfig, ForecastResult};
pub use lstm::{LstmConfig, LstmModel, LstmState, TrainConfig};
pub use scenario::{RtSchedule, RtSet, TrendKind, TrendSegment};
pub use seir::{SeirParams, SeirState, SimulationResult};
pub use series::{DailySeries, DateRange, LocationSet, MobilityMatrix, MultiSeries};
pub use trend::{TrendParams, TrendSeries};
