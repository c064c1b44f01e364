//! Weekly log-ratio trends and moving-average smoothing.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{add_days, DailySeries, DateRange, MultiSeries};

pub const TWEET_TREND: &str = "tweet_trend";
pub const CASE_TREND: &str = "case_trend";

const LAG: usize = 7;

/// A dated sequence of trend values; may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub start: NaiveDate,
    pub values: Vec<f64>,
    pub source_label: String,
}

impl TrendSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end(&self) -> NaiveDate {
        add_days(self.start, self.values.len() as i64 - 1)
    }

    pub fn range(&self) -> DateRange {
        DateRange {
            start: self.start,
            end: self.end(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingMode {
    /// Mean of the window ending at t.
    #[default]
    Trailing,
    /// Mean of the window centred on t.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformOrder {
    #[default]
    LogRatioFirst,
    SmoothFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendParams {
    pub epsilon: f64,
    pub window: usize,
    #[serde(default)]
    pub mode: SmoothingMode,
    #[serde(default)]
    pub order: TransformOrder,
}

impl Default for TrendParams {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            window: 15,
            mode: SmoothingMode::Trailing,
            order: TransformOrder::LogRatioFirst,
        }
    }
}

impl TrendParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        check_window(self.window)
    }
}

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "window must be an odd integer >= 1, got {window}"
        )));
    }
    Ok(())
}

fn log_ratio(values: &[f64], epsilon: f64, start: NaiveDate) -> Result<Vec<f64>> {
    if values.len() <= LAG {
        return Err(Error::InvalidArgument(format!(
            "need at least {} days for a weekly ratio, got {}",
            LAG + 1,
            values.len()
        )));
    }
    (LAG..values.len())
        .map(|t| {
            let prev = values[t - LAG] + epsilon;
            let cur = values[t] + epsilon;
            if prev <= 0.0 || cur <= 0.0 {
                let zero_day = if prev <= 0.0 { t - LAG } else { t };
                return Err(Error::InvalidArgument(format!(
                    "zero count on {} with epsilon 0",
                    add_days(start, zero_day as i64)
                )));
            }
            Ok((cur / prev).ln())
        })
        .collect()
}

/// `s_t = ln((o_t + epsilon) / (o_{t-7} + epsilon))` from day 8 of `src` on.
pub fn weekly_log_ratio(src: &DailySeries, epsilon: f64) -> Result<TrendSeries> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(TrendSeries {
        start: add_days(src.start(), LAG as i64),
        values: log_ratio(src.values(), epsilon, src.start())?,
        source_label: src.label().to_string(),
    })
}

/// Windowed means of `values`; returns the means and the offset of the first
/// output relative to the input start.
fn window_means(values: &[f64], window: usize, mode: SmoothingMode) -> Result<(Vec<f64>, usize)> {
    check_window(window)?;
    if window > values.len() {
        return Err(Error::InvalidArgument(format!(
            "window {window} exceeds series length {}",
            values.len()
        )));
    }
    let means = values
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    let offset = match mode {
        SmoothingMode::Trailing => window - 1,
        SmoothingMode::Centered => (window - 1) / 2,
    };
    Ok((means, offset))
}

/// Moving average keeping only full windows.
pub fn moving_average(src: &TrendSeries, window: usize, mode: SmoothingMode) -> Result<TrendSeries> {
    let (values, offset) = window_means(&src.values, window, mode)?;
    Ok(TrendSeries {
        start: add_days(src.start, offset as i64),
        values,
        source_label: src.source_label.clone(),
    })
}

fn smooth_daily(src: &DailySeries, window: usize, mode: SmoothingMode) -> Result<DailySeries> {
    let (values, offset) = window_means(src.values(), window, mode)?;
    DailySeries::new(add_days(src.start(), offset as i64), values, src.label())
}

/// Full transform of one daily series under `params`.
pub fn trend_of(src: &DailySeries, params: &TrendParams) -> Result<TrendSeries> {
    params.validate()?;
    match params.order {
        TransformOrder::LogRatioFirst => {
            let raw = weekly_log_ratio(src, params.epsilon)?;
            moving_average(&raw, params.window, params.mode)
        }
        TransformOrder::SmoothFirst => {
            let smoothed = smooth_daily(src, params.window, params.mode)?;
            weekly_log_ratio(&smoothed, params.epsilon)
        }
    }
}

fn common_range(a: &DailySeries, b: &DailySeries) -> Option<DateRange> {
    let start = a.start().max(b.start());
    let end = a.end().min(b.end());
    DateRange::new(start, end).ok()
}

/// Bivariate trend input with columns `[tweet_trend, case_trend]` over the
/// common date range of the two inputs.
pub fn build_trend_pair(tweets: &DailySeries, cases: &DailySeries, params: &TrendParams) -> Result<MultiSeries> {
    params.validate()?;
    let range = common_range(tweets, cases)
        .filter(|r| r.days() >= LAG + params.window)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "series overlap must span at least {} days",
                LAG + params.window
            ))
        })?;
    let tw = trend_of(&tweets.slice(range)?, params)?;
    let cs = trend_of(&cases.slice(range)?, params)?;
    MultiSeries::new(tw.start, vec![(TWEET_TREND.into(), tw.values), (CASE_TREND.into(), cs.values)])
}

/// Univariate counterpart of [`build_trend_pair`] with a single `case_trend`
/// column.
pub fn build_case_trend(cases: &DailySeries, params: &TrendParams) -> Result<MultiSeries> {
    let cs = trend_of(cases, params)?;
    MultiSeries::new(cs.start, vec![(CASE_TREND.into(), cs.values)])
}
