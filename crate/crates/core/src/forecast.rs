//! Ensemble forecasting of trend series and extraction of change timings.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{self, LstmConfig, LstmModel, LstmState, TrainConfig};
use crate::seed;
use crate::series::{add_days, DateRange, MultiSeries};
use crate::trend::CASE_TREND;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub layer_choices: Vec<usize>,
    pub hidden_choices: Vec<usize>,
    pub inits_per_config: usize,
    pub base_seed: u64,
    pub train_config: TrainConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            layer_choices: vec![1, 2, 3, 4],
            hidden_choices: vec![4, 8, 16],
            inits_per_config: 8,
            base_seed: 0,
            train_config: TrainConfig::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_choices.is_empty() || self.hidden_choices.is_empty() || self.inits_per_config == 0 {
            return Err(Error::InvalidArgument(
                "ensemble needs at least one layer count, hidden size and init".into(),
            ));
        }
        if self.layer_choices.contains(&0) || self.hidden_choices.contains(&0) {
            return Err(Error::InvalidArgument("layer and hidden choices must be >= 1".into()));
        }
        self.train_config.validate()
    }

    pub fn member_count(&self) -> usize {
        self.layer_choices.len() * self.hidden_choices.len() * self.inits_per_config
    }

    /// Member configs in canonical order: layers, then hidden, then init.
    pub fn member_configs(&self, input_dim: usize) -> Vec<(usize, LstmConfig)> {
        let mut out = Vec::with_capacity(self.member_count());
        for &layers in &self.layer_choices {
            for &hidden in &self.hidden_choices {
                for init in 0..self.inits_per_config {
                    let s = seed::derive(self.base_seed, &[layers as u64, hidden as u64, init as u64]);
                    out.push((
                        init,
                        LstmConfig {
                            input_dim,
                            hidden_size: hidden,
                            num_layers: layers,
                            seed: s,
                        },
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub init_index: usize,
    pub model: LstmModel,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub columns: Vec<String>,
    pub training_window: DateRange,
    pub members: Vec<Member>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Trains one model per (layers, hidden, init) tuple on the same data.
///
/// Members train in parallel on the current rayon pool; results keep the
/// canonical member order.
pub fn train_ensemble(data: &MultiSeries, ec: &EnsembleConfig) -> Result<Ensemble> {
    ec.validate()?;
    let rows = data.rows();
    let specs = ec.member_configs(data.width());
    let members = specs
        .into_par_iter()
        .map(|(init_index, cfg)| {
            let model = LstmModel::init(cfg)?;
            let (model, hist) = lstm::train(&model, &rows, &ec.train_config).map_err(|e| match e {
                Error::NonFiniteLoss { epoch, loss, .. } => Error::NonFiniteLoss {
                    member: format!(
                        "member layers={} hidden={} init={}",
                        cfg.num_layers, cfg.hidden_size, init_index
                    ),
                    epoch,
                    loss,
                },
                other => other,
            })?;
            Ok(Member {
                init_index,
                model,
                final_loss: *hist.last().expect("epochs >= 1"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        columns: data.names().to_vec(),
        training_window: data.range(),
        members,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

fn aggregate(per_member: &[Vec<Vec<f64>>], how: Aggregation) -> Vec<Vec<f64>> {
    let steps = per_member[0].len();
    let dims = per_member[0].first().map_or(0, Vec::len);
    (0..steps)
        .map(|t| {
            (0..dims)
                .map(|j| match how {
                    Aggregation::Mean => {
                        per_member.iter().map(|m| m[t][j]).sum::<f64>() / per_member.len() as f64
                    }
                    Aggregation::Median => {
                        let mut v: Vec<f64> = per_member.iter().map(|m| m[t][j]).collect();
                        v.sort_by(f64::total_cmp);
                        let n = v.len();
                        if n % 2 == 1 {
                            v[n / 2]
                        } else {
                            0.5 * (v[n / 2 - 1] + v[n / 2])
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Predictions of every member plus their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub columns: Vec<String>,
    /// Date of the first in-sample prediction (second observed day).
    pub fitted_start: NaiveDate,
    /// One-step-ahead predictions over the observed window, aggregated.
    pub fitted: Vec<Vec<f64>>,
    /// Date of the first out-of-sample prediction.
    pub horizon_start: NaiveDate,
    /// `members[m][k]` is member `m`'s prediction for horizon step `k`.
    pub members: Vec<Vec<Vec<f64>>>,
    pub aggregate: Vec<Vec<f64>>,
}

impl ForecastResult {
    pub fn horizon(&self) -> usize {
        self.aggregate.len()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.aggregate.iter().map(|r| r[j]).collect())
    }

    pub fn horizon_range(&self) -> DateRange {
        DateRange {
            start: self.horizon_start,
            end: add_days(self.horizon_start, self.horizon() as i64 - 1),
        }
    }

    pub fn aggregate_series(&self) -> Result<MultiSeries> {
        let cols = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, n)| (n.clone(), self.aggregate.iter().map(|r| r[j]).collect()))
            .collect();
        MultiSeries::new(self.horizon_start, cols)
    }

    /// `date,<column>,...` over the horizon.
    pub fn to_csv(&self) -> Result<String> {
        Ok(self.aggregate_series()?.to_csv())
    }
}

type Rows = Vec<Vec<f64>>;

/// Fitted outputs over the observed rows and the fed-back horizon.
fn rollout(model: &LstmModel, observed: &[Vec<f64>], horizon: usize) -> Result<(Rows, Rows)> {
    let mut state = LstmState::zeros(model.config());
    let mut fitted = Vec::with_capacity(observed.len());
    for x in observed {
        let (y, next) = model.forward_step(x, &state)?;
        fitted.push(y);
        state = next;
    }
    // the last phase-1 output is the first horizon value
    let mut ahead = vec![fitted.pop().expect("observed is non-empty")];
    while ahead.len() < horizon {
        let (y, next) = model.forward_step(ahead.last().expect("non-empty"), &state)?;
        ahead.push(y);
        state = next;
    }
    Ok((fitted, ahead))
}

/// Two-phase inference: each member consumes the observed rows up to the end
/// of its training window, then feeds back its own predictions.
pub fn predict(ens: &Ensemble, data: &MultiSeries, horizon: usize, how: Aggregation) -> Result<ForecastResult> {
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    if ens.is_empty() {
        return Err(Error::InvalidArgument("ensemble has no members".into()));
    }
    if data.names() != ens.columns.as_slice() {
        return Err(Error::InvalidArgument(format!(
            "data columns {:?} do not match ensemble columns {:?}",
            data.names(),
            ens.columns
        )));
    }
    let end = ens.training_window.end;
    if !data.range().contains(end) {
        return Err(Error::Coverage {
            label: data.names().join("+"),
            start: data.start(),
            end,
        });
    }
    let observed = data.slice(DateRange::new(data.start(), end)?)?.rows();
    let runs = ens
        .members
        .par_iter()
        .map(|m| rollout(&m.model, &observed, horizon))
        .collect::<Result<Vec<_>>>()?;
    let (fitted, members): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let fitted = if observed.len() > 1 {
        aggregate(&fitted, how)
    } else {
        Vec::new()
    };
    Ok(ForecastResult {
        columns: ens.columns.clone(),
        fitted_start: add_days(data.start(), 1),
        fitted,
        horizon_start: add_days(end, 1),
        aggregate: aggregate(&members, how),
        members,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    UpToDown,
    DownToUp,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::UpToDown => "up_to_down",
            Direction::DownToUp => "down_to_up",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChangePoint {
    pub date: NaiveDate,
    pub direction: Direction,
}

/// Finds sign changes that persist.
///
/// Zeros take the sign before them (leading zeros are unsigned). Runs of one
/// sign shorter than `persistence` are ignored; a change point is emitted on
/// the first day of every qualifying run whose sign differs from the last
/// qualifying run.
pub fn detect_sign_changes(values: &[f64], start: NaiveDate, persistence: usize) -> Vec<ChangePoint> {
    let persistence = persistence.max(1);
    let mut signs = Vec::with_capacity(values.len());
    let mut last: Option<bool> = None;
    for &v in values {
        if v > 0.0 {
            last = Some(true);
        } else if v < 0.0 {
            last = Some(false);
        }
        signs.push(last);
    }

    let mut out = Vec::new();
    let mut established: Option<bool> = None;
    let mut i = 0;
    while i < signs.len() {
        let mut j = i;
        while j < signs.len() && signs[j] == signs[i] {
            j += 1;
        }
        if let Some(positive) = signs[i] {
            if j - i >= persistence {
                if let Some(prev) = established {
                    if prev != positive {
                        out.push(ChangePoint {
                            date: add_days(start, i as i64),
                            direction: if positive {
                                Direction::DownToUp
                            } else {
                                Direction::UpToDown
                            },
                        });
                    }
                }
                established = Some(positive);
            }
        }
        i = j;
    }
    out
}

/// Change points of the aggregate case-trend column.
pub fn changes_from_forecast(fr: &ForecastResult, persistence: usize) -> Result<Vec<ChangePoint>> {
    let col = fr
        .column(CASE_TREND)
        .ok_or_else(|| Error::InvalidArgument(format!("forecast has no {CASE_TREND:?} column")))?;
    Ok(detect_sign_changes(&col, fr.horizon_start, persistence))
}
