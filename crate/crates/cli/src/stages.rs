//! The seven pipeline stages. Each reads its inputs from the configuration
//! and upstream artifacts and rewrites its own directory.

use std::path::Path;

use episim_core::counts::{CountClient, FixtureSource, HttpSource};
use episim_core::evaluation::{build_report, delta_days, plot_csv, rmse, rmse_per_location, ReportMetadata, SettingResult};
use episim_core::forecast::{changes_from_forecast, detect_sign_changes, predict, train_ensemble, Direction};
use episim_core::scenario::{
    baseline_schedule, calibrate_rt, kind_of, sample_rt_schedule, schedule_segments, split_trend_sets, Baseline,
};
use episim_core::seed;
use episim_core::seir::simulate as run_simulation;
use episim_core::series::{add_days, centered_mean, load_mobility, parse_daily_csv, DailySeries, DateRange, MultiSeries};
use episim_core::trend::{build_case_trend, build_trend_pair, CASE_TREND};
use episim_core::{ChangePoint, Ensemble, ForecastResult, LocationSet, MobilityMatrix, RtSchedule, RtSet, SeirState, TrendKind};
use serde::{Deserialize, Serialize};

use crate::artifacts::{read_daily, read_input, read_json, read_multi, write_json, write_text, Layout, Stage};
use crate::config::{AuxSource, Resolved, RmseLevel};
use crate::error::{CliError, CliResult};

pub const CASES_ONLY: &str = "cases_only";
pub const BASELINE1: &str = "baseline1";
pub const BASELINE2: &str = "baseline2";
pub const OBSERVED_TREND_FILE: &str = "observed_case_trend.csv";

/// A forecasting setting: the case trend alone or paired with one
/// auxiliary signal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    pub name: String,
    /// Index into `inputs.aux`.
    pub aux: Option<usize>,
}

pub fn predicted_settings(r: &Resolved) -> Vec<Setting> {
    let mut out = vec![Setting {
        name: CASES_ONLY.into(),
        aux: None,
    }];
    for (i, a) in r.config.inputs.aux.iter().enumerate() {
        out.push(Setting {
            name: format!("with_{}", a.name),
            aux: Some(i),
        });
    }
    out
}

/// Every simulated setting, baselines first.
pub fn all_settings(r: &Resolved) -> Vec<String> {
    let mut out = vec![BASELINE1.to_string(), BASELINE2.to_string()];
    out.extend(predicted_settings(r).into_iter().map(|s| s.name));
    out
}

/// Input files loaded and cross-checked.
#[derive(Debug, Clone)]
pub struct InputData {
    pub locations: LocationSet,
    pub mobility: MobilityMatrix,
    /// One series per location, in location order.
    pub per_location: Vec<DailySeries>,
    pub national: DailySeries,
}

fn with_path<T>(res: episim_core::Result<T>, path: &Path) -> CliResult<T> {
    res.map_err(|e| CliError::from(e).with_path(path))
}

pub fn load_inputs(r: &Resolved) -> CliResult<InputData> {
    let inputs = &r.config.inputs;
    let lp = r.path(&inputs.locations);
    let locations = with_path(LocationSet::from_csv(read_input(&lp)?.as_bytes()), &lp)?;
    let mp = r.path(&inputs.mobility);
    let mobility = with_path(load_mobility(read_input(&mp)?.as_bytes(), &locations), &mp)?;
    let cp = r.path(&inputs.cases);
    let cases = with_path(MultiSeries::from_csv(read_input(&cp)?.as_bytes()), &cp)?;
    let per_location = locations
        .iter()
        .map(|l| {
            let col = cases
                .column(&l.id)
                .ok_or_else(|| CliError::data(format!("no case column for location {:?}", l.id)).with_path(&cp))?;
            with_path(DailySeries::new(cases.start(), col.to_vec(), l.id.clone()), &cp)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let national: Vec<f64> = (0..cases.len()).map(|t| per_location.iter().map(|s| s.values()[t]).sum()).collect();
    let national = with_path(DailySeries::new(cases.start(), national, "cases"), &cp)?;
    Ok(InputData {
        locations,
        mobility,
        per_location,
        national,
    })
}

fn covering(series: &DailySeries, range: DateRange, what: &str) -> CliResult<()> {
    if series.start() > range.start || series.end() < range.end {
        return Err(CliError::data(format!(
            "{what} covers {}..{} but {}..{} is needed",
            series.start(),
            series.end(),
            range.start,
            range.end
        )));
    }
    Ok(())
}

fn aux_file(layout: &Layout, name: &str) -> std::path::PathBuf {
    layout.file(Stage::Fetch, &format!("{name}.csv"))
}

fn read_aux(layout: &Layout, name: &str) -> CliResult<DailySeries> {
    read_daily(&aux_file(layout, name), Stage::Fetch, name)
}

/// Collects every auxiliary signal over the span of the case data.
pub fn fetch(r: &Resolved, layout: &Layout) -> CliResult<()> {
    let data = load_inputs(r)?;
    let range = data.national.range();
    layout.reset(Stage::Fetch)?;
    for aux in &r.config.inputs.aux {
        let series = match &aux.source {
            AuxSource::Csv(p) => {
                let p = r.path(p);
                with_path(parse_daily_csv(read_input(&p)?.as_bytes(), &aux.name), &p)?
            }
            AuxSource::Fixture { path, query } => {
                let p = r.path(path);
                let source = with_path(FixtureSource::from_json(&read_input(&p)?), &p)?;
                with_path(CountClient::new(source).fetch_counts(query, range), &p)?
            }
            AuxSource::Http { endpoint, query } => {
                let source = HttpSource::from_env(endpoint.clone())?;
                CountClient::new(source).fetch_counts(query, range)?
            }
        };
        write_text(&aux_file(layout, &aux.name), &series.to_csv())?;
    }
    Ok(())
}

/// Builds the training input of every setting and the observed case trend.
///
/// Training inputs only see data up to the end of the training window.
pub fn transform(r: &Resolved, layout: &Layout) -> CliResult<()> {
    let data = load_inputs(r)?;
    let cfg = &r.config;
    let training = cfg.training.window();
    covering(&data.national, training, "case data")?;
    let raw = DateRange::new(data.national.start(), training.end)?;
    let cases = data.national.slice(raw)?;
    let aux: Vec<DailySeries> = cfg
        .inputs
        .aux
        .iter()
        .map(|a| read_aux(layout, &a.name))
        .collect::<CliResult<_>>()?;
    let observed = build_case_trend(&data.national, &cfg.trend)?;

    layout.reset(Stage::Transform)?;
    for s in predicted_settings(r) {
        let full = match s.aux {
            None => build_case_trend(&cases, &cfg.trend)?,
            Some(i) => {
                let a = &aux[i];
                covering(a, raw, &format!("auxiliary series {:?}", cfg.inputs.aux[i].name))?;
                build_trend_pair(&a.slice(raw)?, &cases, &cfg.trend)?
            }
        };
        let trend = full.slice(training).map_err(|e| {
            CliError::data(format!(
                "trend for {} does not cover the training window (needs {} days of history before it): {e}",
                s.name,
                7 + cfg.trend.window
            ))
        })?;
        write_text(&layout.file(Stage::Transform, &format!("{}.csv", s.name)), &trend.to_csv())?;
    }
    write_text(&layout.file(Stage::Transform, OBSERVED_TREND_FILE), &observed.to_csv())?;
    Ok(())
}

fn read_transform(layout: &Layout, setting: &str) -> CliResult<MultiSeries> {
    read_multi(&layout.file(Stage::Transform, &format!("{setting}.csv")), Stage::Transform)
}

pub fn train(r: &Resolved, layout: &Layout) -> CliResult<()> {
    let settings = predicted_settings(r);
    let inputs = settings
        .iter()
        .map(|s| read_transform(layout, &s.name))
        .collect::<CliResult<Vec<_>>>()?;
    layout.reset(Stage::Train)?;
    for (s, data) in settings.iter().zip(&inputs) {
        let ec = r.config.ensemble.to_config(seed::labeled(r.config.seed, &format!("train/{}", s.name)));
        let ens = train_ensemble(data, &ec).map_err(|e| CliError::from(e).with_field(s.name.clone()))?;
        write_json(&layout.file(Stage::Train, &format!("{}.json", s.name)), "ensemble", &ens)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictSummary {
    pub setting: String,
    pub members: usize,
    pub horizon_start: chrono::NaiveDate,
    pub horizon: usize,
    /// Sign of the first forecast case-trend value.
    pub initial_kind: TrendKind,
    pub changes: Vec<ChangePoint>,
}

pub fn predict_stage(r: &Resolved, layout: &Layout) -> CliResult<()> {
    let cfg = &r.config;
    let mut work = Vec::new();
    for s in predicted_settings(r) {
        let data = read_transform(layout, &s.name)?;
        let ens: Ensemble = read_json(&layout.file(Stage::Train, &format!("{}.json", s.name)), "ensemble", Stage::Train)?;
        if ens.columns != data.names() || ens.training_window != data.range() {
            return Err(CliError::data(format!(
                "ensemble for {} was trained on different inputs; rerun `train`",
                s.name
            )));
        }
        work.push((s, data, ens));
    }
    layout.reset(Stage::Predict)?;
    for (s, data, ens) in work {
        let fr = predict(&ens, &data, r.horizon(), cfg.prediction.aggregation)?;
        let changes = changes_from_forecast(&fr, cfg.prediction.persistence)?;
        let first = fr
            .column(CASE_TREND)
            .and_then(|c| c.first().copied())
            .ok_or_else(|| CliError::data("forecast lacks the case trend"))?;
        let summary = PredictSummary {
            setting: s.name.clone(),
            members: ens.len(),
            horizon_start: fr.horizon_start,
            horizon: fr.horizon(),
            initial_kind: kind_of(first),
            changes: changes.clone(),
        };
        let dir = layout.dir(Stage::Predict).join(&s.name);
        write_text(&dir.join("forecast.csv"), &fr.to_csv()?)?;
        write_json(&dir.join("forecast.json"), "forecast", &fr)?;
        write_json(&dir.join("changes.json"), "changes", &changes)?;
        write_json(&dir.join("summary.json"), "summary", &summary)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtSets {
    pub full: RtSet,
    pub up: RtSet,
    pub down: RtSet,
}

pub fn calibrate(r: &Resolved, layout: &Layout) -> CliResult<()> {
    let data = load_inputs(r)?;
    let c = &r.config.calibration;
    let period = c.period.range();
    let observed = data
        .per_location
        .iter()
        .map(|s| if c.smoothing_days > 1 { centered_mean(s, c.smoothing_days) } else { Ok(s.clone()) })
        .collect::<episim_core::Result<Vec<_>>>()?;
    for s in &observed {
        covering(s, period, &format!("case data for {} (after smoothing)", s.label()))?;
    }
    let full = calibrate_rt(&observed, &r.config.simulation.params, &data.locations, period, c.window_days)?;
    let (up, down) = split_trend_sets(&full, c.up_window.range(), c.down_window.range())?;
    layout.reset(Stage::Calibrate)?;
    write_text(&layout.file(Stage::Calibrate, "rt_full.csv"), &full.to_csv())?;
    write_text(&layout.file(Stage::Calibrate, "rt_up.csv"), &up.to_csv())?;
    write_text(&layout.file(Stage::Calibrate, "rt_down.csv"), &down.to_csv())?;
    write_json(&layout.file(Stage::Calibrate, "rt_sets.json"), "rt_sets", &RtSets { full, up, down })?;
    Ok(())
}

/// Initial compartments from the reports before the simulation starts.
pub fn initial_state(r: &Resolved, data: &InputData) -> CliResult<SeirState> {
    let start = r.config.simulation.period.start;
    let init_days = r.config.simulation.init_days as i64;
    let before_end = add_days(start, -1);
    let recent_range = DateRange::new(add_days(before_end, -(init_days - 1)), before_end)?;
    let mut recent = Vec::new();
    let mut cumulative = Vec::new();
    for s in &data.per_location {
        covering(s, recent_range, &format!("case data for {}", s.label()))?;
        recent.push(s.window(recent_range)?.iter().sum::<f64>() / init_days as f64);
        cumulative.push(s.window(DateRange::new(s.start(), before_end)?)?.iter().sum());
    }
    Ok(SeirState::from_incidence(&data.locations, &r.config.simulation.params, &recent, &cumulative)?)
}

/// Trend kind in force before the first predicted change. The first change
/// fixes it when there is one; otherwise the sign of the first forecast.
fn starting_kind(summary: &PredictSummary) -> TrendKind {
    match summary.changes.first().map(|c| c.direction) {
        Some(Direction::UpToDown) => TrendKind::Up,
        Some(Direction::DownToUp) => TrendKind::Down,
        None => summary.initial_kind,
    }
}

fn read_summary(layout: &Layout, setting: &str) -> CliResult<PredictSummary> {
    read_json(
        &layout.dir(Stage::Predict).join(setting).join("summary.json"),
        "summary",
        Stage::Predict,
    )
}

pub fn simulate(r: &Resolved, layout: &Layout) -> CliResult<()> {
    let cfg = &r.config;
    let sim = &cfg.simulation;
    let period = sim.period.range();
    let data = load_inputs(r)?;
    let sets: RtSets = read_json(&layout.file(Stage::Calibrate, "rt_sets.json"), "rt_sets", Stage::Calibrate)?;
    let schedule_seed = seed::labeled(cfg.seed, "schedule");
    let mut schedules: Vec<(String, RtSchedule)> = vec![
        (
            BASELINE1.into(),
            baseline_schedule(Baseline::Baseline1, &sets.full, &sets.up, period, sim.baseline_resample_days, schedule_seed)?,
        ),
        (
            BASELINE2.into(),
            baseline_schedule(Baseline::Baseline2, &sets.full, &sets.up, period, sim.baseline_resample_days, schedule_seed)?,
        ),
    ];
    for s in predicted_settings(r) {
        let summary = read_summary(layout, &s.name)?;
        let segments = schedule_segments(period, starting_kind(&summary), &summary.changes, r.change_lead_days())?;
        schedules.push((s.name, sample_rt_schedule(&segments, &sets.up, &sets.down, schedule_seed, sim.draw_mode)?));
    }
    let init = initial_state(r, &data)?;
    let ids: Vec<String> = data.locations.iter().map(|l| l.id.clone()).collect();

    layout.reset(Stage::Simulate)?;
    for (name, schedule) in schedules {
        let res = run_simulation(
            &init,
            &sim.params,
            &schedule,
            &data.mobility,
            &data.locations,
            period,
            sim.runs,
            seed::labeled(cfg.seed, "simulate"),
        )?;
        let mean = res.mean_incidence();
        let columns = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), mean.iter().map(|row| row[i]).collect()))
            .collect();
        let national = DailySeries::new(period.start, res.national_mean(), "national")?;
        let dir = layout.dir(Stage::Simulate).join(&name);
        write_text(&dir.join("schedule.csv"), &schedule.to_csv(&ids))?;
        write_text(&dir.join("runs.csv"), &res.to_csv())?;
        write_text(&dir.join("mean.csv"), &MultiSeries::new(period.start, columns)?.to_csv())?;
        write_text(&dir.join("national.csv"), &national.to_csv())?;
    }
    Ok(())
}

pub fn evaluate(r: &Resolved, layout: &Layout) -> CliResult<()> {
    let cfg = &r.config;
    let period = cfg.simulation.period.range();
    let data = load_inputs(r)?;
    covering(&data.national, period, "case data")?;
    let trend = read_multi(&layout.file(Stage::Transform, OBSERVED_TREND_FILE), Stage::Transform)?;
    let trend = trend.slice(period).map_err(|e| CliError::data(format!("observed trend does not cover the simulation period: {e}")))?;
    let observed_changes = detect_sign_changes(
        trend.column(CASE_TREND).ok_or_else(|| CliError::data("observed trend lacks the case trend"))?,
        period.start,
        cfg.prediction.persistence,
    );

    let predicted = predicted_settings(r);
    let mut rows = Vec::new();
    let mut plots = Vec::new();
    for name in all_settings(r) {
        let dir = layout.dir(Stage::Simulate).join(&name);
        let national = read_daily(&dir.join("national.csv"), Stage::Simulate, &name)?;
        let err = match cfg.evaluation.rmse_level {
            RmseLevel::National => rmse(&national, &data.national, period)?,
            RmseLevel::PerLocation => {
                let mean = read_multi(&dir.join("mean.csv"), Stage::Simulate)?;
                rmse_per_location(&mean.slice(period)?.rows(), &data.per_location, period)?
            }
        };
        let setting = predicted.iter().find(|s| s.name == name);
        let (deltas, members, tweets) = match setting {
            None => (None, None, None),
            Some(s) => {
                let summary = read_summary(layout, &s.name)?;
                let tweets = match s.aux {
                    None => None,
                    Some(i) => {
                        let a = read_aux(layout, &cfg.inputs.aux[i].name)?;
                        let w = a.window(cfg.training.window())?;
                        Some(w.iter().sum::<f64>() / w.len() as f64)
                    }
                };
                (Some(delta_days(&summary.changes, &observed_changes)), Some(summary.members), tweets)
            }
        };
        plots.push((name.clone(), plot_csv(&data.national, &national, period)?));
        rows.push(SettingResult {
            name,
            delta_days: deltas,
            rmse: err,
            ensemble_members: members,
            daily_tweets: tweets,
        });
    }
    let mut labels = vec![data.national.label().to_string()];
    labels.extend(cfg.inputs.aux.iter().map(|a| a.name.clone()));
    let report = build_report(
        rows,
        ReportMetadata {
            series_labels: labels,
            config_digest: r.digest(),
            observed_changes,
        },
    )?;
    layout.reset(Stage::Evaluate)?;
    write_text(&layout.file(Stage::Evaluate, "report.csv"), &report.to_csv())?;
    write_json(&layout.file(Stage::Evaluate, "report.json"), "report", &report)?;
    for (name, text) in plots {
        write_text(&layout.file(Stage::Evaluate, &format!("plot_{name}.csv")), &text)?;
    }
    Ok(())
}

pub fn run_stage(stage: Stage, r: &Resolved, layout: &Layout) -> CliResult<()> {
    match stage {
        Stage::Fetch => fetch(r, layout),
        Stage::Transform => transform(r, layout),
        Stage::Train => train(r, layout),
        Stage::Predict => predict_stage(r, layout),
        Stage::Calibrate => calibrate(r, layout),
        Stage::Simulate => simulate(r, layout),
        Stage::Evaluate => evaluate(r, layout),
    }
}

/// Reads the report written by `evaluate`.
pub fn read_report(layout: &Layout) -> CliResult<episim_core::evaluation::EvalReport> {
    read_json(&layout.file(Stage::Evaluate, "report.json"), "report", Stage::Evaluate)
}

/// Reads a setting's forecast written by `predict`.
pub fn read_forecast(layout: &Layout, setting: &str) -> CliResult<ForecastResult> {
    read_json(
        &layout.dir(Stage::Predict).join(setting).join("forecast.json"),
        "forecast",
        Stage::Predict,
    )
}
