//! Reproduction-number scenarios: calibrated R sets, up/down trend pools,
//! change-driven piecewise schedules and the two fixed-pool baselines.

use chrono::NaiveDate;
use rand::distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{ChangePoint, Direction};
use crate::seed::{self, Rng};
use crate::seir::{Compartments, SeirParams};
use crate::series::{add_days, DailySeries, DateRange, LocationSet};

/// One calibrated value and the window it was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtValue {
    pub window: DateRange,
    /// Window midpoint.
    pub date: NaiveDate,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtSet {
    pub locations: Vec<String>,
    pub values: Vec<Vec<RtValue>>,
}

impl RtSet {
    pub fn new(locations: Vec<String>, values: Vec<Vec<RtValue>>) -> Result<Self> {
        if locations.len() != values.len() {
            return Err(Error::InvalidArgument("one value list per location required".into()));
        }
        for (loc, vs) in locations.iter().zip(&values) {
            if vs.is_empty() {
                return Err(Error::EmptyPartition {
                    kind: "R".into(),
                    location: loc.clone(),
                });
            }
            if vs.iter().any(|v| !(v.value > 0.0) || !v.value.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-positive R value for {loc:?}")));
            }
        }
        Ok(Self { locations, values })
    }

    /// Builds a set from plain values, all dated on `window`.
    pub fn from_values(locations: Vec<String>, values: Vec<Vec<f64>>, window: DateRange) -> Result<Self> {
        let vals = values
            .into_iter()
            .map(|vs| {
                vs.into_iter()
                    .map(|value| RtValue {
                        window,
                        date: window.start,
                        value,
                    })
                    .collect()
            })
            .collect();
        Self::new(locations, vals)
    }

    /// `(min, max)` per location.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.values
            .iter()
            .map(|vs| {
                vs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v.value), hi.max(v.value))
                })
            })
            .collect()
    }

    /// `location,date_or_window,R`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,date_or_window,R\n");
        for (loc, vs) in self.locations.iter().zip(&self.values) {
            for v in vs {
                out.push_str(&format!("{loc},{},{}\n", v.window, v.value));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    Up,
    Down,
}

impl TrendKind {
    pub fn flipped(self) -> Self {
        match self {
            TrendKind::Up => TrendKind::Down,
            TrendKind::Down => TrendKind::Up,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            TrendKind::Up => "up",
            TrendKind::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendSegment {
    pub window: DateRange,
    pub kind: TrendKind,
}

/// Daily per-location reproduction numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtSchedule {
    pub start: NaiveDate,
    /// `days[d][location]`
    pub days: Vec<Vec<f64>>,
}

impl RtSchedule {
    pub fn constant(start: NaiveDate, days: usize, values: &[f64]) -> Self {
        Self {
            start,
            days: vec![values.to_vec(); days],
        }
    }

    pub fn at(&self, date: NaiveDate) -> Option<&[f64]> {
        let i = (date - self.start).num_days();
        if i < 0 {
            return None;
        }
        self.days.get(i as usize).map(Vec::as_slice)
    }

    pub fn range(&self) -> DateRange {
        DateRange {
            start: self.start,
            end: add_days(self.start, self.days.len() as i64 - 1),
        }
    }

    /// `location,date_or_window,R`, one row per location and day.
    pub fn to_csv(&self, locations: &[String]) -> String {
        let mut out = String::from("location,date_or_window,R\n");
        for (i, loc) in locations.iter().enumerate() {
            for (d, row) in self.days.iter().enumerate() {
                out.push_str(&format!("{loc},{},{}\n", add_days(self.start, d as i64), row[i]));
            }
        }
        out
    }
}

pub const R_GRID_MIN: f64 = 0.1;
pub const R_GRID_MAX: f64 = 5.0;
pub const R_GRID_STEP: f64 = 0.01;

fn r_grid() -> Vec<f64> {
    let n = ((R_GRID_MAX - R_GRID_MIN) / R_GRID_STEP).round() as usize;
    (0..=n).map(|k| ((R_GRID_MIN + k as f64 * R_GRID_STEP) * 100.0).round() / 100.0).collect()
}

fn hazard(rate: f64, dt: f64) -> f64 {
    -(-dt * rate).exp_m1()
}

/// Dominant eigenvector of the per-step linearised (E, I_1..I_k) map at
/// susceptible fraction `s_frac`, normalised to unit sum.
fn growth_mode(params: &SeirParams, r: f64, s_frac: f64) -> Vec<f64> {
    let k = params.k_stages;
    let infect = s_frac * params.dt * r * params.gamma;
    let pe = hazard(params.sigma, params.dt);
    let pi = hazard(params.gamma_prime(), params.dt);
    let mut x = vec![1.0; k + 1];
    for _ in 0..4000 {
        let total_i: f64 = x[1..].iter().sum();
        let mut next = vec![0.0; k + 1];
        next[0] = x[0] * (1.0 - pe) + infect * total_i;
        next[1] = x[1] * (1.0 - pi) + x[0] * pe;
        for j in 2..=k {
            next[j] = x[j] * (1.0 - pi) + x[j - 1] * pi;
        }
        let norm: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= norm);
        let delta: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if delta < 1e-14 {
            break;
        }
    }
    x
}

/// Expected daily incidence of an isolated location over `days` days.
pub fn isolated_mean_incidence(params: &SeirParams, population: f64, start: &Compartments<f64>, r: f64, days: usize) -> Vec<f64> {
    let mut c = start.clone();
    let pe = hazard(params.sigma, params.dt);
    let pi = hazard(params.gamma_prime(), params.dt);
    let beta = r * params.gamma;
    let mut out = Vec::with_capacity(days);
    for _ in 0..days {
        let mut daily = 0.0;
        for _ in 0..params.steps_per_day() {
            let inf = c.infectious();
            let pressure = if inf <= 0.0 { 0.0 } else { inf.powf(params.alpha) };
            let new_e = c.s * hazard(beta * pressure / population, params.dt);
            let new_i = c.e * pe;
            let moves: Vec<f64> = c.i.iter().map(|v| v * pi).collect();
            let k = c.i.len();
            for j in 0..k {
                let inflow = if j == 0 { new_i } else { moves[j - 1] };
                c.i[j] += inflow - moves[j];
            }
            c.s -= new_e;
            c.e += new_e - new_i;
            c.r += moves[k - 1];
            daily += new_e;
        }
        out.push(daily);
    }
    out
}

fn state_from_mode(params: &SeirParams, population: f64, removed: f64, mode: &[f64], prevalence: f64) -> Compartments<f64> {
    let prevalence = prevalence.min((population - removed).max(0.0));
    let e = mode[0] * prevalence;
    let i: Vec<f64> = mode[1..].iter().map(|v| v * prevalence).collect();
    debug_assert_eq!(i.len(), params.k_stages);
    Compartments {
        s: population - removed - prevalence,
        e,
        i,
        r: removed,
    }
}

/// Least-squares fit of one R value to a window of observed incidence.
///
/// For each candidate R the initial E/I occupancy follows the growth mode of
/// the linearised model, scaled so the model incidence best matches the
/// observations; the fitted candidate minimises the squared error.
pub fn fit_window(params: &SeirParams, population: f64, removed_before: f64, observed: &[f64]) -> f64 {
    let days = observed.len();
    let mean_obs = observed.iter().sum::<f64>() / days as f64;
    let guess = mean_obs * (1.0 / params.sigma + 1.0 / params.gamma);
    let s_frac = ((population - removed_before - guess) / population).clamp(0.0, 1.0);
    let mut best = (f64::INFINITY, R_GRID_MIN);
    for r in r_grid() {
        let mode = growth_mode(params, r, s_frac);
        let trial = isolated_mean_incidence(
            params,
            population,
            &state_from_mode(params, population, removed_before, &mode, guess),
            r,
            days,
        );
        let ff: f64 = trial.iter().map(|v| v * v).sum();
        if !(ff > 0.0) {
            continue;
        }
        let scale = trial.iter().zip(observed).map(|(a, b)| a * b).sum::<f64>() / ff;
        let fitted = isolated_mean_incidence(
            params,
            population,
            &state_from_mode(params, population, removed_before, &mode, guess * scale),
            r,
            days,
        );
        let sse: f64 = fitted.iter().zip(observed).map(|(a, b)| (a - b) * (a - b)).sum();
        if sse < best.0 {
            best = (sse, r);
        }
    }
    best.1
}

/// Grid-search calibration of R over sliding windows of `window_days`.
///
/// `observed[i]` is the daily new-infection series of location `i`; it must
/// cover `period`. Windows with no incidence are skipped.
pub fn calibrate_rt(
    observed: &[DailySeries],
    params: &SeirParams,
    locs: &LocationSet,
    period: DateRange,
    window_days: usize,
) -> Result<RtSet> {
    params.validate()?;
    if window_days < 3 {
        return Err(Error::InvalidArgument("calibration window must be >= 3 days".into()));
    }
    if observed.len() != locs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} observed series for {} locations",
            observed.len(),
            locs.len()
        )));
    }
    if period.days() < window_days {
        return Err(Error::InvalidArgument("calibration period shorter than one window".into()));
    }
    let per_location = observed
        .par_iter()
        .zip(locs.iter().collect::<Vec<_>>())
        .map(|(series, loc)| {
            series.window(period)?;
            let population = loc.population as f64;
            let mut values = Vec::new();
            for offset in 0..=(period.days() - window_days) {
                let start = add_days(period.start, offset as i64);
                let window = DateRange::new(start, add_days(start, window_days as i64 - 1))?;
                let obs = series.window(window)?;
                if obs.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let removed: f64 = if start > series.start() {
                    series.window(DateRange::new(series.start(), add_days(start, -1))?)?.iter().sum()
                } else {
                    0.0
                };
                values.push(RtValue {
                    window,
                    date: add_days(start, (window_days as i64 - 1) / 2),
                    value: fit_window(params, population, removed, obs),
                });
            }
            if values.is_empty() {
                return Err(Error::NoCalibratableWindow(loc.id.clone()));
            }
            Ok(values)
        })
        .collect::<Result<Vec<_>>>()?;
    RtSet::new(locs.iter().map(|l| l.id.clone()).collect(), per_location)
}

/// Splits calibrated values into up- and down-trend pools.
///
/// A value joins a pool only if its whole fit window lies inside that
/// pool's window. Fits that straddle the switch mix both regimes, so they
/// stay out of both pools. They remain in `full`.
pub fn split_trend_sets(full: &RtSet, up_window: DateRange, down_window: DateRange) -> Result<(RtSet, RtSet)> {
    if up_window.overlaps(&down_window) {
        return Err(Error::InvalidArgument(format!(
            "up window {up_window} overlaps down window {down_window}"
        )));
    }
    let pick = |w: DateRange| -> Vec<Vec<RtValue>> {
        full.values
            .iter()
            .map(|vs| vs.iter().filter(|v| w.contains(v.window.start) && w.contains(v.window.end)).copied().collect())
            .collect()
    };
    let check = |vals: &Vec<Vec<RtValue>>, kind: TrendKind| -> Result<()> {
        for (loc, vs) in full.locations.iter().zip(vals) {
            if vs.is_empty() {
                return Err(Error::EmptyPartition {
                    kind: kind.as_str().into(),
                    location: loc.clone(),
                });
            }
        }
        Ok(())
    };
    let up = pick(up_window);
    let down = pick(down_window);
    check(&up, TrendKind::Up)?;
    check(&down, TrendKind::Down)?;
    Ok((
        RtSet::new(full.locations.clone(), up)?,
        RtSet::new(full.locations.clone(), down)?,
    ))
}

/// Tiles `period` into trend segments; each change starts a segment of the
/// opposite kind on its own date.
pub fn segments_from_changes(period: DateRange, initial_kind: TrendKind, changes: &[ChangePoint]) -> Result<Vec<TrendSegment>> {
    let mut out = Vec::with_capacity(changes.len() + 1);
    let mut kind = initial_kind;
    let mut seg_start = period.start;
    for cp in changes {
        if cp.date <= seg_start || cp.date > period.end {
            return Err(Error::InvalidArgument(format!(
                "change on {} is outside {seg_start}..={} or out of order",
                cp.date, period.end
            )));
        }
        let expected = match kind {
            TrendKind::Up => Direction::UpToDown,
            TrendKind::Down => Direction::DownToUp,
        };
        if cp.direction != expected {
            return Err(Error::DirectionInconsistency {
                date: cp.date,
                current: kind.as_str().into(),
            });
        }
        out.push(TrendSegment {
            window: DateRange::new(seg_start, add_days(cp.date, -1))?,
            kind,
        });
        kind = kind.flipped();
        seg_start = cp.date;
    }
    out.push(TrendSegment {
        window: DateRange::new(seg_start, period.end)?,
        kind,
    });
    Ok(out)
}

/// Trend segments for `period` from changes detected on a forecast that may
/// start before the period.
///
/// Every change is moved `lead_days` earlier first. A trend change in a
/// trailing-smoothed signal shows up some days after the change in the
/// underlying growth rate. The lead moves the switch in R back to when the
/// growth rate changed. Changes that land on or before `period.start` only
/// flip the kind the period starts in. Changes after `period.end` are
/// dropped.
pub fn schedule_segments(
    period: DateRange,
    initial_kind: TrendKind,
    changes: &[ChangePoint],
    lead_days: i64,
) -> Result<Vec<TrendSegment>> {
    let mut kind = initial_kind;
    let mut inside = Vec::new();
    for cp in changes {
        let date = add_days(cp.date, -lead_days);
        if date > period.end {
            break;
        }
        if date <= period.start {
            let expected = match kind {
                TrendKind::Up => Direction::UpToDown,
                TrendKind::Down => Direction::DownToUp,
            };
            if cp.direction != expected {
                return Err(Error::DirectionInconsistency {
                    date: cp.date,
                    current: kind.as_str().into(),
                });
            }
            kind = kind.flipped();
        } else {
            inside.push(ChangePoint { date, direction: cp.direction });
        }
    }
    segments_from_changes(period, kind, &inside)
}

/// Trend kind implied by the first value of a trend sequence (zero counts as
/// up).
pub fn kind_of(value: f64) -> TrendKind {
    if value < 0.0 {
        TrendKind::Down
    } else {
        TrendKind::Up
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawMode {
    /// One value per location and segment.
    #[default]
    PerSegment,
    PerDay,
}

fn draw(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo >= hi {
        return lo;
    }
    Uniform::new_inclusive(lo, hi).expect("finite bounds").sample(rng)
}

fn fill_schedule(
    segments: &[TrendSegment],
    n_locations: usize,
    seed: u64,
    mode: DrawMode,
    bounds_for: impl Fn(TrendKind) -> Vec<(f64, f64)>,
) -> Result<RtSchedule> {
    let first = segments
        .first()
        .ok_or_else(|| Error::InvalidArgument("no segments".into()))?;
    for pair in segments.windows(2) {
        if add_days(pair[0].window.end, 1) != pair[1].window.start {
            return Err(Error::InvalidArgument("segments do not tile a period".into()));
        }
    }
    let mut rng = seed::rng(seed);
    let mut days = Vec::new();
    for seg in segments {
        let bounds = bounds_for(seg.kind);
        if bounds.len() != n_locations {
            return Err(Error::InvalidArgument("R set has the wrong number of locations".into()));
        }
        let mut row: Vec<f64> = bounds.iter().map(|&b| draw(&mut rng, b)).collect();
        for d in 0..seg.window.days() {
            if d > 0 && mode == DrawMode::PerDay {
                row = bounds.iter().map(|&b| draw(&mut rng, b)).collect();
            }
            days.push(row.clone());
        }
    }
    Ok(RtSchedule {
        start: first.window.start,
        days,
    })
}

/// Draws `R_i` uniformly between the min and max of the kind-matching pool.
pub fn sample_rt_schedule(segments: &[TrendSegment], up: &RtSet, down: &RtSet, seed: u64, mode: DrawMode) -> Result<RtSchedule> {
    if up.locations != down.locations {
        return Err(Error::InvalidArgument("up and down sets cover different locations".into()));
    }
    let (ub, db) = (up.bounds(), down.bounds());
    fill_schedule(segments, up.locations.len(), seed, mode, |k| match k {
        TrendKind::Up => ub.clone(),
        TrendKind::Down => db.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Envelope of every calibrated value.
    Baseline1,
    /// Up-trend pool only.
    Baseline2,
}

/// Change-unaware schedule drawn from a fixed pool, one draw per
/// `resample_every` days (`None`: one draw for the whole period).
pub fn baseline_schedule(
    mode: Baseline,
    full: &RtSet,
    up: &RtSet,
    period: DateRange,
    resample_every: Option<usize>,
    seed: u64,
) -> Result<RtSchedule> {
    let pool = match mode {
        Baseline::Baseline1 => full,
        Baseline::Baseline2 => up,
    };
    let every = resample_every.unwrap_or(period.days()).max(1);
    let mut segments = Vec::new();
    let mut start = period.start;
    while start <= period.end {
        let end = add_days(start, every as i64 - 1).min(period.end);
        segments.push(TrendSegment {
            window: DateRange::new(start, end)?,
            kind: TrendKind::Up,
        });
        start = add_days(end, 1);
    }
    let bounds = pool.bounds();
    fill_schedule(&segments, pool.locations.len(), seed, DrawMode::PerSegment, |_| bounds.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::parse_date;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn range(a: &str, b: &str) -> DateRange {
        DateRange::new(d(a), d(b)).unwrap()
    }

    fn dated(loc_values: &[(&str, f64)]) -> RtSet {
        let vals = vec![loc_values
            .iter()
            .map(|&(date, value)| RtValue {
                window: range(date, date),
                date: d(date),
                value,
            })
            .collect()];
        RtSet::new(vec!["A".into()], vals).unwrap()
    }

    #[test]
    fn split_by_window_membership() {
        let full = dated(&[("2020-12-28", 1.4), ("2021-01-10", 0.8)]);
        let (up, down) =
            split_trend_sets(&full, range("2020-12-24", "2021-01-06"), range("2021-01-07", "2021-01-21")).unwrap();
        assert_eq!(up.values[0].len(), 1);
        assert_eq!(up.values[0][0].value, 1.4);
        assert_eq!(down.values[0][0].value, 0.8);
    }

    #[test]
    fn straddling_fits_join_neither_pool() {
        let mut full = dated(&[("2020-12-28", 1.4), ("2021-01-10", 0.8)]);
        full.values[0].push(RtValue {
            window: range("2021-01-04", "2021-01-10"),
            date: d("2021-01-07"),
            value: 0.3,
        });
        let (up, down) =
            split_trend_sets(&full, range("2020-12-24", "2021-01-06"), range("2021-01-07", "2021-01-21")).unwrap();
        assert_eq!(up.bounds()[0], (1.4, 1.4));
        assert_eq!(down.bounds()[0], (0.8, 0.8));
        assert_eq!(full.bounds()[0], (0.3, 1.4));
    }

    #[test]
    fn split_fails_on_empty_down_set() {
        let full = dated(&[("2020-12-28", 1.4), ("2020-12-30", 1.5)]);
        let err =
            split_trend_sets(&full, range("2020-12-24", "2021-01-06"), range("2021-01-07", "2021-01-21")).unwrap_err();
        assert!(matches!(err, Error::EmptyPartition { kind, .. } if kind == "down"));
    }

    #[test]
    fn segments_without_changes() {
        let p = range("2021-04-23", "2021-06-30");
        let segs = segments_from_changes(p, TrendKind::Up, &[]).unwrap();
        assert_eq!(segs, vec![TrendSegment { window: p, kind: TrendKind::Up }]);
    }

    #[test]
    fn segments_from_two_changes() {
        let p = range("2021-04-23", "2021-06-30");
        let changes = [
            ChangePoint { date: d("2021-05-15"), direction: Direction::UpToDown },
            ChangePoint { date: d("2021-06-25"), direction: Direction::DownToUp },
        ];
        let segs = segments_from_changes(p, TrendKind::Up, &changes).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[0].window, range("2021-04-23", "2021-05-14"));
        assert_eq!(segs[1].window, range("2021-05-15", "2021-06-24"));
        assert_eq!(segs[1].kind, TrendKind::Down);
        assert_eq!(segs[2].window, range("2021-06-25", "2021-06-30"));
        assert_eq!(segs[2].kind, TrendKind::Up);
        assert_eq!(segs.iter().map(|s| s.window.days()).sum::<usize>(), p.days());

        let bad = [ChangePoint { date: d("2021-05-15"), direction: Direction::DownToUp }];
        assert!(matches!(
            segments_from_changes(p, TrendKind::Up, &bad),
            Err(Error::DirectionInconsistency { .. })
        ));
    }

    #[test]
    fn lead_shifts_and_early_changes_flip_the_start() {
        let p = range("2021-04-23", "2021-06-30");
        let changes = [
            ChangePoint { date: d("2021-04-20"), direction: Direction::UpToDown },
            ChangePoint { date: d("2021-05-25"), direction: Direction::DownToUp },
            ChangePoint { date: d("2021-07-20"), direction: Direction::UpToDown },
        ];
        let segs = schedule_segments(p, TrendKind::Up, &changes, 10).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].kind, TrendKind::Down);
        assert_eq!(segs[0].window, range("2021-04-23", "2021-05-14"));
        assert_eq!(segs[1].window, range("2021-05-15", "2021-06-30"));

        let unshifted = schedule_segments(p, TrendKind::Up, &changes[..2], 0).unwrap();
        assert_eq!(unshifted[0].kind, TrendKind::Down);
        assert_eq!(unshifted[1].window.start, d("2021-05-25"));
        assert!(schedule_segments(p, TrendKind::Up, &changes[1..2], 40).is_err());
        assert_eq!(kind_of(0.0), TrendKind::Up);
        assert_eq!(kind_of(-1e-9), TrendKind::Down);
    }

    fn single(v: &[f64]) -> RtSet {
        RtSet::from_values(vec!["A".into()], vec![v.to_vec()], range("2021-01-01", "2021-01-07")).unwrap()
    }

    #[test]
    fn degenerate_interval() {
        let segs = [TrendSegment { window: range("2021-04-23", "2021-04-30"), kind: TrendKind::Up }];
        let s = sample_rt_schedule(&segs, &single(&[2.0]), &single(&[0.5]), 1, DrawMode::PerSegment).unwrap();
        assert!(s.days.iter().all(|r| r[0] == 2.0));
    }

    #[test]
    fn uniform_draws_stay_in_bounds() {
        let start = d("2000-01-01");
        let segs = [TrendSegment {
            window: DateRange::new(start, add_days(start, 9_999)).unwrap(),
            kind: TrendKind::Down,
        }];
        let s = sample_rt_schedule(&segs, &single(&[3.0]), &single(&[1.0, 2.0]), 5, DrawMode::PerDay).unwrap();
        assert_eq!(s.days.len(), 10_000);
        assert!(s.days.iter().all(|r| (1.0..=2.0).contains(&r[0])));
        let mean = s.days.iter().map(|r| r[0]).sum::<f64>() / 10_000.0;
        assert!((mean - 1.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn sampling_is_seeded() {
        let segs = segments_from_changes(
            range("2021-04-23", "2021-06-30"),
            TrendKind::Up,
            &[ChangePoint { date: d("2021-05-15"), direction: Direction::UpToDown }],
        )
        .unwrap();
        let (up, down) = (single(&[1.2, 1.6]), single(&[0.6, 0.9]));
        let a = sample_rt_schedule(&segs, &up, &down, 11, DrawMode::PerSegment).unwrap();
        let b = sample_rt_schedule(&segs, &up, &down, 11, DrawMode::PerSegment).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.range(), range("2021-04-23", "2021-06-30"));
        assert!(a.days[..22].iter().all(|r| r == &a.days[0]));
        assert!((1.2..=1.6).contains(&a.days[0][0]));
        assert!((0.6..=0.9).contains(&a.days[30][0]));
    }

    #[test]
    fn baselines() {
        let p = range("2021-04-23", "2021-06-30");
        let full = single(&[0.7, 1.1, 1.5]);
        let b2 = baseline_schedule(Baseline::Baseline2, &full, &single(&[2.0]), p, None, 3).unwrap();
        assert!(b2.days.iter().all(|r| r[0] == 2.0));
        assert_eq!(b2.days.len(), p.days());

        assert_eq!(full.bounds(), vec![(0.7, 1.5)]);
        let b1 = baseline_schedule(Baseline::Baseline1, &full, &single(&[2.0]), p, None, 3).unwrap();
        assert!(b1.days.iter().all(|r| r == &b1.days[0] && (0.7..=1.5).contains(&r[0])));
        let other = baseline_schedule(Baseline::Baseline1, &full, &single(&[2.0]), p, None, 4).unwrap();
        assert_ne!(b1, other);

        let weekly = baseline_schedule(Baseline::Baseline1, &full, &single(&[2.0]), p, Some(7), 3).unwrap();
        assert_eq!(weekly.days[0], weekly.days[6]);
        assert_ne!(weekly.days[6], weekly.days[7]);
    }

    #[test]
    fn grid_spans_the_search_interval() {
        let g = r_grid();
        assert_eq!(g.len(), 491);
        assert_eq!(g[0], 0.1);
        assert_eq!(*g.last().unwrap(), 5.0);
    }

    #[test]
    fn all_zero_series_cannot_be_calibrated() {
        let locs = LocationSet::new(vec![crate::series::Location { id: "A".into(), population: 1000 }]).unwrap();
        let s = DailySeries::new(d("2021-01-01"), vec![0.0; 20], "A").unwrap();
        let err = calibrate_rt(&[s], &SeirParams::default(), &locs, range("2021-01-01", "2021-01-20"), 7).unwrap_err();
        assert!(matches!(err, Error::NoCalibratableWindow(_)));
    }
}
