//! Change-timing error, simulation RMSE and the comparison report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::ChangePoint;
use crate::series::{days_between, DailySeries, DateRange};

/// Largest |predicted - observed| distance accepted when pairing changes.
pub const MATCH_WINDOW_DAYS: i64 = 45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaDays {
    Days(i64),
    Miss(MissMarker),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissMarker {
    Miss,
}

impl DeltaDays {
    pub const MISS: DeltaDays = DeltaDays::Miss(MissMarker::Miss);

    pub fn days(&self) -> Option<i64> {
        match self {
            DeltaDays::Days(d) => Some(*d),
            DeltaDays::Miss(_) => None,
        }
    }
}

impl std::fmt::Display for DeltaDays {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeltaDays::Days(d) => write!(f, "{d}"),
            DeltaDays::Miss(_) => f.write_str("miss"),
        }
    }
}

/// Signed day offset `predicted - observed` for every observed change,
/// paired with the nearest same-direction prediction within
/// [`MATCH_WINDOW_DAYS`]. Ties go to the earlier prediction.
pub fn delta_days(predicted: &[ChangePoint], observed: &[ChangePoint]) -> Vec<DeltaDays> {
    observed
        .iter()
        .map(|obs| {
            predicted
                .iter()
                .filter(|p| p.direction == obs.direction)
                .map(|p| days_between(p.date, obs.date))
                .filter(|d| d.abs() <= MATCH_WINDOW_DAYS)
                .min_by_key(|d| (d.abs(), *d))
                .map_or(DeltaDays::MISS, DeltaDays::Days)
        })
        .collect()
}

/// Root-mean-square difference over `period`.
pub fn rmse(simulated: &DailySeries, observed: &DailySeries, period: DateRange) -> Result<f64> {
    let a = simulated.window(period)?;
    let b = observed.window(period)?;
    Ok(rmse_slices(a, b))
}

pub fn rmse_slices(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sse / a.len() as f64).sqrt()
}

/// Mean of per-location RMSEs; `simulated[day][location]` starts at
/// `period.start`.
pub fn rmse_per_location(simulated: &[Vec<f64>], observed: &[DailySeries], period: DateRange) -> Result<f64> {
    if simulated.len() != period.days() {
        return Err(Error::InvalidArgument("simulated series does not match period".into()));
    }
    let mut total = 0.0;
    for (i, obs) in observed.iter().enumerate() {
        let o = obs.window(period)?;
        let s: Vec<f64> = simulated.iter().map(|r| r[i]).collect();
        total += rmse_slices(&s, o);
    }
    Ok(total / observed.len() as f64)
}

/// `date,observed,simulated_mean`
pub fn plot_csv(observed: &DailySeries, simulated: &DailySeries, period: DateRange) -> Result<String> {
    let o = observed.window(period)?;
    let s = simulated.window(period)?;
    let mut out = String::from("date,observed,simulated_mean\n");
    for ((date, a), b) in period.iter().zip(o).zip(s) {
        let _ = writeln!(out, "{date},{a},{b}");
    }
    Ok(out)
}

/// One evaluated system setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub name: String,
    /// `None` for settings without change prediction.
    pub delta_days: Option<Vec<DeltaDays>>,
    pub rmse: f64,
    pub ensemble_members: Option<usize>,
    pub daily_tweets: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub series_labels: Vec<String>,
    pub config_digest: String,
    pub observed_changes: Vec<ChangePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<SettingResult>,
    pub metadata: ReportMetadata,
}

/// Rows sorted by RMSE, ties broken by setting name.
pub fn build_report(settings: Vec<SettingResult>, metadata: ReportMetadata) -> Result<EvalReport> {
    if settings.is_empty() {
        return Err(Error::InvalidArgument("report needs at least one setting".into()));
    }
    let mut rows = settings;
    rows.sort_by(|a, b| a.rmse.total_cmp(&b.rmse).then_with(|| a.name.cmp(&b.name)));
    Ok(EvalReport { rows, metadata })
}

impl EvalReport {
    pub fn row(&self, name: &str) -> Option<&SettingResult> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// `setting,delta_days,rmse,ensemble_members,daily_tweets`; Δdays values
    /// are joined with `/`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting,delta_days,rmse,ensemble_members,daily_tweets\n");
        for r in &self.rows {
            let deltas = match &r.delta_days {
                None => "n/a".to_string(),
                Some(ds) if ds.is_empty() => "none".to_string(),
                Some(ds) => ds.iter().map(ToString::to_string).collect::<Vec<_>>().join("/"),
            };
            let members = r.ensemble_members.map_or("n/a".into(), |m| m.to_string());
            let tweets = r.daily_tweets.map_or("n/a".into(), |t| format!("{t:.1}"));
            let _ = writeln!(out, "{},{},{:.1},{},{}", r.name, deltas, r.rmse, members, tweets);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;

    use super::*;
    use crate::forecast::Direction;
    use crate::series::parse_date;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn cp(date: &str, direction: Direction) -> ChangePoint {
        ChangePoint { date: d(date), direction }
    }

    #[test]
    fn early_prediction_is_negative() {
        let p = [cp("2021-05-07", Direction::UpToDown)];
        let o = [cp("2021-05-15", Direction::UpToDown)];
        assert_eq!(delta_days(&p, &o), vec![DeltaDays::Days(-8)]);
        assert_eq!(delta_days(&o, &o), vec![DeltaDays::Days(0)]);
        let late = [cp("2021-05-18", Direction::UpToDown)];
        assert_eq!(delta_days(&late, &o), vec![DeltaDays::Days(3)]);
    }

    #[test]
    fn direction_must_agree_and_distance_is_capped() {
        let o = [cp("2021-05-15", Direction::UpToDown)];
        assert_eq!(delta_days(&[cp("2021-05-14", Direction::DownToUp)], &o), vec![DeltaDays::MISS]);
        assert_eq!(delta_days(&[cp("2021-07-01", Direction::UpToDown)], &o), vec![DeltaDays::MISS]);
        assert_eq!(delta_days(&[cp("2021-06-29", Direction::UpToDown)], &o), vec![DeltaDays::Days(45)]);
        assert_eq!(delta_days(&[], &o).len(), 1);
    }

    #[test]
    fn nearest_match_wins() {
        let p = [
            cp("2021-05-01", Direction::UpToDown),
            cp("2021-05-13", Direction::UpToDown),
            cp("2021-05-17", Direction::UpToDown),
        ];
        let o = [cp("2021-05-15", Direction::UpToDown)];
        assert_eq!(delta_days(&p, &o), vec![DeltaDays::Days(-2)]);
    }

    #[test]
    fn miss_serializes_as_marker() {
        let json = serde_json::to_string(&vec![DeltaDays::Days(-8), DeltaDays::MISS]).unwrap();
        assert_eq!(json, r#"[-8,"miss"]"#);
    }

    fn series(values: Vec<f64>) -> DailySeries {
        DailySeries::new(d("2021-04-23"), values, "x").unwrap()
    }

    #[test]
    fn rmse_examples() {
        let a = series(vec![100.0, 200.0]);
        let p = a.range();
        assert_eq!(rmse(&a, &a, p).unwrap(), 0.0);
        let b = series(vec![110.0, 180.0]);
        assert!((rmse(&a, &b, p).unwrap() - 250f64.sqrt()).abs() < 1e-9);
        let shifted = series(vec![105.0, 205.0]);
        assert!((rmse(&shifted, &a, p).unwrap() - 5.0).abs() < 1e-12);
        let out = DateRange::new(d("2021-04-22"), d("2021-04-24")).unwrap();
        assert!(rmse(&a, &b, out).is_err());
    }

    fn row(name: &str, rmse: f64, deltas: Option<Vec<DeltaDays>>) -> SettingResult {
        SettingResult {
            name: name.into(),
            delta_days: deltas,
            rmse,
            ensemble_members: None,
            daily_tweets: None,
        }
    }

    fn meta() -> ReportMetadata {
        ReportMetadata {
            series_labels: vec![],
            config_digest: String::new(),
            observed_changes: vec![],
        }
    }

    #[test]
    fn report_layout() {
        let r = build_report(vec![row("only", 1.0, None)], meta()).unwrap();
        assert_eq!(r.to_csv().lines().count(), 2);
        assert!(build_report(vec![], meta()).is_err());

        let r = build_report(
            vec![
                row("baseline1", 18093.9, None),
                row("zeta", 50.0, Some(vec![DeltaDays::Days(-8), DeltaDays::Days(-19)])),
                row("alpha", 50.0, Some(vec![DeltaDays::MISS])),
            ],
            meta(),
        )
        .unwrap();
        let names: Vec<_> = r.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["alpha", "zeta", "baseline1"]);
        let csv = r.to_csv();
        assert!(csv.contains("baseline1,n/a,18093.9,n/a,n/a"));
        assert!(csv.contains("zeta,-8/-19,50.0"));
        assert!(csv.contains("alpha,miss,50.0"));
    }
}
