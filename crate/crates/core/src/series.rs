//! Dated daily series, locations and mobility.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Read;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|_| Error::BadDate(s.to_string()))
}

pub fn add_days(date: NaiveDate, n: i64) -> NaiveDate {
    if n >= 0 {
        date + Days::new(n as u64)
    } else {
        date - Days::new(n.unsigned_abs())
    }
}

/// Signed day difference `a - b`.
pub fn days_between(a: NaiveDate, b: NaiveDate) -> i64 {
    (a - b).num_days()
}

/// An inclusive range of calendar dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidArgument(format!(
                "date range starts after it ends ({start} > {end})"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn days(&self) -> usize {
        days_between(self.end, self.start) as usize + 1
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.days()).map(|i| add_days(self.start, i as i64))
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl std::fmt::Display for DateRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.start, self.end)
    }
}

/// Contiguous non-negative daily observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    start: NaiveDate,
    values: Vec<f64>,
    label: String,
}

impl DailySeries {
    pub fn new(start: NaiveDate, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("daily series must not be empty".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NegativeValue {
                    date: add_days(start, i as i64),
                    value: v,
                });
            }
        }
        Ok(Self {
            start,
            values,
            label: label.into(),
        })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, i: usize) -> NaiveDate {
        add_days(self.start, i as i64)
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        let i = days_between(date, self.start);
        if i < 0 {
            return None;
        }
        self.values.get(i as usize).copied()
    }

    /// Values over `range`, which must lie inside the series.
    pub fn window(&self, range: DateRange) -> Result<&[f64]> {
        if !self.range().contains(range.start) || !self.range().contains(range.end) {
            return Err(Error::Coverage {
                label: self.label.clone(),
                start: range.start,
                end: range.end,
            });
        }
        let i = days_between(range.start, self.start) as usize;
        Ok(&self.values[i..i + range.days()])
    }

    pub fn slice(&self, range: DateRange) -> Result<DailySeries> {
        let values = self.window(range)?.to_vec();
        Ok(Self {
            start: range.start,
            values,
            label: self.label.clone(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.date_at(i).format(DATE_FORMAT), v);
        }
        out
    }
}

/// Centered moving average over an odd `window`; the result loses
/// `(window - 1) / 2` days at each end.
pub fn centered_mean(src: &DailySeries, window: usize) -> Result<DailySeries> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("smoothing window must be odd, got {window}")));
    }
    if src.len() < window {
        return Err(Error::InvalidArgument(format!(
            "series of {} days is shorter than the {window}-day window",
            src.len()
        )));
    }
    let values = src
        .values
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    DailySeries::new(add_days(src.start, (window as i64 - 1) / 2), values, src.label.clone())
}

/// Parses a `date,value` CSV into a contiguous series.
pub fn parse_daily_csv<R: Read>(reader: R, label: &str) -> Result<DailySeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "value" {
        return Err(Error::Parse {
            line: 1,
            reason: "expected header `date,value`".into(),
        });
    }
    let mut start = None;
    let mut prev: Option<NaiveDate> = None;
    let mut values = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record?;
        let line = n + 2;
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                reason: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let date = parse_date(&record[0])?;
        let value: f64 = record[1].parse().map_err(|_| Error::Parse {
            line,
            reason: format!("bad value {:?}", &record[1]),
        })?;
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeValue { date, value });
        }
        if let Some(p) = prev {
            match days_between(date, p) {
                1 => {}
                0 => return Err(Error::DuplicateDate(date)),
                d if d > 1 => return Err(Error::Gap { missing: add_days(p, 1) }),
                _ => {
                    return Err(Error::Parse {
                        line,
                        reason: format!("dates not ascending at {date}"),
                    })
                }
            }
        } else {
            start = Some(date);
        }
        prev = Some(date);
        values.push(value);
    }
    let start = start.ok_or_else(|| Error::Parse {
        line: 1,
        reason: "no data rows".into(),
    })?;
    DailySeries::new(start, values, label)
}

/// Equal-length named columns sharing one start date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeries {
    start: NaiveDate,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl MultiSeries {
    pub fn new(start: NaiveDate, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let Some(len) = columns.first().map(|c| c.1.len()) else {
            return Err(Error::InvalidArgument("multi-series needs a column".into()));
        };
        let mut seen = HashSet::new();
        for (name, col) in &columns {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate column {name:?}")));
            }
            if col.len() != len {
                return Err(Error::InvalidArgument(format!(
                    "column {name:?} has length {}, expected {len}",
                    col.len()
                )));
            }
        }
        let (names, columns) = columns.into_iter().unzip();
        Ok(Self {
            start,
            names,
            columns,
        })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        add_days(self.start, self.len() as i64 - 1)
    }

    pub fn range(&self) -> DateRange {
        DateRange {
            start: self.start,
            end: self.end(),
        }
    }

    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&self.columns[i])
    }

    pub fn column_at(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[t]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|t| self.row(t)).collect()
    }

    pub fn slice(&self, range: DateRange) -> Result<MultiSeries> {
        if !self.range().contains(range.start) || !self.range().contains(range.end) {
            return Err(Error::Coverage {
                label: self.names.join("+"),
                start: range.start,
                end: range.end,
            });
        }
        let i = days_between(range.start, self.start) as usize;
        let n = range.days();
        Ok(Self {
            start: range.start,
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[i..i + n].to_vec()).collect(),
        })
    }

    /// Keeps only the named columns, in the order given.
    pub fn select(&self, names: &[&str]) -> Result<MultiSeries> {
        let cols = names
            .iter()
            .map(|&n| {
                self.column(n)
                    .map(|c| (n.to_string(), c.to_vec()))
                    .ok_or_else(|| Error::InvalidArgument(format!("no column {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        MultiSeries::new(self.start, cols)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for t in 0..self.len() {
            let _ = write!(out, "{}", add_days(self.start, t as i64).format(DATE_FORMAT));
            for c in &self.columns {
                let _ = write!(out, ",{}", c[t]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<MultiSeries> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "date" {
            return Err(Error::Parse {
                line: 1,
                reason: "expected header `date,<column>,...`".into(),
            });
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut columns = vec![Vec::new(); names.len()];
        let mut start = None;
        let mut prev: Option<NaiveDate> = None;
        for (n, record) in rdr.records().enumerate() {
            let record = record?;
            let date = parse_date(&record[0])?;
            if let Some(p) = prev {
                if days_between(date, p) != 1 {
                    return Err(Error::Gap { missing: add_days(p, 1) });
                }
            } else {
                start = Some(date);
            }
            prev = Some(date);
            for (k, col) in columns.iter_mut().enumerate() {
                let field = record.get(k + 1).unwrap_or("");
                col.push(field.parse().map_err(|_| Error::Parse {
                    line: n + 2,
                    reason: format!("bad value {field:?}"),
                })?);
            }
        }
        let start = start.ok_or_else(|| Error::Parse {
            line: 1,
            reason: "no data rows".into(),
        })?;
        MultiSeries::new(start, names.into_iter().zip(columns).collect())
    }
}

/// Trims two series to `range` and stacks them as columns in argument order.
pub fn align(a: &DailySeries, b: &DailySeries, range: DateRange) -> Result<MultiSeries> {
    let left = a.window(range)?.to_vec();
    let right = b.window(range)?.to_vec();
    let (na, nb) = column_names(a.label(), b.label());
    MultiSeries::new(range.start, vec![(na, left), (nb, right)])
}

fn column_names(a: &str, b: &str) -> (String, String) {
    let na = if a.is_empty() { "a" } else { a };
    let nb = if b.is_empty() { "b" } else { b };
    if na == nb {
        (format!("{na}_1"), format!("{nb}_2"))
    } else {
        (na.to_string(), nb.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub id: String,
    pub population: u64,
}

/// Ordered set of locations with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Location>", into = "Vec<Location>")]
pub struct LocationSet {
    locations: Vec<Location>,
}

impl LocationSet {
    pub fn new(locations: Vec<Location>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidArgument("location set is empty".into()));
        }
        let mut seen = HashSet::new();
        for l in &locations {
            if !seen.insert(l.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate location {:?}", l.id)));
            }
            if l.population == 0 {
                return Err(Error::InvalidArgument(format!(
                    "location {:?} has zero population",
                    l.id
                )));
            }
        }
        Ok(Self { locations })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Location> {
        self.locations.iter()
    }

    pub fn get(&self, i: usize) -> &Location {
        &self.locations[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.id == id)
    }

    pub fn populations(&self) -> Vec<f64> {
        self.locations.iter().map(|l| l.population as f64).collect()
    }

    /// Reads `id,population` rows.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let population = rec
                .get(1)
                .and_then(|p| p.parse::<u64>().ok())
                .ok_or_else(|| Error::Parse {
                    line: n + 2,
                    reason: "expected `id,population`".into(),
                })?;
            out.push(Location {
                id: rec[0].to_string(),
                population,
            });
        }
        Self::new(out)
    }
}

impl TryFrom<Vec<Location>> for LocationSet {
    type Error = Error;
    fn try_from(v: Vec<Location>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LocationSet> for Vec<Location> {
    fn from(s: LocationSet) -> Self {
        s.locations
    }
}

/// Daily movement counts between locations; the diagonal is always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl MobilityMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    /// Builds from dense rows and validates against `locs`.
    pub fn from_rows(rows: Vec<Vec<f64>>, locs: &LocationSet) -> Result<Self> {
        let n = locs.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "mobility matrix must be {n}x{n}"
            )));
        }
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidArgument(format!("mobility entry ({i},{j}) = {v}")));
                }
                if i != j {
                    m.entries[i * n + j] = v;
                }
            }
        }
        m.validate(locs)?;
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, origin: usize, destination: usize) -> f64 {
        self.entries[origin * self.n + destination]
    }

    pub fn row_sum(&self, origin: usize) -> f64 {
        self.entries[origin * self.n..(origin + 1) * self.n].iter().sum()
    }

    pub fn validate(&self, locs: &LocationSet) -> Result<()> {
        if self.n != locs.len() {
            return Err(Error::InvalidArgument(format!(
                "mobility matrix has size {}, location set has {}",
                self.n,
                locs.len()
            )));
        }
        for (i, loc) in locs.iter().enumerate() {
            let total = self.row_sum(i);
            if total > loc.population as f64 {
                return Err(Error::MobilityRowSum {
                    location: loc.id.clone(),
                    total,
                    population: loc.population,
                });
            }
        }
        Ok(())
    }
}

/// Reads `origin,destination,daily_count` rows; unlisted pairs are zero and
/// self-mobility rows are ignored.
pub fn load_mobility<R: Read>(reader: R, locs: &LocationSet) -> Result<MobilityMatrix> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["origin", "destination", "daily_count"] {
        return Err(Error::Parse {
            line: 1,
            reason: "expected header `origin,destination,daily_count`".into(),
        });
    }
    let n = locs.len();
    let mut m = MobilityMatrix::zeros(n);
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                reason: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let i = locs
            .index_of(&rec[0])
            .ok_or_else(|| Error::UnknownLocation(rec[0].to_string()))?;
        let j = locs
            .index_of(&rec[1])
            .ok_or_else(|| Error::UnknownLocation(rec[1].to_string()))?;
        let count: f64 = rec[2].parse().map_err(|_| Error::Parse {
            line,
            reason: format!("bad count {:?}", &rec[2]),
        })?;
        if !(count >= 0.0) || !count.is_finite() {
            return Err(Error::Parse {
                line,
                reason: format!("count must be non-negative, got {count}"),
            });
        }
        if i != j {
            m.entries[i * n + j] = count;
        }
    }
    m.validate(locs)?;
    Ok(m)
}
