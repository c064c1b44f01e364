//! Synthetic multi-location epidemic with lead-lag count signals.
//!
//! The generator uses the stochastic SEIR engine with alternating up- and
//! down-trend reproduction numbers. Reported cases get a weekly reporting
//! pattern. Each auxiliary count series follows national incidence
//! `lead_days` into the future, scaled, with its own weekly pattern and
//! multiplicative noise. Known windows (calibration wave, training data,
//! simulation period) come with the data so a pipeline can run on it
//! directly.

use chrono::NaiveDate;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{RtSchedule, TrendKind};
use crate::seed;
use crate::seir::{simulate_run, Coupling, SeirParams, SeirState};
use crate::series::{add_days, DailySeries, DateRange, Location, LocationSet, MobilityMatrix, MultiSeries};

/// One auxiliary count signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxSpec {
    pub name: String,
    /// Expected counts per national new infection.
    pub per_case: f64,
    /// Standard deviation of the log-normal day-to-day noise.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub start: NaiveDate,
    pub populations: Vec<u64>,
    /// Daily travellers from each location, as a fraction of its population,
    /// split evenly over the other locations.
    pub mobility_fraction: f64,
    /// Nominal trend segments from the first day, as (kind, days).
    pub segments: Vec<(TrendKind, usize)>,
    /// Each segment length is jittered uniformly by up to this many days.
    pub length_jitter: usize,
    pub r_up: (f64, f64),
    pub r_down: (f64, f64),
    /// Initially infectious people per stage, per million population.
    pub seed_per_million: f64,
    pub params: SeirParams,
    /// How far the auxiliary signals run ahead of the epidemic.
    pub lead_days: usize,
    /// Relative amplitude of the weekly pattern in reports and counts.
    pub weekly_amplitude: f64,
    pub aux: Vec<AuxSpec>,
    /// Index of the up segment whose end marks the calibration wave peak.
    pub calibration_segment: usize,
    /// Index of the up segment that the simulation period starts in.
    pub simulation_segment: usize,
    /// Days between the simulation start and the first planted switch.
    pub simulation_offset: usize,
    pub simulation_days: usize,
    /// Days on each side of the calibration peak.
    pub calibration_half_width: usize,
}

impl SyntheticConfig {
    /// A five-location wave train whose last two switches fall inside a
    /// 69-day simulation period, 22 and about 63 days after it starts in
    /// trend terms.
    pub fn desk_scale(seed: u64) -> Self {
        use TrendKind::{Down, Up};
        Self {
            seed,
            start: NaiveDate::from_ymd_opt(2020, 6, 1).expect("valid date"),
            populations: vec![1_800_000, 2_600_000, 900_000, 3_400_000, 1_300_000],
            mobility_fraction: 0.01,
            segments: vec![
                (Up, 34),
                (Down, 36),
                (Up, 32),
                (Down, 38),
                (Up, 30),
                (Down, 36),
                (Up, 32),
                (Down, 40),
                (Up, 60),
            ],
            length_jitter: 3,
            r_up: (1.35, 1.55),
            r_down: (0.6, 0.75),
            seed_per_million: 40.0,
            params: SeirParams::default(),
            lead_days: 21,
            weekly_amplitude: 0.15,
            aux: vec![
                AuxSpec {
                    name: "tweets_general".into(),
                    per_case: 40.0,
                    noise: 0.05,
                },
                AuxSpec {
                    name: "tweets_emoji".into(),
                    per_case: 3.0,
                    noise: 0.08,
                },
            ],
            calibration_segment: 4,
            simulation_segment: 6,
            simulation_offset: 9,
            simulation_days: 69,
            calibration_half_width: 14,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.populations.is_empty() || self.populations.contains(&0) {
            return bad("populations must be positive");
        }
        if !(0.0..=1.0).contains(&self.mobility_fraction) {
            return bad("mobility_fraction must lie in [0, 1]");
        }
        if self.segments.len() < self.simulation_segment + 2 {
            return bad("simulation needs two segments after its start");
        }
        for &i in &[self.calibration_segment, self.simulation_segment] {
            if self.segments[i].0 != TrendKind::Up {
                return bad("calibration and simulation segments must be up-trends");
            }
        }
        if self.calibration_segment >= self.simulation_segment {
            return bad("calibration wave must precede the simulation period");
        }
        if self.segments.windows(2).any(|w| w[0].0 == w[1].0) {
            return bad("segments must alternate");
        }
        if self.segments.iter().any(|s| s.1 <= 2 * self.length_jitter) {
            return bad("segment shorter than its jitter");
        }
        let (lo_u, hi_u) = self.r_up;
        let (lo_d, hi_d) = self.r_down;
        if !(0.0 < lo_u && lo_u <= hi_u && 0.0 < lo_d && lo_d <= hi_d) {
            return bad("R ranges must be positive and ordered");
        }
        Ok(())
    }
}

/// Generated data plus the windows and ground truth used to build it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub locations: LocationSet,
    pub mobility: MobilityMatrix,
    /// Reported daily new infections, one column per location.
    pub cases: MultiSeries,
    pub aux: Vec<DailySeries>,
    pub schedule: RtSchedule,
    /// First day of each realised segment and its kind.
    pub switches: Vec<(NaiveDate, TrendKind)>,
    pub calibration_period: DateRange,
    pub up_window: DateRange,
    pub down_window: DateRange,
    pub training_window: DateRange,
    pub simulation_period: DateRange,
}

impl SyntheticDataset {
    /// National (summed) reported cases.
    pub fn national_cases(&self) -> DailySeries {
        let values = (0..self.cases.len()).map(|t| self.cases.row(t).iter().sum()).collect();
        DailySeries::new(self.cases.start(), values, "cases").expect("sums of valid counts")
    }

    pub fn location_cases(&self) -> Vec<DailySeries> {
        self.cases
            .names()
            .iter()
            .enumerate()
            .map(|(i, n)| DailySeries::new(self.cases.start(), self.cases.column_at(i).to_vec(), n.clone()).expect("valid column"))
            .collect()
    }
}

fn weekly(date: NaiveDate, amplitude: f64) -> f64 {
    use chrono::Datelike;
    let dow = date.weekday().num_days_from_monday() as f64;
    1.0 + amplitude * (2.0 * std::f64::consts::PI * dow / 7.0).sin()
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let n = cfg.populations.len();
    let locations = LocationSet::new(
        cfg.populations
            .iter()
            .enumerate()
            .map(|(i, &p)| Location {
                id: format!("L{}", i + 1),
                population: p,
            })
            .collect(),
    )?;
    let mobility = if n == 1 {
        MobilityMatrix::zeros(1)
    } else {
        let rows = cfg
            .populations
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let each = (p as f64 * cfg.mobility_fraction / (n - 1) as f64).floor();
                (0..n).map(|j| if i == j { 0.0 } else { each }).collect()
            })
            .collect();
        MobilityMatrix::from_rows(rows, &locations)?
    };

    let mut rng = seed::rng(seed::labeled(cfg.seed, "synthetic/schedule"));
    let mut days: Vec<Vec<f64>> = Vec::new();
    let mut switches = Vec::with_capacity(cfg.segments.len());
    for &(kind, nominal) in &cfg.segments {
        let j = cfg.length_jitter as i64;
        let len = (nominal as i64 + rng.random_range(-j..=j)) as usize;
        let (lo, hi) = match kind {
            TrendKind::Up => cfg.r_up,
            TrendKind::Down => cfg.r_down,
        };
        let row: Vec<f64> = (0..n).map(|_| if lo < hi { rng.random_range(lo..=hi) } else { lo }).collect();
        switches.push((add_days(cfg.start, days.len() as i64), kind));
        days.extend(std::iter::repeat_n(row, len));
    }
    let schedule = RtSchedule {
        start: cfg.start,
        days,
    };
    let full = schedule.range();

    let per_stage: Vec<u64> = cfg
        .populations
        .iter()
        .map(|&p| ((p as f64 * cfg.seed_per_million / 1e6).round() as u64).max(1))
        .collect();
    let init = SeirState::seeded(&locations, cfg.params.k_stages, &per_stage, &per_stage)?;
    let coupling = Coupling::new(&cfg.params, &mobility, &locations)?;
    let traj = simulate_run(
        &init,
        &cfg.params,
        &schedule,
        &coupling,
        full,
        seed::labeled(cfg.seed, "synthetic/epidemic"),
    )?;

    // The aux signals need incidence `lead_days` ahead, so reports stop there.
    let report_days = full.days() - cfg.lead_days;
    let mut noise_rng = seed::rng(seed::labeled(cfg.seed, "synthetic/reports"));
    let columns = (0..n)
        .map(|i| {
            let col = (0..report_days)
                .map(|d| {
                    let date = add_days(cfg.start, d as i64);
                    (traj.incidence[d][i] as f64 * weekly(date, cfg.weekly_amplitude)).round()
                })
                .collect();
            (locations.get(i).id.clone(), col)
        })
        .collect();
    let cases = MultiSeries::new(cfg.start, columns)?;

    let national: Vec<f64> = traj.incidence.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let aux = cfg
        .aux
        .iter()
        .map(|spec| {
            let mut rng = seed::rng(seed::labeled(noise_rng.random(), &spec.name));
            let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let values = (0..report_days)
                .map(|d| {
                    let date = add_days(cfg.start, d as i64);
                    let base = national[d + cfg.lead_days] * spec.per_case;
                    (base * weekly(date, cfg.weekly_amplitude) * normal.sample(&mut rng).exp()).round()
                })
                .collect();
            DailySeries::new(cfg.start, values, spec.name.clone())
        })
        .collect::<Result<Vec<_>>>()?;

    let peak = add_days(switches[cfg.calibration_segment + 1].0, -1);
    let hw = cfg.calibration_half_width as i64;
    let up_window = DateRange::new(add_days(peak, 1 - hw), peak)?;
    let down_window = DateRange::new(add_days(peak, 1), add_days(peak, hw + 1))?;
    let calibration_period = DateRange::new(up_window.start, down_window.end)?;

    let first_switch = switches[cfg.simulation_segment + 1].0;
    let sim_start = add_days(first_switch, -(cfg.simulation_offset as i64));
    if sim_start <= switches[cfg.simulation_segment].0 {
        return Err(Error::InvalidArgument("simulation offset exceeds the up segment".into()));
    }
    let simulation_period = DateRange::new(sim_start, add_days(sim_start, cfg.simulation_days as i64 - 1))?;
    if simulation_period.end > cases.end() {
        return Err(Error::InvalidArgument("segments end before the simulation period".into()));
    }
    // trailing trend values exist from the 22nd day on
    let training_window = DateRange::new(add_days(cfg.start, 21), add_days(sim_start, -1))?;

    Ok(SyntheticDataset {
        locations,
        mobility,
        cases,
        aux,
        schedule,
        switches,
        calibration_period,
        up_window,
        down_window,
        training_window,
        simulation_period,
    })
}
