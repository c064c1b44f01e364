//! Shared inputs for the benchmarks.

use episim_core::series::{add_days, parse_date, DailySeries, DateRange, Location};
use episim_core::{LocationSet, MobilityMatrix, SeirParams, SeirState};

/// Five-location system with 1% of each population moving to every other
/// location daily.
pub fn five_locations() -> (LocationSet, MobilityMatrix) {
    let pops = [1_800_000u64, 2_600_000, 900_000, 3_400_000, 1_300_000];
    let locs = LocationSet::new(
        pops.iter()
            .enumerate()
            .map(|(i, &p)| Location { id: format!("L{}", i + 1), population: p })
            .collect(),
    )
    .expect("valid locations");
    let rows = pops
        .iter()
        .enumerate()
        .map(|(i, &p)| (0..pops.len()).map(|j| if i == j { 0.0 } else { 0.0025 * p as f64 }).collect())
        .collect();
    let mob = MobilityMatrix::from_rows(rows, &locs).expect("valid mobility");
    (locs, mob)
}

pub fn seeded_state(locs: &LocationSet, params: &SeirParams) -> SeirState {
    let n = locs.len();
    SeirState::seeded(locs, params.k_stages, &vec![200; n], &vec![100; n]).expect("valid state")
}

pub fn period(days: usize) -> DateRange {
    let start = parse_date("2021-04-23").expect("date");
    DateRange::new(start, add_days(start, days as i64 - 1)).expect("range")
}

/// Two-column sine/cosine rows.
pub fn wave_rows(len: usize) -> Vec<Vec<f64>> {
    (0..len)
        .map(|t| {
            let x = t as f64 * 0.2;
            vec![x.sin() * 0.5, x.cos() * 0.5]
        })
        .collect()
}

/// Daily incidence rising then falling around `peak`.
pub fn wave_incidence(start: &str, days: usize, peak: usize) -> DailySeries {
    let values = (0..days)
        .map(|t| 2000.0 * (-((t as f64 - peak as f64) / 20.0).powi(2)).exp() + 50.0)
        .collect();
    DailySeries::new(parse_date(start).expect("date"), values, "cases").expect("series")
}
