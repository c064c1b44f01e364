//! Stochastic multi-location SEIR model with Erlang-staged infectiousness,
//! coupled across locations through the force of infection, and its
//! expected-value counterpart.

use std::ops::{Add, Sub};

use chrono::NaiveDate;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::RtSchedule;
use crate::seed::{self, Rng};
use crate::series::{DateRange, LocationSet, MobilityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirParams {
    /// 1 / latent period, per day.
    pub sigma: f64,
    /// 1 / infectious period, per day.
    pub gamma: f64,
    #[serde(default = "default_stages")]
    pub k_stages: usize,
    /// Share of time movers spend away from home.
    pub p_a: f64,
    /// Exponent on infectious counts.
    pub alpha: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_stages() -> usize {
    3
}

fn default_dt() -> f64 {
    0.25
}

impl Default for SeirParams {
    fn default() -> Self {
        Self {
            sigma: 1.0 / 5.0,
            gamma: 1.0 / 5.0,
            k_stages: 3,
            p_a: 0.5,
            alpha: 1.0,
            dt: 0.25,
        }
    }
}

impl SeirParams {
    pub fn gamma_prime(&self) -> f64 {
        self.gamma * self.k_stages as f64
    }

    pub fn steps_per_day(&self) -> usize {
        (1.0 / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{what}: {self:?}")));
        if !(self.sigma > 0.0) || !(self.gamma > 0.0) {
            return bad("sigma and gamma must be positive");
        }
        if self.k_stages == 0 {
            return bad("k_stages must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.p_a) {
            return bad("p_a must lie in [0, 1]");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        let steps = self.steps_per_day();
        if !(self.dt > 0.0) || steps == 0 || (steps as f64 * self.dt - 1.0).abs() > 1e-9 {
            return bad("dt must divide one day evenly");
        }
        Ok(())
    }
}

/// Compartment occupancy of one location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compartments<T> {
    pub s: T,
    pub e: T,
    pub i: Vec<T>,
    pub r: T,
}

pub trait Count: Copy + Default + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Send + Sync {
    fn as_f64(self) -> f64;
}

impl Count for u64 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Count for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}

impl<T: Count> Compartments<T> {
    pub fn infectious(&self) -> T {
        self.i.iter().fold(T::default(), |a, &b| a + b)
    }

    pub fn total(&self) -> T {
        self.s + self.e + self.infectious() + self.r
    }
}

/// Per-location compartments; index order follows the location set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State<T> {
    pub locations: Vec<Compartments<T>>,
}

pub type SeirState = State<u64>;
pub type MeanState = State<f64>;

impl<T: Count> State<T> {
    pub fn infectious(&self) -> Vec<f64> {
        self.locations.iter().map(|c| c.infectious().as_f64()).collect()
    }

    fn check(&self, params: &SeirParams, locs: &LocationSet) -> Result<()> {
        if self.locations.len() != locs.len() {
            return Err(Error::InvalidArgument(format!(
                "state has {} locations, expected {}",
                self.locations.len(),
                locs.len()
            )));
        }
        for (c, l) in self.locations.iter().zip(locs.iter()) {
            if c.i.len() != params.k_stages {
                return Err(Error::InvalidArgument(format!(
                    "location {:?} has {} infectious stages, expected {}",
                    l.id,
                    c.i.len(),
                    params.k_stages
                )));
            }
            if (c.total().as_f64() - l.population as f64).abs() > 1e-6 * l.population as f64 {
                return Err(Error::InvalidArgument(format!(
                    "compartments of {:?} sum to {}, population is {}",
                    l.id,
                    c.total().as_f64(),
                    l.population
                )));
            }
        }
        Ok(())
    }
}

impl SeirState {
    /// Everyone susceptible except the given exposed and per-stage infectious
    /// seeds.
    pub fn seeded(locs: &LocationSet, k_stages: usize, exposed: &[u64], infectious_per_stage: &[u64]) -> Result<Self> {
        let locations = locs
            .iter()
            .enumerate()
            .map(|(n, l)| {
                let e = exposed.get(n).copied().unwrap_or(0);
                let i = infectious_per_stage.get(n).copied().unwrap_or(0);
                let taken = e + i * k_stages as u64;
                if taken > l.population {
                    return Err(Error::InvalidArgument(format!("seeds exceed population of {:?}", l.id)));
                }
                Ok(Compartments {
                    s: l.population - taken,
                    e,
                    i: vec![i; k_stages],
                    r: 0,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { locations })
    }

    /// Seeds E and each infectious stage from recent daily incidence scaled by
    /// the mean dwell time of that compartment:
    /// `E = inc / sigma`, `I_j = inc / (gamma * k)`,
    /// `R = min(cumulative, H - E - I)`, `S = H - E - I - R`.
    pub fn from_incidence(
        locs: &LocationSet,
        params: &SeirParams,
        recent_incidence: &[f64],
        cumulative: &[f64],
    ) -> Result<Self> {
        if recent_incidence.len() != locs.len() || cumulative.len() != locs.len() {
            return Err(Error::InvalidArgument("one incidence value per location required".into()));
        }
        let locations = locs
            .iter()
            .enumerate()
            .map(|(n, l)| {
                let h = l.population;
                let inc = recent_incidence[n].max(0.0);
                let e = ((inc / params.sigma).round() as u64).min(h);
                let per_stage = ((inc / params.gamma_prime()).round() as u64).min((h - e) / params.k_stages as u64);
                let inf = per_stage * params.k_stages as u64;
                let r = (cumulative[n].max(0.0).round() as u64).min(h - e - inf);
                Compartments {
                    s: h - e - inf - r,
                    e,
                    i: vec![per_stage; params.k_stages],
                    r,
                }
            })
            .collect();
        Ok(Self { locations })
    }

    pub fn to_mean(&self) -> MeanState {
        State {
            locations: self
                .locations
                .iter()
                .map(|c| Compartments {
                    s: c.s as f64,
                    e: c.e as f64,
                    i: c.i.iter().map(|&v| v as f64).collect(),
                    r: c.r as f64,
                })
                .collect(),
        }
    }
}

/// Mobility mixing weights `p_a * M_ij / H_i`.
#[derive(Debug, Clone)]
pub struct Coupling {
    populations: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

impl Coupling {
    #[allow(clippy::needless_range_loop)] // weights is filled by (i, j) pairs
    pub fn new(params: &SeirParams, mob: &MobilityMatrix, locs: &LocationSet) -> Result<Self> {
        let n = locs.len();
        if mob.size() != n {
            return Err(Error::InvalidArgument(format!(
                "mobility matrix has size {}, expected {n}",
                mob.size()
            )));
        }
        let populations = locs.populations();
        let mut weights = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut total = 0.0;
            for j in 0..n {
                if i != j {
                    weights[i][j] = params.p_a * mob.get(i, j) / populations[i];
                    total += weights[i][j];
                }
            }
            if total > 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "mobility weights out of {:?} sum to {total} > 1",
                    locs.get(i).id
                )));
            }
        }
        Ok(Self { populations, weights })
    }

    /// Force of infection per location given infectious totals and R values.
    pub fn foi(&self, params: &SeirParams, infectious: &[f64], rt: &[f64]) -> Vec<f64> {
        let n = self.populations.len();
        let local: Vec<f64> = (0..n)
            .map(|i| {
                let inf = infectious[i];
                let pressure = if inf <= 0.0 { 0.0 } else { inf.powf(params.alpha) };
                rt[i] * params.gamma * pressure / self.populations[i]
            })
            .collect();
        (0..n)
            .map(|i| {
                let away: f64 = self.weights[i].iter().sum();
                let mixed: f64 = (0..n).filter(|&j| j != i).map(|j| self.weights[i][j] * local[j]).sum();
                (1.0 - away) * local[i] + mixed
            })
            .collect()
    }
}

/// Force of infection for `state` under per-location reproduction numbers.
pub fn force_of_infection<T: Count>(
    state: &State<T>,
    params: &SeirParams,
    rt: &[f64],
    mob: &MobilityMatrix,
    locs: &LocationSet,
) -> Result<Vec<f64>> {
    if rt.len() != locs.len() || state.locations.len() != locs.len() {
        return Err(Error::InvalidArgument("one R value and state per location required".into()));
    }
    Ok(Coupling::new(params, mob, locs)?.foi(params, &state.infectious(), rt))
}

fn hazard(rate: f64, dt: f64) -> f64 {
    -(-dt * rate).exp_m1()
}

/// One synchronous transition of every location; all draws read the
/// pre-step state. Returns the new state and S->E counts.
fn advance<T: Count>(
    state: &State<T>,
    params: &SeirParams,
    foi: &[f64],
    mut draw: impl FnMut(T, f64) -> T,
) -> (State<T>, Vec<T>) {
    let p_latent = hazard(params.sigma, params.dt);
    let p_stage = hazard(params.gamma_prime(), params.dt);
    let mut infections = Vec::with_capacity(state.locations.len());
    let locations = state
        .locations
        .iter()
        .zip(foi)
        .map(|(c, &f)| {
            let new_e = draw(c.s, hazard(f, params.dt));
            let new_i = draw(c.e, p_latent);
            let moves: Vec<T> = c.i.iter().map(|&n| draw(n, p_stage)).collect();
            infections.push(new_e);
            let k = c.i.len();
            let i = (0..k)
                .map(|j| {
                    let inflow = if j == 0 { new_i } else { moves[j - 1] };
                    c.i[j] + inflow - moves[j]
                })
                .collect();
            Compartments {
                s: c.s - new_e,
                e: c.e + new_e - new_i,
                i,
                r: c.r + moves[k - 1],
            }
        })
        .collect();
    (State { locations }, infections)
}

/// One stochastic step with exact binomial draws.
pub fn step(state: &SeirState, params: &SeirParams, foi: &[f64], rng: &mut Rng) -> (SeirState, Vec<u64>) {
    advance(state, params, foi, |n, p| binomial(rng, n, p))
}

fn binomial(rng: &mut Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0,1)").sample(rng)
}

/// Expected-value step: every binomial replaced by its mean.
pub fn mean_step(state: &MeanState, params: &SeirParams, foi: &[f64]) -> (MeanState, Vec<f64>) {
    advance(state, params, foi, |n, p| n * p)
}

/// Daily output of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    /// `incidence[day][location]`: S->E transitions during the day.
    pub incidence: Vec<Vec<T>>,
    /// State at the end of each day.
    pub states: Vec<State<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub trajectory: Trajectory<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub period: DateRange,
    pub locations: Vec<String>,
    pub runs: Vec<RunResult>,
}

impl SimulationResult {
    /// `[day][location]` incidence averaged over runs.
    pub fn mean_incidence(&self) -> Vec<Vec<f64>> {
        let days = self.period.days();
        let n = self.locations.len();
        let mut out = vec![vec![0.0; n]; days];
        for run in &self.runs {
            for (d, row) in run.trajectory.incidence.iter().enumerate() {
                for (i, &v) in row.iter().enumerate() {
                    out[d][i] += v as f64;
                }
            }
        }
        let runs = self.runs.len() as f64;
        out.iter_mut().flatten().for_each(|v| *v /= runs);
        out
    }

    /// Run-mean incidence summed over locations.
    pub fn national_mean(&self) -> Vec<f64> {
        self.mean_incidence().iter().map(|r| r.iter().sum()).collect()
    }

    /// `run,location,date,new_infections`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,location,date,new_infections\n");
        for (r, run) in self.runs.iter().enumerate() {
            for (i, loc) in self.locations.iter().enumerate() {
                for (d, date) in self.period.iter().enumerate() {
                    out.push_str(&format!("{r},{loc},{date},{}\n", run.trajectory.incidence[d][i]));
                }
            }
        }
        out
    }

    /// `location,date,mean_incidence`
    pub fn mean_csv(&self) -> String {
        let mean = self.mean_incidence();
        let mut out = String::from("location,date,mean_incidence\n");
        for (i, loc) in self.locations.iter().enumerate() {
            for (d, date) in self.period.iter().enumerate() {
                out.push_str(&format!("{loc},{date},{}\n", mean[d][i]));
            }
        }
        out
    }
}

fn rt_for(schedule: &RtSchedule, date: NaiveDate, n: usize) -> Result<&[f64]> {
    let rt = schedule.at(date).ok_or(Error::ScheduleGap(date))?;
    if rt.len() != n {
        return Err(Error::InvalidArgument(format!(
            "schedule has {} locations, expected {n}",
            rt.len()
        )));
    }
    Ok(rt)
}

fn check_schedule(schedule: &RtSchedule, period: DateRange, n: usize) -> Result<()> {
    for date in period.iter() {
        rt_for(schedule, date, n)?;
    }
    Ok(())
}

fn run_days<T: Count>(
    init: &State<T>,
    params: &SeirParams,
    coupling: &Coupling,
    schedule: &RtSchedule,
    period: DateRange,
    mut transition: impl FnMut(&State<T>, &[f64]) -> (State<T>, Vec<T>),
) -> Result<Trajectory<T>> {
    let n = init.locations.len();
    let mut state = init.clone();
    let mut incidence = Vec::with_capacity(period.days());
    let mut states = Vec::with_capacity(period.days());
    for date in period.iter() {
        let rt = rt_for(schedule, date, n)?;
        let mut daily = vec![T::default(); n];
        for _ in 0..params.steps_per_day() {
            let foi = coupling.foi(params, &state.infectious(), rt);
            let (next, new) = transition(&state, &foi);
            for (acc, v) in daily.iter_mut().zip(new) {
                *acc = *acc + v;
            }
            state = next;
        }
        incidence.push(daily);
        states.push(state.clone());
    }
    Ok(Trajectory { incidence, states })
}

/// Runs one stochastic trajectory with its own generator.
pub fn simulate_run(
    init: &SeirState,
    params: &SeirParams,
    schedule: &RtSchedule,
    coupling: &Coupling,
    period: DateRange,
    seed: u64,
) -> Result<Trajectory<u64>> {
    let mut rng = seed::rng(seed);
    run_days(init, params, coupling, schedule, period, |s, foi| step(s, params, foi, &mut rng))
}

/// Independent Monte Carlo runs; run `r` uses seed `derive(base_seed, [r])`.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    init: &SeirState,
    params: &SeirParams,
    schedule: &RtSchedule,
    mob: &MobilityMatrix,
    locs: &LocationSet,
    period: DateRange,
    runs: usize,
    base_seed: u64,
) -> Result<SimulationResult> {
    params.validate()?;
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be >= 1".into()));
    }
    init.check(params, locs)?;
    check_schedule(schedule, period, locs.len())?;
    let coupling = Coupling::new(params, mob, locs)?;
    let results = (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = seed::derive(base_seed, &[r as u64]);
            simulate_run(init, params, schedule, &coupling, period, seed).map(|trajectory| RunResult { seed, trajectory })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationResult {
        period,
        locations: locs.iter().map(|l| l.id.clone()).collect(),
        runs: results,
    })
}

/// Expected-value trajectory on real-valued compartments.
pub fn deterministic_simulate(
    init: &MeanState,
    params: &SeirParams,
    schedule: &RtSchedule,
    mob: &MobilityMatrix,
    locs: &LocationSet,
    period: DateRange,
) -> Result<Trajectory<f64>> {
    params.validate()?;
    init.check(params, locs)?;
    let coupling = Coupling::new(params, mob, locs)?;
    run_days(init, params, &coupling, schedule, period, |s, foi| mean_step(s, params, foi))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::series::{parse_date, Location};

    fn locs(pops: &[u64]) -> LocationSet {
        LocationSet::new(
            pops.iter()
                .enumerate()
                .map(|(i, &p)| Location {
                    id: format!("L{i}"),
                    population: p,
                })
                .collect(),
        )
        .unwrap()
    }

    fn state(rows: &[(u64, u64, [u64; 3], u64)]) -> SeirState {
        State {
            locations: rows
                .iter()
                .map(|&(s, e, i, r)| Compartments { s, e, i: i.to_vec(), r })
                .collect(),
        }
    }

    #[test]
    fn foi_without_coupling() {
        let l = locs(&[1000]);
        let st = state(&[(990, 0, [4, 3, 3], 0)]);
        let p = SeirParams { gamma: 0.2, ..Default::default() };
        let foi = force_of_infection(&st, &p, &[2.0], &MobilityMatrix::zeros(1), &l).unwrap();
        assert_abs_diff_eq!(foi[0], 2.0 * 0.2 * 10.0 / 1000.0, epsilon = 1e-15);

        let l2 = locs(&[1000, 1000]);
        let m = MobilityMatrix::from_rows(vec![vec![0.0, 100.0], vec![100.0, 0.0]], &l2).unwrap();
        let st2 = state(&[(990, 0, [4, 3, 3], 0), (1000, 0, [0, 0, 0], 0)]);
        let p0 = SeirParams { p_a: 0.0, ..p };
        let foi = force_of_infection(&st2, &p0, &[2.0, 2.0], &m, &l2).unwrap();
        assert_abs_diff_eq!(foi[0], 0.004, epsilon = 1e-15);
        assert_eq!(foi[1], 0.0);
    }

    #[test]
    fn symmetric_locations_have_equal_foi() {
        let l = locs(&[5000, 5000]);
        let m = MobilityMatrix::from_rows(vec![vec![0.0, 300.0], vec![300.0, 0.0]], &l).unwrap();
        let st = state(&[(4950, 20, [10, 10, 10], 0), (4950, 20, [10, 10, 10], 0)]);
        let foi = force_of_infection(&st, &SeirParams::default(), &[1.4, 1.4], &m, &l).unwrap();
        assert_eq!(foi[0], foi[1]);
    }

    #[test]
    fn sublinear_mixing_maps_zero_to_zero() {
        let l = locs(&[1000]);
        let st = state(&[(1000, 0, [0, 0, 0], 0)]);
        let p = SeirParams { alpha: 0.5, ..Default::default() };
        let foi = force_of_infection(&st, &p, &[3.0], &MobilityMatrix::zeros(1), &l).unwrap();
        assert_eq!(foi, vec![0.0]);
    }

    #[test]
    fn excessive_mobility_is_rejected() {
        let l = locs(&[100, 100]);
        let m = MobilityMatrix::from_rows(vec![vec![0.0, 100.0], vec![0.0, 0.0]], &l).unwrap();
        let p = SeirParams { p_a: 1.0, ..Default::default() };
        assert!(Coupling::new(&p, &m, &l).is_ok());
        let big = MobilityMatrix::zeros(3);
        assert!(Coupling::new(&p, &big, &l).is_err());
    }

    #[test]
    fn empty_susceptibles_mean_no_infections() {
        let p = SeirParams::default();
        let st = state(&[(0, 10, [5, 5, 5], 75)]);
        let mut rng = seed::rng(1);
        let (next, new) = step(&st, &p, &[5.0], &mut rng);
        assert_eq!(new, vec![0]);
        assert_eq!(next.locations[0].total(), 100);
    }

    #[test]
    fn absorbing_state_is_unchanged() {
        let p = SeirParams::default();
        let st = state(&[(500, 0, [0, 0, 0], 20)]);
        let mut rng = seed::rng(1);
        let (next, new) = step(&st, &p, &[0.0], &mut rng);
        assert_eq!(next, st);
        assert_eq!(new, vec![0]);
    }

    #[test]
    fn steps_conserve_population() {
        let p = SeirParams::default();
        let mut st = state(&[(9000, 500, [200, 200, 100], 0), (100, 0, [0, 0, 0], 0)]);
        let mut rng = seed::rng(9);
        for _ in 0..200 {
            st = step(&st, &p, &[0.3, 0.1], &mut rng).0;
            assert_eq!(st.locations[0].total(), 10_000);
            assert_eq!(st.locations[1].total(), 100);
        }
    }

    #[test]
    fn mean_step_conserves_in_reals() {
        let p = SeirParams::default();
        let st = state(&[(9000, 500, [200, 200, 100], 0)]).to_mean();
        let (next, new) = mean_step(&st, &p, &[0.3]);
        assert_abs_diff_eq!(next.locations[0].total(), 10_000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(new[0], 9000.0 * hazard(0.3, 0.25), epsilon = 1e-9);
    }

    #[test]
    fn params_validation() {
        assert!(SeirParams::default().validate().is_ok());
        assert!(SeirParams { dt: 0.3, ..Default::default() }.validate().is_err());
        assert!(SeirParams { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(SeirParams { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!(SeirParams::default().gamma_prime(), 0.6000000000000001);
    }

    #[test]
    fn from_incidence_uses_dwell_times() {
        let l = locs(&[100_000]);
        let p = SeirParams::default();
        let st = SeirState::from_incidence(&l, &p, &[60.0], &[5000.0]).unwrap();
        let c = &st.locations[0];
        assert_eq!(c.e, 300);
        assert_eq!(c.i, vec![100, 100, 100]);
        assert_eq!(c.r, 5000);
        assert_eq!(c.total(), 100_000);
    }

    #[test]
    fn schedule_gap_is_reported() {
        let l = locs(&[1000]);
        let d0 = parse_date("2021-01-01").unwrap();
        let sched = RtSchedule::constant(d0, 5, &[1.0]);
        let period = DateRange::new(d0, parse_date("2021-01-10").unwrap()).unwrap();
        let init = SeirState::seeded(&l, 3, &[5], &[1]).unwrap();
        let err = simulate(&init, &SeirParams::default(), &sched, &MobilityMatrix::zeros(1), &l, period, 1, 0);
        assert!(matches!(err, Err(Error::ScheduleGap(_))));
    }
}
