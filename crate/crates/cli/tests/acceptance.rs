//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use episim_cli::artifacts::{Layout, Stage, METADATA_FILE};
use episim_cli::config::{load, Overrides};
use episim_cli::stages::{read_report, BASELINE1, BASELINE2, CASES_ONLY};
use episim_cli::synth::write_bundle;
use episim_core::evaluation::{delta_days, rmse_slices, DeltaDays};
use episim_core::forecast::{ChangePoint, Direction};
use episim_core::lstm::{gradient_check, train, LstmConfig, LstmModel, LstmState, TrainConfig};
use episim_core::scenario::{calibrate_rt, RtSchedule};
use episim_core::seir::{deterministic_simulate, force_of_infection, simulate, step, Compartments, SeirParams, SeirState, State};
use episim_core::series::{add_days, DailySeries, DateRange, Location, LocationSet, MobilityMatrix};
use episim_core::trend::{build_trend_pair, moving_average, weekly_log_ratio, SmoothingMode, TrendParams, TrendSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "../../core/tests/support/mod.rs"]
mod support;

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 1).unwrap()
}

fn period(days: usize) -> DateRange {
    DateRange::new(day0(), add_days(day0(), days as i64 - 1)).unwrap()
}

fn locs(pops: &[u64]) -> LocationSet {
    LocationSet::new(
        pops.iter()
            .enumerate()
            .map(|(i, &p)| Location { id: format!("L{i}"), population: p })
            .collect(),
    )
    .unwrap()
}

fn series(values: Vec<f64>) -> DailySeries {
    DailySeries::new(day0(), values, "x").unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn trend_transform() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base: Vec<f64> = (0..60).map(|_| rng.random_range(1.0..500.0)).collect();
    let s = weekly_log_ratio(&series(base.clone()), 0.0).unwrap();
    for c in [1e-3, 0.5, 7.0, 1e4] {
        let scaled = weekly_log_ratio(&series(base.iter().map(|v| v * c).collect()), 0.0).unwrap();
        let d = max_abs_diff(&s.values, &scaled.values);
        ensure(d <= 1e-12, format!("scale invariance off by {d:e} at c={c}"))?;
    }
    let flat = weekly_log_ratio(&series(vec![100.0; 30]), 0.0).unwrap();
    ensure(flat.values.iter().all(|&v| v == 0.0), "constant series gives non-zero trend")?;
    ensure(flat.len() == 23, "trend length is not source length - 7")?;
    for (t, &v) in s.values.iter().enumerate() {
        let (now, before) = (base[t + 7], base[t]);
        ensure((v > 0.0) == (now > before) && (v < 0.0) == (now < before), format!("sign wrong at {t}"))?;
    }
    let doubled = weekly_log_ratio(&series([vec![100.0; 7], vec![200.0]].concat()), 0.0).unwrap();
    ensure((doubled.values[0] - std::f64::consts::LN_2).abs() <= 1e-12, "ln 2 example")?;

    let c = TrendSeries { start: day0(), values: vec![0.37; 40], source_label: "c".into() };
    for mode in [SmoothingMode::Trailing, SmoothingMode::Centered] {
        let m = moving_average(&c, 15, mode).unwrap();
        ensure(max_abs_diff(&m.values, &vec![0.37; m.len()]) <= 1e-12, "constant not preserved")?;
        let id = moving_average(&s, 1, mode).unwrap();
        ensure(id.values == s.values && id.start == s.start, "window 1 is not the identity")?;
    }
    let mut impulse = vec![0.0; 45];
    impulse[20] = 15.0;
    let m = moving_average(&TrendSeries { start: day0(), values: impulse, source_label: "i".into() }, 15, SmoothingMode::Trailing).unwrap();
    let ones = m.values.iter().filter(|&&v| (v - 1.0).abs() <= 1e-12).count();
    let zeros = m.values.iter().filter(|&&v| v == 0.0).count();
    ensure(ones == 15 && ones + zeros == m.len(), "impulse response is not fifteen ones")?;
    let pair = build_trend_pair(&series(vec![40.0; 40]), &series(vec![9.0; 40]), &TrendParams::default()).unwrap();
    ensure(pair.rows().iter().flatten().all(|&v| v == 0.0), "pair of constants is not zero")?;
    Ok("scale, zero, sign, smoothing identities hold".into())
}

fn random_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
}

fn gradient() -> Check {
    let shapes = [(4, 1), (8, 1), (4, 2), (8, 2), (4, 3), (8, 3)];
    let mut worst: f64 = 0.0;
    for seed in 0..12u64 {
        let (hidden, layers) = shapes[seed as usize % shapes.len()];
        let model = LstmModel::init(LstmConfig { input_dim: 2, hidden_size: hidden, num_layers: layers, seed }).unwrap();
        let err = gradient_check(&model, &random_rows(10, 1000 + seed), 1e-4).unwrap();
        worst = worst.max(err);
        ensure(err < 1e-4, format!("seed {seed} ({layers}x{hidden}) relative error {err:e}"))?;
    }
    Ok(format!("12 seeds up to 3x8, worst relative error {worst:.2e}"))
}

fn convergence() -> Check {
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|t| {
            let a = 2.0 * std::f64::consts::PI * t as f64 / 28.0;
            vec![a.sin(), a.cos()]
        })
        .collect();
    let model = LstmModel::init(LstmConfig { input_dim: 2, hidden_size: 8, num_layers: 2, seed: 7 }).unwrap();
    let (_, hist) = train(&model, &rows, &TrainConfig { epochs: 500, ..Default::default() }).unwrap();
    let (first, last) = (hist[0], *hist.last().unwrap());
    ensure(last <= 0.1 * first, format!("loss {first:.4} -> {last:.4}"))?;
    Ok(format!("loss {first:.4} -> {last:.5} ({:.1}%)", 100.0 * last / first))
}

fn forward_oracle() -> Check {
    let mut worst: f64 = 0.0;
    for (hidden, layers) in [(4, 1), (8, 2), (16, 3)] {
        let cfg = LstmConfig { input_dim: 2, hidden_size: hidden, num_layers: layers, seed: 42 };
        let model = LstmModel::init(cfg).unwrap();
        let mut state = LstmState::zeros(&cfg);
        let mut h = vec![vec![0.0; hidden]; layers];
        let mut c = h.clone();
        for x in [[0.3, -0.7], [1.2, 0.05], [-0.4, -0.4]] {
            let (y, next) = model.forward_step(&x, &state).unwrap();
            let (y_ref, h_ref, c_ref) = support::reference_step(&cfg, model.parameters(), &x, &h, &c);
            worst = worst.max(max_abs_diff(&y, &y_ref));
            for l in 0..layers {
                worst = worst.max(max_abs_diff(&next.layers[l].h, &h_ref[l]));
                worst = worst.max(max_abs_diff(&next.layers[l].c, &c_ref[l]));
            }
            state = next;
            h = h_ref;
            c = c_ref;
        }
    }
    ensure(worst <= 1e-12, format!("max difference {worst:e}"))?;
    Ok(format!("max difference {worst:.1e}"))
}

fn conservation() -> Check {
    let pops = [50_000u64, 20_000, 80_000, 5_000, 120_000];
    let l = locs(&pops);
    let p = SeirParams::default();
    let rows = (0..5)
        .map(|i| (0..5).map(|j| if i == j { 0.0 } else { 100.0 * (i + j + 1) as f64 }).collect())
        .collect();
    let m = MobilityMatrix::from_rows(rows, &l).unwrap();
    let rt = [1.8, 1.2, 2.5, 0.9, 1.5];
    for run in 0..20u64 {
        let mut st = SeirState::seeded(&l, 3, &[50, 10, 0, 5, 100], &[10, 0, 0, 1, 20]).unwrap();
        let mut rng = episim_core::seed::rng(run);
        for n in 0..10_000 {
            let foi = force_of_infection(&st, &p, &rt, &m, &l).unwrap();
            let (next, _) = step(&st, &p, &foi, &mut rng);
            for (i, c) in next.locations.iter().enumerate() {
                ensure(c.total() == pops[i], format!("run {run} step {n} location {i}: {} != {}", c.total(), pops[i]))?;
            }
            st = next;
        }
    }
    Ok("5 locations x 20 runs x 10^4 steps exact".into())
}

fn mean_field() -> Check {
    let l = locs(&[1_000_000]);
    let p = SeirParams { sigma: 0.2, gamma: 0.2, ..Default::default() };
    let init = SeirState::seeded(&l, 3, &[1000], &[300]).unwrap();
    let sched = RtSchedule::constant(day0(), 90, &[1.5]);
    let zero = MobilityMatrix::zeros(1);
    let sim = simulate(&init, &p, &sched, &zero, &l, period(90), 100, 2024).unwrap();
    let det = deterministic_simulate(&init.to_mean(), &p, &sched, &zero, &l, period(90)).unwrap();
    let mean = sim.national_mean();
    let mut worst: f64 = 0.0;
    let mut days = 0;
    for (d, row) in det.incidence.iter().enumerate() {
        if row[0] >= 100.0 {
            days += 1;
            worst = worst.max((mean[d] - row[0]).abs() / row[0]);
        }
    }
    ensure(days > 0 && worst < 0.05, format!("worst relative gap {worst:.4} over {days} days"))?;
    Ok(format!("worst relative gap {:.2}% over {days} days", 100.0 * worst))
}

fn foi_example() -> Check {
    let l = locs(&[1000, 1000]);
    let m = MobilityMatrix::from_rows(vec![vec![0.0, 100.0], vec![100.0, 0.0]], &l).unwrap();
    let state = State {
        locations: vec![
            Compartments { s: 990, e: 0, i: vec![10, 0, 0], r: 0 },
            Compartments { s: 1000, e: 0, i: vec![0, 0, 0], r: 0 },
        ],
    };
    let p = SeirParams { gamma: 0.2, alpha: 1.0, p_a: 0.5, ..Default::default() };
    let foi = force_of_infection(&state, &p, &[2.0, 2.0], &m, &l).unwrap();
    let err = (foi[0] - 0.0038).abs().max((foi[1] - 0.0002).abs());
    ensure(err <= 1e-12, format!("foi {foi:?}"))?;
    Ok(format!("[{}, {}]", foi[0], foi[1]))
}

fn calibration() -> Check {
    let p = SeirParams::default();
    let l = LocationSet::new(vec![Location { id: "A".into(), population: 5_000_000 }]).unwrap();
    let init = SeirState::seeded(&l, p.k_stages, &[40], &[10]).unwrap();
    let sched = RtSchedule::constant(day0(), 90, &[1.3]);
    let traj = deterministic_simulate(&init.to_mean(), &p, &sched, &MobilityMatrix::zeros(1), &l, period(90)).unwrap();
    let obs = series(traj.incidence.iter().map(|d| d[0]).collect());
    let window = DateRange::new(add_days(day0(), 40), add_days(day0(), 89)).unwrap();
    let set = calibrate_rt(&[obs], &p, &l, window, 7).unwrap();
    let worst = set.values[0].iter().map(|v| (v.value - 1.3).abs()).fold(0.0, f64::max);
    ensure(!set.values[0].is_empty() && worst <= 0.05 + 1e-9, format!("worst |R - 1.3| = {worst:.3}"))?;
    Ok(format!("{} windows, worst |R - 1.3| = {worst:.3}", set.values[0].len()))
}

fn metrics() -> Check {
    let d = |s: &str| s.parse::<NaiveDate>().unwrap();
    let cp = |s: &str| ChangePoint { date: d(s), direction: Direction::UpToDown };
    let got = delta_days(&[cp("2021-05-07")], &[cp("2021-05-15")]);
    ensure(got == vec![DeltaDays::Days(-8)], format!("early prediction gives {got:?}"))?;
    let late = delta_days(&[cp("2021-05-18")], &[cp("2021-05-15")]);
    ensure(late == vec![DeltaDays::Days(3)], format!("late prediction gives {late:?}"))?;
    let r = rmse_slices(&[100.0, 200.0], &[110.0, 180.0]);
    let expected = 250f64.sqrt();
    ensure((r - expected).abs() <= 1e-9, format!("rmse {r}"))?;
    Ok(format!("delta -8, rmse {r:.3}"))
}

/// With-aux matches an observed change at least as closely as case-only;
/// a miss counts as infinitely far and two misses fail.
fn at_least_as_close(with: &DeltaDays, without: &DeltaDays) -> bool {
    match (with.days(), without.days()) {
        (Some(a), Some(b)) => a.abs() <= b.abs(),
        (Some(_), None) => true,
        (None, _) => false,
    }
}

fn fmt_deltas(ds: &[DeltaDays]) -> String {
    ds.iter().map(ToString::to_string).collect::<Vec<_>>().join("/")
}

fn scenario_ordering() -> Check {
    let mut rmse_ok = 0;
    let mut closer = 0;
    let mut lines = Vec::new();
    for rep in 0..10u64 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = write_bundle(dir.path(), 100 + rep, 2021).map_err(|e| e.to_json())?;
        let mut r = load(&cfg, &Overrides::default()).map_err(|e| e.to_json())?;
        // one auxiliary signal: the general count
        r.config.inputs.aux.truncate(1);
        let with = format!("with_{}", r.config.inputs.aux[0].name);
        episim_cli::run("pipeline", &Stage::ALL, &r, None).map_err(|e| e.to_json())?;
        let report = read_report(&Layout::new(r.output_dir())).map_err(|e| e.to_json())?;
        let row = |n: &str| report.row(n).ok_or(format!("report lacks {n}"));
        let (w, c, b1, b2) = (row(&with)?, row(CASES_ONLY)?, row(BASELINE1)?, row(BASELINE2)?);
        let a_ok = w.rmse < 0.5 * b1.rmse && w.rmse < 0.5 * b2.rmse;
        let (dw, dc) = (w.delta_days.clone().unwrap_or_default(), c.delta_days.clone().unwrap_or_default());
        let b_ok = report.metadata.observed_changes.len() == 2
            && dw.len() == 2
            && dw.iter().zip(&dc).all(|(a, b)| at_least_as_close(a, b));
        rmse_ok += a_ok as usize;
        closer += b_ok as usize;
        lines.push(format!(
            "      rep {rep}: rmse aux {:.0} | b1 {:.0} | b2 {:.0}  delta aux {} vs cases {}{}",
            w.rmse,
            b1.rmse,
            b2.rmse,
            fmt_deltas(&dw),
            fmt_deltas(&dc),
            if b_ok { "" } else { "  (not closer)" }
        ));
    }
    println!("{}", lines.join("\n"));
    let summary = format!("(a) rmse < 0.5 x both baselines in {rmse_ok}/10 reps; (b) aux at least as close on both changes in {closer}/10");
    ensure(rmse_ok == 10 && closer >= 7, summary.clone())?;
    Ok(summary)
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != METADATA_FILE {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn reproducibility() -> Check {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic/config.json");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (dir, jobs) in dirs.iter().zip(["1", "4"]) {
        let out = Command::new(env!("CARGO_BIN_EXE_episim"))
            .args(["pipeline", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--jobs", jobs])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), format!("pipeline failed: {}", String::from_utf8_lossy(&out.stderr)))?;
    }
    let (a, b) = (tree(dirs[0].path()), tree(dirs[1].path()));
    let names = |t: &[(String, Vec<u8>)]| t.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    ensure(names(&a) == names(&b), "artifact trees list different files")?;
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        ensure(x == y, format!("{name} differs"))?;
    }
    ensure(dirs.iter().all(|d| d.path().join(METADATA_FILE).is_file()), "metadata file missing")?;
    Ok(format!("{} artifacts byte-identical (--jobs 1 vs 4)", a.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("trend transform suite", Duration::from_secs(1), trend_transform),
        ("LSTM gradient check", Duration::from_secs(30), gradient),
        ("LSTM convergence", Duration::from_secs(120), convergence),
        ("forward-pass oracle", Duration::from_secs(1), forward_oracle),
        ("SEIR conservation", Duration::from_secs(60), conservation),
        ("mean-field convergence", Duration::from_secs(120), mean_field),
        ("FOI hand example", Duration::from_secs(1), foi_example),
        ("calibration self-consistency", Duration::from_secs(60), calibration),
        ("metric suite", Duration::from_secs(1), metrics),
        ("change-aware vs baseline ordering", Duration::from_secs(15 * 60), scenario_ordering),
        ("reproducibility", Duration::from_secs(10 * 60), reproducibility),
    ];
    let mut failed = 0;
    for (n, (name, budget, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = check();
        let took = t0.elapsed();
        let (status, detail) = match result {
            Ok(d) if took <= *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {}s budget", budget.as_secs())),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {:>2} {status}: {name} - {detail} [{:.2}s]", n + 1, took.as_secs_f64());
    }
    println!("acceptance: {}/11 criteria pass", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
