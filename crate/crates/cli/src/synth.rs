//! Writes a self-contained synthetic dataset and a matching pipeline
//! configuration.

use std::path::{Path, PathBuf};

use episim_core::counts::Bucket;
use episim_core::series::{add_days, DateRange};
use episim_core::synthetic::{generate, SyntheticConfig, SyntheticDataset};
use episim_core::trend::TrendParams;

use crate::artifacts::write_text;
use crate::config::{
    AuxInput, AuxSource, Calibration, EnsembleSection, Evaluation, Inputs, PipelineConfig, Prediction, Simulation, Training, Window,
    FORMAT_VERSION,
};
use crate::error::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.json";

fn window(r: DateRange) -> Window {
    Window { start: r.start, end: r.end }
}

/// Desk-scale configuration for a generated dataset: a reduced ensemble of
/// {1,2} layers x {4,8} hidden x 4 initialisations.
pub fn pipeline_config(ds: &SyntheticDataset, cfg: &SyntheticConfig, master_seed: u64) -> PipelineConfig {
    let aux = cfg
        .aux
        .iter()
        .enumerate()
        .map(|(i, a)| AuxInput {
            name: a.name.clone(),
            // the first signal is replayed through the count client
            source: if i == 0 {
                AuxSource::Fixture {
                    path: format!("{}.json", a.name).into(),
                    query: a.name.clone(),
                }
            } else {
                AuxSource::Csv(format!("{}.csv", a.name).into())
            },
        })
        .collect();
    let ensemble = EnsembleSection {
        layer_choices: vec![1, 2],
        hidden_choices: vec![4, 8],
        inits_per_config: 4,
        ..EnsembleSection::default()
    };
    PipelineConfig {
        format_version: FORMAT_VERSION,
        seed: master_seed,
        output_dir: "out".into(),
        inputs: Inputs {
            locations: "locations.csv".into(),
            mobility: "mobility.csv".into(),
            cases: "cases.csv".into(),
            aux,
        },
        trend: TrendParams::default(),
        training: Training {
            start: ds.training_window.start,
            end: ds.training_window.end,
        },
        ensemble,
        prediction: Prediction::default(),
        calibration: Calibration {
            period: window(ds.calibration_period),
            up_window: window(ds.up_window),
            down_window: window(ds.down_window),
            window_days: 7,
            smoothing_days: 7,
        },
        simulation: Simulation {
            period: window(ds.simulation_period),
            params: cfg.params,
            runs: 100,
            draw_mode: Default::default(),
            change_lead_days: None,
            baseline_resample_days: None,
            init_days: 7,
        },
        evaluation: Evaluation::default(),
    }
}

/// Generates the dataset for `dataset_seed` into `dir` and returns the path
/// of the written configuration.
pub fn write_bundle(dir: &Path, dataset_seed: u64, master_seed: u64) -> CliResult<PathBuf> {
    let cfg = SyntheticConfig::desk_scale(dataset_seed);
    let ds = generate(&cfg)?;

    let mut locations = String::from("id,population\n");
    for l in ds.locations.iter() {
        locations.push_str(&format!("{},{}\n", l.id, l.population));
    }
    write_text(&dir.join("locations.csv"), &locations)?;

    let mut mobility = String::from("origin,destination,daily_count\n");
    let n = ds.locations.len();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (a, b) = (&ds.locations.get(i).id, &ds.locations.get(j).id);
                mobility.push_str(&format!("{a},{b},{}\n", ds.mobility.get(i, j)));
            }
        }
    }
    write_text(&dir.join("mobility.csv"), &mobility)?;
    write_text(&dir.join("cases.csv"), &ds.cases.to_csv())?;

    for (i, series) in ds.aux.iter().enumerate() {
        let name = &cfg.aux[i].name;
        if i == 0 {
            let buckets: Vec<Bucket> = (0..series.len())
                .map(|t| {
                    let day = series.date_at(t);
                    Bucket {
                        start: day,
                        end: add_days(day, 1),
                        count: series.values()[t],
                    }
                })
                .collect();
            let text = serde_json::to_string_pretty(&buckets).map_err(|e| CliError::data(e.to_string()))?;
            write_text(&dir.join(format!("{name}.json")), &(text + "\n"))?;
        } else {
            write_text(&dir.join(format!("{name}.csv")), &series.to_csv())?;
        }
    }

    let config = pipeline_config(&ds, &cfg, master_seed);
    let text = serde_json::to_string_pretty(&config).map_err(|e| CliError::data(e.to_string()))?;
    let path = dir.join(CONFIG_FILE);
    write_text(&path, &(text + "\n"))?;
    Ok(path)
}
