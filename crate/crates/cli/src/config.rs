//! Pipeline configuration: one JSON document, validated before any stage
//! runs. Relative paths resolve against the directory holding the file.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use episim_core::forecast::Aggregation;
use episim_core::lstm::TrainConfig;
use episim_core::scenario::DrawMode;
use episim_core::seir::SeirParams;
use episim_core::series::DateRange;
use episim_core::trend::{SmoothingMode, TrendParams};
use episim_core::EnsembleConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub format_version: u32,
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub inputs: Inputs,
    #[serde(default)]
    pub trend: TrendParams,
    pub training: Training,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub prediction: Prediction,
    pub calibration: Calibration,
    pub simulation: Simulation,
    #[serde(default)]
    pub evaluation: Evaluation,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// `id,population`
    pub locations: PathBuf,
    /// `origin,destination,daily_count`
    pub mobility: PathBuf,
    /// Reported new infections: `date,<location id>,...`
    pub cases: PathBuf,
    /// Auxiliary count signals; each adds one forecasting setting.
    #[serde(default)]
    pub aux: Vec<AuxInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxInput {
    pub name: String,
    pub source: AuxSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AuxSource {
    /// `date,value` file.
    Csv(PathBuf),
    /// Recorded JSON bucket responses.
    Fixture { path: PathBuf, query: String },
    /// Live count endpoint; the token comes from the environment.
    Http { endpoint: String, query: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Training {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Training {
    pub fn window(&self) -> DateRange {
        DateRange {
            start: self.start,
            end: self.end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub layer_choices: Vec<usize>,
    pub hidden_choices: Vec<usize>,
    pub inits_per_config: usize,
    pub train: TrainConfig,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let ec = EnsembleConfig::default();
        Self {
            layer_choices: ec.layer_choices,
            hidden_choices: ec.hidden_choices,
            inits_per_config: ec.inits_per_config,
            train: ec.train_config,
        }
    }
}

impl EnsembleSection {
    pub fn to_config(&self, base_seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            layer_choices: self.layer_choices.clone(),
            hidden_choices: self.hidden_choices.clone(),
            inits_per_config: self.inits_per_config,
            base_seed,
            train_config: self.train,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prediction {
    pub aggregation: Aggregation,
    /// Minimum run length on both sides of a sign change.
    pub persistence: usize,
    /// Forecast length in days; defaults to the end of the simulation
    /// period.
    pub horizon: Option<usize>,
}

impl Default for Prediction {
    fn default() -> Self {
        Self {
            aggregation: Aggregation::Mean,
            persistence: 3,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub period: Window,
    pub up_window: Window,
    pub down_window: Window,
    #[serde(default = "default_calibration_window")]
    pub window_days: usize,
    /// Centered moving average applied to reports before fitting (1: off).
    #[serde(default = "default_smoothing")]
    pub smoothing_days: usize,
}

fn default_calibration_window() -> usize {
    7
}

fn default_smoothing() -> usize {
    7
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Window {
    pub fn range(&self) -> DateRange {
        DateRange {
            start: self.start,
            end: self.end,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulation {
    pub period: Window,
    pub params: SeirParams,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub draw_mode: DrawMode,
    /// Days the R switch precedes each predicted trend change; defaults to
    /// the smoothing delay of the trend transform.
    #[serde(default)]
    pub change_lead_days: Option<i64>,
    /// Baseline redraw interval in days; one draw for the whole period when
    /// absent.
    #[serde(default)]
    pub baseline_resample_days: Option<usize>,
    /// Days of reports averaged to seed the initial state.
    #[serde(default = "default_init_days")]
    pub init_days: usize,
}

fn default_runs() -> usize {
    100
}

fn default_init_days() -> usize {
    7
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmseLevel {
    /// Sum over locations, then compare.
    #[default]
    National,
    /// Mean of per-location RMSEs.
    PerLocation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluation {
    pub rmse_level: RmseLevel,
}

impl Default for Evaluation {
    fn default() -> Self {
        Self {
            rmse_level: RmseLevel::National,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub horizon: Option<usize>,
    pub runs: Option<usize>,
    pub window: Option<usize>,
}

/// A validated configuration with paths resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
}

impl Resolved {
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.path(&self.config.output_dir)
    }

    pub fn simulation_period(&self) -> DateRange {
        self.config.simulation.period.range()
    }

    /// Forecast horizon: explicit, or through the end of the simulation.
    pub fn horizon(&self) -> usize {
        self.config.prediction.horizon.unwrap_or_else(|| {
            (self.config.simulation.period.end - self.config.training.end).num_days() as usize
        })
    }

    pub fn change_lead_days(&self) -> i64 {
        self.config.simulation.change_lead_days.unwrap_or_else(|| {
            let t = &self.config.trend;
            match t.mode {
                SmoothingMode::Trailing => (t.window as i64 - 1) / 2 + 3,
                SmoothingMode::Centered => 3,
            }
        })
    }

    /// Stable hex digest of the effective configuration. The output
    /// location does not affect results and is left out.
    pub fn digest(&self) -> String {
        let mut c = self.config.clone();
        c.output_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        format!("{:016x}", episim_core::seed::fnv1a(text.as_bytes()))
    }
}

fn ordered(field: &str, w: Window) -> CliResult<()> {
    if w.start > w.end {
        return Err(CliError::config_field(field, format!("start {} is after end {}", w.start, w.end)));
    }
    Ok(())
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(h) = o.horizon {
            self.prediction.horizon = Some(h);
        }
        if let Some(r) = o.runs {
            self.simulation.runs = r;
        }
        if let Some(w) = o.window {
            self.trend.window = w;
        }
    }

    /// Checks everything that does not need the data files.
    pub fn validate(&self, o: &Overrides) -> CliResult<()> {
        // name the flag when the bad value came from the command line
        let field = |key: &str, flag: &str, set: bool| if set { flag.to_string() } else { key.to_string() };
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::config_field(
                "format_version",
                format!("unsupported format_version {}, expected {FORMAT_VERSION}", self.format_version),
            ));
        }
        self.trend
            .validate()
            .map_err(|e| CliError::config_field(field("trend.window", "--window", o.window.is_some()), e.to_string()))?;

        let mut names: Vec<&str> = Vec::new();
        for a in &self.inputs.aux {
            let ok = !a.name.is_empty() && a.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(CliError::config_field(
                    "inputs.aux.name",
                    format!("aux name {:?} must be non-empty [A-Za-z0-9_-]", a.name),
                ));
            }
            if names.contains(&a.name.as_str()) || a.name == "cases_only" {
                return Err(CliError::config_field("inputs.aux.name", format!("duplicate aux name {:?}", a.name)));
            }
            names.push(&a.name);
        }

        ordered("training", Window { start: self.training.start, end: self.training.end })?;
        ordered("calibration.period", self.calibration.period)?;
        ordered("calibration.up_window", self.calibration.up_window)?;
        ordered("calibration.down_window", self.calibration.down_window)?;
        ordered("simulation.period", self.simulation.period)?;
        if self.simulation.period.start <= self.training.end {
            return Err(CliError::config_field(
                "simulation.period",
                "simulation must start after the training window ends",
            ));
        }
        let cal = self.calibration.period.range();
        for (key, w) in [("calibration.up_window", self.calibration.up_window), ("calibration.down_window", self.calibration.down_window)] {
            if !cal.contains(w.start) || !cal.contains(w.end) {
                return Err(CliError::config_field(key, "must lie inside calibration.period"));
            }
        }
        if self.calibration.up_window.range().overlaps(&self.calibration.down_window.range()) {
            return Err(CliError::config_field("calibration.down_window", "overlaps calibration.up_window"));
        }
        if self.calibration.window_days < 3 || self.calibration.window_days > cal.days() {
            return Err(CliError::config_field(
                "calibration.window_days",
                format!("must be between 3 and the calibration length, got {}", self.calibration.window_days),
            ));
        }
        if self.calibration.smoothing_days == 0 || self.calibration.smoothing_days.is_multiple_of(2) {
            return Err(CliError::config_field(
                "calibration.smoothing_days",
                format!("must be odd and >= 1, got {}", self.calibration.smoothing_days),
            ));
        }

        self.ensemble
            .to_config(0)
            .validate()
            .map_err(|e| CliError::config_field("ensemble", e.to_string()))?;
        if self.prediction.persistence == 0 {
            return Err(CliError::config_field("prediction.persistence", "must be >= 1"));
        }
        if self.prediction.horizon == Some(0) {
            return Err(CliError::config_field(field("prediction.horizon", "--horizon", o.horizon.is_some()), "must be >= 1"));
        }
        self.simulation
            .params
            .validate()
            .map_err(|e| CliError::config_field("simulation.params", e.to_string()))?;
        if self.simulation.runs == 0 {
            return Err(CliError::config_field(field("simulation.runs", "--runs", o.runs.is_some()), "must be >= 1"));
        }
        if self.simulation.init_days == 0 {
            return Err(CliError::config_field("simulation.init_days", "must be >= 1"));
        }
        if self.simulation.baseline_resample_days == Some(0) {
            return Err(CliError::config_field("simulation.baseline_resample_days", "must be >= 1"));
        }
        if self.simulation.change_lead_days.is_some_and(|d| d < 0) {
            return Err(CliError::config_field("simulation.change_lead_days", "must be >= 0"));
        }
        Ok(())
    }
}

/// Reads, overrides and validates a configuration file.
pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Resolved> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config_field("--config", format!("cannot read config: {e}")).with_path(path))?;
    let mut config = PipelineConfig::from_json(&text).map_err(|e| e.with_path(path))?;
    config.apply(overrides);
    config.validate(overrides).map_err(|e| e.with_path(path))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base_dir = if base_dir.as_os_str().is_empty() { PathBuf::from(".") } else { base_dir };
    let mut resolved = Resolved { config, base_dir };
    if let Some(out) = &overrides.out {
        // command-line paths are relative to the working directory
        resolved.config.output_dir = if out.is_absolute() {
            out.clone()
        } else {
            std::env::current_dir()
                .map_err(|e| CliError::config(format!("cannot resolve --out: {e}")))?
                .join(out)
        };
    }
    Ok(resolved)
}
