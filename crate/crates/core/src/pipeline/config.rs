//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory of the configuration file. Command-line
//! overrides are applied after the file and win on conflict.

use super::PipelineError;
use crate::changepoint::BreakConfig;
use crate::geo::Metric;
use crate::phases::PhaseConfig;
use crate::series::{COMMUTE_HOURS_FIGURE, COMMUTE_HOURS_TABLE, DEFAULT_MAX_MISSING_RATE};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Order of smoothing and reduction for mobility series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingOrder {
    /// Reduction per day, then the moving average of reductions.
    #[default]
    ReduceFirst,
    /// Moving average of daily volumes, then the reduction of averages.
    SmoothFirst,
}

/// Regressor used in the per-phase fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressor {
    #[default]
    Sma,
    Raw,
}

/// Commute-hour preset for the weekday commute slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommuteHours {
    /// 7-9 and 18-20.
    #[default]
    Figure,
    /// 8-9 and 18-20.
    Table,
}

impl CommuteHours {
    pub fn hours(self) -> &'static [u8] {
        match self {
            CommuteHours::Figure => &COMMUTE_HOURS_FIGURE,
            CommuteHours::Table => &COMMUTE_HOURS_TABLE,
        }
    }
}

/// Input file locations. Only the files a command needs must be present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub cases: Option<PathBuf>,
    pub contacts: Option<PathBuf>,
    pub subway: Option<PathBuf>,
    pub traffic: Option<PathBuf>,
    pub holidays: Option<PathBuf>,
    pub survey: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub indicators: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub out: PathBuf,
    pub origin: NaiveDate,
    pub horizon: usize,
    pub sma_window: usize,
    pub breaks: BreakConfig,
    pub phases: PhaseConfig,
    pub min_run: usize,
    pub metric: Metric,
    pub max_missing_rate: f64,
    pub smoothing_order: SmoothingOrder,
    pub regressor: Regressor,
    pub lag: i64,
    pub commute_hours: CommuteHours,
    /// Break cap for the sliced mobility series; `max_breaks` when unset.
    pub seasonality_max_breaks: Option<usize>,
    /// Text echoed into every bundle: the file verbatim plus overrides.
    #[serde(skip)]
    pub echo: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: InputPaths::default(),
            out: PathBuf::from("out"),
            origin: NaiveDate::from_ymd_opt(2020, 1, 20).unwrap(),
            horizon: 189,
            sma_window: 7,
            breaks: BreakConfig::default(),
            phases: PhaseConfig::default(),
            min_run: 7,
            metric: Metric::Haversine,
            max_missing_rate: DEFAULT_MAX_MISSING_RATE,
            smoothing_order: SmoothingOrder::ReduceFirst,
            regressor: Regressor::Sma,
            lag: 0,
            commute_hours: CommuteHours::Figure,
            seasonality_max_breaks: None,
            echo: String::new(),
        }
    }
}

/// Every key the configuration accepts.
pub const KEYS: [&str; 30] = [
    "cases",
    "contacts",
    "subway",
    "traffic",
    "holidays",
    "survey",
    "policy",
    "indicators",
    "out",
    "origin",
    "horizon",
    "seed",
    "sma_window",
    "max_breaks",
    "min_segment",
    "bootstrap_reps",
    "ci_level",
    "merge_window",
    "lookahead",
    "slope_t_threshold",
    "phase_min_segment",
    "min_run",
    "metric",
    "max_missing_rate",
    "smoothing_order",
    "regressor",
    "lag",
    "commute_hours",
    "criterion",
    "seasonality_max_breaks",
];

fn config_error(message: impl Into<String>) -> PipelineError {
    PipelineError::Config(message.into())
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| config_error(format!("{key} = {value}: {e}")))
}

/// Parses `key = value` lines, reporting the offending line number.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>, PipelineError> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_error(format!("line {}: expected key = value", idx + 1)));
        };
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(config_error(format!("line {}: unknown key '{key}'", idx + 1)));
        }
        if let Some((first, ..)) = out.iter().find(|(_, k, _)| *k == key) {
            return Err(config_error(format!("line {}: '{key}' already set on line {first}", idx + 1)));
        }
        out.push((idx + 1, key, value.trim().to_string()));
    }
    Ok(out)
}

impl PipelineConfig {
    /// Builds a configuration from an optional file and overrides.
    ///
    /// `base_dir` anchors relative paths given as overrides; file entries are
    /// anchored at the file's directory.
    pub fn load(
        file: Option<&Path>,
        overrides: &[(String, String)],
        base_dir: &Path,
    ) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        let mut echo = String::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            for (_, key, value) in parse_pairs(&text)? {
                cfg.set(&key, &value, dir)?;
            }
            echo.push_str(&text);
            if !text.is_empty() && !text.ends_with('\n') {
                echo.push('\n');
            }
        }
        let mut seen = BTreeMap::new();
        for (key, value) in overrides {
            if !KEYS.contains(&key.as_str()) {
                return Err(config_error(format!("unknown key '{key}'")));
            }
            seen.insert(key.clone(), value.clone());
        }
        // the output location is not an analysis parameter and is not echoed
        let echoed: Vec<_> = seen.iter().filter(|(k, _)| k.as_str() != "out").collect();
        if !echoed.is_empty() {
            echo.push_str("# command-line overrides\n");
            for (key, value) in &echoed {
                echo.push_str(&format!("{key} = {value}\n"));
            }
        }
        for (key, value) in &seen {
            cfg.set(key, value, base_dir)?;
        }
        cfg.echo = echo;
        cfg.check()?;
        Ok(cfg)
    }

    /// Parses a configuration from text without touching the file system.
    pub fn from_text(text: &str, dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        for (_, key, value) in parse_pairs(text)? {
            cfg.set(&key, &value, dir)?;
        }
        cfg.echo = text.to_string();
        cfg.check()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, dir: &Path) -> Result<(), PipelineError> {
        let path = || Some(dir.join(value));
        match key {
            "cases" => self.inputs.cases = path(),
            "contacts" => self.inputs.contacts = path(),
            "subway" => self.inputs.subway = path(),
            "traffic" => self.inputs.traffic = path(),
            "holidays" => self.inputs.holidays = path(),
            "survey" => self.inputs.survey = path(),
            "policy" => self.inputs.policy = path(),
            "indicators" => self.inputs.indicators = path(),
            "out" => self.out = dir.join(value),
            "origin" => self.origin = parse_value(key, value)?,
            "horizon" => {
                self.horizon = parse_value(key, value)?;
                self.phases.horizon = self.horizon;
            }
            "seed" => self.breaks.seed = parse_value(key, value)?,
            "sma_window" => self.sma_window = parse_value(key, value)?,
            "max_breaks" => self.breaks.max_breaks = parse_value(key, value)?,
            "min_segment" => self.breaks.min_segment = parse_value(key, value)?,
            "bootstrap_reps" => self.breaks.bootstrap_reps = parse_value(key, value)?,
            "ci_level" => self.breaks.ci_level = parse_value(key, value)?,
            "merge_window" => self.phases.merge_window = parse_value(key, value)?,
            "lookahead" => self.phases.lookahead = parse_value(key, value)?,
            "slope_t_threshold" => self.phases.slope_t_threshold = parse_value(key, value)?,
            "phase_min_segment" => self.phases.min_segment = parse_value(key, value)?,
            "min_run" => self.min_run = parse_value(key, value)?,
            "metric" => self.metric = parse_value(key, value)?,
            "max_missing_rate" => self.max_missing_rate = parse_value(key, value)?,
            "smoothing_order" => {
                self.smoothing_order = match value {
                    "reduce_first" => SmoothingOrder::ReduceFirst,
                    "smooth_first" => SmoothingOrder::SmoothFirst,
                    _ => return Err(config_error(format!("smoothing_order = {value}: expected reduce_first or smooth_first"))),
                }
            }
            "regressor" => {
                self.regressor = match value {
                    "sma" => Regressor::Sma,
                    "raw" => Regressor::Raw,
                    _ => return Err(config_error(format!("regressor = {value}: expected sma or raw"))),
                }
            }
            "lag" => self.lag = parse_value(key, value)?,
            "commute_hours" => {
                self.commute_hours = match value {
                    "figure" => CommuteHours::Figure,
                    "table" => CommuteHours::Table,
                    _ => return Err(config_error(format!("commute_hours = {value}: expected figure or table"))),
                }
            }
            "criterion" => {
                if !value.eq_ignore_ascii_case("bic") {
                    return Err(config_error(format!("criterion = {value}: only bic is supported")));
                }
            }
            "seasonality_max_breaks" => {
                let v: usize = parse_value(key, value)?;
                self.seasonality_max_breaks = Some(v);
            }
            _ => return Err(config_error(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    fn check(&self) -> Result<(), PipelineError> {
        if self.horizon < 2 {
            return Err(config_error("horizon must be at least 2"));
        }
        if self.sma_window == 0 {
            return Err(config_error("sma_window must be positive"));
        }
        if self.breaks.min_segment == 0 || self.phases.min_segment == 0 {
            return Err(config_error("min_segment must be positive"));
        }
        if self.breaks.bootstrap_reps < 100 {
            return Err(config_error("bootstrap_reps must be at least 100"));
        }
        if !(self.breaks.ci_level > 0.0 && self.breaks.ci_level < 1.0) {
            return Err(config_error("ci_level must lie in (0, 1)"));
        }
        if self.phases.merge_window < 0 {
            return Err(config_error("merge_window must be non-negative"));
        }
        if self.phases.lookahead == 0 {
            return Err(config_error("lookahead must be positive"));
        }
        if !(self.phases.slope_t_threshold.is_finite() && self.phases.slope_t_threshold >= 0.0) {
            return Err(config_error("slope_t_threshold must be a non-negative number"));
        }
        if !(self.max_missing_rate > 0.0 && self.max_missing_rate <= 1.0) {
            return Err(config_error("max_missing_rate must lie in (0, 1]"));
        }
        Ok(())
    }
}
