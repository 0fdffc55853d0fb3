//! Batch pipeline: ingestion, validation, the analysis stages and the output
//! bundle.
//!
//! Every command computes its artifacts in memory, writes them to a staging
//! directory next to the output directory and then moves them into place, so
//! a failing run leaves no partial bundle behind.
//!
//! | exit code | meaning |
//! |-----------|---------|
//! | 0 | success |
//! | 2 | I/O error (unreadable input, unwritable output) |
//! | 3 | schema or configuration error |
//! | 4 | analysis error |

pub mod config;
pub mod figures;
pub mod ingest;
pub mod mobility;
pub mod svg;
pub mod synth;
pub mod tables;

pub use config::PipelineConfig;

use crate::changepoint::{bootstrap_ci, select_breaks, SegmentationResult, CI_METHOD};
use crate::geo::{momentum_series, sign_transitions, MomentumSeries};
use crate::phases::{build_timeline, fuse_transitions, DroppedTransition, PhaseTimeline};
use crate::policy::{IndexSeries, IndicatorTable, PolicyTimeline, FORMULA_VERSION};
use crate::regression::{phase_fit_table, PhaseFitTable};
use crate::series::{
    simple_moving_average, slice_aggregate, DailySeries, Day, DayFilter, Mode, ReductionSeries, SliceSpec,
    StudyCalendar,
};
use config::Regressor;
use ingest::{CasesInput, ContactsInput, DatasetSummary, HourlyInput, Survey};
use mobility::{CleanHourly, SeasonalityEntry};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{}: line {line}: {message}", path.display())]
    Schema { path: PathBuf, line: u64, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Analysis { stage: String, message: String },
    #[error("writing outputs: {0}")]
    Output(String),
}

impl PipelineError {
    pub fn io(path: &Path, e: impl Display) -> Self {
        Self::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn schema(path: &Path, line: u64, message: impl Into<String>) -> Self {
        Self::Schema { path: path.to_path_buf(), line, message: message.into() }
    }

    pub fn analysis(stage: &str, e: impl Display) -> Self {
        Self::Analysis { stage: stage.to_string(), message: e.to_string() }
    }

    fn restage(self, stage: &str) -> Self {
        match self {
            Self::Analysis { message, .. } => Self::Analysis { stage: stage.to_string(), message },
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Output(_) => 2,
            Self::Schema { .. } | Self::Config(_) => 3,
            Self::Analysis { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Cpd,
    Geo,
    Phases,
    Fit,
    Index,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Cpd => "cpd",
            Command::Geo => "geo",
            Command::Phases => "phases",
            Command::Fit => "fit",
            Command::Index => "index",
        }
    }

    fn needs_cases(self) -> bool {
        matches!(self, Command::Run | Command::Cpd | Command::Phases | Command::Fit)
    }

    fn needs_contacts(self) -> bool {
        matches!(self, Command::Run | Command::Geo | Command::Phases | Command::Fit)
    }

    fn needs_mobility(self) -> bool {
        matches!(self, Command::Run | Command::Fit)
    }

    fn needs_policy(self) -> bool {
        matches!(self, Command::Run | Command::Index)
    }
}

/// Formula and method identifiers recorded in the manifest.
pub fn method_versions() -> BTreeMap<String, String> {
    [
        ("changepoint", "mean-shift exact dynamic programming, BIC selection"),
        ("changepoint_ci", CI_METHOD),
        ("dispersion", "grouped distance minus directed Hausdorff, trailing SMA"),
        ("phases", "fused transitions, OLS slope t-test, momentum lookahead"),
        ("regression", "bivariate OLS, t and F tails by regularized incomplete beta"),
        ("policy_index", FORMULA_VERSION),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn calendar(cfg: &PipelineConfig) -> Result<StudyCalendar, PipelineError> {
    let holidays = match &cfg.inputs.holidays {
        Some(path) => ingest::read_holidays(path)?,
        None => StudyCalendar::seoul_2020().holidays().iter().map(|(a, b)| (*a, *b)).collect(),
    };
    StudyCalendar::new(cfg.origin, cfg.horizon, holidays).map_err(|e| PipelineError::Config(e.to_string()))
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, PipelineError> {
    path.as_deref().ok_or_else(|| PipelineError::Config(format!("input '{key}' is not configured")))
}

fn policy_timeline(cfg: &PipelineConfig) -> Result<PolicyTimeline, PipelineError> {
    let table = match &cfg.inputs.indicators {
        Some(p) => ingest::read_indicators(p)?,
        None => IndicatorTable::oxcgrt(),
    };
    match &cfg.inputs.policy {
        Some(p) => {
            let records = ingest::read_policy(p)?;
            PolicyTimeline::new(table, records, cfg.horizon as Day).map_err(|e| PipelineError::schema(p, 0, e.to_string()))
        }
        None => {
            let shipped = PolicyTimeline::seoul_2020();
            let records = shipped.records().cloned().collect();
            PolicyTimeline::new(table, records, cfg.horizon as Day)
                .map_err(|e| PipelineError::Config(format!("shipped policy records: {e}")))
        }
    }
}

/// Summary of every configured input.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub status: String,
    pub datasets: Vec<DatasetSummary>,
    /// Missing-cell rate per sensor, per mode.
    pub missing_rates: BTreeMap<String, BTreeMap<String, f64>>,
    pub rejected_sensors: BTreeMap<String, Vec<String>>,
    pub findings: Vec<String>,
}

/// Parses and checks every configured input. Fatal problems are returned
/// as errors; the rest are listed in the report.
pub fn validate_inputs(cfg: &PipelineConfig) -> Result<ValidationReport, PipelineError> {
    let cal = calendar(cfg)?;
    let mut report = ValidationReport {
        status: "ok".into(),
        datasets: Vec::new(),
        missing_rates: BTreeMap::new(),
        rejected_sensors: BTreeMap::new(),
        findings: Vec::new(),
    };
    if let Some(p) = &cfg.inputs.cases {
        let c = ingest::read_cases(p, &cal)?;
        note_cases(&c, &mut report.findings);
        report.datasets.push(c.summary);
    }
    if let Some(p) = &cfg.inputs.contacts {
        let c = ingest::read_contacts(p, &cal)?;
        note_contacts(&c, &mut report.findings);
        report.datasets.push(c.summary);
    }
    for mode in Mode::ALL {
        let path = match mode {
            Mode::Subway => &cfg.inputs.subway,
            Mode::Traffic => &cfg.inputs.traffic,
        };
        if let Some(p) = path {
            let h = ingest::read_hourly(p, mode, &cal)?;
            let rates = h.series.missing_rates();
            let rejected: Vec<String> = rates
                .iter()
                .filter(|(_, r)| **r > 0.0 && **r >= cfg.max_missing_rate)
                .map(|(id, _)| id.clone())
                .collect();
            for id in &rejected {
                report.findings.push(format!(
                    "{mode}: sensor {id} missing rate {:.4} is at or above the ceiling {}",
                    rates[id], cfg.max_missing_rate
                ));
            }
            note_baseline(&h, &cal, &mut report.findings);
            report.missing_rates.insert(mode.to_string(), rates);
            report.rejected_sensors.insert(mode.to_string(), rejected);
            report.datasets.push(h.summary);
        }
    }
    if let Some(p) = &cfg.inputs.survey {
        let s = ingest::read_survey(p, &cal)?;
        let rows = s.values().map(Vec::len).sum();
        report.datasets.push(DatasetSummary {
            name: "survey".into(),
            file: p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            rows,
            first_date: s.values().flatten().map(|p| cal.date_of(p.0)).min(),
            last_date: s.values().flatten().map(|p| cal.date_of(p.0)).max(),
        });
    }
    if cfg.inputs.policy.is_some() || cfg.inputs.indicators.is_some() {
        let tl = policy_timeline(cfg)?;
        report.findings.push(format!("policy: {} records validated", tl.records().count()));
    }
    Ok(report)
}

fn note_cases(c: &CasesInput, findings: &mut Vec<String>) {
    let missing = c.series.len() - c.series.present_count();
    if missing > 0 {
        findings.push(format!("cases: {missing} day(s) of the study window have no count"));
    }
    if c.outside_window > 0 {
        findings.push(format!("cases: {} row(s) outside the study window ignored", c.outside_window));
    }
}

fn note_contacts(c: &ContactsInput, findings: &mut Vec<String>) {
    let empty = c.days.iter().filter(|d| d.is_empty()).count();
    if empty > 0 {
        findings.push(format!("contacts: {empty} day(s) without contact locations"));
    }
    if c.collapsed > 0 {
        findings.push(format!("contacts: {} duplicate location(s) collapsed", c.collapsed));
    }
    if c.outside_window > 0 {
        findings.push(format!("contacts: {} row(s) outside the study window ignored", c.outside_window));
    }
}

fn note_baseline(h: &HourlyInput, cal: &StudyCalendar, findings: &mut Vec<String>) {
    let days: std::collections::BTreeSet<Day> = h.series.records().iter().map(|r| r.day).collect();
    let mut uncovered = 0;
    let mut no_current = 0;
    for day in 1..=cal.horizon() as Day {
        if !days.contains(&day) {
            no_current += 1;
        }
        if let Ok(m) = cal.match_day(cal.date_of(day)) {
            if !days.contains(&cal.day_index(m)) {
                uncovered += 1;
            }
        }
    }
    if no_current > 0 {
        findings.push(format!("{}: {no_current} study day(s) without records", h.mode));
    }
    if uncovered > 0 {
        findings.push(format!("{}: {uncovered} study day(s) without a matched previous-year day", h.mode));
    }
}

/// Count-series stage output.
#[derive(Debug, Clone)]
pub struct CountStage {
    pub raw: DailySeries,
    pub sma: DailySeries,
    pub breaks: SegmentationResult,
}

pub fn count_stage(cases: &DailySeries, cfg: &PipelineConfig) -> Result<CountStage, PipelineError> {
    let sma = simple_moving_average(cases, cfg.sma_window)
        .map_err(|e| PipelineError::analysis("cpd", e))?
        .with_label("cases_sma");
    let n = sma.len();
    let bcfg = cfg.breaks.clamped_to(n);
    if bcfg.max_breaks < cfg.breaks.max_breaks {
        log::warn!("cpd: max_breaks lowered to {} for {n} observations", bcfg.max_breaks);
    }
    let breaks = select_breaks(&sma, &bcfg)
        .and_then(|r| bootstrap_ci(&sma, &r, &bcfg))
        .map_err(|e| PipelineError::analysis("cpd", e))?;
    Ok(CountStage { raw: cases.clone(), sma, breaks })
}

#[derive(Debug, Clone)]
pub struct GeoStage {
    pub momentum: MomentumSeries,
    pub transitions: Vec<Day>,
}

pub fn geo_stage(contacts: &ContactsInput, cfg: &PipelineConfig) -> Result<GeoStage, PipelineError> {
    let momentum =
        momentum_series(&contacts.days, cfg.sma_window, cfg.metric).map_err(|e| PipelineError::analysis("geo", e))?;
    let transitions = sign_transitions(&momentum.smoothed, cfg.min_run);
    Ok(GeoStage { momentum, transitions })
}

/// Transition bookkeeping written next to the phase table.
#[derive(Debug, Clone, Serialize)]
pub struct Transitions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count_breaks: Option<Vec<Day>>,
    pub geo_transitions: Vec<Day>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fused: Option<Vec<Day>>,
    pub dropped: Vec<DroppedTransition>,
}

pub fn phase_stage(count: &CountStage, geo: &GeoStage, cfg: &PipelineConfig) -> Result<(PhaseTimeline, Transitions), PipelineError> {
    let fused = fuse_transitions(&count.breaks.breaks, &geo.transitions, cfg.phases.merge_window);
    let timeline = build_timeline(&fused, &count.sma, &geo.momentum.smoothed, &cfg.phases)
        .map_err(|e| PipelineError::analysis("phases", e))?;
    let transitions = Transitions {
        count_breaks: Some(count.breaks.breaks.clone()),
        geo_transitions: geo.transitions.clone(),
        fused: Some(fused),
        dropped: timeline.dropped.clone(),
    };
    Ok((timeline, transitions))
}

/// Mobility stage output for one mode.
#[derive(Debug, Clone)]
pub struct ModeStage {
    pub clean: CleanHourly,
    pub reduction: ReductionSeries,
}

pub fn mobility_stage(input: &HourlyInput, cal: &StudyCalendar, cfg: &PipelineConfig) -> Result<ModeStage, PipelineError> {
    let clean = mobility::clean(input, cfg.max_missing_rate)?;
    let daily = slice_aggregate(&clean.series, &SliceSpec::all_hours(DayFilter::AllWeek), cal)
        .map_err(|e| PipelineError::analysis("mobility", e))?;
    let mut reduction = mobility::smoothed_reduction(&daily, cal, input.mode, cfg)?;
    reduction.series = reduction
        .series
        .restrict(1, cfg.horizon as Day)
        .ok_or_else(|| PipelineError::analysis("mobility", format!("no {} reduction inside the study window", input.mode)))?;
    Ok(ModeStage { clean, reduction })
}

/// Artifacts of one command, keyed by file name.
#[derive(Debug, Default)]
pub struct Bundle {
    files: BTreeMap<String, Vec<u8>>,
    warnings: Vec<String>,
}

impl Bundle {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| PipelineError::Output(e.to_string()))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, header: &[&str], rows: &[T]) -> Result<(), PipelineError> {
        let bytes = tables::to_csv(header, rows)?;
        self.add(name, bytes);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub created_at: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: String,
    pub methods: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub files: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn input_hashes(cfg: &PipelineConfig, command: Command) -> Result<BTreeMap<String, String>, PipelineError> {
    let i = &cfg.inputs;
    let mut used: Vec<(&str, &Option<PathBuf>)> = vec![("holidays", &i.holidays)];
    if command.needs_cases() {
        used.push(("cases", &i.cases));
    }
    if command.needs_contacts() {
        used.push(("contacts", &i.contacts));
    }
    if command.needs_mobility() {
        used.extend([("subway", &i.subway), ("traffic", &i.traffic)]);
    }
    if command == Command::Run {
        used.push(("survey", &i.survey));
    }
    if command.needs_policy() {
        used.extend([("policy", &i.policy), ("indicators", &i.indicators)]);
    }
    let mut out = BTreeMap::new();
    for (name, path) in used {
        if let Some(p) = path {
            let bytes = std::fs::read(p).map_err(|e| PipelineError::io(p, e))?;
            out.insert(name.to_string(), sha256_hex(&bytes));
        }
    }
    Ok(out)
}

/// Computes every artifact of `command` in memory.
pub fn build_bundle(cfg: &PipelineConfig, command: Command) -> Result<Bundle, PipelineError> {
    let cal = calendar(cfg)?;
    let horizon = cfg.horizon as Day;
    let mut bundle = Bundle::default();

    let cases = if command.needs_cases() {
        Some(ingest::read_cases(require(&cfg.inputs.cases, "cases")?, &cal)?)
    } else {
        None
    };
    let contacts = if command.needs_contacts() {
        Some(ingest::read_contacts(require(&cfg.inputs.contacts, "contacts")?, &cal)?)
    } else {
        None
    };
    let hourly = if command.needs_mobility() {
        let subway = ingest::read_hourly(require(&cfg.inputs.subway, "subway")?, Mode::Subway, &cal)?;
        let traffic = ingest::read_hourly(require(&cfg.inputs.traffic, "traffic")?, Mode::Traffic, &cal)?;
        Some([subway, traffic])
    } else {
        None
    };
    let survey: Option<Survey> = match (&cfg.inputs.survey, command) {
        (Some(p), Command::Run) => Some(ingest::read_survey(p, &cal)?),
        _ => None,
    };
    let policy = if command.needs_policy() { Some(policy_timeline(cfg)?) } else { None };

    if command == Command::Run {
        let report = validate_inputs(cfg)?;
        bundle.json("validation.json", &report)?;
    }

    let count = match &cases {
        Some(c) if command != Command::Geo => {
            let stage = count_stage(&c.series, cfg)?;
            bundle.csv("cases_sma.csv", &tables::CASES_SMA_HEADER, &tables::cases_sma_rows(&stage.raw, &stage.sma, &cal))?;
            bundle.json("breaks.json", &stage.breaks)?;
            bundle.warnings.extend(stage.breaks.warnings.iter().map(|w| format!("cpd: {w}")));
            Some(stage)
        }
        _ => None,
    };

    let geo = match &contacts {
        Some(c) => {
            let stage = geo_stage(c, cfg)?;
            bundle.csv("dispersion.csv", &tables::DISPERSION_HEADER, &tables::dispersion_rows(&stage.momentum))?;
            Some(stage)
        }
        None => None,
    };

    let timeline = match (&count, &geo) {
        (Some(count), Some(geo)) => {
            let (timeline, transitions) = phase_stage(count, geo, cfg)?;
            let rows = tables::phase_rows(&timeline, &cal);
            bundle.json("phases.json", &rows)?;
            bundle.csv("phases.csv", &tables::PHASES_HEADER, &rows)?;
            bundle.json("transitions.json", &transitions)?;
            bundle.add(
                "fig1.svg",
                figures::fig1(&count.raw, &count.sma, &count.breaks, &geo.momentum, &geo.transitions, &timeline, horizon)
                    .into_bytes(),
            );
            Some(timeline)
        }
        (None, Some(geo)) => {
            let transitions = Transitions {
                count_breaks: None,
                geo_transitions: geo.transitions.clone(),
                fused: None,
                dropped: Vec::new(),
            };
            bundle.json("transitions.json", &transitions)?;
            None
        }
        _ => None,
    };

    if let (Some([subway, traffic]), Some(count), Some(timeline)) = (&hourly, &count, &timeline) {
        let stages = [mobility_stage(subway, &cal, cfg)?, mobility_stage(traffic, &cal, cfg)?];
        for s in &stages {
            if !s.clean.rejected.is_empty() {
                bundle.warnings.push(format!("{}: rejected sensors {:?}", s.clean.mode, s.clean.rejected));
            }
            if s.clean.unfilled > 0 {
                bundle.warnings.push(format!("{}: {} missing cell(s) could not be imputed", s.clean.mode, s.clean.unfilled));
            }
        }
        let reductions: Vec<ReductionSeries> = stages.iter().map(|s| s.reduction.clone()).collect();
        bundle.csv(
            "reductions.csv",
            &tables::REDUCTIONS_HEADER,
            &tables::reduction_rows(&reductions[0].series, &reductions[1].series, horizon),
        )?;
        let regressor = match cfg.regressor {
            Regressor::Sma => &count.sma,
            Regressor::Raw => &count.raw,
        };
        let fits: PhaseFitTable = phase_fit_table(&reductions, regressor, timeline, cfg.lag);
        bundle.csv("phase_fits.csv", &tables::PHASE_FITS_HEADER, &tables::phase_fit_rows(&fits))?;
        bundle.json("phase_fits.json", &fits)?;
        bundle.add("fig2.svg", figures::fig2(&fits, &reductions, regressor, timeline, cfg.lag).into_bytes());

        if command == Command::Run {
            let clean: Vec<CleanHourly> = stages.iter().map(|s| s.clean.clone()).collect();
            let (entries, series): (Vec<SeasonalityEntry>, _) = mobility::seasonality(&clean, &cal, cfg)?;
            for e in &entries {
                bundle.warnings.extend(e.result.warnings.iter().map(|w| format!("seasonality {} {}: {w}", e.slice, e.mode)));
            }
            bundle.json("seasonality_breaks.json", &entries)?;
            bundle.add("fig3.svg", figures::fig3(&series, &entries, horizon).into_bytes());
            bundle.add("fig4.svg", figures::fig4(&reductions[0].series, survey.as_ref(), horizon).into_bytes());
        }
    }

    if let Some(policy) = &policy {
        let indices: IndexSeries = policy.index_series().map_err(|e| PipelineError::analysis("index", e))?;
        let mut bytes = Vec::new();
        indices.write_csv(&mut bytes).map_err(|e| PipelineError::Output(e.to_string()))?;
        bundle.add("indices.csv", bytes);
        bundle.add("figS1.svg", figures::fig_s1(&indices).into_bytes());
    }

    bundle.add("config.txt", cfg.echo.clone().into_bytes());
    Ok(bundle)
}

/// Result of a successful command.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub manifest: Manifest,
}

fn manifest_for(cfg: &PipelineConfig, command: Command, bundle: &Bundle) -> Result<Manifest, PipelineError> {
    Ok(Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.as_str().to_string(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        seed: cfg.breaks.seed,
        config_sha256: sha256_hex(cfg.echo.as_bytes()),
        config: cfg.echo.clone(),
        methods: method_versions(),
        inputs: input_hashes(cfg, command)?,
        files: bundle.files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
        warnings: bundle.warnings.clone(),
    })
}

/// Writes `files` into `out` through a staging directory beside it.
fn commit(out: &Path, files: &BTreeMap<String, Vec<u8>>) -> Result<(), PipelineError> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| PipelineError::io(&parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".epiphase-staging-")
        .tempdir_in(&parent)
        .map_err(|e| PipelineError::io(&parent, e))?;
    for (name, bytes) in files {
        let p = staging.path().join(name);
        std::fs::write(&p, bytes).map_err(|e| PipelineError::io(&p, e))?;
    }
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    let mut moved = Vec::new();
    for name in files.keys() {
        let (from, to) = (staging.path().join(name), out.join(name));
        if let Err(e) = std::fs::rename(&from, &to) {
            for p in &moved {
                let _ = std::fs::remove_file(p);
            }
            return Err(PipelineError::io(&to, e));
        }
        moved.push(to);
    }
    Ok(())
}

/// Runs `command` and writes its bundle, with `manifest.json`, to `cfg.out`.
pub fn execute(cfg: &PipelineConfig, command: Command) -> Result<RunSummary, PipelineError> {
    log::info!("{}: writing to {}", command.as_str(), cfg.out.display());
    let bundle = build_bundle(cfg, command)?;
    let manifest = manifest_for(cfg, command, &bundle)?;
    let mut files = bundle.files;
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| PipelineError::Output(e.to_string()))?;
    bytes.push(b'\n');
    files.insert("manifest.json".into(), bytes);
    commit(&cfg.out, &files)?;
    Ok(RunSummary { out_dir: cfg.out.clone(), files: files.keys().cloned().collect(), manifest })
}

/// The full pipeline.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    execute(cfg, Command::Run)
}
