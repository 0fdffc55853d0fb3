use epiphase::changepoint::SegmentationResult;
use epiphase::pipeline::mobility::SeasonalityEntry;
use epiphase::pipeline::synth::{self, PLANTED_COUNT_BREAKS, PLANTED_GEO_TRANSITIONS, PLANTED_INTERVENTIONS};
use epiphase::pipeline::tables::{self, CasesSmaRow, DispersionRow, PhaseFitCsvRow, PhaseRow, ReductionRow};
use epiphase::pipeline::{self, Command, PipelineConfig, PipelineError};
use epiphase::policy::{IndexSeries, PolicyTimeline};
use epiphase::regression::PhaseFitTable;
use epiphase::series::{DayFilter, Mode};
use epiphase::PhaseKind;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("pipeline-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn load(config: &Path, out: &Path, extra: &[(&str, &str)]) -> Result<PipelineConfig, PipelineError> {
    let mut overrides = vec![("out".to_string(), out.display().to_string())];
    overrides.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    PipelineConfig::load(Some(config), &overrides, Path::new("."))
}

/// Fixture and bundle shared by the tests that only read outputs.
fn bundle() -> &'static (PathBuf, PathBuf) {
    static BUNDLE: OnceLock<(PathBuf, PathBuf)> = OnceLock::new();
    BUNDLE.get_or_init(|| {
        let root = scratch("shared");
        let config = synth::write_fixture(&root.join("fixture"), synth::DEFAULT_SEED).unwrap();
        let out = root.join("bundle");
        pipeline::run_pipeline(&load(&config, &out, &[]).unwrap()).unwrap();
        (root.join("fixture"), out)
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_every_artifact() {
    let (_, out) = bundle();
    for name in [
        "validation.json",
        "cases_sma.csv",
        "breaks.json",
        "dispersion.csv",
        "transitions.json",
        "phases.json",
        "phases.csv",
        "reductions.csv",
        "phase_fits.csv",
        "phase_fits.json",
        "seasonality_breaks.json",
        "indices.csv",
        "fig1.svg",
        "fig2.svg",
        "fig3.svg",
        "fig4.svg",
        "figS1.svg",
        "config.txt",
        "manifest.json",
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let manifest: serde_json::Value = read_json(&out.join("manifest.json"));
    assert!(manifest["config_sha256"].as_str().is_some_and(|h| h.len() == 64));
    assert_eq!(manifest["files"].as_object().unwrap().len(), 18);
}

#[test]
fn planted_structure_is_recovered() {
    let (_, out) = bundle();
    let breaks: SegmentationResult = read_json(&out.join("breaks.json"));
    assert_eq!(breaks.breaks, PLANTED_COUNT_BREAKS);

    let transitions: serde_json::Value = read_json(&out.join("transitions.json"));
    let geo: Vec<i64> = serde_json::from_value(transitions["geo_transitions"].clone()).unwrap();
    assert_eq!(geo, PLANTED_GEO_TRANSITIONS);

    let phases: Vec<PhaseRow> = read_json(&out.join("phases.json"));
    let head: Vec<(PhaseKind, u32, i64, i64)> =
        phases.iter().take(6).map(|p| (p.kind, p.wave, p.start_day, p.end_day)).collect();
    assert_eq!(
        head[..5],
        [
            (PhaseKind::Trigger, 1, 1, 29),
            (PhaseKind::Escalation, 1, 30, 50),
            (PhaseKind::Peak, 1, 51, 82),
            (PhaseKind::DeEscalation, 1, 83, 106),
            (PhaseKind::Escalation, 2, 107, 128),
        ]
    );
    assert_eq!((head[5].0, head[5].2), (PhaseKind::Peak, 129));

    let entries: Vec<SeasonalityEntry> = read_json(&out.join("seasonality_breaks.json"));
    let all_week = entries
        .iter()
        .find(|e| e.slice == "all-week/all-hours" && e.mode == Mode::Subway)
        .expect("all-week subway entry");
    assert_eq!(all_week.day_filter, DayFilter::AllWeek);
    for (day, hour) in PLANTED_INTERVENTIONS {
        let hit = all_week.hourly_breaks.iter().any(|h| (h.day - day).abs() <= 1);
        assert!(hit, "intervention ({day}, {hour}) not found in {:?}", all_week.hourly_breaks);
    }
    // six presets, two modes
    assert_eq!(entries.len(), 12);

    let validation: serde_json::Value = read_json(&out.join("validation.json"));
    assert_eq!(validation["rejected_sensors"]["traffic"], serde_json::json!([synth::REJECTED_SENSOR]));
}

#[test]
fn numeric_tables_reparse() {
    let (fixture, out) = bundle();
    let cases: Vec<CasesSmaRow> = tables::read_csv(&out.join("cases_sma.csv"), &tables::CASES_SMA_HEADER).unwrap();
    assert_eq!(cases.len(), 189);
    let input = std::fs::read_to_string(fixture.join("cases.csv")).unwrap();
    for (row, line) in cases.iter().zip(input.lines().skip(1)) {
        let (date, count) = line.split_once(',').unwrap();
        assert_eq!(row.date.to_string(), date);
        assert_eq!(row.count, Some(count.parse().unwrap()));
    }
    let expected_sma: f64 = cases[..7].iter().map(|r| r.count.unwrap()).sum::<f64>() / 7.0;
    assert!(cases[..6].iter().all(|r| r.count_sma.is_none()));
    assert!((cases[6].count_sma.unwrap() - expected_sma).abs() < 1e-12);

    let dispersion: Vec<DispersionRow> = tables::read_csv(&out.join("dispersion.csv"), &tables::DISPERSION_HEADER).unwrap();
    for r in &dispersion {
        if let (Some(g), Some(h), Some(m)) = (r.d_g_km, r.d_h_km, r.momentum_km) {
            assert_eq!(m, g - h, "day {}", r.day);
        }
    }

    let phases_csv: Vec<PhaseRow> = tables::read_csv(&out.join("phases.csv"), &tables::PHASES_HEADER).unwrap();
    let phases_json: Vec<PhaseRow> = read_json(&out.join("phases.json"));
    assert_eq!(phases_csv, phases_json);

    let fits_csv: Vec<PhaseFitCsvRow> = tables::read_csv(&out.join("phase_fits.csv"), &tables::PHASE_FITS_HEADER).unwrap();
    let fits_json: PhaseFitTable = read_json(&out.join("phase_fits.json"));
    assert_eq!(fits_csv, tables::phase_fit_rows(&fits_json));

    let reductions: Vec<ReductionRow> = tables::read_csv(&out.join("reductions.csv"), &tables::REDUCTIONS_HEADER).unwrap();
    assert!(reductions.iter().all(|r| (1..=189).contains(&r.day)));
    assert!(reductions.iter().any(|r| r.subway_reduction.is_some_and(|v| v > 0.3)));

    let indices = IndexSeries::read_csv(std::fs::File::open(out.join("indices.csv")).unwrap()).unwrap();
    assert_eq!(indices, PolicyTimeline::seoul_2020().index_series().unwrap());
}

#[test]
fn figures_are_self_contained_xml() {
    let (_, out) = bundle();
    for name in ["fig1.svg", "fig2.svg", "fig3.svg", "fig4.svg", "figS1.svg"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let root = doc.root_element();
        assert_eq!(root.tag_name().name(), "svg", "{name}");
        assert_eq!(root.tag_name().namespace(), Some("http://www.w3.org/2000/svg"), "{name}");
        for node in doc.descendants().filter(|n| n.is_element()) {
            let tag = node.tag_name().name();
            assert!(!matches!(tag, "image" | "script" | "foreignObject" | "iframe"), "{name}: <{tag}>");
            for attr in node.attributes() {
                let v = attr.value();
                if attr.name() == "href" {
                    assert!(v.starts_with('#'), "{name}: external href {v}");
                }
                if let Some(rest) = v.split("url(").nth(1) {
                    assert!(rest.starts_with('#'), "{name}: external url in {v}");
                }
            }
        }
        assert_eq!(text.matches("http").count(), 1, "{name}: only the namespace may name a URL");
        assert!(doc.descendants().any(|n| n.tag_name().name() == "polyline" || n.tag_name().name() == "path"));
    }
}

#[test]
fn stage_commands_write_their_subset() {
    let (fixture, _) = bundle();
    let root = scratch("stages");
    let config = fixture.join(synth::CONFIG_NAME);
    let cases: [(Command, &[&str]); 5] = [
        (Command::Cpd, &["breaks.json", "cases_sma.csv"]),
        (Command::Geo, &["dispersion.csv", "transitions.json"]),
        (Command::Phases, &["phases.json", "phases.csv", "fig1.svg"]),
        (Command::Fit, &["phase_fits.csv", "fig2.svg", "reductions.csv"]),
        (Command::Index, &["indices.csv", "figS1.svg"]),
    ];
    for (command, expected) in cases {
        let out = root.join(command.as_str());
        let summary = pipeline::execute(&load(&config, &out, &[]).unwrap(), command).unwrap();
        for name in expected.iter().chain(&["manifest.json", "config.txt"]) {
            assert!(summary.files.iter().any(|f| f == name), "{}: {name} missing", command.as_str());
        }
        assert!(!summary.files.iter().any(|f| f == "seasonality_breaks.json"), "{}", command.as_str());
    }
}

#[test]
fn config_is_echoed_with_overrides() {
    let (fixture, _) = bundle();
    let out = scratch("echo").join("bundle");
    let config = fixture.join(synth::CONFIG_NAME);
    let cfg = load(&config, &out, &[("seed", "99")]).unwrap();
    let summary = pipeline::execute(&cfg, Command::Index).unwrap();
    let echoed = std::fs::read_to_string(out.join("config.txt")).unwrap();
    let original = std::fs::read_to_string(&config).unwrap();
    assert!(echoed.starts_with(&original));
    assert!(echoed.ends_with("# command-line overrides\nseed = 99\n"));
    assert!(!echoed.contains(&out.display().to_string()));
    assert_eq!(summary.manifest.seed, 99);
    assert_eq!(summary.manifest.config, echoed);
}

fn copy_fixture(name: &str) -> (PathBuf, PathBuf) {
    let (fixture, _) = bundle();
    let root = scratch(name);
    let dir = root.join("fixture");
    std::fs::create_dir_all(&dir).unwrap();
    for entry in std::fs::read_dir(fixture).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.join(entry.file_name())).unwrap();
    }
    (dir, root.join("bundle"))
}

#[test]
fn duplicate_date_is_a_schema_error_naming_the_line() {
    let (dir, out) = copy_fixture("duplicate");
    let path = dir.join("cases.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("2020-02-01,5\n");
    std::fs::write(&path, text).unwrap();
    let cfg = load(&dir.join(synth::CONFIG_NAME), &out, &[]).unwrap();
    let err = pipeline::validate_inputs(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    match &err {
        // header on line 1, 189 data rows, the duplicate appended after them
        PipelineError::Schema { line, message, .. } => {
            assert_eq!(*line, 191);
            assert!(message.contains("line 14"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(pipeline::run_pipeline(&cfg).unwrap_err().exit_code(), 3);
    assert!(!out.exists());
}

#[test]
fn error_classes_map_to_exit_codes() {
    let (dir, out) = copy_fixture("errors");
    let config = dir.join(synth::CONFIG_NAME);

    let missing = load(&config, &out, &[("survey", "nowhere.csv")]).unwrap();
    let err = pipeline::run_pipeline(&missing).unwrap_err();
    assert!(matches!(err, PipelineError::Io { .. }), "{err:?}");
    assert_eq!(err.exit_code(), 2);

    let err = load(&config, &out, &[("no_such_key", "1")]).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)), "{err:?}");
    assert_eq!(err.exit_code(), 3);

    std::fs::write(dir.join("bad_header.csv"), "day,count\n1,2\n").unwrap();
    let bad = load(&config, &out, &[("cases", dir.join("bad_header.csv").to_str().unwrap())]).unwrap();
    let err = pipeline::execute(&bad, Command::Cpd).unwrap_err();
    assert!(matches!(err, PipelineError::Schema { line: 1, .. }), "{err:?}");

    // a single observed day leaves nothing to smooth
    std::fs::write(dir.join("one_day.csv"), "date,count\n2020-01-20,4\n").unwrap();
    let thin = load(&config, &out, &[("cases", dir.join("one_day.csv").to_str().unwrap())]).unwrap();
    let err = pipeline::execute(&thin, Command::Cpd).unwrap_err();
    assert!(matches!(err, PipelineError::Analysis { .. }), "{err:?}");
    assert_eq!(err.exit_code(), 4);
    assert!(!out.exists(), "a failed run left outputs behind");

    let blocked = dir.join("blocked");
    std::fs::write(&blocked, "not a directory").unwrap();
    let cfg = load(&config, &blocked, &[]).unwrap();
    let err = pipeline::execute(&cfg, Command::Index).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err:?}");
    let staging_left = std::fs::read_dir(&dir)
        .unwrap()
        .any(|e| e.unwrap().file_name().to_string_lossy().starts_with(".epiphase-staging-"));
    assert!(!staging_left);
}
