//! Seeded synthetic fixture with planted structure.
//!
//! The generator writes the same CSV files the pipeline reads, plus a
//! configuration file pointing at them. Planted truth:
//!
//! - case-count level shifts whose smoothed series breaks on
//!   [`PLANTED_COUNT_BREAKS`];
//! - contact-location regimes whose smoothed momentum changes sign on
//!   [`PLANTED_GEO_TRANSITIONS`];
//! - mobility-reduction shifts after the hourly cells in
//!   [`PLANTED_INTERVENTIONS`], with traffic moving a quarter as much as
//!   subway;
//! - one traffic sensor ([`REJECTED_SENSOR`]) above the missing-cell ceiling
//!   and a few isolated missing cells elsewhere.

use super::PipelineError;
use crate::series::{Day, StudyCalendar};
use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

pub const PLANTED_COUNT_BREAKS: [Day; 4] = [50, 82, 128, 156];
pub const PLANTED_GEO_TRANSITIONS: [Day; 4] = [29, 82, 106, 169];
/// Last `(day, hour)` cell before each mobility shift.
pub const PLANTED_INTERVENTIONS: [(Day, u8); 5] = [(34, 3), (63, 13), (91, 19), (126, 19), (161, 13)];
pub const REJECTED_SENSOR: &str = "T05";

const COUNT_LEVELS: [f64; 5] = [3.0, 24.0, 8.0, 27.0, 15.0];
const SUBWAY_REDUCTION: [f64; 6] = [0.05, 0.40, 0.35, 0.30, 0.25, 0.22];
/// A level shift starting on day `s` puts the break of the 7-day average
/// on day `s + 2`.
const SMA_BREAK_LAG: Day = 2;
/// Days between a planted regime change and the sign change of its average.
const LEAD_TO_PEAK: Day = 4;
const LEAD_TO_SPREAD: Day = 3;
/// Additive weekday pattern of the counts; it sums to zero and so cancels in
/// any 7-day average.
const WEEKLY_PATTERN: [f64; 7] = [1.0, 1.0, 1.0, 0.0, 0.0, -1.0, -2.0];
const RING_KM: f64 = 7.5;
const OUTLIER_KM: f64 = 15.0;
const KM_PER_DEG_LAT: f64 = 111.2;
const KM_PER_DEG_LON: f64 = 88.2;

const LAT: (f64, f64) = (37.40, 37.75);
const LON: (f64, f64) = (126.75, 127.20);
const STATIONS: [(&str, f64); 5] = [("S01", 2400.0), ("S02", 1800.0), ("S03", 3100.0), ("S04", 1200.0), ("S05", 2000.0)];
const SENSORS: [(&str, f64); 5] = [("T01", 900.0), ("T02", 1300.0), ("T03", 700.0), ("T04", 1100.0), (REJECTED_SENSOR, 800.0)];

/// Relative volume by hour of a working day.
const WORKDAY_PROFILE: [f64; 24] = [
    0.10, 0.04, 0.02, 0.02, 0.05, 0.20, 0.55, 1.00, 0.95, 0.60, 0.45, 0.48, 0.52, 0.50, 0.48, 0.52, 0.62, 0.80,
    0.98, 0.85, 0.55, 0.42, 0.33, 0.20,
];
/// Relative volume by hour of a weekend day or holiday.
const OFFDAY_PROFILE: [f64; 24] = [
    0.12, 0.06, 0.03, 0.02, 0.03, 0.08, 0.15, 0.25, 0.35, 0.45, 0.55, 0.62, 0.66, 0.66, 0.64, 0.63, 0.62, 0.60,
    0.58, 0.52, 0.45, 0.38, 0.30, 0.20,
];

#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRow {
    pub date: NaiveDate,
    pub hour: u8,
    pub id: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthData {
    pub cases: Vec<(NaiveDate, u64)>,
    pub contacts: Vec<(NaiveDate, u64, f64, f64)>,
    pub subway: Vec<HourlyRow>,
    pub traffic: Vec<HourlyRow>,
    pub survey: Vec<(NaiveDate, String, f64)>,
}

fn count_level(day: Day) -> f64 {
    let k = PLANTED_COUNT_BREAKS.iter().filter(|&&b| day >= b - SMA_BREAK_LAG).count();
    COUNT_LEVELS[k]
}

/// Raw dispersion regime of `day`: `true` for the peak regime.
fn peak_regime(day: Day) -> bool {
    let mut peak = false;
    for &t in &PLANTED_GEO_TRANSITIONS {
        let lead = if peak { LEAD_TO_SPREAD } else { LEAD_TO_PEAK };
        if day >= t - lead {
            peak = !peak;
        } else {
            break;
        }
    }
    peak
}

fn subway_reduction(day: Day, hour: u8) -> f64 {
    let k = PLANTED_INTERVENTIONS.iter().filter(|&&(d, h)| (day, hour) > (d, h)).count();
    SUBWAY_REDUCTION[k]
}

fn clamp_point((lat, lon): (f64, f64)) -> (f64, f64) {
    (lat.clamp(LAT.0, LAT.1), lon.clamp(LON.0, LON.1))
}

fn offday(date: NaiveDate, holidays: &BTreeSet<NaiveDate>) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun) || holidays.contains(&date)
}

/// Generates the full fixture for `seed`.
pub fn generate(seed: u64) -> SynthData {
    let cal = StudyCalendar::seoul_2020();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = SynthData::default();
    let horizon = cal.horizon() as Day;

    let jitter = Normal::new(0.0, 0.5).expect("valid sd");
    for day in 1..=horizon {
        let weekday = cal.date_of(day).weekday().num_days_from_monday() as usize;
        let v = count_level(day) + WEEKLY_PATTERN[weekday] + jitter.sample(&mut rng);
        data.cases.push((cal.date_of(day), v.round().max(0.0) as u64));
    }

    // Peak days put every case near one of twelve points on a ring, so each
    // new case sits beside yesterday's; other days add a far outlier to a
    // tight cluster, on alternating sides.
    let jitter = Normal::new(0.0, 0.004).expect("valid sd");
    let spread = Normal::new(0.0, 0.009).expect("valid sd");
    let offset = |(lat, lon): (f64, f64), km: f64, angle: f64| {
        (lat + km * angle.sin() / KM_PER_DEG_LAT, lon + km * angle.cos() / KM_PER_DEG_LON)
    };
    let mut case_id = 0u64;
    let mut anchors: Vec<(f64, f64)> = Vec::new();
    let mut hotspot = (0.0, 0.0);
    let mut heading = 0.0;
    let mut previous: Option<bool> = None;
    for day in 1..=horizon {
        let peak = peak_regime(day);
        if previous != Some(peak) {
            hotspot = (rng.random_range(37.565..37.585), rng.random_range(126.96..126.99));
            let turn = rng.random_range(0.0..std::f64::consts::TAU);
            anchors = (0..12).map(|k| offset(hotspot, RING_KM, turn + k as f64 * std::f64::consts::TAU / 12.0)).collect();
            heading = rng.random_range(0.0..std::f64::consts::TAU);
        }
        previous = Some(peak);
        let mut points: Vec<(f64, f64)> = if peak {
            anchors.iter().map(|&(la, lo)| (la + jitter.sample(&mut rng), lo + jitter.sample(&mut rng))).collect()
        } else {
            let mut pts: Vec<(f64, f64)> = (0..rng.random_range(8..12))
                .map(|_| (hotspot.0 + spread.sample(&mut rng), hotspot.1 + spread.sample(&mut rng)))
                .collect();
            heading += std::f64::consts::PI;
            pts.push(offset(hotspot, OUTLIER_KM, heading));
            pts
        };
        for p in points.iter_mut() {
            *p = clamp_point(*p);
        }
        for (lat, lon) in points {
            case_id += 1;
            data.contacts.push((cal.date_of(day), case_id, lat, lon));
        }
    }

    let holidays: BTreeSet<NaiveDate> = cal.holidays().iter().flat_map(|(a, b)| [*a, *b]).collect();
    let noise = Normal::new(0.0, 0.03).expect("valid sd");
    let baseline_days = cal.day_index(cal.match_day(cal.date_of(1)).unwrap())..=cal.day_index(cal.match_day(cal.date_of(horizon)).unwrap());
    let days: Vec<Day> = baseline_days.chain(1..=horizon).collect();
    for (rows, ids, scale) in [(&mut data.subway, &STATIONS[..], 1.0), (&mut data.traffic, &SENSORS[..], 0.25)] {
        for &day in &days {
            let date = cal.date_of(day);
            let profile = if offday(date, &holidays) { &OFFDAY_PROFILE } else { &WORKDAY_PROFILE };
            for hour in 0..24u8 {
                let reduction = if day >= 1 { scale * subway_reduction(day, hour) } else { 0.0 };
                for &(id, size) in ids {
                    let v = size * profile[hour as usize] * (1.0 - reduction) * (1.0 + noise.sample(&mut rng));
                    rows.push(HourlyRow { date, hour, id: id.to_string(), value: Some(v.max(0.0).round()) });
                }
            }
        }
    }
    // isolated gaps, then a sensor with about 1% of cells missing
    for &(day, hour, id) in &[(40, 8, "T01"), (77, 17, "T02"), (140, 12, "T03")] {
        let date = cal.date_of(day);
        if let Some(r) = data.traffic.iter_mut().find(|r| r.date == date && r.hour == hour && r.id == id) {
            r.value = None;
        }
    }
    for r in data.traffic.iter_mut().filter(|r| r.id == REJECTED_SENSOR) {
        if rng.random_bool(0.01) {
            r.value = None;
        }
    }

    for (k, day) in (16..=horizon).step_by(14).enumerate() {
        let date = cal.date_of(day);
        let t = k as f64;
        data.survey.push((date, "mask_use".into(), (72.0 + 4.0 * t).min(98.0)));
        data.survey.push((date, "overall_risk".into(), 55.0 + 10.0 * (t / 2.0).sin()));
        data.survey.push((date, "personal_risk".into(), 30.0 + 6.0 * (t / 2.0).sin()));
    }
    data
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| PipelineError::io(path, e))?;
    wtr.write_record(header).map_err(|e| PipelineError::io(path, e))?;
    for row in rows {
        wtr.write_record(&row).map_err(|e| PipelineError::io(path, e))?;
    }
    wtr.flush().map_err(|e| PipelineError::io(path, e))
}

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20200120;

/// Configuration written next to the fixture files.
pub const CONFIG_NAME: &str = "epiphase.conf";

/// Writes the fixture CSVs and a configuration file into `dir` and returns
/// the configuration path.
pub fn write_fixture(dir: &Path, seed: u64) -> Result<PathBuf, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let data = generate(seed);
    write_csv(
        &dir.join("cases.csv"),
        &super::ingest::CASES_HEADER,
        data.cases.iter().map(|(d, c)| vec![d.to_string(), c.to_string()]),
    )?;
    write_csv(
        &dir.join("contacts.csv"),
        &super::ingest::CONTACTS_HEADER,
        data.contacts.iter().map(|(d, id, lat, lon)| vec![d.to_string(), id.to_string(), format!("{lat:.6}"), format!("{lon:.6}")]),
    )?;
    for (name, header, rows) in [
        ("subway.csv", super::ingest::SUBWAY_HEADER, &data.subway),
        ("traffic.csv", super::ingest::TRAFFIC_HEADER, &data.traffic),
    ] {
        write_csv(
            &dir.join(name),
            &header,
            rows.iter().map(|r| {
                vec![r.date.to_string(), r.hour.to_string(), r.id.clone(), r.value.map(|v| v.to_string()).unwrap_or_default()]
            }),
        )?;
    }
    write_csv(
        &dir.join("survey.csv"),
        &super::ingest::SURVEY_HEADER,
        data.survey.iter().map(|(d, m, v)| vec![d.to_string(), m.clone(), format!("{v:.1}")]),
    )?;
    let config = dir.join(CONFIG_NAME);
    let text = format!(
        "# synthetic fixture, seed {seed}\n\
         cases = cases.csv\n\
         contacts = contacts.csv\n\
         subway = subway.csv\n\
         traffic = traffic.csv\n\
         survey = survey.csv\n\
         seed = {seed}\n\
         min_segment = 10\n"
    );
    std::fs::write(&config, text).map_err(|e| PipelineError::io(&config, e))?;
    Ok(config)
}
