//! CSV readers for the pipeline inputs.
//!
//! Every reader checks the header exactly and reports malformed rows with
//! their 1-based line number (the header is line 1).

use super::PipelineError;
use crate::geo::{ContactDay, GeoPoint};
use crate::policy::{self, IndicatorTable, PolicyError, PolicyRecord};
use crate::series::{DailySeries, Day, HourlyRecord, HourlySeries, Mode, StudyCalendar};
use chrono::NaiveDate;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::Path;

pub const CASES_HEADER: [&str; 2] = ["date", "count"];
pub const CONTACTS_HEADER: [&str; 4] = ["date", "case_id", "lat", "lon"];
pub const SUBWAY_HEADER: [&str; 4] = ["date", "hour", "station_id", "riders"];
pub const TRAFFIC_HEADER: [&str; 4] = ["date", "hour", "sensor_id", "volume"];
pub const HOLIDAYS_HEADER: [&str; 2] = ["date_2020", "date_2019"];
pub const SURVEY_HEADER: [&str; 3] = ["date", "metric", "value"];

pub fn hourly_header(mode: Mode) -> [&'static str; 4] {
    match mode {
        Mode::Subway => SUBWAY_HEADER,
        Mode::Traffic => TRAFFIC_HEADER,
    }
}

/// Row count and date range of one input file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
}

impl DatasetSummary {
    fn new(name: &str, path: &Path) -> Self {
        Self {
            name: name.to_string(),
            file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            rows: 0,
            first_date: None,
            last_date: None,
        }
    }

    fn see(&mut self, date: NaiveDate) {
        self.rows += 1;
        self.first_date = Some(self.first_date.map_or(date, |d| d.min(date)));
        self.last_date = Some(self.last_date.map_or(date, |d| d.max(date)));
    }
}

/// Streams the rows of `path` after checking its header.
pub(crate) fn read_rows(
    path: &Path,
    header: &[&str],
    mut f: impl FnMut(u64, &csv::StringRecord) -> Result<(), String>,
) -> Result<(), PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let got = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let got: Vec<&str> = got.iter().map(|h| h.trim_start_matches('\u{feff}')).collect();
    if got != header {
        return Err(PipelineError::schema(
            path,
            1,
            format!("expected header '{}', found '{}'", header.join(","), got.join(",")),
        ));
    }
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                f(line, &record).map_err(|m| PipelineError::schema(path, line, m))?;
            }
            Ok(false) => return Ok(()),
            Err(e) => return Err(csv_error(path, e)),
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> PipelineError {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => PipelineError::Io { path: path.to_path_buf(), message: e.to_string() },
        _ => PipelineError::schema(path, line, e.to_string()),
    }
}

pub(crate) fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("invalid date '{s}': {e}"))
}

fn parse_f64(s: &str, what: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid {what} '{s}'"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{what} '{s}' is not finite"))
    }
}

fn parse_count(s: &str, what: &str) -> Result<Option<f64>, String> {
    if s.is_empty() || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    let v = parse_f64(s, what)?;
    if v < 0.0 {
        return Err(format!("{what} {v} is negative"));
    }
    Ok(Some(v))
}

/// Daily case counts over the study window.
#[derive(Debug, Clone)]
pub struct CasesInput {
    /// Contiguous over `1..=horizon`; days without a row are missing.
    pub series: DailySeries,
    pub summary: DatasetSummary,
    pub outside_window: usize,
}

pub fn read_cases(path: &Path, cal: &StudyCalendar) -> Result<CasesInput, PipelineError> {
    let mut summary = DatasetSummary::new("cases", path);
    let mut seen: HashMap<NaiveDate, u64> = HashMap::new();
    let mut values = vec![None; cal.horizon()];
    let mut outside_window = 0;
    read_rows(path, &CASES_HEADER, |line, rec| {
        let date = parse_date(&rec[0])?;
        if let Some(first) = seen.insert(date, line) {
            return Err(format!("duplicate date {date} (first seen on line {first})"));
        }
        let count = parse_count(&rec[1], "count")?;
        summary.see(date);
        let day = cal.day_index(date);
        if cal.in_window(day) {
            values[(day - 1) as usize] = count;
        } else {
            outside_window += 1;
        }
        Ok(())
    })?;
    let series = DailySeries::contiguous("cases", 1, values).map_err(|e| PipelineError::schema(path, 0, e.to_string()))?;
    Ok(CasesInput { series, summary, outside_window })
}

/// Contact locations grouped by day, one entry for every day of the window.
#[derive(Debug, Clone)]
pub struct ContactsInput {
    pub days: Vec<ContactDay>,
    pub summary: DatasetSummary,
    pub outside_window: usize,
    pub collapsed: usize,
}

pub fn read_contacts(path: &Path, cal: &StudyCalendar) -> Result<ContactsInput, PipelineError> {
    let mut summary = DatasetSummary::new("contacts", path);
    let mut by_day: BTreeMap<Day, Vec<GeoPoint>> = BTreeMap::new();
    let mut outside_window = 0;
    read_rows(path, &CONTACTS_HEADER, |_, rec| {
        let date = parse_date(&rec[0])?;
        let lat = parse_f64(&rec[2], "lat")?;
        let lon = parse_f64(&rec[3], "lon")?;
        let point = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
        summary.see(date);
        let day = cal.day_index(date);
        if cal.in_window(day) {
            by_day.entry(day).or_default().push(point);
        } else {
            outside_window += 1;
        }
        Ok(())
    })?;
    let days: Vec<ContactDay> = (1..=cal.horizon() as Day)
        .map(|d| ContactDay::new(d, by_day.remove(&d).unwrap_or_default()))
        .collect();
    let collapsed = days.iter().map(|d| d.collapsed).sum();
    Ok(ContactsInput { days, summary, outside_window, collapsed })
}

/// Hourly counts for one mode, both years in one series.
#[derive(Debug, Clone)]
pub struct HourlyInput {
    pub mode: Mode,
    pub series: HourlySeries,
    pub summary: DatasetSummary,
}

pub fn read_hourly(path: &Path, mode: Mode, cal: &StudyCalendar) -> Result<HourlyInput, PipelineError> {
    let header = hourly_header(mode);
    let mut summary = DatasetSummary::new(mode.as_str(), path);
    let mut seen: HashMap<(NaiveDate, u8, String), u64> = HashMap::new();
    let mut records = Vec::new();
    read_rows(path, &header, |line, rec| {
        let date = parse_date(&rec[0])?;
        let hour: u8 = rec[1].parse().map_err(|_| format!("invalid hour '{}'", &rec[1]))?;
        if hour > 23 {
            return Err(format!("hour {hour} outside 0-23"));
        }
        let id = rec[2].to_string();
        if id.is_empty() {
            return Err(format!("empty {}", header[2]));
        }
        let count = parse_count(&rec[3], header[3])?;
        if let Some(first) = seen.insert((date, hour, id.clone()), line) {
            return Err(format!("duplicate key ({date}, {hour}, {id}) (first seen on line {first})"));
        }
        summary.see(date);
        records.push(HourlyRecord { day: cal.day_index(date), hour, id, count });
        Ok(())
    })?;
    let series = HourlySeries::new(records).map_err(|e| PipelineError::schema(path, 0, e.to_string()))?;
    Ok(HourlyInput { mode, series, summary })
}

pub fn read_holidays(path: &Path) -> Result<Vec<(NaiveDate, NaiveDate)>, PipelineError> {
    let mut out = Vec::new();
    read_rows(path, &HOLIDAYS_HEADER, |_, rec| {
        out.push((parse_date(&rec[0])?, parse_date(&rec[1])?));
        Ok(())
    })?;
    Ok(out)
}

/// Published survey percentages keyed by metric name, in date order.
pub type Survey = BTreeMap<String, Vec<(Day, f64)>>;

pub fn read_survey(path: &Path, cal: &StudyCalendar) -> Result<Survey, PipelineError> {
    let mut out: Survey = BTreeMap::new();
    let mut seen: HashMap<(NaiveDate, String), u64> = HashMap::new();
    read_rows(path, &SURVEY_HEADER, |line, rec| {
        let date = parse_date(&rec[0])?;
        let metric = rec[1].to_string();
        if metric.is_empty() {
            return Err("empty metric".into());
        }
        if let Some(first) = seen.insert((date, metric.clone()), line) {
            return Err(format!("duplicate ({date}, {metric}) (first seen on line {first})"));
        }
        let value = parse_f64(&rec[2], "value")?;
        out.entry(metric).or_default().push((cal.day_index(date), value));
        Ok(())
    })?;
    for points in out.values_mut() {
        points.sort_by_key(|p| p.0);
    }
    Ok(out)
}

fn policy_error(path: &Path, e: PolicyError) -> PipelineError {
    match e {
        PolicyError::Schema { line, message } => PipelineError::schema(path, line, message),
        other => PipelineError::schema(path, 0, other.to_string()),
    }
}

pub fn read_indicators(path: &Path) -> Result<IndicatorTable, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    IndicatorTable::parse(file).map_err(|e| policy_error(path, e))
}

pub fn read_policy(path: &Path) -> Result<Vec<PolicyRecord>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    policy::parse_records(file).map_err(|e| policy_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn duplicate_case_date_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "cases.csv", "date,count\n2020-01-20,1\n2020-01-21,2\n2020-01-20,3\n");
        match read_cases(&p, &StudyCalendar::seoul_2020()) {
            Err(PipelineError::Schema { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("line 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cases_fill_the_window() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "cases.csv", "date,count\n2020-01-20,1\n2020-01-22,\n2019-12-31,4\n");
        let c = read_cases(&p, &StudyCalendar::seoul_2020()).unwrap();
        assert_eq!(c.series.len(), 189);
        assert_eq!(c.series.get(1), Some(1.0));
        assert_eq!(c.series.get(2), None);
        assert_eq!(c.outside_window, 1);
        assert_eq!(c.summary.rows, 3);
    }

    #[test]
    fn header_and_value_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cal = StudyCalendar::seoul_2020();
        let p = write(dir.path(), "a.csv", "day,count\n");
        assert!(matches!(read_cases(&p, &cal), Err(PipelineError::Schema { line: 1, .. })));
        let p = write(dir.path(), "b.csv", "date,count\n2020-01-20,-1\n");
        assert!(matches!(read_cases(&p, &cal), Err(PipelineError::Schema { line: 2, .. })));
        let p = write(dir.path(), "c.csv", "date,case_id,lat,lon\n2020-01-20,1,95,127\n");
        assert!(matches!(read_contacts(&p, &cal), Err(PipelineError::Schema { line: 2, .. })));
        let p = write(dir.path(), "d.csv", "date,hour,station_id,riders\n2020-01-20,24,s1,3\n");
        assert!(matches!(read_hourly(&p, Mode::Subway, &cal), Err(PipelineError::Schema { line: 2, .. })));
        assert!(matches!(
            read_cases(&dir.path().join("missing.csv"), &cal),
            Err(PipelineError::Io { .. })
        ));
    }

    #[test]
    fn hourly_duplicates_and_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        let cal = StudyCalendar::seoul_2020();
        let p = write(
            dir.path(),
            "t.csv",
            "date,hour,sensor_id,volume\n2020-01-20,0,a,5\n2020-01-20,1,a,\n2020-01-20,0,a,6\n",
        );
        assert!(matches!(read_hourly(&p, Mode::Traffic, &cal), Err(PipelineError::Schema { line: 4, .. })));
        let p = write(dir.path(), "u.csv", "date,hour,sensor_id,volume\n2020-01-20,0,a,5\n2020-01-20,1,a,\n");
        let h = read_hourly(&p, Mode::Traffic, &cal).unwrap();
        assert_eq!(h.series.missing_rates()["a"], 0.5);
    }

    #[test]
    fn contacts_cover_every_day() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.csv",
            "date,case_id,lat,lon\n2020-01-21,1,37.5,127.0\n2020-01-21,2,37.5,127.0\n2020-01-23,3,37.6,127.1\n",
        );
        let c = read_contacts(&p, &StudyCalendar::seoul_2020()).unwrap();
        assert_eq!(c.days.len(), 189);
        assert_eq!(c.days[1].points().len(), 1);
        assert_eq!(c.collapsed, 1);
        assert!(c.days[0].is_empty());
    }
}
