//! Day-indexed series and the calendar they live on.
//!
//! Day 1 is the calendar origin (2020-01-20 for the Seoul study window).
//! Days before the origin are non-positive, which lets the previous-year
//! baseline share the same index space as the study window.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Day index; day 1 is the calendar origin.
pub type Day = i64;

const SHIPPED_HOLIDAYS: &str = include_str!("../data/holidays.csv");

/// Default per-sensor missing-cell ceiling (0.25 %).
pub const DEFAULT_MAX_MISSING_RATE: f64 = 0.0025;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("date {0} is outside the study window")]
    OutOfRange(NaiveDate),
    #[error("baseline value is zero or not finite; reduction undefined")]
    UndefinedBaseline,
    #[error("no data left after filtering: {0}")]
    EmptySeries(String),
    #[error("sensors exceed the missing-rate ceiling: {}", .0.join(", "))]
    SensorRejected(Vec<String>),
    #[error("duplicate hourly record for day {day}, hour {hour}, id {id}")]
    DuplicateKey { day: Day, hour: u8, id: String },
    #[error("invalid holiday table: {0}")]
    InvalidHolidays(String),
}

/// The study calendar: origin date, horizon and the holiday matching table.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCalendar {
    origin: NaiveDate,
    horizon: usize,
    holidays: BTreeMap<NaiveDate, NaiveDate>,
}

impl StudyCalendar {
    pub fn new(
        origin: NaiveDate,
        horizon: usize,
        holidays: impl IntoIterator<Item = (NaiveDate, NaiveDate)>,
    ) -> Result<Self, SeriesError> {
        if horizon == 0 {
            return Err(SeriesError::InvalidArgument("horizon must be positive".into()));
        }
        let mut map = BTreeMap::new();
        for (current, baseline) in holidays {
            if let Some(previous) = map.insert(current, baseline) {
                if previous != baseline {
                    return Err(SeriesError::InvalidHolidays(format!(
                        "{current} is mapped to both {previous} and {baseline}"
                    )));
                }
            }
        }
        Ok(Self { origin, horizon, holidays: map })
    }

    /// The 189-day Seoul window starting 2020-01-20 with the shipped holiday table.
    pub fn seoul_2020() -> Self {
        let holidays = parse_holidays(SHIPPED_HOLIDAYS.as_bytes()).expect("shipped holiday table is valid");
        Self::new(NaiveDate::from_ymd_opt(2020, 1, 20).unwrap(), 189, holidays)
            .expect("shipped calendar is valid")
    }

    pub fn with_holidays(
        &self,
        holidays: impl IntoIterator<Item = (NaiveDate, NaiveDate)>,
    ) -> Result<Self, SeriesError> {
        Self::new(self.origin, self.horizon, holidays)
    }

    pub fn origin(&self) -> NaiveDate {
        self.origin
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn holidays(&self) -> &BTreeMap<NaiveDate, NaiveDate> {
        &self.holidays
    }

    pub fn day_index(&self, date: NaiveDate) -> Day {
        (date - self.origin).num_days() + 1
    }

    pub fn date_of(&self, day: Day) -> NaiveDate {
        self.origin + Duration::days(day - 1)
    }

    pub fn in_window(&self, day: Day) -> bool {
        day >= 1 && day <= self.horizon as Day
    }

    /// Matches a study-window date to its previous-year counterpart.
    ///
    /// Holidays use the explicit table; every other date goes to the
    /// same-weekday date closest to the same calendar position, which is
    /// always exactly 52 weeks earlier.
    pub fn match_day(&self, date: NaiveDate) -> Result<NaiveDate, SeriesError> {
        if !self.in_window(self.day_index(date)) {
            return Err(SeriesError::OutOfRange(date));
        }
        if let Some(&baseline) = self.holidays.get(&date) {
            return Ok(baseline);
        }
        Ok(date - Duration::days(364))
    }
}

/// Reads a `date_2020,date_2019` table.
pub fn parse_holidays<R: std::io::Read>(reader: R) -> Result<Vec<(NaiveDate, NaiveDate)>, SeriesError> {
    #[derive(Deserialize)]
    struct Row {
        date_2020: NaiveDate,
        date_2019: NaiveDate,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize::<Row>()
        .map(|row| {
            row.map(|r| (r.date_2020, r.date_2019))
                .map_err(|e| SeriesError::InvalidHolidays(e.to_string()))
        })
        .collect()
}

/// A day-indexed series of optional values.
///
/// Most series are contiguous; sliced series (weekday-only, weekend-only)
/// carry gaps, so the day list is always stored explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    label: String,
    days: Vec<Day>,
    values: Vec<Option<f64>>,
}

impl DailySeries {
    pub fn contiguous(
        label: impl Into<String>,
        start_day: Day,
        values: Vec<Option<f64>>,
    ) -> Result<Self, SeriesError> {
        let days = (0..values.len() as Day).map(|k| start_day + k).collect();
        Self::from_days(label, days, values)
    }

    /// Convenience constructor for fully observed contiguous data.
    pub fn from_values(
        label: impl Into<String>,
        start_day: Day,
        values: &[f64],
    ) -> Result<Self, SeriesError> {
        Self::contiguous(label, start_day, values.iter().copied().map(Some).collect())
    }

    pub fn from_days(
        label: impl Into<String>,
        days: Vec<Day>,
        values: Vec<Option<f64>>,
    ) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::InvalidArgument("series must not be empty".into()));
        }
        if days.len() != values.len() {
            return Err(SeriesError::InvalidArgument(format!(
                "{} days for {} values",
                days.len(),
                values.len()
            )));
        }
        if days.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SeriesError::InvalidArgument("days must be strictly increasing".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SeriesError::InvalidArgument("present values must be finite".into()));
        }
        Ok(Self { label: label.into(), days, values })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn start_day(&self) -> Day {
        self.days[0]
    }

    pub fn end_day(&self) -> Day {
        *self.days.last().unwrap()
    }

    pub fn days(&self) -> &[Day] {
        &self.days
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_contiguous(&self) -> bool {
        self.days.windows(2).all(|w| w[1] == w[0] + 1)
    }

    pub fn get(&self, day: Day) -> Option<f64> {
        self.days.binary_search(&day).ok().and_then(|k| self.values[k])
    }

    /// `(day, value)` pairs for present entries.
    pub fn present(&self) -> impl Iterator<Item = (Day, f64)> + '_ {
        self.days.iter().zip(&self.values).filter_map(|(&d, v)| v.map(|v| (d, v)))
    }

    pub fn present_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Keeps entries whose day lies in `[from, to]`.
    pub fn restrict(&self, from: Day, to: Day) -> Option<Self> {
        let (days, values): (Vec<_>, Vec<_>) = self
            .days
            .iter()
            .zip(&self.values)
            .filter(|(&d, _)| d >= from && d <= to)
            .map(|(&d, &v)| (d, v))
            .unzip();
        if days.is_empty() {
            None
        } else {
            Some(Self { label: self.label.clone(), days, values })
        }
    }

    /// Applies `f` to each present value.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self, SeriesError> {
        Self::from_days(
            self.label.clone(),
            self.days.clone(),
            self.values.iter().map(|v| v.map(&f)).collect(),
        )
    }
}

/// Trailing simple moving average over a calendar window.
///
/// The value at day `d` is the mean of the present values on days
/// `d - window + 1 ..= d`; output starts at `start_day + window - 1`. A window
/// with no present value yields a missing entry. For a series with gaps the
/// window is still measured in calendar days.
pub fn simple_moving_average(series: &DailySeries, window: usize) -> Result<DailySeries, SeriesError> {
    if window == 0 {
        return Err(SeriesError::InvalidArgument("window must be at least 1".into()));
    }
    if window > series.len() {
        return Err(SeriesError::InvalidArgument(format!(
            "window {window} exceeds series length {}",
            series.len()
        )));
    }
    let first_output = series.start_day() + window as Day - 1;
    let mut days = Vec::new();
    let mut values = Vec::new();
    let mut lo = 0usize;
    for (k, &day) in series.days.iter().enumerate() {
        while series.days[lo] <= day - window as Day {
            lo += 1;
        }
        if day < first_output {
            continue;
        }
        let (sum, count) = series.values[lo..=k]
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        days.push(day);
        values.push((count > 0).then(|| sum / count as f64));
    }
    if days.is_empty() {
        return Err(SeriesError::EmptySeries(format!(
            "no day of '{}' has a full {window}-day window",
            series.label
        )));
    }
    DailySeries::from_days(series.label.clone(), days, values)
}

/// Mobility reduction `1 - current / baseline`.
pub fn reduction(current: f64, baseline: f64) -> Result<f64, SeriesError> {
    if !(baseline.is_finite() && baseline > 0.0) {
        return Err(SeriesError::UndefinedBaseline);
    }
    if !(current.is_finite() && current >= 0.0) {
        return Err(SeriesError::InvalidArgument(format!(
            "current value {current} must be finite and non-negative"
        )));
    }
    Ok(1.0 - current / baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Subway,
    Traffic,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Subway, Mode::Traffic];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Subway => "subway",
            Mode::Traffic => "traffic",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A reduction series for one trip mode. Each value is `1 - v2020 / v2019`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionSeries {
    pub mode: Mode,
    pub series: DailySeries,
    /// Days dropped because either side was missing or the baseline was zero.
    pub dropped: Vec<Day>,
}

/// Builds reductions for every day of `current` that lies in the study
/// window, pairing it with the matched previous-year day in `baseline`.
pub fn reduction_series(
    current: &DailySeries,
    baseline: &DailySeries,
    cal: &StudyCalendar,
    mode: Mode,
) -> Result<ReductionSeries, SeriesError> {
    let mut days = Vec::new();
    let mut values = Vec::new();
    let mut dropped = Vec::new();
    for (&day, &value) in current.days().iter().zip(current.values()) {
        if !cal.in_window(day) {
            continue;
        }
        let matched = cal.day_index(cal.match_day(cal.date_of(day))?);
        let r = match (value, baseline.get(matched)) {
            (Some(v), Some(b)) => reduction(v, b).ok(),
            _ => None,
        };
        if r.is_none() {
            dropped.push(day);
        }
        days.push(day);
        values.push(r);
    }
    if days.is_empty() {
        return Err(SeriesError::EmptySeries(format!(
            "'{}' has no day inside the study window",
            current.label()
        )));
    }
    let series = DailySeries::from_days(format!("{mode} reduction"), days, values)?;
    Ok(ReductionSeries { mode, series, dropped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyRecord {
    pub day: Day,
    pub hour: u8,
    pub id: String,
    /// `None` marks a missing observation.
    pub count: Option<f64>,
}

/// Hourly counts keyed by `(day, hour, id)`, kept sorted by that key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HourlySeries {
    records: Vec<HourlyRecord>,
}

impl HourlySeries {
    pub fn new(mut records: Vec<HourlyRecord>) -> Result<Self, SeriesError> {
        for r in &records {
            if r.hour > 23 {
                return Err(SeriesError::InvalidArgument(format!("hour {} out of range", r.hour)));
            }
            if let Some(c) = r.count {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(SeriesError::InvalidArgument(format!(
                        "count {c} at day {}, hour {} must be finite and non-negative",
                        r.day, r.hour
                    )));
                }
            }
        }
        records.sort_by(|a, b| (a.day, a.hour, &a.id).cmp(&(b.day, b.hour, &b.id)));
        if let Some(w) = records
            .windows(2)
            .find(|w| (w[0].day, w[0].hour, &w[0].id) == (w[1].day, w[1].hour, &w[1].id))
        {
            return Err(SeriesError::DuplicateKey { day: w[0].day, hour: w[0].hour, id: w[0].id.clone() });
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[HourlyRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    /// Fraction of missing cells per id.
    pub fn missing_rates(&self) -> BTreeMap<String, f64> {
        let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for r in &self.records {
            let e = tally.entry(&r.id).or_default();
            e.1 += 1;
            if r.count.is_none() {
                e.0 += 1;
            }
        }
        tally
            .into_iter()
            .map(|(id, (missing, total))| (id.to_string(), missing as f64 / total as f64))
            .collect()
    }

    pub fn without_ids(&self, ids: &BTreeSet<String>) -> Self {
        Self {
            records: self.records.iter().filter(|r| !ids.contains(&r.id)).cloned().collect(),
        }
    }

    /// Records whose day lies in `[from, to]`.
    pub fn restrict(&self, from: Day, to: Day) -> Self {
        Self {
            records: self.records.iter().filter(|r| r.day >= from && r.day <= to).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DayFilter {
    AllWeek,
    Weekday,
    Weekend,
}

impl DayFilter {
    pub fn accepts(self, date: NaiveDate) -> bool {
        let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
        match self {
            DayFilter::AllWeek => true,
            DayFilter::Weekday => !weekend,
            DayFilter::Weekend => weekend,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DayFilter::AllWeek => "all-week",
            DayFilter::Weekday => "weekday",
            DayFilter::Weekend => "weekend",
        }
    }
}

impl FromStr for DayFilter {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all-week" => Ok(DayFilter::AllWeek),
            "weekday" => Ok(DayFilter::Weekday),
            "weekend" => Ok(DayFilter::Weekend),
            other => Err(SeriesError::InvalidArgument(format!("unknown day filter '{other}'"))),
        }
    }
}

/// A day-of-week and time-of-day slice of hourly data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub name: String,
    pub day_filter: DayFilter,
    pub hours: BTreeSet<u8>,
}

/// Commute hours as drawn in the time-of-day figure: 7-9 AM and 6-8 PM.
pub const COMMUTE_HOURS_FIGURE: [u8; 4] = [7, 8, 18, 19];
/// Commute hours as tabulated with the CPD results: 8-9 and 18-20.
pub const COMMUTE_HOURS_TABLE: [u8; 3] = [8, 18, 19];
pub const AFTERNOON_HOURS: [u8; 3] = [14, 15, 16];
pub const NIGHTTIME_HOURS: [u8; 3] = [21, 22, 23];

impl SliceSpec {
    pub fn new(name: impl Into<String>, day_filter: DayFilter, hours: impl IntoIterator<Item = u8>) -> Result<Self, SeriesError> {
        let hours: BTreeSet<u8> = hours.into_iter().collect();
        if hours.is_empty() {
            return Err(SeriesError::InvalidArgument("hour set must not be empty".into()));
        }
        if let Some(h) = hours.iter().find(|&&h| h > 23) {
            return Err(SeriesError::InvalidArgument(format!("hour {h} out of range")));
        }
        Ok(Self { name: name.into(), day_filter, hours })
    }

    pub fn all_hours(day_filter: DayFilter) -> Self {
        Self::new(format!("{}/all-hours", day_filter.as_str()), day_filter, 0..24).unwrap()
    }

    pub fn commute(day_filter: DayFilter, hours: &[u8]) -> Self {
        Self::new(format!("{}/commute", day_filter.as_str()), day_filter, hours.iter().copied()).unwrap()
    }

    pub fn afternoon(day_filter: DayFilter) -> Self {
        Self::new(format!("{}/afternoon", day_filter.as_str()), day_filter, AFTERNOON_HOURS).unwrap()
    }

    pub fn nighttime(day_filter: DayFilter) -> Self {
        Self::new(format!("{}/nighttime", day_filter.as_str()), day_filter, NIGHTTIME_HOURS).unwrap()
    }

    /// The six slices of the seasonality analysis, in table order.
    pub fn seasonality_presets(commute_hours: &[u8]) -> Vec<Self> {
        vec![
            Self::all_hours(DayFilter::AllWeek),
            Self::afternoon(DayFilter::AllWeek),
            Self::nighttime(DayFilter::AllWeek),
            Self::all_hours(DayFilter::Weekday),
            Self::commute(DayFilter::Weekday, commute_hours),
            Self::all_hours(DayFilter::Weekend),
        ]
    }
}

/// Sums counts over ids and the slice's hours for each day passing the day
/// filter. Days without any record in the slice are absent from the result; a
/// day whose records are all missing yields a missing value.
pub fn slice_aggregate(
    hourly: &HourlySeries,
    slice: &SliceSpec,
    cal: &StudyCalendar,
) -> Result<DailySeries, SeriesError> {
    if hourly.is_empty() {
        return Err(SeriesError::EmptySeries("hourly series has no records".into()));
    }
    let mut totals: BTreeMap<Day, Option<f64>> = BTreeMap::new();
    for r in hourly.records() {
        if !slice.hours.contains(&r.hour) || !slice.day_filter.accepts(cal.date_of(r.day)) {
            continue;
        }
        let entry = totals.entry(r.day).or_insert(None);
        if let Some(c) = r.count {
            *entry = Some(entry.unwrap_or(0.0) + c);
        }
    }
    if totals.is_empty() {
        return Err(SeriesError::EmptySeries(format!("slice '{}' matches no records", slice.name)));
    }
    let (days, values) = totals.into_iter().unzip();
    DailySeries::from_days(slice.name.clone(), days, values)
}

/// Result of [`impute_missing`].
#[derive(Debug, Clone, PartialEq)]
pub struct Imputed {
    pub series: HourlySeries,
    pub filled: usize,
    /// Cells with neither a `day - 7` nor a `day + 7` neighbour.
    pub unfilled: Vec<(Day, u8, String)>,
}

/// Fills each missing cell with the median of the same hour and id one week
/// before and one week after (whichever are present).
pub fn impute_missing(hourly: &HourlySeries, max_missing_rate: f64) -> Result<Imputed, SeriesError> {
    let rejected: Vec<String> = hourly
        .missing_rates()
        .into_iter()
        .filter(|(_, rate)| *rate >= max_missing_rate && *rate > 0.0)
        .map(|(id, _)| id)
        .collect();
    if !rejected.is_empty() {
        return Err(SeriesError::SensorRejected(rejected));
    }

    let index: HashMap<(Day, u8, &str), f64> = hourly
        .records()
        .iter()
        .filter_map(|r| r.count.map(|c| ((r.day, r.hour, r.id.as_str()), c)))
        .collect();
    let mut filled = 0;
    let mut unfilled = Vec::new();
    let records = hourly
        .records()
        .iter()
        .map(|r| {
            if r.count.is_some() {
                return r.clone();
            }
            let neighbours: Vec<f64> = [r.day - 7, r.day + 7]
                .iter()
                .filter_map(|&d| index.get(&(d, r.hour, r.id.as_str())).copied())
                .collect();
            let count = match neighbours.as_slice() {
                [] => {
                    unfilled.push((r.day, r.hour, r.id.clone()));
                    None
                }
                // median of one or two values
                vals => {
                    filled += 1;
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                }
            };
            HourlyRecord { count, ..r.clone() }
        })
        .collect();
    Ok(Imputed { series: HourlySeries { records }, filled, unfilled })
}
