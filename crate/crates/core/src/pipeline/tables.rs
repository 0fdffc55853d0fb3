//! Tabular outputs and their readers.

use super::PipelineError;
use crate::geo::{MomentumSeries, Regime};
use crate::phases::{PhaseKind, PhaseTimeline};
use crate::regression::{significance_stars, PhaseFitTable};
use crate::series::{DailySeries, Day, StudyCalendar};
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Writes `header` and then one record per row; the header is present even
/// for an empty table.
pub fn to_csv<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>, PipelineError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    wtr.write_record(header).map_err(|e| PipelineError::Output(e.to_string()))?;
    for row in rows {
        wtr.serialize(row).map_err(|e| PipelineError::Output(e.to_string()))?;
    }
    wtr.into_inner().map_err(|e| PipelineError::Output(e.to_string()))
}

/// Reads a table written by [`to_csv`], checking the header.
pub fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let got = rdr.headers().map_err(|e| PipelineError::schema(path, 1, e.to_string()))?;
    if got.iter().ne(header.iter().copied()) {
        return Err(PipelineError::schema(path, 1, format!("expected header '{}'", header.join(","))));
    }
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                PipelineError::schema(path, line, e.to_string())
            })
        })
        .collect()
}

pub const CASES_SMA_HEADER: [&str; 4] = ["day", "date", "count", "count_sma"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasesSmaRow {
    pub day: Day,
    pub date: NaiveDate,
    pub count: Option<f64>,
    pub count_sma: Option<f64>,
}

pub fn cases_sma_rows(raw: &DailySeries, sma: &DailySeries, cal: &StudyCalendar) -> Vec<CasesSmaRow> {
    raw.days()
        .iter()
        .zip(raw.values())
        .map(|(&day, &count)| CasesSmaRow { day, date: cal.date_of(day), count, count_sma: sma.get(day) })
        .collect()
}

pub const DISPERSION_HEADER: [&str; 6] = ["day", "d_g_km", "d_h_km", "momentum_km", "momentum_sma_km", "regime"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub day: Day,
    pub d_g_km: Option<f64>,
    pub d_h_km: Option<f64>,
    pub momentum_km: Option<f64>,
    pub momentum_sma_km: Option<f64>,
    /// Regime of the smoothed momentum.
    pub regime: Option<Regime>,
}

pub fn dispersion_rows(m: &MomentumSeries) -> Vec<DispersionRow> {
    m.raw
        .days()
        .iter()
        .map(|&day| {
            let p = m.point(day);
            let sma = m.smoothed.get(day);
            DispersionRow {
                day,
                d_g_km: p.map(|p| p.d_g),
                d_h_km: p.map(|p| p.d_h),
                momentum_km: p.map(|p| p.momentum),
                momentum_sma_km: sma,
                regime: sma.map(Regime::of),
            }
        })
        .collect()
}

pub const PHASES_HEADER: [&str; 6] = ["kind", "wave", "start_day", "end_day", "start_date", "end_date"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub kind: PhaseKind,
    pub wave: u32,
    pub start_day: Day,
    pub end_day: Day,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

pub fn phase_rows(t: &PhaseTimeline, cal: &StudyCalendar) -> Vec<PhaseRow> {
    t.phases
        .iter()
        .map(|p| PhaseRow {
            kind: p.label.kind,
            wave: p.label.wave,
            start_day: p.start_day,
            end_day: p.end_day,
            start_date: cal.date_of(p.start_day),
            end_date: cal.date_of(p.end_day),
        })
        .collect()
}

pub const PHASE_FITS_HEADER: [&str; 20] = [
    "phase",
    "mode",
    "start_day",
    "end_day",
    "n",
    "beta0",
    "se0",
    "t0",
    "p0",
    "beta1",
    "se1",
    "t1",
    "p1",
    "significance",
    "r2",
    "adj_r2",
    "f_stat",
    "sig_f",
    "exact_fit",
    "note",
];

/// One line of the fit table; empty numeric cells mark a phase without a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFitCsvRow {
    pub phase: String,
    pub mode: String,
    pub start_day: Day,
    pub end_day: Day,
    pub n: Option<usize>,
    pub beta0: Option<f64>,
    pub se0: Option<f64>,
    pub t0: Option<f64>,
    pub p0: Option<f64>,
    pub beta1: Option<f64>,
    pub se1: Option<f64>,
    pub t1: Option<f64>,
    pub p1: Option<f64>,
    pub significance: String,
    pub r2: Option<f64>,
    pub adj_r2: Option<f64>,
    pub f_stat: Option<f64>,
    pub sig_f: Option<f64>,
    pub exact_fit: Option<bool>,
    pub note: String,
}

pub fn phase_fit_rows(table: &PhaseFitTable) -> Vec<PhaseFitCsvRow> {
    table
        .rows
        .iter()
        .map(|r| {
            let f = r.fit.as_ref();
            PhaseFitCsvRow {
                phase: r.phase.to_string(),
                mode: r.mode.to_string(),
                start_day: r.start_day,
                end_day: r.end_day,
                n: f.map(|f| f.n),
                beta0: f.map(|f| f.beta0),
                se0: f.map(|f| f.se0),
                t0: f.map(|f| f.t0),
                p0: f.map(|f| f.p0),
                beta1: f.map(|f| f.beta1),
                se1: f.map(|f| f.se1),
                t1: f.map(|f| f.t1),
                p1: f.map(|f| f.p1),
                significance: f.map_or("", |f| significance_stars(f.p1)).to_string(),
                r2: f.map(|f| f.r2),
                adj_r2: f.map(|f| f.adj_r2),
                f_stat: f.map(|f| f.f_stat),
                sig_f: f.map(|f| f.sig_f),
                exact_fit: f.map(|f| f.exact_fit),
                note: r.note.clone().unwrap_or_default(),
            }
        })
        .collect()
}

pub const REDUCTIONS_HEADER: [&str; 3] = ["day", "subway_reduction", "traffic_reduction"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRow {
    pub day: Day,
    pub subway_reduction: Option<f64>,
    pub traffic_reduction: Option<f64>,
}

pub fn reduction_rows(subway: &DailySeries, traffic: &DailySeries, horizon: Day) -> Vec<ReductionRow> {
    (1..=horizon)
        .map(|day| ReductionRow { day, subway_reduction: subway.get(day), traffic_reduction: traffic.get(day) })
        .filter(|r| r.subway_reduction.is_some() || r.traffic_reduction.is_some())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_full_precision_and_gaps() {
        let rows = vec![
            ReductionRow { day: 1, subway_reduction: Some(0.1 + 0.2), traffic_reduction: None },
            ReductionRow { day: 2, subway_reduction: Some(-1e-300), traffic_reduction: Some(1.0 / 3.0) },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, to_csv(&REDUCTIONS_HEADER, &rows).unwrap()).unwrap();
        let back: Vec<ReductionRow> = read_csv(&p, &REDUCTIONS_HEADER).unwrap();
        assert_eq!(back, rows);
        assert!(read_csv::<ReductionRow>(&p, &CASES_SMA_HEADER).is_err());
    }

    #[test]
    fn non_finite_statistics_round_trip() {
        let row = PhaseFitCsvRow {
            phase: "peak-1".into(),
            mode: "subway".into(),
            start_day: 1,
            end_day: 9,
            n: Some(9),
            beta0: Some(1.0),
            se0: Some(0.0),
            t0: Some(f64::INFINITY),
            p0: Some(0.0),
            beta1: Some(-2.0),
            se1: Some(0.0),
            t1: Some(f64::NEG_INFINITY),
            p1: Some(0.0),
            significance: "***".into(),
            r2: Some(1.0),
            adj_r2: Some(1.0),
            f_stat: Some(f64::INFINITY),
            sig_f: Some(0.0),
            exact_fit: Some(true),
            note: String::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, to_csv(&PHASE_FITS_HEADER, std::slice::from_ref(&row)).unwrap()).unwrap();
        let back: Vec<PhaseFitCsvRow> = read_csv(&p, &PHASE_FITS_HEADER).unwrap();
        assert_eq!(back, vec![row]);
    }
}
