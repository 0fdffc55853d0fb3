//! Mobility stages: sensor screening, imputation, reduction series and the
//! sliced break analysis.

use super::config::{PipelineConfig, SmoothingOrder};
use super::ingest::HourlyInput;
use super::PipelineError;
use crate::changepoint::{bootstrap_ci, select_breaks, SegmentationResult};
use crate::series::{
    impute_missing, reduction_series, simple_moving_average, slice_aggregate, DailySeries, Day, DayFilter,
    HourlySeries, Mode, ReductionSeries, SliceSpec, StudyCalendar,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Note attached to every hourly break estimate.
pub const HOURLY_BREAK_NOTE: &str =
    "interpretation: (day, hour) is the last hourly cell before the shift, located by a two-mean least-squares \
     search over the unsmoothed hourly reductions near the daily break";

/// Cleaned hourly data for one mode.
#[derive(Debug, Clone)]
pub struct CleanHourly {
    pub mode: Mode,
    pub series: HourlySeries,
    pub rejected: Vec<String>,
    pub filled: usize,
    pub unfilled: usize,
}

/// Drops sensors at or above the missing-cell ceiling, then imputes the rest.
pub fn clean(input: &HourlyInput, max_missing_rate: f64) -> Result<CleanHourly, PipelineError> {
    let rejected: BTreeSet<String> = input
        .series
        .missing_rates()
        .into_iter()
        .filter(|(_, rate)| *rate > 0.0 && *rate >= max_missing_rate)
        .map(|(id, _)| id)
        .collect();
    for id in &rejected {
        log::warn!("{}: sensor {id} rejected for missing data", input.mode);
    }
    let kept = input.series.without_ids(&rejected);
    if kept.is_empty() {
        return Err(PipelineError::analysis("mobility", format!("every {} sensor was rejected", input.mode)));
    }
    let imputed = impute_missing(&kept, max_missing_rate).map_err(|e| PipelineError::analysis("mobility", e))?;
    Ok(CleanHourly {
        mode: input.mode,
        series: imputed.series,
        rejected: rejected.into_iter().collect(),
        filled: imputed.filled,
        unfilled: imputed.unfilled.len(),
    })
}

/// Smoothed reduction of a daily volume series (both years in one series),
/// in the configured order, restricted to the study window.
pub fn smoothed_reduction(
    daily: &DailySeries,
    cal: &StudyCalendar,
    mode: Mode,
    cfg: &PipelineConfig,
) -> Result<ReductionSeries, PipelineError> {
    let err = |e: crate::series::SeriesError| PipelineError::analysis("mobility", e);
    match cfg.smoothing_order {
        SmoothingOrder::ReduceFirst => {
            let raw = reduction_series(daily, daily, cal, mode).map_err(err)?;
            let series = simple_moving_average(&raw.series, cfg.sma_window).map_err(err)?;
            Ok(ReductionSeries { mode, series, dropped: raw.dropped })
        }
        SmoothingOrder::SmoothFirst => {
            let smooth = simple_moving_average(daily, cfg.sma_window).map_err(err)?;
            reduction_series(&smooth, &smooth, cal, mode).map_err(err)
        }
    }
}

/// Only the present entries of `s`.
pub fn present_only(s: &DailySeries) -> Option<DailySeries> {
    let (days, values): (Vec<Day>, Vec<Option<f64>>) = s.present().map(|(d, v)| (d, Some(v))).unzip();
    DailySeries::from_days(s.label().to_string(), days, values).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyBreak {
    /// The daily break being refined.
    pub daily_break: Day,
    pub day: Day,
    pub hour: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalityEntry {
    pub slice: String,
    pub mode: Mode,
    pub day_filter: DayFilter,
    pub hours: Vec<u8>,
    pub n: usize,
    pub result: SegmentationResult,
    pub hourly_breaks: Vec<HourlyBreak>,
    pub hourly_note: String,
}

/// Slice reduction series used for one seasonality entry.
#[derive(Debug, Clone)]
pub struct SliceSeries {
    pub slice: SliceSpec,
    pub mode: Mode,
    pub series: DailySeries,
}

fn hourly_totals(series: &HourlySeries) -> BTreeMap<(Day, u8), f64> {
    let mut out: BTreeMap<(Day, u8), f64> = BTreeMap::new();
    for r in series.records() {
        if let Some(c) = r.count {
            *out.entry((r.day, r.hour)).or_default() += c;
        }
    }
    out
}

/// Two-mean least-squares split of `values`: returns the index of the last
/// element of the left part, or `None` for fewer than two values.
pub fn best_split(values: &[f64]) -> Option<usize> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let total: f64 = values.iter().sum();
    let total_sq: f64 = values.iter().map(|v| v * v).sum();
    let mut left = 0.0;
    let mut left_sq = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for (k, v) in values.iter().enumerate().take(n - 1) {
        left += v;
        left_sq += v * v;
        let (nl, nr) = ((k + 1) as f64, (n - k - 1) as f64);
        let right = total - left;
        let right_sq = total_sq - left_sq;
        let ssr = (left_sq - left * left / nl) + (right_sq - right * right / nr);
        if best.is_none_or(|(b, _)| ssr < b - 1e-12 * total_sq.max(1.0)) {
            best = Some((ssr, k));
        }
    }
    best.map(|(_, k)| k)
}

fn refine(
    breaks: &[Day],
    slice: &SliceSpec,
    totals: &BTreeMap<(Day, u8), f64>,
    cal: &StudyCalendar,
) -> Vec<HourlyBreak> {
    let mut out = Vec::new();
    for &b in breaks {
        let mut cells = Vec::new();
        let mut values = Vec::new();
        for day in (b - 6)..=(b + 4) {
            if !cal.in_window(day) || !slice.day_filter.accepts(cal.date_of(day)) {
                continue;
            }
            let Ok(matched) = cal.match_day(cal.date_of(day)) else { continue };
            let base_day = cal.day_index(matched);
            for &hour in &slice.hours {
                let (Some(&cur), Some(&base)) = (totals.get(&(day, hour)), totals.get(&(base_day, hour))) else {
                    continue;
                };
                if base > 0.0 {
                    cells.push((day, hour));
                    values.push(1.0 - cur / base);
                }
            }
        }
        if let Some(k) = best_split(&values) {
            out.push(HourlyBreak { daily_break: b, day: cells[k].0, hour: cells[k].1 });
        }
    }
    out
}

/// Break analysis of every slice preset for both modes, in preset order.
pub fn seasonality(
    clean: &[CleanHourly],
    cal: &StudyCalendar,
    cfg: &PipelineConfig,
) -> Result<(Vec<SeasonalityEntry>, Vec<SliceSeries>), PipelineError> {
    let presets = SliceSpec::seasonality_presets(cfg.commute_hours.hours());
    let mut entries = Vec::new();
    let mut series_out = Vec::new();
    let totals: Vec<BTreeMap<(Day, u8), f64>> = clean.iter().map(|c| hourly_totals(&c.series)).collect();
    for slice in &presets {
        for (c, totals) in clean.iter().zip(&totals) {
            let stage = format!("seasonality ({}, {})", slice.name, c.mode);
            let daily = slice_aggregate(&c.series, slice, cal).map_err(|e| PipelineError::analysis(&stage, e))?;
            let red = smoothed_reduction(&daily, cal, c.mode, cfg).map_err(|e| e.restage(&stage))?;
            let window = red.series.restrict(1, cal.horizon() as Day);
            let y = window
                .as_ref()
                .and_then(present_only)
                .ok_or_else(|| PipelineError::analysis(&stage, "no reduction values in the study window"))?;
            let mut bcfg = cfg.breaks.clone();
            bcfg.max_breaks = cfg.seasonality_max_breaks.unwrap_or(bcfg.max_breaks);
            let bcfg = bcfg.clamped_to(y.len());
            let result = select_breaks(&y, &bcfg)
                .and_then(|r| bootstrap_ci(&y, &r, &bcfg))
                .map_err(|e| PipelineError::analysis(&stage, e))?;
            let hourly_breaks = refine(&result.breaks, slice, totals, cal);
            entries.push(SeasonalityEntry {
                slice: slice.name.clone(),
                mode: c.mode,
                day_filter: slice.day_filter,
                hours: slice.hours.iter().copied().collect(),
                n: y.len(),
                result,
                hourly_breaks,
                hourly_note: HOURLY_BREAK_NOTE.to_string(),
            });
            series_out.push(SliceSeries { slice: slice.clone(), mode: c.mode, series: y });
        }
    }
    Ok((entries, series_out))
}
