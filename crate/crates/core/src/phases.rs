//! Epidemic phase timeline.
//!
//! Count-series breaks and dispersion-regime transitions are fused into one
//! set of candidate boundaries; the segments between them are then labelled
//! as trigger, escalation, peak or de-escalation from the within-segment
//! trend of the smoothed case counts and the sign of the dispersion momentum.

use crate::regression::ols_fit;
use crate::series::{DailySeries, Day};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseKind {
    Trigger,
    Escalation,
    Peak,
    DeEscalation,
}

impl PhaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseKind::Trigger => "trigger",
            PhaseKind::Escalation => "escalation",
            PhaseKind::Peak => "peak",
            PhaseKind::DeEscalation => "de-escalation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhaseLabel {
    pub kind: PhaseKind,
    pub wave: u32,
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PhaseKind::Trigger => f.write_str("trigger"),
            kind => write!(f, "{}-{}", kind.as_str(), self.wave),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub label: PhaseLabel,
    pub start_day: Day,
    pub end_day: Day,
}

/// A candidate boundary that did not survive into the timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedTransition {
    pub day: Day,
    pub reason: String,
}

/// Contiguous labelled phases covering `1..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimeline {
    pub phases: Vec<Phase>,
    pub dropped: Vec<DroppedTransition>,
}

impl PhaseTimeline {
    /// Boundaries between phases, as last days of the earlier phase.
    pub fn boundaries(&self) -> Vec<Day> {
        self.phases.iter().rev().skip(1).rev().map(|p| p.end_day).collect()
    }

    pub fn phase_of(&self, day: Day) -> Option<&Phase> {
        self.phases.iter().find(|p| p.start_day <= day && day <= p.end_day)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub horizon: usize,
    pub merge_window: Day,
    pub slope_t_threshold: f64,
    pub lookahead: usize,
    pub min_segment: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self { horizon: 189, merge_window: 4, slope_t_threshold: 2.0, lookahead: 14, min_segment: 7 }
    }
}

/// Union of both transition lists where a dispersion transition within
/// `merge_window` days of an already accepted day is merged into it.
///
/// Count breaks are accepted first, so they win every merge.
pub fn fuse_transitions(count_breaks: &[Day], geo_transitions: &[Day], merge_window: Day) -> Vec<Day> {
    let mut accepted: Vec<Day> = Vec::new();
    let mut sorted_counts = count_breaks.to_vec();
    sorted_counts.sort_unstable();
    let mut sorted_geo = geo_transitions.to_vec();
    sorted_geo.sort_unstable();
    for day in sorted_counts.into_iter().chain(sorted_geo) {
        if accepted.iter().all(|a| (a - day).abs() > merge_window) {
            accepted.push(day);
        }
    }
    accepted.sort_unstable();
    accepted
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trend {
    Rising,
    Falling,
    Flat,
}

fn trend(counts: &DailySeries, start: Day, end: Day, threshold: f64) -> Trend {
    let (x, y): (Vec<f64>, Vec<f64>) = counts
        .present()
        .filter(|(d, _)| *d >= start && *d <= end)
        .map(|(d, v)| (d as f64, v))
        .unzip();
    match ols_fit(&x, &y) {
        Ok(fit) if fit.t1.abs() >= threshold && fit.beta1 > 0.0 => Trend::Rising,
        Ok(fit) if fit.t1.abs() >= threshold && fit.beta1 < 0.0 => Trend::Falling,
        _ => Trend::Flat,
    }
}

fn mean_momentum(momentum: &DailySeries, start: Day, lookahead: usize) -> Option<f64> {
    let end = start + lookahead as Day - 1;
    let vals: Vec<f64> = momentum.present().filter(|(d, _)| *d >= start && *d <= end).map(|(_, v)| v).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Removes out-of-range and duplicate days, then repeatedly drops the
/// transition closing the first too-short segment (or opening it, for the
/// last segment) until every segment has `min_segment` days.
fn sanitize(transitions: &[Day], cfg: &PhaseConfig, dropped: &mut Vec<DroppedTransition>) -> Vec<Day> {
    let horizon = cfg.horizon as Day;
    let mut days: Vec<Day> = Vec::new();
    let mut sorted = transitions.to_vec();
    sorted.sort_unstable();
    for day in sorted {
        if day < 1 || day >= horizon {
            dropped.push(DroppedTransition { day, reason: "outside the study window".into() });
        } else if days.last() != Some(&day) {
            days.push(day);
        }
    }
    loop {
        let mut start = 1;
        let mut offender = None;
        for (k, &end) in days.iter().chain(std::iter::once(&horizon)).enumerate() {
            if ((end - start + 1) as usize) < cfg.min_segment {
                offender = Some(if k < days.len() { k } else { k - 1 });
                break;
            }
            start = end + 1;
        }
        match offender {
            Some(k) => {
                let day = days.remove(k);
                log::info!("dropping transition {day}: segment shorter than {} days", cfg.min_segment);
                dropped.push(DroppedTransition {
                    day,
                    reason: format!("segment shorter than {} days", cfg.min_segment),
                });
            }
            None => return days,
        }
    }
}

/// Labels the segments between `transitions` and merges absorbed segments
/// into their predecessor.
///
/// - the first segment is the trigger;
/// - a significantly rising count trend is an escalation, opening a new
///   wave when it follows a peak or de-escalation;
/// - a flat trend after an escalation is a peak, otherwise it continues the
///   current phase;
/// - a significantly falling trend is a de-escalation only if the mean
///   momentum over the first `lookahead` days of the segment is not
///   positive; otherwise the current phase absorbs it.
///
/// Boundaries are handled alike whichever series produced them, so a
/// dispersion transition can open the first escalation on its own.
pub fn build_timeline(
    transitions: &[Day],
    counts_sma: &DailySeries,
    momentum_sma: &DailySeries,
    cfg: &PhaseConfig,
) -> Result<PhaseTimeline, PhaseError> {
    if cfg.horizon == 0 {
        return Err(PhaseError::InvalidArgument("horizon must be positive".into()));
    }
    if cfg.min_segment == 0 || cfg.lookahead == 0 {
        return Err(PhaseError::InvalidArgument("min_segment and lookahead must be positive".into()));
    }
    let horizon = cfg.horizon as Day;
    let mut dropped = Vec::new();
    let days = sanitize(transitions, cfg, &mut dropped);

    let mut segments = Vec::with_capacity(days.len() + 1);
    let mut start = 1;
    for &end in days.iter().chain(std::iter::once(&horizon)) {
        segments.push((start, end));
        start = end + 1;
    }

    let mut phases: Vec<Phase> = Vec::new();
    let mut wave = 1;
    for (k, &(start, end)) in segments.iter().enumerate() {
        if k == 0 {
            phases.push(Phase { label: PhaseLabel { kind: PhaseKind::Trigger, wave }, start_day: start, end_day: end });
            continue;
        }
        let current = phases.last().unwrap().label.kind;
        let next = match trend(counts_sma, start, end, cfg.slope_t_threshold) {
            Trend::Rising => match current {
                PhaseKind::Escalation => None,
                PhaseKind::Trigger => Some(PhaseKind::Escalation),
                PhaseKind::Peak | PhaseKind::DeEscalation => {
                    wave += 1;
                    Some(PhaseKind::Escalation)
                }
            },
            Trend::Flat => match current {
                PhaseKind::Escalation => Some(PhaseKind::Peak),
                _ => None,
            },
            Trend::Falling => match current {
                PhaseKind::DeEscalation => None,
                _ => match mean_momentum(momentum_sma, start, cfg.lookahead) {
                    Some(m) if m > 0.0 => {
                        dropped.push(DroppedTransition {
                            day: start - 1,
                            reason: format!("declining counts but mean momentum {m:.4} > 0 over the lookahead"),
                        });
                        phases.last_mut().unwrap().end_day = end;
                        continue;
                    }
                    _ => Some(PhaseKind::DeEscalation),
                },
            },
        };
        match next {
            Some(kind) => phases.push(Phase { label: PhaseLabel { kind, wave }, start_day: start, end_day: end }),
            None => {
                dropped.push(DroppedTransition { day: start - 1, reason: format!("continues {}", current.as_str()) });
                phases.last_mut().unwrap().end_day = end;
            }
        }
    }
    Ok(PhaseTimeline { phases, dropped })
}
