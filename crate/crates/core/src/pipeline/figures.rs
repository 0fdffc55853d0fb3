//! The five report figures.

use super::ingest::Survey;
use super::mobility::{SeasonalityEntry, SliceSeries};
use super::svg::{Figure, Panel, PALETTE};
use crate::changepoint::SegmentationResult;
use crate::geo::MomentumSeries;
use crate::phases::{PhaseKind, PhaseTimeline};
use crate::policy::IndexSeries;
use crate::regression::PhaseFitTable;
use crate::series::{DailySeries, Day, Mode, ReductionSeries};

const GREY: &str = "#555555";

fn phase_color(kind: PhaseKind) -> &'static str {
    match kind {
        PhaseKind::Trigger => "#bbbbbb",
        PhaseKind::Escalation => "#d62728",
        PhaseKind::Peak => "#ff7f0e",
        PhaseKind::DeEscalation => "#2ca02c",
    }
}

fn mode_color(mode: Mode) -> &'static str {
    match mode {
        Mode::Subway => PALETTE[0],
        Mode::Traffic => PALETTE[3],
    }
}

fn series_line(s: &DailySeries, scale: f64) -> Vec<Option<(f64, f64)>> {
    let mut out = Vec::with_capacity(s.len());
    let mut prev: Option<Day> = None;
    for (&d, v) in s.days().iter().zip(s.values()) {
        if prev.is_some_and(|p| d > p + 1) {
            out.push(None);
        }
        out.push(v.map(|v| (d as f64, v * scale)));
        prev = Some(d);
    }
    out
}

fn shade_phases(panel: &mut Panel, timeline: &PhaseTimeline) {
    for p in &timeline.phases {
        let label = p.label.to_string();
        panel.band(p.start_day as f64 - 0.5, p.end_day as f64 + 0.5, phase_color(p.label.kind), Some(&label));
    }
}

/// Counts with breaks, and dispersion momentum with its regimes.
pub fn fig1(
    raw: &DailySeries,
    sma: &DailySeries,
    breaks: &SegmentationResult,
    momentum: &MomentumSeries,
    geo_transitions: &[Day],
    timeline: &PhaseTimeline,
    horizon: Day,
) -> String {
    let mut fig = Figure::new("Confirmed cases and geospatial dispersion momentum", 1, 900.0, 320.0);
    let mut a = Panel::new("(a) daily confirmed cases", "day", "cases").x_range(0.5, horizon as f64 + 0.5);
    shade_phases(&mut a, timeline);
    a.points(raw.present().map(|(d, v)| (d as f64, v)).collect(), GREY, None);
    a.line(series_line(sma, 1.0), PALETTE[0], false, Some("7-day SMA"));
    for &b in &breaks.breaks {
        a.vline(b as f64 + 0.5, "#000000", true);
    }
    fig.push(a);

    let mut b = Panel::new("(b) d_g - d_H (km)", "day", "km").x_range(0.5, horizon as f64 + 0.5);
    let positive: Vec<Day> = momentum.smoothed.present().filter(|(_, v)| *v > 0.0).map(|(d, _)| d).collect();
    let mut k = 0;
    while k < positive.len() {
        let start = positive[k];
        let mut end = start;
        while k + 1 < positive.len() && positive[k + 1] == end + 1 {
            k += 1;
            end = positive[k];
        }
        b.band(start as f64 - 0.5, end as f64 + 0.5, PALETTE[1], None);
        k += 1;
    }
    b.hline(0.0, GREY);
    b.line(series_line(&momentum.raw, 1.0), "#9ecae1", false, Some("raw"));
    b.line(series_line(&momentum.smoothed, 1.0), PALETTE[0], false, Some("7-day SMA"));
    for &t in geo_transitions {
        b.vline(t as f64 - 0.5, "#000000", true);
    }
    fig.push(b);
    fig.render()
}

/// Per-phase scatter of reduction against the regressor with fitted lines.
pub fn fig2(
    fits: &PhaseFitTable,
    reductions: &[ReductionSeries],
    regressor: &DailySeries,
    timeline: &PhaseTimeline,
    lag: Day,
) -> String {
    let mut fig = Figure::new("Mobility reduction vs confirmed cases by phase", 3, 360.0, 300.0);
    for phase in &timeline.phases {
        let mut panel = Panel::new(
            format!("{} (days {}-{})", phase.label, phase.start_day, phase.end_day),
            "confirmed cases",
            "reduction (%)",
        );
        for red in reductions {
            let pts: Vec<(f64, f64)> = red
                .series
                .present()
                .filter(|(d, _)| *d >= phase.start_day && *d <= phase.end_day)
                .filter_map(|(d, r)| regressor.get(d - lag).map(|c| (c, 100.0 * r)))
                .collect();
            let fit = fits.rows.iter().find(|r| r.phase == phase.label && r.mode == red.mode).and_then(|r| r.fit.as_ref());
            if let (Some(fit), Some(lo), Some(hi)) = (
                fit,
                pts.iter().map(|p| p.0).reduce(f64::min),
                pts.iter().map(|p| p.0).reduce(f64::max),
            ) {
                let f = |x: f64| 100.0 * (fit.beta0 + fit.beta1 * x);
                panel.line(vec![Some((lo, f(lo))), Some((hi, f(hi)))], mode_color(red.mode), false, None);
            }
            panel.points(pts, mode_color(red.mode), Some(red.mode.as_str()));
        }
        fig.push(panel);
    }
    fig.render()
}

/// Sliced reduction series with their detected interventions.
pub fn fig3(series: &[SliceSeries], entries: &[SeasonalityEntry], horizon: Day) -> String {
    let mut fig = Figure::new("Mobility reduction by slice with detected interventions", 2, 460.0, 280.0);
    let mut names: Vec<&str> = Vec::new();
    for s in series {
        if !names.contains(&s.slice.name.as_str()) {
            names.push(&s.slice.name);
        }
    }
    for name in names {
        let mut panel = Panel::new(name, "day", "reduction (%)").x_range(0.5, horizon as f64 + 0.5);
        for s in series.iter().filter(|s| s.slice.name == name) {
            panel.line(series_line(&s.series, 100.0), mode_color(s.mode), false, Some(s.mode.as_str()));
            if let Some(e) = entries.iter().find(|e| e.slice == name && e.mode == s.mode) {
                for &b in &e.result.breaks {
                    panel.vline(b as f64 + 0.5, mode_color(s.mode), true);
                }
            }
        }
        fig.push(panel);
    }
    fig.render()
}

/// Survey percentages over the subway reduction; survey points are not joined.
pub fn fig4(subway: &DailySeries, survey: Option<&Survey>, horizon: Day) -> String {
    let mut fig = Figure::new("Survey responses and subway ridership reduction", 1, 900.0, 340.0);
    let mut panel = Panel::new("subway reduction and survey (%)", "day", "%").x_range(0.5, horizon as f64 + 0.5);
    panel.line(series_line(subway, 100.0), PALETTE[0], false, Some("subway reduction"));
    if let Some(survey) = survey {
        for (k, (metric, points)) in survey.iter().enumerate() {
            let color = PALETTE[(k + 1) % PALETTE.len()];
            panel.points(points.iter().map(|&(d, v)| (d as f64, v)).collect(), color, Some(metric));
        }
    }
    fig.push(panel);
    fig.render()
}

pub fn fig_s1(indices: &IndexSeries) -> String {
    let mut fig = Figure::new("Government response and mobility restriction indices", 1, 900.0, 320.0);
    let mut panel = Panel::new("composite indices", "day", "index").y_range(0.0, 100.0);
    let line = |vals: &[f64]| indices.days.iter().zip(vals).map(|(&d, &v)| Some((d as f64, v))).collect();
    panel.line(line(&indices.government_response), PALETTE[0], false, Some("government response"));
    panel.line(line(&indices.mobility_restriction), PALETTE[1], false, Some("mobility restriction"));
    fig.push(panel);
    fig.render()
}
