//! Day-over-day dispersion of contact locations.
//!
//! For consecutive days `t` and `t + 1` the grouped distance `d_g` is the
//! mean distance over all cross pairs, and the directed Hausdorff distance
//! `d_h` is the farthest any new-day point lies from its nearest old-day
//! point. Their difference is the dispersion momentum: positive when new
//! cases land close to an already dispersed mass (geospatial peak),
//! non-positive during expansion or contraction.

use crate::series::{simple_moving_average, DailySeries, Day, SeriesError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("day {0} has no contact locations")]
    EmptyDay(Day),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if lat.is_finite() && lon.is_finite() && (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Ok(Self { lat, lon })
        } else {
            Err(GeoError::InvalidCoordinate { lat, lon })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Distance metric between contact locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
    #[default]
    Haversine,
    /// Euclidean distance treating latitude/longitude as kilometre offsets.
    Planar,
}

impl Metric {
    pub fn distance(self, a: &GeoPoint, b: &GeoPoint) -> f64 {
        match self {
            Metric::Haversine => haversine_km(a, b),
            Metric::Planar => (a.lat - b.lat).hypot(a.lon - b.lon),
        }
    }
}

impl FromStr for Metric {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "haversine" => Ok(Metric::Haversine),
            "planar" => Ok(Metric::Planar),
            other => Err(GeoError::InvalidArgument(format!("unknown metric '{other}'"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Haversine => "haversine",
            Metric::Planar => "planar",
        })
    }
}

pub fn haversine_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Contact locations published for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactDay {
    pub day: Day,
    points: Vec<GeoPoint>,
    /// Exact duplicates dropped on construction.
    pub collapsed: usize,
}

impl ContactDay {
    pub fn new(day: Day, mut points: Vec<GeoPoint>) -> Self {
        let before = points.len();
        points.sort_by(|a, b| a.lat.total_cmp(&b.lat).then(a.lon.total_cmp(&b.lon)));
        points.dedup_by(|a, b| a.lat.to_bits() == b.lat.to_bits() && a.lon.to_bits() == b.lon.to_bits());
        let collapsed = before - points.len();
        if collapsed > 0 {
            log::debug!("day {day}: collapsed {collapsed} duplicate contact locations");
        }
        Self { day, points, collapsed }
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Mean distance over all pairs `(p, q)` with `p` from `a` and `q` from `b`.
pub fn grouped_distance(a: &ContactDay, b: &ContactDay, metric: Metric) -> Result<f64, GeoError> {
    for d in [a, b] {
        if d.is_empty() {
            return Err(GeoError::EmptyDay(d.day));
        }
    }
    let total: f64 = a
        .points
        .iter()
        .map(|p| b.points.iter().map(|q| metric.distance(p, q)).sum::<f64>())
        .sum();
    Ok(total / (a.points.len() * b.points.len()) as f64)
}

/// Largest distance from a point of `newer` to its nearest point of `older`.
pub fn directed_hausdorff(newer: &ContactDay, older: &ContactDay, metric: Metric) -> Result<f64, GeoError> {
    for d in [newer, older] {
        if d.is_empty() {
            return Err(GeoError::EmptyDay(d.day));
        }
    }
    Ok(newer
        .points
        .iter()
        .map(|p| older.points.iter().map(|q| metric.distance(p, q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// Metrics for the pair of days ending at `day`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionPoint {
    /// The later day `t + 1` of the pair.
    pub day: Day,
    pub d_g: f64,
    pub d_h: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumSeries {
    /// Defined pairs only.
    pub points: Vec<DispersionPoint>,
    /// Days whose pair had an empty side.
    pub skipped: Vec<Day>,
    /// Raw `d_g - d_h`, one entry per pair, missing where undefined.
    pub raw: DailySeries,
    /// Trailing moving average of `raw`.
    pub smoothed: DailySeries,
}

impl MomentumSeries {
    pub fn point(&self, day: Day) -> Option<&DispersionPoint> {
        self.points.binary_search_by_key(&day, |p| p.day).ok().map(|k| &self.points[k])
    }
}

/// Computes `d_g`, `d_h` and their difference for every consecutive pair of
/// calendar days spanned by `days`, then smooths the difference.
///
/// Days absent from `days` are treated as having no published locations.
/// The value for the pair `(t, t + 1)` is stored at day `t + 1`.
pub fn momentum_series(days: &[ContactDay], window: usize, metric: Metric) -> Result<MomentumSeries, GeoError> {
    if days.windows(2).any(|w| w[1].day <= w[0].day) {
        return Err(GeoError::InvalidArgument("contact days must be strictly increasing".into()));
    }
    let usable = days.iter().filter(|d| !d.is_empty()).count();
    if usable < 2 {
        return Err(GeoError::InsufficientData(format!("{usable} day(s) with contact locations")));
    }
    let by_day: BTreeMap<Day, &ContactDay> = days.iter().map(|d| (d.day, d)).collect();
    let first = days[0].day;
    let last = days[days.len() - 1].day;

    let mut points = Vec::new();
    let mut skipped = Vec::new();
    let mut raw = Vec::new();
    for t in first..last {
        let pair = by_day.get(&t).zip(by_day.get(&(t + 1)));
        let metrics = pair.and_then(|(older, newer)| {
            let d_g = grouped_distance(older, newer, metric).ok()?;
            let d_h = directed_hausdorff(newer, older, metric).ok()?;
            Some(DispersionPoint { day: t + 1, d_g, d_h, momentum: d_g - d_h })
        });
        match metrics {
            Some(p) => {
                raw.push(Some(p.momentum));
                points.push(p);
            }
            None => {
                raw.push(None);
                skipped.push(t + 1);
            }
        }
    }
    let raw = DailySeries::contiguous("momentum", first + 1, raw)?;
    let smoothed = simple_moving_average(&raw, window)
        .map_err(|e| GeoError::InsufficientData(e.to_string()))?
        .with_label("momentum_sma");
    Ok(MomentumSeries { points, skipped, raw, smoothed })
}

/// Regime of a momentum value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Peak,
    ExpansionContraction,
}

impl Regime {
    pub fn of(momentum: f64) -> Self {
        if momentum > 0.0 {
            Regime::Peak
        } else {
            Regime::ExpansionContraction
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Peak => "peak",
            Regime::ExpansionContraction => "expansion-contraction",
        }
    }
}

/// Days at which the regime of `momentum` flips and the new regime then
/// holds for at least `min_run` consecutive present values. Missing values
/// are skipped; shorter excursions are ignored.
pub fn sign_transitions(momentum: &DailySeries, min_run: usize) -> Vec<Day> {
    let min_run = min_run.max(1);
    let present: Vec<(Day, Regime)> = momentum.present().map(|(d, v)| (d, Regime::of(v))).collect();
    let Some(&(_, mut current)) = present.first() else {
        return Vec::new();
    };
    let mut transitions = Vec::new();
    let mut k = 1;
    while k < present.len() {
        let (day, regime) = present[k];
        if regime == current {
            k += 1;
            continue;
        }
        let run = present[k..].iter().take_while(|(_, r)| *r == regime).count();
        if run >= min_run {
            transitions.push(day);
            current = regime;
        }
        k += run;
    }
    transitions
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn day(d: Day, pts: &[(f64, f64)]) -> ContactDay {
        ContactDay::new(d, pts.iter().map(|&(a, b)| p(a, b)).collect())
    }

    #[test]
    fn haversine_identity_and_one_degree() {
        let a = p(37.5, 127.0);
        assert_eq!(haversine_km(&a, &a), 0.0);
        let b = p(38.5, 127.0);
        assert_abs_diff_eq!(haversine_km(&a, &b), 111.1949, epsilon = 1e-3);
        assert_abs_diff_eq!(
            haversine_km(&a, &b),
            EARTH_RADIUS_KM * std::f64::consts::PI / 180.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn invalid_coordinates_rejected() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn duplicates_are_collapsed() {
        let d = day(1, &[(1.0, 1.0), (1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(d.points().len(), 2);
        assert_eq!(d.collapsed, 1);
    }

    #[test]
    fn grouped_distance_examples() {
        let m = Metric::Planar;
        assert_eq!(grouped_distance(&day(1, &[(0.0, 0.0)]), &day(2, &[(1.0, 0.0)]), m).unwrap(), 1.0);
        assert_eq!(grouped_distance(&day(1, &[(3.0, 4.0)]), &day(2, &[(3.0, 4.0)]), m).unwrap(), 0.0);
        let a = day(1, &[(0.0, 0.0)]);
        let bc = day(2, &[(2.0, 0.0), (0.0, 4.0)]);
        assert_eq!(grouped_distance(&a, &bc, m).unwrap(), 3.0);
        assert_eq!(grouped_distance(&a, &day(2, &[]), m), Err(GeoError::EmptyDay(2)));
    }

    #[test]
    fn directed_hausdorff_examples() {
        let m = Metric::Planar;
        let old = day(1, &[(0.0, 0.0), (1.0, 1.0), (5.0, 5.0)]);
        assert_eq!(directed_hausdorff(&day(2, &[(1.0, 1.0), (0.0, 0.0)]), &old, m).unwrap(), 0.0);
        assert_eq!(directed_hausdorff(&day(2, &[(0.0, 1.0)]), &day(1, &[(0.0, 0.0)]), m).unwrap(), 1.0);
        let xy = day(2, &[(1.0, 0.0), (5.0, 0.0)]);
        assert_eq!(directed_hausdorff(&xy, &day(1, &[(0.0, 0.0)]), m).unwrap(), 5.0);
        assert_eq!(directed_hausdorff(&day(2, &[]), &old, m), Err(GeoError::EmptyDay(2)));
    }

    #[test]
    fn hausdorff_is_asymmetric() {
        let m = Metric::Planar;
        let a = day(1, &[(0.0, 0.0)]);
        let b = day(2, &[(0.0, 0.0), (10.0, 0.0)]);
        assert_eq!(directed_hausdorff(&b, &a, m).unwrap(), 10.0);
        assert_eq!(directed_hausdorff(&a, &b, m).unwrap(), 0.0);
    }

    #[test]
    fn momentum_of_static_point_is_zero() {
        let days: Vec<ContactDay> = (1..=10).map(|d| day(d, &[(37.5, 127.0)])).collect();
        let m = momentum_series(&days, 3, Metric::Haversine).unwrap();
        assert!(m.raw.values().iter().all(|v| *v == Some(0.0)));
        assert!(m.smoothed.values().iter().all(|v| *v == Some(0.0)));
        assert_eq!(m.raw.start_day(), 2);
    }

    #[test]
    fn momentum_three_day_fixture() {
        // day 1: {(0,0)}, day 2: {(0,0), (0,4)}, day 3: {(0,1)}
        let days = vec![day(1, &[(0.0, 0.0)]), day(2, &[(0.0, 0.0), (0.0, 4.0)]), day(3, &[(0.0, 1.0)])];
        let m = momentum_series(&days, 1, Metric::Planar).unwrap();
        // pair (1,2): d_g = (0 + 4)/2 = 2, d_h = max(0, 4) = 4 -> -2
        // pair (2,3): d_g = (1 + 3)/2 = 2, d_h = min(1, 3) = 1 -> 1
        assert_eq!(
            m.points,
            vec![
                DispersionPoint { day: 2, d_g: 2.0, d_h: 4.0, momentum: -2.0 },
                DispersionPoint { day: 3, d_g: 2.0, d_h: 1.0, momentum: 1.0 },
            ]
        );
        let smoothed = momentum_series(&days, 2, Metric::Planar).unwrap().smoothed;
        assert_eq!(smoothed.values(), &[Some(-0.5)]);
    }

    #[test]
    fn empty_days_become_missing() {
        let days = vec![
            day(1, &[(0.0, 0.0)]),
            day(2, &[]),
            day(3, &[(0.0, 1.0)]),
            day(5, &[(0.0, 1.0)]),
            day(6, &[(0.0, 1.0)]),
        ];
        let m = momentum_series(&days, 1, Metric::Planar).unwrap();
        assert_eq!(m.raw.values(), &[None, None, None, None, Some(0.0)]);
        assert_eq!(m.skipped, vec![2, 3, 4, 5]);
    }

    #[test]
    fn momentum_needs_two_usable_days() {
        let days = vec![day(1, &[(0.0, 0.0)]), day(2, &[])];
        assert!(matches!(
            momentum_series(&days, 1, Metric::Planar),
            Err(GeoError::InsufficientData(_))
        ));
    }

    fn momentum(values: &[f64]) -> DailySeries {
        DailySeries::from_values("m", 1, values).unwrap()
    }

    #[test]
    fn sign_transition_examples() {
        assert!(sign_transitions(&momentum(&[1.0, 2.0, 0.5]), 1).is_empty());
        assert_eq!(sign_transitions(&momentum(&[-1.0, -1.0, -1.0, 1.0, 1.0, 1.0]), 3), vec![4]);
        assert!(sign_transitions(&momentum(&[-1.0, 1.0, -1.0, -1.0]), 2).is_empty());
        // zero counts as non-positive
        assert_eq!(sign_transitions(&momentum(&[1.0, 0.0, 0.0]), 2), vec![2]);
    }

    #[test]
    fn sign_transitions_skip_missing() {
        let s = DailySeries::contiguous(
            "m",
            10,
            vec![None, None, Some(-1.0), Some(-1.0), Some(1.0), None, Some(1.0), Some(1.0)],
        )
        .unwrap();
        assert_eq!(sign_transitions(&s, 3), vec![14]);
    }

    fn arb_set(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..=max)
    }

    fn max_pairwise(a: &ContactDay, b: &ContactDay, m: Metric) -> f64 {
        let mut best = 0.0f64;
        for p in a.points() {
            for q in b.points() {
                best = best.max(m.distance(p, q));
            }
        }
        best
    }

    proptest! {
        #[test]
        fn haversine_is_symmetric(a in (-90.0f64..90.0, -180.0f64..180.0), b in (-90.0f64..90.0, -180.0f64..180.0)) {
            let (a, b) = (p(a.0, a.1), p(b.0, b.1));
            prop_assert_eq!(haversine_km(&a, &b), haversine_km(&b, &a));
        }

        #[test]
        fn metrics_are_bounded_and_grouped_is_symmetric(a in arb_set(8), b in arb_set(8)) {
            let (a, b) = (day(1, &a), day(2, &b));
            for m in [Metric::Planar, Metric::Haversine] {
                let g = grouped_distance(&a, &b, m).unwrap();
                let h = directed_hausdorff(&b, &a, m).unwrap();
                let bound = max_pairwise(&a, &b, m);
                prop_assert!(g >= 0.0 && h >= 0.0);
                prop_assert!(g <= bound + 1e-9 && h <= bound + 1e-9);
                let g_rev = grouped_distance(&b, &a, m).unwrap();
                prop_assert!((g - g_rev).abs() <= 1e-12 * g.max(1.0));
            }
        }

        #[test]
        fn planar_metrics_are_translation_invariant(a in arb_set(8), b in arb_set(8), dx in -30.0f64..30.0, dy in -30.0f64..30.0) {
            let shift = |s: &[(f64, f64)]| s.iter().map(|&(x, y)| (x + dx, y + dy)).collect::<Vec<_>>();
            let (a0, b0) = (day(1, &a), day(2, &b));
            let (a1, b1) = (day(1, &shift(&a)), day(2, &shift(&b)));
            let m = Metric::Planar;
            prop_assert!((grouped_distance(&a0, &b0, m).unwrap() - grouped_distance(&a1, &b1, m).unwrap()).abs() < 1e-9);
            prop_assert!((directed_hausdorff(&b0, &a0, m).unwrap() - directed_hausdorff(&b1, &a1, m).unwrap()).abs() < 1e-9);
        }
    }
}
