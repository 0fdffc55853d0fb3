//! Multiple mean-shift detection.
//!
//! Each segment is fitted with an intercept-only model, so its cost is the sum
//! of squared deviations from the segment mean. The optimal partition into a
//! fixed number of segments is found exactly by dynamic programming, the
//! number of breaks is chosen by BIC, and break locations get percentile
//! intervals from a within-segment residual bootstrap.

use crate::series::{DailySeries, Day};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to `SSR / n` before taking logarithms in BIC.
pub const SSR_FLOOR: f64 = 1e-12;
/// Interval method recorded in serialized results.
pub const CI_METHOD: &str = "bootstrap-percentile";
/// Fraction of discarded bootstrap replicates above which intervals are flagged.
pub const MAX_DISCARD_FRACTION: f64 = 0.10;
/// Relative tolerance under which two partitions count as tied.
const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CpdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing value at day {0}; segment on an imputed or smoothed series")]
    MissingData(Day),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Criterion {
    #[default]
    Bic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakConfig {
    pub max_breaks: usize,
    /// Minimum observations per segment.
    pub min_segment: usize,
    pub criterion: Criterion,
    pub bootstrap_reps: usize,
    pub ci_level: f64,
    pub seed: u64,
}

impl Default for BreakConfig {
    fn default() -> Self {
        Self {
            max_breaks: 8,
            min_segment: 7,
            criterion: Criterion::Bic,
            bootstrap_reps: 1000,
            ci_level: 0.95,
            seed: 0,
        }
    }
}

impl BreakConfig {
    /// Checks `(max_breaks + 1) * min_segment <= n` and parameter ranges.
    pub fn validate(&self, n: usize) -> Result<(), CpdError> {
        if self.min_segment == 0 {
            return Err(CpdError::InvalidArgument("min_segment must be positive".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(CpdError::InvalidArgument(format!("ci_level {} not in (0, 1)", self.ci_level)));
        }
        if (self.max_breaks + 1) * self.min_segment > n {
            return Err(CpdError::InvalidArgument(format!(
                "{} breaks with minimum segment {} do not fit in {n} observations",
                self.max_breaks, self.min_segment
            )));
        }
        Ok(())
    }

    /// Lowers `max_breaks` to the largest feasible value for `n` observations.
    pub fn clamped_to(&self, n: usize) -> Self {
        let feasible = (n / self.min_segment.max(1)).saturating_sub(1);
        Self { max_breaks: self.max_breaks.min(feasible), ..self.clone() }
    }
}

/// Output of segmentation, optionally enriched with bootstrap intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    /// Last day of every segment except the final one.
    pub breaks: Vec<Day>,
    pub segment_means: Vec<f64>,
    pub ssr: f64,
    pub m_selected: usize,
    pub intervals: Vec<(Day, Day)>,
    pub criterion_trace: Vec<(usize, f64)>,
    pub method: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SegmentationResult {
    /// Inclusive `(start_day, end_day)` of every segment of `y`.
    pub fn segment_days(&self, y: &DailySeries) -> Vec<(Day, Day)> {
        let mut out = Vec::with_capacity(self.breaks.len() + 1);
        let mut start = y.start_day();
        for &b in &self.breaks {
            out.push((start, b));
            start = y.days()[y.days().partition_point(|&d| d <= b)];
        }
        out.push((start, y.end_day()));
        out
    }
}

fn present_values(y: &DailySeries) -> Result<Vec<f64>, CpdError> {
    y.days()
        .iter()
        .zip(y.values())
        .map(|(&d, v)| v.ok_or(CpdError::MissingData(d)))
        .collect()
}

fn sum_sq_dev(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sum of squared deviations from the mean over positions `i..=j` (1-based).
pub fn segment_ssr(y: &DailySeries, i: usize, j: usize) -> Result<f64, CpdError> {
    if i == 0 || i > j || j > y.len() {
        return Err(CpdError::InvalidArgument(format!(
            "segment [{i}, {j}] invalid for a series of length {}",
            y.len()
        )));
    }
    let mut values = Vec::with_capacity(j - i + 1);
    for k in i - 1..j {
        values.push(y.values()[k].ok_or(CpdError::MissingData(y.days()[k]))?);
    }
    Ok(sum_sq_dev(&values))
}

/// Segment costs for every `(i, j)` with `i <= j`, built row by row with
/// Welford updates.
struct CostMatrix {
    n: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    fn new(values: &[f64]) -> Self {
        let n = values.len();
        let mut costs = vec![0.0; n * n];
        for i in 0..n {
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for j in i..n {
                let count = (j - i + 1) as f64;
                let delta = values[j] - mean;
                mean += delta / count;
                m2 += delta * (values[j] - mean);
                costs[i * n + j] = m2.max(0.0);
            }
        }
        Self { n, costs }
    }

    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.n + j]
    }
}

/// `best[s - 1][i]`: optimal cost of splitting positions `i..n` into `s` segments.
struct PartitionTable {
    n: usize,
    min_segment: usize,
    best: Vec<Vec<f64>>,
    tolerance: f64,
}

impl PartitionTable {
    #[allow(clippy::needless_range_loop)]
    fn build(cost: &CostMatrix, max_segments: usize, min_segment: usize) -> Self {
        let n = cost.n;
        let mut best = vec![vec![f64::INFINITY; n + 1]; max_segments];
        for i in 0..n {
            if n - i >= min_segment {
                best[0][i] = cost.cost(i, n - 1);
            }
        }
        for s in 2..=max_segments {
            if s * min_segment > n {
                break;
            }
            for i in 0..=n - s * min_segment {
                let mut value = f64::INFINITY;
                for j in i + min_segment..=n - (s - 1) * min_segment {
                    let candidate = cost.cost(i, j - 1) + best[s - 2][j];
                    if candidate < value {
                        value = candidate;
                    }
                }
                best[s - 1][i] = value;
            }
        }
        let tolerance = TIE_TOLERANCE * cost.cost(0, n - 1);
        Self { n, min_segment, best, tolerance }
    }

    /// Segment end positions (0-based, inclusive) for the optimal partition
    /// into `segments` pieces, taking the earliest break among tied optima.
    fn ends(&self, cost: &CostMatrix, segments: usize) -> Vec<usize> {
        let mut ends = Vec::with_capacity(segments - 1);
        let mut i = 0;
        for s in (2..=segments).rev() {
            let target = self.best[s - 1][i] + self.tolerance;
            let j = (i + self.min_segment..=self.n - (s - 1) * self.min_segment)
                .find(|&j| cost.cost(i, j - 1) + self.best[s - 2][j] <= target)
                .expect("an optimal split always exists below the target");
            ends.push(j - 1);
            i = j;
        }
        ends
    }
}

fn summarize(values: &[f64], ends: &[usize]) -> (Vec<f64>, f64) {
    let mut means = Vec::with_capacity(ends.len() + 1);
    let mut ssr = 0.0;
    let mut start = 0;
    for &end in ends.iter().chain(std::iter::once(&(values.len() - 1))) {
        let seg = &values[start..=end];
        means.push(mean(seg));
        ssr += sum_sq_dev(seg);
        start = end + 1;
    }
    (means, ssr)
}

fn build_result(y: &DailySeries, values: &[f64], ends: &[usize]) -> SegmentationResult {
    let (segment_means, ssr) = summarize(values, ends);
    SegmentationResult {
        breaks: ends.iter().map(|&e| y.days()[e]).collect(),
        segment_means,
        ssr,
        m_selected: ends.len(),
        intervals: Vec::new(),
        criterion_trace: Vec::new(),
        method: "none".into(),
        warnings: Vec::new(),
    }
}

fn check_feasible(n: usize, m: usize, min_segment: usize) -> Result<(), CpdError> {
    if min_segment == 0 {
        return Err(CpdError::InvalidArgument("min_segment must be positive".into()));
    }
    if (m + 1) * min_segment > n {
        return Err(CpdError::InvalidArgument(format!(
            "{m} breaks with minimum segment {min_segment} do not fit in {n} observations"
        )));
    }
    Ok(())
}

fn fixed_partition(values: &[f64], m: usize, min_segment: usize) -> Result<Vec<usize>, CpdError> {
    check_feasible(values.len(), m, min_segment)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CpdError::InvalidArgument("values must be finite".into()));
    }
    let cost = CostMatrix::new(values);
    let table = PartitionTable::build(&cost, m + 1, min_segment);
    Ok(table.ends(&cost, m + 1))
}

/// Globally optimal partition of `y` into `m + 1` segments.
pub fn optimal_partition(y: &DailySeries, m: usize, cfg: &BreakConfig) -> Result<SegmentationResult, CpdError> {
    if m > cfg.max_breaks {
        return Err(CpdError::InvalidArgument(format!(
            "m = {m} exceeds max_breaks = {}",
            cfg.max_breaks
        )));
    }
    let values = present_values(y)?;
    let ends = fixed_partition(&values, m, cfg.min_segment)?;
    Ok(build_result(y, &values, &ends))
}

/// BIC for a mean-shift model with `m` breaks: `n ln(SSR/n) + (2m + 1) ln n`.
/// The flag reports whether `SSR/n` hit the floor.
pub fn bic(ssr: f64, n: usize, m: usize) -> (f64, bool) {
    let nf = n as f64;
    let ratio = ssr / nf;
    let clamped = ratio < SSR_FLOOR;
    (nf * ratio.max(SSR_FLOOR).ln() + (2 * m + 1) as f64 * nf.ln(), clamped)
}

/// Fits `m = 0..=max_breaks` and keeps the BIC minimiser (smaller `m` on ties).
pub fn select_breaks(y: &DailySeries, cfg: &BreakConfig) -> Result<SegmentationResult, CpdError> {
    let values = present_values(y)?;
    let n = values.len();
    cfg.validate(n)?;
    let cost = CostMatrix::new(&values);
    let table = PartitionTable::build(&cost, cfg.max_breaks + 1, cfg.min_segment);

    let mut trace = Vec::with_capacity(cfg.max_breaks + 1);
    let mut clamped_any = Vec::new();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for m in 0..=cfg.max_breaks {
        let ends = table.ends(&cost, m + 1);
        let (_, ssr) = summarize(&values, &ends);
        let (value, clamped) = bic(ssr, n, m);
        if clamped {
            clamped_any.push(m);
        }
        trace.push((m, value));
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, ends));
        }
    }
    let (_, ends) = best.expect("at least m = 0 is evaluated");
    let mut result = build_result(y, &values, &ends);
    result.criterion_trace = trace;
    if !clamped_any.is_empty() {
        result.warnings.push(format!(
            "ssr-floor: SSR/n clamped to {SSR_FLOOR:e} for m in {clamped_any:?}"
        ));
    }
    Ok(result)
}

fn percentile_index(len: usize, q: f64, round_up: bool) -> usize {
    let pos = q * (len - 1) as f64;
    let idx = if round_up { pos.ceil() } else { pos.floor() };
    (idx as usize).min(len - 1)
}

/// Attaches percentile intervals to each break of `result` by resampling
/// residuals within segments and re-running the fixed-`m` partition.
///
/// Replicate `r` draws from its own ChaCha stream `(seed, r)`, so intervals
/// do not depend on how replicates are scheduled.
pub fn bootstrap_ci(
    y: &DailySeries,
    result: &SegmentationResult,
    cfg: &BreakConfig,
) -> Result<SegmentationResult, CpdError> {
    if cfg.bootstrap_reps < 100 {
        return Err(CpdError::InvalidArgument(format!(
            "bootstrap_reps = {} is below the minimum of 100",
            cfg.bootstrap_reps
        )));
    }
    if !(cfg.ci_level > 0.0 && cfg.ci_level < 1.0) {
        return Err(CpdError::InvalidArgument(format!("ci_level {} not in (0, 1)", cfg.ci_level)));
    }
    let values = present_values(y)?;
    let n = values.len();
    let ends: Vec<usize> = result
        .breaks
        .iter()
        .map(|b| {
            y.days()
                .binary_search(b)
                .map_err(|_| CpdError::InvalidArgument(format!("break day {b} is not a day of the series")))
        })
        .collect::<Result<_, _>>()?;
    let m = ends.len();
    check_feasible(n, m, cfg.min_segment)?;

    let mut out = result.clone();
    out.method = CI_METHOD.into();
    out.intervals.clear();
    if m == 0 {
        return Ok(out);
    }

    let mut bounds = Vec::with_capacity(m + 1);
    let mut start = 0;
    for &end in ends.iter().chain(std::iter::once(&(n - 1))) {
        bounds.push((start, end));
        start = end + 1;
    }
    let mut fitted = vec![0.0; n];
    for &(s, e) in &bounds {
        let mu = mean(&values[s..=e]);
        fitted[s..=e].iter_mut().for_each(|f| *f = mu);
    }
    let residuals: Vec<f64> = values.iter().zip(&fitted).map(|(v, f)| v - f).collect();

    let replicates: Vec<Option<Vec<usize>>> = (0..cfg.bootstrap_reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            let mut synthetic = Vec::with_capacity(n);
            for &(s, e) in &bounds {
                for f in &fitted[s..=e] {
                    synthetic.push(f + residuals[rng.random_range(s..=e)]);
                }
            }
            fixed_partition(&synthetic, m, cfg.min_segment).ok()
        })
        .collect();

    let kept: Vec<&Vec<usize>> = replicates.iter().flatten().collect();
    let discarded = cfg.bootstrap_reps - kept.len();
    if discarded as f64 > MAX_DISCARD_FRACTION * cfg.bootstrap_reps as f64 {
        out.warnings.push(format!(
            "unstable-ci: {discarded} of {} bootstrap replicates discarded",
            cfg.bootstrap_reps
        ));
    }
    let tail = (1.0 - cfg.ci_level) / 2.0;
    for (k, &end) in ends.iter().enumerate() {
        let (lo, hi) = if kept.is_empty() {
            (end, end)
        } else {
            let mut draws: Vec<usize> = kept.iter().map(|e| e[k]).collect();
            draws.sort_unstable();
            let lo = draws[percentile_index(draws.len(), tail, false)];
            let hi = draws[percentile_index(draws.len(), 1.0 - tail, true)];
            // an interval always covers its own break
            (lo.min(end), hi.max(end))
        };
        out.intervals.push((y.days()[lo], y.days()[hi]));
    }
    Ok(out)
}
