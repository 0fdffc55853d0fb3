//! Bivariate ordinary least squares with full inference, and the per-phase
//! fit table relating mobility reduction to case counts.

use crate::distributions::{f_upper_tail, student_t_two_sided_p};
use crate::phases::{PhaseLabel, PhaseTimeline};
use crate::series::{DailySeries, Day, Mode, ReductionSeries};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("insufficient data: {0} paired observations, need at least 3")]
    InsufficientData(usize),
    #[error("regressor is constant")]
    DegenerateRegressor,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Estimates and inference for `y = beta0 + beta1 x + e`.
///
/// When the residual sum of squares is zero the fit is flagged as exact:
/// standard errors and p-values are reported as 0, t statistics as signed
/// infinities (0 for a zero coefficient) and `r2 = adj_r2 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub beta0: f64,
    pub beta1: f64,
    pub se0: f64,
    pub se1: f64,
    #[serde(with = "crate::nonfinite")]
    pub t0: f64,
    #[serde(with = "crate::nonfinite")]
    pub t1: f64,
    pub p0: f64,
    pub p1: f64,
    pub r2: f64,
    pub adj_r2: f64,
    #[serde(with = "crate::nonfinite")]
    pub f_stat: f64,
    pub sig_f: f64,
    pub n: usize,
    pub exact_fit: bool,
}

impl OlsFit {
    pub fn residuals(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter().zip(y).map(|(xi, yi)| yi - self.beta0 - self.beta1 * xi).collect()
    }
}

fn exact_t(beta: f64) -> f64 {
    if beta == 0.0 {
        0.0
    } else {
        beta.signum() * f64::INFINITY
    }
}

pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<OlsFit, RegressionError> {
    if x.len() != y.len() {
        return Err(RegressionError::InvalidArgument(format!(
            "x has {} values, y has {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(RegressionError::InsufficientData(n));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RegressionError::InvalidArgument("values must be finite".into()));
    }
    let nf = n as f64;
    let x_mean = x.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - x_mean, yi - y_mean);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(RegressionError::DegenerateRegressor);
    }
    let beta1 = sxy / sxx;
    let beta0 = y_mean - beta1 * x_mean;
    let ssr: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - beta0 - beta1 * xi).powi(2)).sum();
    let df = nf - 2.0;

    if ssr == 0.0 {
        let t1 = exact_t(beta1);
        return Ok(OlsFit {
            beta0,
            beta1,
            se0: 0.0,
            se1: 0.0,
            t0: exact_t(beta0),
            t1,
            p0: 0.0,
            p1: 0.0,
            r2: 1.0,
            adj_r2: 1.0,
            f_stat: t1 * t1,
            sig_f: 0.0,
            n,
            exact_fit: true,
        });
    }

    let sigma2 = ssr / df;
    let se1 = (sigma2 / sxx).sqrt();
    let se0 = (sigma2 * (1.0 / nf + x_mean * x_mean / sxx)).sqrt();
    let t0 = beta0 / se0;
    let t1 = beta1 / se1;
    let r2 = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 0.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (nf - 1.0) / df;
    // regression sum of squares over residual mean square; equals t1^2
    let f_stat = beta1 * beta1 * sxx / sigma2;
    Ok(OlsFit {
        beta0,
        beta1,
        se0,
        se1,
        t0,
        t1,
        p0: student_t_two_sided_p(t0, df),
        p1: student_t_two_sided_p(t1, df),
        r2,
        adj_r2,
        f_stat,
        sig_f: f_upper_tail(f_stat, 1.0, df),
        n,
        exact_fit: false,
    })
}

/// Significance stars at the 0.05 / 0.01 / 0.001 levels.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFitRow {
    pub phase: PhaseLabel,
    pub start_day: Day,
    pub end_day: Day,
    pub mode: Mode,
    pub fit: Option<OlsFit>,
    /// Set when no fit could be produced.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseFitTable {
    pub rows: Vec<PhaseFitRow>,
}

/// Fits reduction against the case regressor within every phase, for every
/// mode. The regressor is read `lag` days before the reduction day.
///
/// Rows are ordered by phase, then by mode.
pub fn phase_fit_table(
    reductions: &[ReductionSeries],
    regressor: &DailySeries,
    timeline: &PhaseTimeline,
    lag: Day,
) -> PhaseFitTable {
    let mut ordered: Vec<&ReductionSeries> = reductions.iter().collect();
    ordered.sort_by_key(|r| r.mode);
    let mut rows = Vec::new();
    for phase in &timeline.phases {
        for red in &ordered {
            let (x, y): (Vec<f64>, Vec<f64>) = red
                .series
                .present()
                .filter(|(d, _)| *d >= phase.start_day && *d <= phase.end_day)
                .filter_map(|(d, r)| regressor.get(d - lag).map(|c| (c, r)))
                .unzip();
            let (fit, note) = match ols_fit(&x, &y) {
                Ok(fit) => (Some(fit), None),
                Err(e) => (None, Some(e.to_string())),
            };
            rows.push(PhaseFitRow {
                phase: phase.label,
                start_day: phase.start_day,
                end_day: phase.end_day,
                mode: red.mode,
                fit,
                note,
            });
        }
    }
    PhaseFitTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phases::{Phase, PhaseKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v).collect();
        let fit = ols_fit(&x, &y).unwrap();
        assert_eq!(fit.beta0, 1.0);
        assert_eq!(fit.beta1, 2.0);
        assert_eq!(fit.r2, 1.0);
        assert_eq!((fit.se0, fit.se1, fit.p0, fit.p1), (0.0, 0.0, 0.0, 0.0));
        assert!(fit.exact_fit);
        assert_eq!(fit.t1, f64::INFINITY);
    }

    #[test]
    fn hand_computed_normal_equations() {
        // Sx = 6, Sy = 11, Sxy = 0*1 + 1*3 + 2*2 + 3*5 = 22, Sxx = 14
        // beta1 = (4*22 - 6*11) / (4*14 - 36) = 22 / 20 = 1.1
        // beta0 = (11 - 1.1*6) / 4 = 1.1
        // residuals: -0.1, 0.8, -1.3, 0.6 -> SSR = 2.7; SST = 30.25 - ... = 8.75
        let fit = ols_fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_abs_diff_eq!(fit.beta1, 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.beta0, 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r2, 1.0 - 2.7 / 8.75, epsilon = 1e-12);
        // sigma^2 = 2.7 / 2; se1 = sqrt(1.35 / 5)
        assert_abs_diff_eq!(fit.se1, (1.35f64 / 5.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(fit.se0, (1.35f64 * (0.25 + 2.25 / 5.0)).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(fit.adj_r2, 1.0 - (2.7 / 8.75) * 3.0 / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.f_stat, fit.t1 * fit.t1, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.sig_f, fit.p1, epsilon = 1e-12);
    }

    #[test]
    fn error_paths() {
        assert_eq!(ols_fit(&[1.0, 2.0], &[1.0, 2.0]), Err(RegressionError::InsufficientData(2)));
        assert_eq!(ols_fit(&[2.0; 4], &[1.0, 2.0, 3.0, 4.0]), Err(RegressionError::DegenerateRegressor));
        assert!(ols_fit(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn t_table_oracle_df10() {
        // x = 0..12 gives df = 10; reuse the distribution directly
        assert_abs_diff_eq!(student_t_two_sided_p(2.228, 10.0), 0.05, epsilon = 5e-4);
    }

    #[test]
    fn stars() {
        assert_eq!(significance_stars(0.0005), "***");
        assert_eq!(significance_stars(0.005), "**");
        assert_eq!(significance_stars(0.03), "*");
        assert_eq!(significance_stars(0.33), "");
    }

    #[test]
    fn fit_table_rows_and_insufficient_marker() {
        let label = |kind, wave| PhaseLabel { kind, wave };
        let timeline = PhaseTimeline {
            phases: vec![
                Phase { label: label(PhaseKind::Trigger, 1), start_day: 1, end_day: 2 },
                Phase { label: label(PhaseKind::Escalation, 1), start_day: 3, end_day: 10 },
                Phase { label: label(PhaseKind::Peak, 1), start_day: 11, end_day: 18 },
            ],
            dropped: vec![],
        };
        let cases = DailySeries::from_values("c", 1, &(1..=18).map(|d| (d % 8) as f64).collect::<Vec<_>>()).unwrap();
        let red = |mode| ReductionSeries {
            mode,
            series: DailySeries::from_values("r", 1, &(1..=18).map(|d| 0.1 + 0.02 * (d % 8) as f64 + 0.001 * (d % 3) as f64).collect::<Vec<_>>()).unwrap(),
            dropped: vec![],
        };
        let table = phase_fit_table(&[red(Mode::Traffic), red(Mode::Subway)], &cases, &timeline, 0);
        assert_eq!(table.rows.len(), 6);
        assert_eq!(table.rows[0].mode, Mode::Subway);
        assert!(table.rows[0].fit.is_none());
        assert!(table.rows[0].note.as_deref().unwrap().contains("insufficient"));
        // identical reduction series in both modes -> identical fits
        assert_eq!(table.rows[2].fit, table.rows[3].fit);
        assert_eq!(table.rows[4].fit, table.rows[5].fit);
        assert!(table.rows[2].fit.is_some());
    }

    proptest! {
        #[test]
        fn fit_invariants(
            pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40),
            shift in -20.0f64..20.0,
            scale in 0.1f64..10.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let base = match ols_fit(&x, &y) { Ok(f) => f, Err(_) => return Ok(()) };
            prop_assume!(!base.exact_fit);
            prop_assert!((0.0..=1.0).contains(&base.r2));
            prop_assert!(base.adj_r2 <= base.r2);
            prop_assert!((base.f_stat - base.t1 * base.t1).abs() <= 1e-6 * base.f_stat.max(1e-12));
            prop_assert!((base.sig_f - base.p1).abs() <= 1e-6 * base.p1.max(1e-12));

            let resid = base.residuals(&x, &y);
            let scale_ref: f64 = y.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
            let xs: f64 = x.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
            prop_assert!(resid.iter().sum::<f64>().abs() <= 1e-9 * scale_ref);
            prop_assert!(resid.iter().zip(&x).map(|(r, xi)| r * xi).sum::<f64>().abs() <= 1e-9 * scale_ref * xs);

            let xt: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let tr = ols_fit(&xt, &y).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12);
            prop_assert!(rel(tr.beta1, base.beta1));
            prop_assert!((tr.beta0 - (base.beta0 - shift * base.beta1)).abs() <= 1e-9 * (base.beta0.abs() + (shift * base.beta1).abs() + 1e-12));
            prop_assert!((tr.r2 - base.r2).abs() <= 1e-9);
            prop_assert!(rel(tr.t1, base.t1) || (tr.t1 - base.t1).abs() < 1e-9);

            let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let sc = ols_fit(&x, &ys).unwrap();
            prop_assert!(rel(sc.beta1, base.beta1 * scale) || (sc.beta1 - base.beta1 * scale).abs() < 1e-9);
            prop_assert!(rel(sc.se1, base.se1 * scale));
            prop_assert!(rel(sc.se0, base.se0 * scale));
            prop_assert!((sc.r2 - base.r2).abs() <= 1e-9);
            prop_assert!((sc.p1 - base.p1).abs() <= 1e-9);
            prop_assert!(rel(sc.f_stat, base.f_stat) || (sc.f_stat - base.f_stat).abs() < 1e-9);
        }
    }
}
