//! Epidemic phase analysis over daily case counts, contact locations and
//! hourly mobility counts.
//!
//! The crate is organised bottom-up:
//!
//! - [`series`] - day-indexed series, calendar matching against the previous
//!   year, smoothing, hourly slicing and imputation.
//! - [`changepoint`] - exact mean-shift segmentation by dynamic programming,
//!   BIC break-count selection and residual-bootstrap intervals.
//! - [`geo`] - grouped distance, directed Hausdorff distance and the
//!   dispersion momentum series built from them.
//! - [`phases`] - fusion of count breaks and dispersion transitions into a
//!   labelled phase timeline.
//! - [`regression`] - bivariate OLS with full inference, per phase.
//! - [`policy`] - OxCGRT-style composite stringency indices.
//! - [`pipeline`] - CSV ingestion, validation, the batch pipeline, SVG
//!   figures and a synthetic data generator.

pub mod changepoint;
pub mod distributions;
pub mod geo;
pub mod phases;
pub mod pipeline;
pub mod policy;
pub mod regression;
pub mod series;

mod nonfinite;

pub use changepoint::{BreakConfig, SegmentationResult};
pub use geo::{ContactDay, GeoPoint, Metric};
pub use phases::{PhaseKind, PhaseLabel, PhaseTimeline};
pub use regression::OlsFit;
pub use series::{DailySeries, Day, HourlySeries, Mode, SliceSpec, StudyCalendar};
