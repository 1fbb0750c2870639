//! Label-free sequential detection of harmful distribution shifts.
//!
//! A deployed model's errors cannot be observed in production without labels.
//! This crate calibrates a selector `1{r̂(x) > q̂}` on labeled source data so
//! that it flags high-error observations with a bounded false discovery
//! proportion, then tracks the proportion of flagged production observations
//! with an anytime-valid confidence sequence. An alarm is raised once the
//! lower bound on that proportion (corrected for false discoveries) exceeds an
//! upper bound on the corresponding source rate.
//!
//! Module map:
//! - [`data`]: domain types and the empirical quantile.
//! - [`confidence`]: predictably-mixed empirical-Bernstein confidence sequence
//!   and the Hoeffding interval.
//! - [`estimator`]: k-NN error estimator and R² diagnostic.
//! - [`calibration`]: grid search for the `(q, q̂)` threshold pair.
//! - [`monitor`]: the quantile detectors and the mean detector.
//! - [`shiftsim`]: feature-split shifts and production stream schedules.
//! - [`harness`]: end-to-end experiments and suite metrics.

pub mod calibration;
pub mod confidence;
pub mod data;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod monitor;
pub mod shiftsim;
pub mod synthetic;

pub use error::{Error, Result};
