//! Domain types shared across the pipeline and the empirical quantile that
//! both calibration thresholds are built on.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One labeled source observation.
///
/// `true_error` is the monitored loss, already normalized to `[0, 1]`.
/// `est_score` is the error estimator's output; only its ordering matters
/// downstream, so it is not range restricted. It is `None` until an
/// estimator has scored the row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub features: Vec<f64>,
    pub true_error: f64,
    pub est_score: Option<f64>,
}

impl ErrorSample {
    pub fn new(features: Vec<f64>, true_error: f64) -> Self {
        Self {
            features,
            true_error,
            est_score: None,
        }
    }

    pub fn scored(features: Vec<f64>, true_error: f64, est_score: f64) -> Self {
        Self {
            features,
            true_error,
            est_score: Some(est_score),
        }
    }
}

/// A nonempty, ordered collection of samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<ErrorSample>,
}

impl Dataset {
    /// Validates and wraps `samples`.
    ///
    /// Rejects empty input, mixed feature dimensions, non-finite values and
    /// errors outside `[0, 1]`.
    pub fn new(samples: Vec<ErrorSample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| invalid("dataset must contain at least one sample"))?;
        let dim = first.features.len();
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(invalid(format!(
                    "row {i}: feature dimension {} differs from {dim}",
                    s.features.len()
                )));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("row {i}: non-finite feature value")));
            }
            check_error(s.true_error).map_err(|e| invalid(format!("row {i}: {e}")))?;
            if let Some(score) = s.est_score {
                if !score.is_finite() {
                    return Err(invalid(format!("row {i}: non-finite score")));
                }
            }
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].features.len()
    }

    pub fn samples(&self) -> &[ErrorSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<ErrorSample> {
        self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ErrorSample> {
        self.samples.iter()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.true_error).collect()
    }

    pub fn has_scores(&self) -> bool {
        self.samples.iter().all(|s| s.est_score.is_some())
    }

    /// Estimated scores in row order; fails if any row is unscored.
    pub fn scores(&self) -> Result<Vec<f64>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.est_score
                    .ok_or_else(|| invalid(format!("row {i} has no estimated score")))
            })
            .collect()
    }

    /// Returns a copy with `scores` attached row by row.
    pub fn with_scores(&self, scores: &[f64]) -> Result<Self> {
        if scores.len() != self.len() {
            return Err(invalid(format!(
                "{} scores supplied for {} rows",
                scores.len(),
                self.len()
            )));
        }
        let samples = self
            .samples
            .iter()
            .zip(scores)
            .map(|(s, &score)| ErrorSample {
                est_score: Some(score),
                ..s.clone()
            })
            .collect();
        Dataset::new(samples)
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| invalid(format!("row index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples)
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a ErrorSample;
    type IntoIter = std::slice::Iter<'a, ErrorSample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// Calibrated threshold pair. `q` thresholds true errors, `q_hat` thresholds
/// estimated scores; `p` and `p_hat` are the quantile levels they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selector {
    pub q: f64,
    pub q_hat: f64,
    pub p: f64,
    pub p_hat: f64,
}

impl Selector {
    /// The high-error flag `1{score > q_hat}`. Ties are not selected.
    #[inline]
    pub fn selects(&self, score: f64) -> bool {
        score > self.q_hat
    }

    #[inline]
    pub fn is_high_error(&self, error: f64) -> bool {
        error > self.q
    }

    /// The selector a labeled oracle would use: scores are true errors and
    /// `q_hat = q`, so it flags exactly the observations with `E > q`.
    pub fn oracle(&self) -> Selector {
        Selector {
            q_hat: self.q,
            p_hat: self.p,
            ..*self
        }
    }
}

/// One production observation.
///
/// `true_error` is carried only for oracle and diagnostic evaluation; the
/// label-free detectors never read it. `score` holds a precomputed estimator
/// output when one is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub t: u64,
    pub features: Vec<f64>,
    pub true_error: Option<f64>,
    pub score: Option<f64>,
}

pub(crate) fn check_error(e: f64) -> Result<()> {
    if e.is_finite() && (0.0..=1.0).contains(&e) {
        Ok(())
    } else {
        Err(invalid(format!("error value {e} outside [0, 1]")))
    }
}

/// 1-indexed rank `⌈p·n⌉`, clamped to `[1, n]`.
///
/// Products that land within rounding noise of an integer are treated as that
/// integer, so `0.55 · 20` gives rank 11 rather than 12.
pub fn quantile_rank(p: f64, n: usize) -> usize {
    let x = p * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * x.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, n)
}

/// Empirical quantile `Q(p, values)`: the `⌈p·n⌉`-th smallest element.
///
/// No interpolation, so the result is always a member of `values`.
pub fn empirical_quantile(p: f64, values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("empirical quantile of an empty multiset"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("quantile level {p} outside (0, 1)")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid("empirical quantile of a multiset containing NaN"));
    }
    let k = quantile_rank(p, values.len());
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}
