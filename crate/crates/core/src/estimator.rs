//! Error estimators: the built-in k-nearest-neighbour regressor and the
//! external-score escape hatch.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_K: usize = 10;

/// k-NN regressor on z-scored features, predicting the mean true error of the
/// `k` nearest training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    dim: usize,
    /// Row-major standardized training features.
    train_features: Vec<f64>,
    train_errors: Vec<f64>,
    feature_means: Vec<f64>,
    feature_stds: Vec<f64>,
}

/// Fits a k-NN model. Constant feature columns get `std = 1`.
pub fn fit_knn(train: &Dataset, k: usize) -> Result<KnnModel> {
    let n = train.len();
    if k == 0 {
        return Err(invalid("k must be positive"));
    }
    if k > n {
        return Err(invalid(format!("k = {k} exceeds training size {n}")));
    }
    let dim = train.dim();
    let mut means = vec![0.0; dim];
    for s in train {
        for (m, x) in means.iter_mut().zip(&s.features) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut stds = vec![0.0; dim];
    for s in train {
        for ((v, x), m) in stds.iter_mut().zip(&s.features).zip(&means) {
            *v += (x - m) * (x - m);
        }
    }
    for v in stds.iter_mut() {
        let sd = (*v / n as f64).sqrt();
        *v = if sd > 1e-12 { sd } else { 1.0 };
    }

    let mut features = Vec::with_capacity(n * dim);
    for s in train {
        features.extend(
            s.features
                .iter()
                .zip(means.iter().zip(&stds))
                .map(|(x, (m, sd))| (x - m) / sd),
        );
    }
    Ok(KnnModel {
        k,
        dim,
        train_features: features,
        train_errors: train.errors(),
        feature_means: means,
        feature_stds: stds,
    })
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_means(&self) -> &[f64] {
        &self.feature_means
    }

    pub fn feature_stds(&self) -> &[f64] {
        &self.feature_stds
    }

    /// Mean error of the `k` nearest training rows under Euclidean distance in
    /// standardized space. Distance ties go to the lower training index.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(invalid(format!(
                "query has dimension {}, model expects {}",
                x.len(),
                self.dim
            )));
        }
        let z: Vec<f64> = x
            .iter()
            .zip(self.feature_means.iter().zip(&self.feature_stds))
            .map(|(v, (m, sd))| (v - m) / sd)
            .collect();
        let mut dist: Vec<(f64, usize)> = self
            .train_features
            .chunks_exact(self.dim.max(1))
            .take(self.train_errors.len())
            .enumerate()
            .map(|(i, row)| {
                let d2 = row
                    .iter()
                    .zip(&z)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
        }
        let sum: f64 = dist[..self.k]
            .iter()
            .map(|&(_, i)| self.train_errors[i])
            .sum();
        Ok(sum / self.k as f64)
    }

    pub fn predict_all(&self, rows: &Dataset) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        rows.samples()
            .par_iter()
            .map(|s| self.predict(&s.features))
            .collect()
    }
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
///
/// Used only as an estimator-quality diagnostic.
pub fn r_squared(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() || actual.is_empty() {
        return Err(invalid(format!(
            "r_squared needs equal nonzero lengths, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::Degenerate(
            "r_squared undefined for constant actual values".into(),
        ));
    }
    let ss_res: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (a - p) * (a - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Reads the `score` column of a CSV in file order.
pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    crate::io::read_score_column(path.as_ref())
}
