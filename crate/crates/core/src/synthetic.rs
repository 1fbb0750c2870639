//! Synthetic labeled datasets for experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ErrorSample};
use crate::error::{invalid, Result};
use crate::shiftsim::FeatureKind;

/// One binary feature `f0` flags a subgroup whose errors sit on `[0.2, 0.4]`
/// while the rest sit on `[0, 0.2]`, so the subgroup's mean error is three
/// times the rest. Features `f1..` are standard normal noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupFailure {
    pub n: usize,
    pub noise_dims: usize,
    pub subgroup_rate: f64,
}

impl Default for SubgroupFailure {
    fn default() -> Self {
        Self {
            n: 10_000,
            noise_dims: 3,
            subgroup_rate: 0.22,
        }
    }
}

impl SubgroupFailure {
    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        let mut k = vec![FeatureKind::Categorical];
        k.extend(std::iter::repeat_n(
            FeatureKind::Continuous,
            self.noise_dims,
        ));
        k
    }

    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        self.generate_with_rate(self.subgroup_rate, seed)
    }

    /// Same generator with the subgroup drawn at `rate`, for covariate shift.
    pub fn generate_with_rate(&self, rate: f64, seed: u64) -> Result<Dataset> {
        if self.n == 0 || !(0.0..=1.0).contains(&rate) {
            return Err(invalid("need n > 0 and a subgroup rate in [0, 1]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Beta::new(2.0, 2.0).expect("valid beta parameters");
        let samples = (0..self.n)
            .map(|_| {
                let flag = rng.random_bool(rate);
                let mut features = Vec::with_capacity(self.noise_dims + 1);
                features.push(if flag { 1.0 } else { 0.0 });
                for _ in 0..self.noise_dims {
                    features.push(rng.sample(StandardNormal));
                }
                let u: f64 = shape.sample(&mut rng);
                let e = if flag { 0.2 + 0.2 * u } else { 0.2 * u };
                ErrorSample::new(features, e)
            })
            .collect();
        Dataset::new(samples)
    }
}

/// Feature-split benchmark with a deliberately hard-to-learn error surface.
///
/// Feature `f0` is a categorical code in `0..levels`; the next `informative`
/// features are standard normal and drive the errors; the last `noise_dims`
/// features carry no signal. A row is "hard" with probability
/// `sigmoid(bias + c[f0] + Σ w_j x_j)`; hard rows draw errors on `[0.05, 0.4]`,
/// the rest on `[0, 0.2]`. The overlap keeps a k-NN fit below r² = 0.3. The effects `c` and `w` are drawn per dataset seed
/// from `N(0, slope²)`, so different seeds give shifts of varied severity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSplitBench {
    pub n: usize,
    pub levels: usize,
    pub informative: usize,
    pub noise_dims: usize,
    pub slope: f64,
    pub bias: f64,
}

impl Default for FeatureSplitBench {
    fn default() -> Self {
        Self {
            n: 100_000,
            levels: 4,
            informative: 3,
            noise_dims: 3,
            slope: 2.0,
            bias: -2.5,
        }
    }
}

/// Effects drawn for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEffects {
    pub category: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BenchEffects {
    /// Probability that a row with features `x` is hard.
    pub fn hard_probability(&self, x: &[f64]) -> f64 {
        let c = if self.category.is_empty() {
            0.0
        } else {
            self.category[x[0] as usize]
        };
        let offset = usize::from(!self.category.is_empty());
        let s: f64 = self
            .weights
            .iter()
            .zip(&x[offset..])
            .map(|(w, v)| w * v)
            .sum();
        1.0 / (1.0 + (-(self.bias + c + s)).exp())
    }
}

impl FeatureSplitBench {
    pub fn dim(&self) -> usize {
        usize::from(self.levels > 0) + self.informative + self.noise_dims
    }

    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        let mut k = Vec::with_capacity(self.dim());
        if self.levels > 0 {
            k.push(FeatureKind::Categorical);
        }
        k.extend(std::iter::repeat_n(
            FeatureKind::Continuous,
            self.informative + self.noise_dims,
        ));
        k
    }

    pub fn effects(&self, seed: u64) -> BenchEffects {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_EFFE);
        let mut draw = |count: usize| -> Vec<f64> {
            (0..count)
                .map(|_| self.slope * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let category = draw(self.levels);
        let weights = draw(self.informative);
        BenchEffects {
            category,
            weights,
            bias: self.bias,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        if self.n == 0 || self.dim() == 0 || !self.slope.is_finite() || !self.bias.is_finite() {
            return Err(invalid(
                "bench needs n > 0, features, and finite slope and bias",
            ));
        }
        let effects = self.effects(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hard = Beta::new(2.0, 2.0).expect("valid beta parameters");
        let easy = Beta::new(1.0, 3.0).expect("valid beta parameters");
        let samples = (0..self.n)
            .map(|_| {
                let mut features = Vec::with_capacity(self.dim());
                if self.levels > 0 {
                    features.push(rng.random_range(0..self.levels) as f64);
                }
                for _ in 0..self.informative + self.noise_dims {
                    features.push(rng.sample(StandardNormal));
                }
                let e = if rng.random_bool(effects.hard_probability(&features)) {
                    0.05 + 0.35 * hard.sample(&mut rng)
                } else {
                    0.2 * easy.sample(&mut rng)
                };
                ErrorSample::new(features, e)
            })
            .collect();
        Dataset::new(samples)
    }

    /// Generates and attaches the true errors as scores.
    pub fn generate_perfect(&self, seed: u64) -> Result<Dataset> {
        let d = self.generate(seed)?;
        d.with_scores(&d.errors())
    }
}
