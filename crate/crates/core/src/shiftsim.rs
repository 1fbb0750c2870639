//! Synthetic shift generation.
//!
//! Shifts are built per feature: a continuous feature is split at its median
//! and most of one side is held out; a categorical feature holds out one
//! category. Production streams then draw from the retained test pool and
//! reintroduce the held-out rows either suddenly or along a sigmoid.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{empirical_quantile, Dataset, StreamEvent};
use crate::error::{invalid, Result};

/// Scenarios whose held-out subgroup is smaller than this are dropped.
pub const MIN_SUBGROUP: usize = 10;
pub const DEFAULT_CONTINUOUS_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Rows strictly above the median.
    AboveMedian,
    /// Rows at or below the median.
    BelowMedian,
    /// Rows whose feature equals this category code.
    Category(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftScenario {
    pub feature_index: usize,
    pub split: SplitKind,
    pub ablation_fraction: f64,
    pub seed: u64,
}

impl ShiftScenario {
    /// Short stable identifier, e.g. `f3-above` or `f1-cat2`.
    pub fn id(&self) -> String {
        match self.split {
            SplitKind::AboveMedian => format!("f{}-above", self.feature_index),
            SplitKind::BelowMedian => format!("f{}-below", self.feature_index),
            SplitKind::Category(c) => format!("f{}-cat{}", self.feature_index, c),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

fn column(data: &Dataset, j: usize) -> Vec<f64> {
    data.iter().map(|s| s.features[j]).collect()
}

fn side_indices(data: &Dataset, scenario: &ShiftScenario) -> Result<Vec<usize>> {
    let j = scenario.feature_index;
    if j >= data.dim() {
        return Err(invalid(format!(
            "feature index {j} out of range for dimension {}",
            data.dim()
        )));
    }
    let col = column(data, j);
    let pick: Box<dyn Fn(f64) -> bool> = match scenario.split {
        SplitKind::AboveMedian => {
            let m = empirical_quantile(0.5, &col)?;
            Box::new(move |v| v > m)
        }
        SplitKind::BelowMedian => {
            let m = empirical_quantile(0.5, &col)?;
            Box::new(move |v| v <= m)
        }
        SplitKind::Category(c) => Box::new(move |v| v == c),
    };
    Ok(col
        .iter()
        .enumerate()
        .filter(|(_, &v)| pick(v))
        .map(|(i, _)| i)
        .collect())
}

fn held_out_count(side: usize, fraction: f64) -> usize {
    ((fraction * side as f64) + 1e-9).floor() as usize
}

/// Two scenarios per continuous feature, one per category of each
/// categorical feature. Scenarios holding out fewer than [`MIN_SUBGROUP`]
/// rows are dropped. Every scenario gets `seed`.
pub fn enumerate_scenarios(
    data: &Dataset,
    kinds: &[FeatureKind],
    seed: u64,
) -> Result<Vec<ShiftScenario>> {
    if kinds.len() != data.dim() {
        return Err(invalid(format!(
            "{} feature kinds declared for {} features",
            kinds.len(),
            data.dim()
        )));
    }
    let mut out = Vec::new();
    for (j, kind) in kinds.iter().enumerate() {
        let candidates: Vec<ShiftScenario> = match kind {
            FeatureKind::Continuous => [SplitKind::AboveMedian, SplitKind::BelowMedian]
                .into_iter()
                .map(|split| ShiftScenario {
                    feature_index: j,
                    split,
                    ablation_fraction: DEFAULT_CONTINUOUS_FRACTION,
                    seed,
                })
                .collect(),
            FeatureKind::Categorical => {
                let mut cats = column(data, j);
                cats.sort_by(f64::total_cmp);
                cats.dedup();
                cats.into_iter()
                    .map(|c| ShiftScenario {
                        feature_index: j,
                        split: SplitKind::Category(c),
                        ablation_fraction: 1.0,
                        seed,
                    })
                    .collect()
            }
        };
        for sc in candidates {
            let side = side_indices(data, &sc)?.len();
            if held_out_count(side, sc.ablation_fraction) >= MIN_SUBGROUP {
                out.push(sc);
            }
        }
    }
    Ok(out)
}

/// Splits `data` into `(retained, excluded)`.
///
/// Of the rows on the scenario's side, `⌊fraction · side⌋` chosen uniformly
/// with the scenario seed are excluded. Both pools keep the input row order.
pub fn split_pools(data: &Dataset, scenario: &ShiftScenario) -> Result<(Dataset, Dataset)> {
    if !(scenario.ablation_fraction > 0.0 && scenario.ablation_fraction <= 1.0) {
        return Err(invalid(format!(
            "ablation fraction {} outside (0, 1]",
            scenario.ablation_fraction
        )));
    }
    let mut side = side_indices(data, scenario)?;
    let take = held_out_count(side.len(), scenario.ablation_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    side.shuffle(&mut rng);
    let mut excluded_mask = vec![false; data.len()];
    for &i in &side[..take] {
        excluded_mask[i] = true;
    }
    let (excluded, retained): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| excluded_mask[i]);
    if excluded.is_empty() {
        return Err(invalid(format!(
            "scenario {} excludes no rows",
            scenario.id()
        )));
    }
    if retained.is_empty() {
        return Err(invalid(format!(
            "scenario {} retains no rows",
            scenario.id()
        )));
    }
    Ok((data.subset(&retained)?, data.subset(&excluded)?))
}

/// `β_t = 1 / (1 + exp(-(t - t0)))`.
pub fn sigmoid_mixture(t: i64, t0: i64) -> f64 {
    1.0 / (1.0 + (-((t - t0) as f64)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    None,
    /// Every event from time `onset` on comes from the held-out pool.
    Sudden {
        onset: u64,
    },
    /// After `t0`, each event comes from the held-out pool with probability
    /// `sigmoid_mixture(t, t0)`.
    Sigmoid {
        t0: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub horizon: u64,
}

impl Schedule {
    pub fn none(horizon: u64) -> Self {
        Self {
            kind: ScheduleKind::None,
            horizon,
        }
    }

    /// Sudden shift at mid-horizon.
    pub fn sudden_midway(horizon: u64) -> Self {
        Self {
            kind: ScheduleKind::Sudden {
                onset: (horizon / 2).max(1),
            },
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("schedule horizon must be positive"));
        }
        let point = match self.kind {
            ScheduleKind::None => return Ok(()),
            ScheduleKind::Sudden { onset } => onset,
            ScheduleKind::Sigmoid { t0 } => t0,
        };
        if point == 0 || point > self.horizon {
            return Err(invalid(format!(
                "shift time {point} outside [1, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn shifts(&self) -> bool {
        !matches!(self.kind, ScheduleKind::None)
    }

    /// Onset time, if the schedule shifts.
    pub fn onset(&self) -> Option<u64> {
        match self.kind {
            ScheduleKind::None => None,
            ScheduleKind::Sudden { onset } => Some(onset),
            ScheduleKind::Sigmoid { t0 } => Some(t0),
        }
    }
}

/// Draws a production stream of `schedule.horizon` events with replacement.
///
/// Events carry the source rows' true errors, and their scores when the pools
/// are scored.
pub fn build_stream(
    retained_test: &Dataset,
    excluded: Option<&Dataset>,
    schedule: &Schedule,
    seed: u64,
) -> Result<Vec<StreamEvent>> {
    schedule.validate()?;
    if schedule.shifts() && excluded.is_none() {
        return Err(invalid(
            "a shifting schedule needs a nonempty held-out pool",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(schedule.horizon as usize);
    for t in 1..=schedule.horizon {
        let from_excluded = match schedule.kind {
            ScheduleKind::None => false,
            ScheduleKind::Sudden { onset } => t >= onset,
            ScheduleKind::Sigmoid { t0 } => {
                t > t0 && rng.random::<f64>() < sigmoid_mixture(t as i64, t0 as i64)
            }
        };
        let pool = match (from_excluded, excluded) {
            (true, Some(ex)) => ex,
            _ => retained_test,
        };
        let row = &pool.samples()[rng.random_range(0..pool.len())];
        events.push(StreamEvent {
            t,
            features: row.features.clone(),
            true_error: Some(row.true_error),
            score: row.est_score,
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ErrorSample;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn one_d(values: impl IntoIterator<Item = f64>) -> Dataset {
        Dataset::new(
            values
                .into_iter()
                .map(|v| ErrorSample::new(vec![v], 0.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid_mixture(7, 7), 0.5);
        assert_relative_eq!(
            sigmoid_mixture(5005, 5000),
            1.0 / (1.0 + (-5f64).exp()),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            sigmoid_mixture(5005, 5000),
            0.993_307_149_075_715_3,
            max_relative = 1e-12
        );
        for t in 0..40 {
            assert_relative_eq!(
                sigmoid_mixture(t, 20) + sigmoid_mixture(40 - t, 20),
                1.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn scenario_counts() {
        let rows: Vec<ErrorSample> = (0..100)
            .map(|i| ErrorSample::new(vec![i as f64, (i * 7 % 13) as f64, (i % 17) as f64], 0.1))
            .collect();
        let d = Dataset::new(rows).unwrap();
        let kinds = [FeatureKind::Continuous; 3];
        assert_eq!(enumerate_scenarios(&d, &kinds, 0).unwrap().len(), 6);

        let rows: Vec<ErrorSample> = (0..100)
            .map(|i| ErrorSample::new(vec![(i % 4) as f64], 0.1))
            .collect();
        let d = Dataset::new(rows).unwrap();
        assert_eq!(
            enumerate_scenarios(&d, &[FeatureKind::Categorical], 0)
                .unwrap()
                .len(),
            4
        );
    }

    #[test]
    fn small_category_dropped() {
        let mut rows: Vec<ErrorSample> = (0..40)
            .map(|i| ErrorSample::new(vec![(i % 2) as f64], 0.1))
            .collect();
        rows.extend((0..5).map(|_| ErrorSample::new(vec![9.0], 0.1)));
        let d = Dataset::new(rows).unwrap();
        let sc = enumerate_scenarios(&d, &[FeatureKind::Categorical], 0).unwrap();
        assert_eq!(sc.len(), 2);
        assert!(sc.iter().all(|s| s.split != SplitKind::Category(9.0)));
    }

    #[test]
    fn median_split_by_hand() {
        let d = one_d((1..=10).map(f64::from));
        let sc = ShiftScenario {
            feature_index: 0,
            split: SplitKind::AboveMedian,
            ablation_fraction: 0.8,
            seed: 3,
        };
        let (retained, excluded) = split_pools(&d, &sc).unwrap();
        assert_eq!(excluded.len(), 4);
        assert_eq!(retained.len(), 6);
        assert!(excluded.iter().all(|s| s.features[0] > 5.0));
        // reproducible
        assert_eq!(split_pools(&d, &sc).unwrap().1, excluded);
    }

    #[test]
    fn categorical_split_takes_whole_category() {
        let d = one_d(
            (0..30)
                .map(|i| if i % 5 == 0 { 1.0 } else { 0.0 })
                .chain([1.0; 6]),
        );
        let sc = ShiftScenario {
            feature_index: 0,
            split: SplitKind::Category(1.0),
            ablation_fraction: 1.0,
            seed: 0,
        };
        let (retained, excluded) = split_pools(&d, &sc).unwrap();
        assert_eq!(excluded.len(), 12);
        assert!(retained.iter().all(|s| s.features[0] == 0.0));
    }

    #[test]
    fn schedules() {
        let a = one_d([0.0, 0.0, 0.0]);
        let b = one_d([1.0, 1.0]);
        let none = build_stream(&a, Some(&b), &Schedule::none(100), 1).unwrap();
        assert!(none.iter().all(|e| e.features[0] == 0.0));
        let sudden = Schedule {
            kind: ScheduleKind::Sudden { onset: 40 },
            horizon: 100,
        };
        let s = build_stream(&a, Some(&b), &sudden, 1).unwrap();
        assert_eq!(s.len(), 100);
        for e in &s {
            assert_eq!(e.features[0] == 1.0, e.t >= 40);
            assert_eq!(e.true_error, Some(0.0));
        }
        assert!(build_stream(&a, None, &sudden, 1).is_err());
        let bad = Schedule {
            kind: ScheduleKind::Sudden { onset: 101 },
            horizon: 100,
        };
        assert!(build_stream(&a, Some(&b), &bad, 1).is_err());
    }

    #[test]
    fn sigmoid_stream_matches_expected_mixture() {
        let a = one_d([0.0]);
        let b = one_d([1.0]);
        let sched = Schedule {
            kind: ScheduleKind::Sigmoid { t0: 5000 },
            horizon: 10_000,
        };
        let s = build_stream(&a, Some(&b), &sched, 11).unwrap();
        let window: Vec<&StreamEvent> = s.iter().filter(|e| e.t >= 6000).collect();
        let observed =
            window.iter().filter(|e| e.features[0] == 1.0).count() as f64 / window.len() as f64;
        let expected = window
            .iter()
            .map(|e| sigmoid_mixture(e.t as i64, 5000))
            .sum::<f64>()
            / window.len() as f64;
        assert!((observed - expected).abs() < 0.01);
        // before t0 nothing is reintroduced
        assert!(s
            .iter()
            .filter(|e| e.t <= 5000)
            .all(|e| e.features[0] == 0.0));
        // around t0 the mixture is partial
        let near: usize = s
            .iter()
            .filter(|e| (4990..5010).contains(&e.t) && e.features[0] == 1.0)
            .count();
        assert!(near > 0 && near < 20);
    }

    #[test]
    fn no_shift_stream_converges_to_pool() {
        let pool = Dataset::new(
            (0..50)
                .map(|i| ErrorSample::new(vec![0.0], i as f64 / 49.0))
                .collect(),
        )
        .unwrap();
        let mut pool_err = pool.errors();
        pool_err.sort_by(f64::total_cmp);
        let ks = |horizon: u64| {
            let s = build_stream(&pool, None, &Schedule::none(horizon), 5).unwrap();
            let mut e: Vec<f64> = s.iter().map(|e| e.true_error.unwrap()).collect();
            e.sort_by(f64::total_cmp);
            pool_err
                .iter()
                .map(|&x| {
                    let f_pool = pool_err.iter().filter(|&&v| v <= x).count() as f64 / 50.0;
                    let f_s = e.iter().filter(|&&v| v <= x).count() as f64 / e.len() as f64;
                    (f_pool - f_s).abs()
                })
                .fold(0.0, f64::max)
        };
        assert!(ks(20_000) < ks(100));
        assert!(ks(20_000) < 0.02);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(
            values in prop::collection::vec(-100.0f64..100.0, 20..120),
            above in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let d = Dataset::new(values.iter().enumerate()
                .map(|(i, &v)| ErrorSample::new(vec![v, i as f64], 0.0)).collect()).unwrap();
            let sc = ShiftScenario {
                feature_index: 0,
                split: if above { SplitKind::AboveMedian } else { SplitKind::BelowMedian },
                ablation_fraction: 0.8,
                seed,
            };
            if let Ok((r, e)) = split_pools(&d, &sc) {
                prop_assert_eq!(r.len() + e.len(), d.len());
                let mut ids: Vec<usize> = r.iter().chain(e.iter()).map(|s| s.features[1] as usize).collect();
                ids.sort_unstable();
                prop_assert_eq!(ids, (0..d.len()).collect::<Vec<_>>());
            }
        }

        #[test]
        fn streams_are_reproducible(seed in any::<u64>()) {
            let a = one_d((0..7).map(f64::from));
            let b = one_d((10..13).map(f64::from));
            let sched = Schedule { kind: ScheduleKind::Sigmoid { t0: 30 }, horizon: 60 };
            prop_assert_eq!(
                build_stream(&a, Some(&b), &sched, seed).unwrap(),
                build_stream(&a, Some(&b), &sched, seed).unwrap()
            );
        }
    }
}
