//! End-to-end experiments.
//!
//! One run takes a labeled source dataset and a shift scenario through the
//! whole pipeline: pool split, train/test/calibration partition, estimator fit,
//! threshold calibration, production stream, and every detector alongside its
//! labeled oracle. [`suite_metrics`] then scores detectors across many runs
//! against oracle-defined harmfulness.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, selector_metrics, GridSpec, SelectorMetrics};
use crate::data::{Dataset, Selector, StreamEvent};
use crate::error::{invalid, Error, Result};
use crate::estimator::{fit_knn, r_squared, KnnModel, DEFAULT_K};
use crate::monitor::{
    delta_from_events, MeanMonitor, MonitorConfig, QuantileMonitor, SourceStats, TrajectoryPoint,
};
use crate::shiftsim::{
    build_stream, enumerate_scenarios, split_pools, FeatureKind, Schedule, ShiftScenario,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Detector families; ground-truth harmfulness is defined per family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorFamily {
    Quantile,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    PhiQ,
    PhiQ2,
    MeanPlugin,
}

impl Detector {
    pub const ALL: [Detector; 3] = [Detector::PhiQ, Detector::PhiQ2, Detector::MeanPlugin];

    pub fn family(self) -> DetectorFamily {
        match self {
            Detector::PhiQ | Detector::PhiQ2 => DetectorFamily::Quantile,
            Detector::MeanPlugin => DetectorFamily::Mean,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Detector::PhiQ => "phi_q",
            Detector::PhiQ2 => "phi_q2",
            Detector::MeanPlugin => "mean_plugin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub grid: GridSpec,
    pub monitor: MonitorConfig,
    /// Neighbours of the built-in estimator; ignored when the source is scored.
    pub k: usize,
    pub schedule: Schedule,
    /// Train / test / calibration fractions of the retained pool. The train
    /// share belongs to the primary model and is not used here.
    pub partition: [f64; 3],
    /// Ground-truth harmfulness threshold, separate from the detectors' `eps_tol`.
    pub eps_harm: f64,
    pub keep_trajectories: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            monitor: MonitorConfig::default(),
            k: DEFAULT_K,
            schedule: Schedule::sudden_midway(4000),
            partition: [0.6, 0.2, 0.2],
            eps_harm: 0.0,
            keep_trajectories: false,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.monitor.validate()?;
        self.schedule.validate()?;
        if self.k == 0 {
            return Err(invalid("k must be positive"));
        }
        let [a, b, c] = self.partition;
        if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || b <= 0.0 || c <= 0.0 {
            return Err(invalid(
                "partition fractions must lie in [0, 1] with nonzero test and calibration shares",
            ));
        }
        if ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(invalid("partition fractions must sum to 1"));
        }
        if !(self.eps_harm >= 0.0 && self.eps_harm.is_finite()) {
            return Err(invalid("eps_harm must be >= 0"));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent stage seeds.
pub fn mix_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stage.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A lower bound against an upper bound; the detector has fired iff
/// `lower > upper + eps` for its final (maximal) lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
}

impl BoundPair {
    pub fn exceeds(&self, eps: f64) -> bool {
        self.lower > self.upper + eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRun {
    pub selector: Selector,
    pub calibration_power: f64,
    pub calibration_fdp: f64,
    pub source: SourceStats,
    pub phi_q: Option<u64>,
    pub phi_q2: Option<u64>,
    pub phi_q_bounds: BoundPair,
    pub phi_q2_bounds: BoundPair,
    /// Oracle quantile detector on `1{E > q}`; its two upper bounds coincide.
    pub oracle: Option<u64>,
    pub oracle_bounds: BoundPair,
    /// Empirical false-discovery slack on the production stream.
    pub delta: f64,
    /// Selector power and FDP on the production stream, from true errors.
    pub production_selector: SelectorMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CalibrationStatus {
    Calibrated(Box<QuantileRun>),
    Uncalibratable { best_fdp: f64, p: f64, p_hat: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_id: String,
    pub seed: u64,
    pub horizon: u64,
    pub onset: Option<u64>,
    pub estimator_r2: Option<f64>,
    pub calibration: CalibrationStatus,
    pub mean_plugin: Option<u64>,
    pub mean_plugin_bounds: BoundPair,
    pub mean_clipped: u64,
    pub oracle_mean: Option<u64>,
    pub oracle_mean_bounds: BoundPair,
    /// Ground-truth harmfulness per family at the configured `eps_harm`.
    pub ground_truth_harmful: BTreeMap<DetectorFamily, bool>,
}

impl RunReport {
    pub fn quantile(&self) -> Option<&QuantileRun> {
        match &self.calibration {
            CalibrationStatus::Calibrated(q) => Some(q),
            CalibrationStatus::Uncalibratable { .. } => None,
        }
    }

    pub fn is_calibrated(&self) -> bool {
        self.quantile().is_some()
    }

    pub fn alarm_time(&self, detector: Detector) -> Option<u64> {
        match detector {
            Detector::PhiQ => self.quantile().and_then(|q| q.phi_q),
            Detector::PhiQ2 => self.quantile().and_then(|q| q.phi_q2),
            Detector::MeanPlugin => self.mean_plugin,
        }
    }

    pub fn oracle_alarm_time(&self, family: DetectorFamily) -> Option<u64> {
        match family {
            DetectorFamily::Quantile => self.quantile().and_then(|q| q.oracle),
            DetectorFamily::Mean => self.oracle_mean,
        }
    }

    pub fn detector_bounds(&self, detector: Detector) -> Option<BoundPair> {
        match detector {
            Detector::PhiQ => self.quantile().map(|q| q.phi_q_bounds),
            Detector::PhiQ2 => self.quantile().map(|q| q.phi_q2_bounds),
            Detector::MeanPlugin => Some(self.mean_plugin_bounds),
        }
    }

    /// Whether the detector would ever have fired at tolerance `eps_tol`.
    pub fn fired_at(&self, detector: Detector, eps_tol: f64) -> bool {
        self.detector_bounds(detector)
            .is_some_and(|b| b.exceeds(eps_tol))
    }

    /// Ground-truth harmfulness for `family` at threshold `eps_harm`: the
    /// family's oracle detector, run on true errors, ever fires.
    pub fn harmful(&self, family: DetectorFamily, eps_harm: f64) -> Option<bool> {
        match family {
            DetectorFamily::Quantile => self.quantile().map(|q| q.oracle_bounds.exceeds(eps_harm)),
            DetectorFamily::Mean => Some(self.oracle_mean_bounds.exceeds(eps_harm)),
        }
    }
}

/// Runs a family's oracle detector on a labeled stream with tolerance
/// `eps_harm` and reports whether it ever fires.
///
/// `source` is the labeled calibration data the detector's source bounds come
/// from; the quantile family needs the calibrated `selector` for `q`.
pub fn ground_truth_harmful(
    events: &[StreamEvent],
    family: DetectorFamily,
    source: &Dataset,
    selector: Option<&Selector>,
    config: &MonitorConfig,
    eps_harm: f64,
) -> Result<bool> {
    let config = MonitorConfig {
        eps_tol: eps_harm,
        ..*config
    };
    let label = |e: &StreamEvent| {
        e.true_error
            .ok_or_else(|| invalid(format!("event at t = {} has no true error", e.t)))
    };
    match family {
        DetectorFamily::Quantile => {
            let selector = selector
                .ok_or_else(|| invalid("quantile harmfulness needs a calibrated selector"))?;
            let mut m = QuantileMonitor::oracle(source, selector, config)?;
            for e in events {
                label(e)?;
                m.observe_labeled(e)?;
            }
            Ok(m.alarms().phi_q.is_some())
        }
        DetectorFamily::Mean => {
            let mut m = MeanMonitor::new(source, &config)?;
            for e in events {
                m.observe(label(e)?)?;
            }
            Ok(m.alarm().is_some())
        }
    }
}

struct Partition {
    test: Dataset,
    calibration: Dataset,
}

fn partition(retained: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Partition> {
    let n = retained.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (fractions[1] * n as f64).round() as usize;
    let n_cal = (fractions[2] * n as f64).round() as usize;
    if n_test == 0 || n_cal == 0 || n_test + n_cal > n {
        return Err(invalid(format!(
            "retained pool of {n} rows is too small to partition"
        )));
    }
    let n_train = n - n_test - n_cal;
    Ok(Partition {
        test: retained.subset(&idx[n_train..n_train + n_test])?,
        calibration: retained.subset(&idx[n_train + n_test..])?,
    })
}

/// Scored calibration data and, for the built-in estimator, the model that
/// scores production events.
#[derive(Debug, Clone)]
pub struct ScoredSource {
    pub calibration: Dataset,
    /// Held-out r² of the fitted estimator; `None` for external scores.
    pub r2: Option<f64>,
    model: Option<KnnModel>,
}

impl ScoredSource {
    /// Uses existing scores as is. Otherwise fits k-NN on the first half and
    /// scores the second half, which becomes the calibration set.
    pub fn fit(calibration: &Dataset, k: usize) -> Result<Self> {
        if calibration.has_scores() {
            return Ok(Self {
                calibration: calibration.clone(),
                r2: None,
                model: None,
            });
        }
        let n_fit = calibration.len() / 2;
        if n_fit < k || calibration.len() - n_fit == 0 {
            return Err(invalid(format!(
                "calibration partition of {} rows cannot fit a {k}-NN estimator on half",
                calibration.len()
            )));
        }
        let fit_idx: Vec<usize> = (0..n_fit).collect();
        let cal_idx: Vec<usize> = (n_fit..calibration.len()).collect();
        let model = fit_knn(&calibration.subset(&fit_idx)?, k)?;
        let held_out = calibration.subset(&cal_idx)?;
        let scores = model.predict_all(&held_out)?;
        let r2 = r_squared(&scores, &held_out.errors()).ok();
        Ok(Self {
            calibration: held_out.with_scores(&scores)?,
            r2,
            model: Some(model),
        })
    }

    /// Score for a feature vector, or `None` when scores were supplied externally.
    pub fn predict(&self, features: &[f64]) -> Option<Result<f64>> {
        self.model.as_ref().map(|m| m.predict(features))
    }

    /// Fills in event scores. Only events actually drawn are scored.
    pub fn score(&self, events: &mut [StreamEvent]) -> Result<()> {
        if let Some(m) = &self.model {
            let scores: Vec<f64> = events
                .par_iter()
                .map(|e| m.predict(&e.features))
                .collect::<Result<_>>()?;
            for (e, s) in events.iter_mut().zip(scores) {
                e.score = Some(s);
            }
        }
        Ok(())
    }
}

/// Row-shuffled copy of `data`.
pub fn shuffled(data: &Dataset, seed: u64) -> Result<Dataset> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    data.subset(&idx)
}

struct Prepared {
    scenario_id: String,
    scored: ScoredSource,
    events: Vec<StreamEvent>,
}

fn prepare(
    source: &Dataset,
    scenario: Option<&ShiftScenario>,
    config: &HarnessConfig,
    seed: u64,
) -> Result<Prepared> {
    config.validate()?;
    let (retained, excluded, scenario_id) = match scenario {
        Some(sc) => {
            let sc = sc.with_seed(mix_seed(seed, 1));
            let (r, e) = split_pools(source, &sc)?;
            (r, Some(e), sc.id())
        }
        None => {
            if config.schedule.shifts() {
                return Err(invalid("a shifting schedule needs a scenario"));
            }
            (source.clone(), None, "no-shift".to_string())
        }
    };
    let parts = partition(&retained, config.partition, mix_seed(seed, 2))?;
    let scored = ScoredSource::fit(&parts.calibration, config.k)?;
    let mut events = build_stream(
        &parts.test,
        excluded.as_ref(),
        &config.schedule,
        mix_seed(seed, 3),
    )?;
    scored.score(&mut events)?;
    Ok(Prepared {
        scenario_id,
        scored,
        events,
    })
}

/// The scored production stream `run_experiment` would monitor for the same
/// arguments, with the scenario id.
pub fn simulate_stream(
    source: &Dataset,
    scenario: Option<&ShiftScenario>,
    config: &HarnessConfig,
    seed: u64,
) -> Result<(String, Vec<StreamEvent>)> {
    let p = prepare(source, scenario, config, seed)?;
    Ok((p.scenario_id, p.events))
}

/// Runs one experiment. `scenario = None` streams the unshifted source
/// (the schedule must then be [`ScheduleKind::None`](crate::shiftsim::ScheduleKind::None)).
pub fn run_experiment(
    source: &Dataset,
    scenario: Option<&ShiftScenario>,
    config: &HarnessConfig,
    seed: u64,
) -> Result<RunReport> {
    let Prepared {
        scenario_id,
        scored: scoring,
        events,
    } = prepare(source, scenario, config, seed)?;
    let scores: Vec<f64> = events
        .iter()
        .map(|e| e.score.ok_or_else(|| invalid("unscored production event")))
        .collect::<Result<_>>()?;
    let cal = &scoring.calibration;

    let mut mean_plugin = MeanMonitor::new(cal, &config.monitor)?;
    let mut oracle_mean = MeanMonitor::new(cal, &config.monitor)?;
    for (e, &s) in events.iter().zip(&scores) {
        mean_plugin.observe_score(s)?;
        oracle_mean.observe(e.true_error.unwrap_or_default())?;
    }

    let calibration = match calibrate(&config.grid, cal) {
        Ok(res) => {
            let mut plug = QuantileMonitor::calibrated(cal, res.selector, config.monitor)?;
            let mut oracle = QuantileMonitor::oracle(cal, &res.selector, config.monitor)?;
            for (e, &s) in events.iter().zip(&scores) {
                plug.observe(e, s)?;
                oracle.observe_labeled(e)?;
            }
            let prod = Dataset::new(
                events
                    .iter()
                    .zip(&scores)
                    .map(|(e, &s)| {
                        crate::data::ErrorSample::scored(
                            Vec::new(),
                            e.true_error.unwrap_or_default(),
                            s,
                        )
                    })
                    .collect(),
            )?;
            let stats = *plug.source();
            let l_q = plug.l_q();
            let oracle_stats = *oracle.source();
            CalibrationStatus::Calibrated(Box::new(QuantileRun {
                selector: res.selector,
                calibration_power: res.power,
                calibration_fdp: res.fdp,
                source: stats,
                phi_q: plug.alarms().phi_q,
                phi_q2: plug.alarms().phi_q2,
                phi_q_bounds: BoundPair {
                    lower: l_q,
                    upper: stats.u_q,
                },
                phi_q2_bounds: BoundPair {
                    lower: l_q,
                    upper: stats.u_q2,
                },
                oracle: oracle.alarms().phi_q,
                oracle_bounds: BoundPair {
                    lower: oracle.l_q(),
                    upper: oracle_stats.u_q,
                },
                delta: delta_from_events(&events, &scores, &res.selector, &stats)?,
                production_selector: selector_metrics(&res.selector, &prod)?,
                trajectory: config.keep_trajectories.then(|| plug.into_trajectory()),
            }))
        }
        Err(Error::CalibrationInfeasible { best_fdp, p, p_hat }) => {
            CalibrationStatus::Uncalibratable { best_fdp, p, p_hat }
        }
        Err(e) => return Err(e),
    };

    let mut report = RunReport {
        scenario_id,
        seed,
        horizon: config.schedule.horizon,
        onset: config.schedule.onset(),
        estimator_r2: scoring.r2,
        calibration,
        mean_plugin: mean_plugin.alarm(),
        mean_plugin_bounds: BoundPair {
            lower: mean_plugin.lower(),
            upper: mean_plugin.source_upper(),
        },
        mean_clipped: mean_plugin.clipped_count(),
        oracle_mean: oracle_mean.alarm(),
        oracle_mean_bounds: BoundPair {
            lower: oracle_mean.lower(),
            upper: oracle_mean.source_upper(),
        },
        ground_truth_harmful: BTreeMap::new(),
    };
    for family in [DetectorFamily::Quantile, DetectorFamily::Mean] {
        if let Some(h) = report.harmful(family, config.eps_harm) {
            report.ground_truth_harmful.insert(family, h);
        }
    }
    Ok(report)
}

/// Every scenario of `source` repeated `repeats` times. Seeds are derived from
/// `base_seed`, the scenario index and the repetition.
pub fn plan_runs(
    source: &Dataset,
    kinds: &[FeatureKind],
    repeats: usize,
    base_seed: u64,
) -> Result<Vec<(ShiftScenario, u64)>> {
    let scenarios = enumerate_scenarios(source, kinds, base_seed)?;
    let mut plan = Vec::with_capacity(scenarios.len() * repeats);
    for (i, sc) in scenarios.iter().enumerate() {
        for r in 0..repeats {
            plan.push((*sc, mix_seed(mix_seed(base_seed, i as u64), r as u64)));
        }
    }
    Ok(plan)
}

/// Runs a plan in parallel; output order follows the plan.
pub fn run_suite(
    source: &Dataset,
    plan: &[(ShiftScenario, u64)],
    config: &HarnessConfig,
) -> Result<Vec<RunReport>> {
    plan.par_iter()
        .map(|(sc, seed)| run_experiment(source, Some(sc), config, *seed))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteMetrics {
    pub detector: Detector,
    pub n_runs: usize,
    pub n_harmful: usize,
    pub n_alarms: usize,
    pub n_true_alarms: usize,
    /// Alarms on harmful shifts over harmful shifts; absent without harmful shifts.
    pub power: Option<f64>,
    /// Alarms on benign shifts over all alarms; absent without alarms.
    pub fdp: Option<f64>,
    /// Mean first-alarm time over true alarms.
    pub mean_detection_time: Option<f64>,
    /// Mean `|t_alarm - t_oracle|` over runs where both fired.
    pub mean_abs_time_vs_oracle: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Aggregates one detector over calibrated reports.
///
/// Uncalibratable runs are skipped for every detector so that all detectors
/// are compared on the same shifts.
pub fn suite_metrics(reports: &[RunReport], detector: Detector, eps_harm: f64) -> SuiteMetrics {
    let family = detector.family();
    let (mut n_runs, mut n_harmful, mut n_alarms, mut n_true) = (0, 0, 0, 0);
    let mut times = Vec::new();
    let mut diffs = Vec::new();
    for r in reports.iter().filter(|r| r.is_calibrated()) {
        n_runs += 1;
        let harmful = r.harmful(family, eps_harm).unwrap_or(false);
        let alarm = r.alarm_time(detector);
        n_harmful += harmful as usize;
        if let Some(t) = alarm {
            n_alarms += 1;
            if harmful {
                n_true += 1;
                times.push(t as f64);
            }
            if let Some(o) = r.oracle_alarm_time(family) {
                diffs.push((t as f64 - o as f64).abs());
            }
        }
    }
    SuiteMetrics {
        detector,
        n_runs,
        n_harmful,
        n_alarms,
        n_true_alarms: n_true,
        power: (n_harmful > 0).then(|| n_true as f64 / n_harmful as f64),
        fdp: (n_alarms > 0).then(|| (n_alarms - n_true) as f64 / n_alarms as f64),
        mean_detection_time: mean(&times),
        mean_abs_time_vs_oracle: mean(&diffs),
    }
}

/// Same as [`suite_metrics`] but with alarms decided at detector tolerance
/// `eps_tol` from the final bounds instead of the run's own tolerance.
/// Detection times are not available on this path.
pub fn suite_metrics_at(
    reports: &[RunReport],
    detector: Detector,
    eps_harm: f64,
    eps_tol: f64,
) -> SuiteMetrics {
    let family = detector.family();
    let (mut n_runs, mut n_harmful, mut n_alarms, mut n_true) = (0, 0, 0, 0);
    for r in reports.iter().filter(|r| r.is_calibrated()) {
        n_runs += 1;
        let harmful = r.harmful(family, eps_harm).unwrap_or(false);
        n_harmful += harmful as usize;
        if r.fired_at(detector, eps_tol) {
            n_alarms += 1;
            n_true += harmful as usize;
        }
    }
    SuiteMetrics {
        detector,
        n_runs,
        n_harmful,
        n_alarms,
        n_true_alarms: n_true,
        power: (n_harmful > 0).then(|| n_true as f64 / n_harmful as f64),
        fdp: (n_alarms > 0).then(|| (n_alarms - n_true) as f64 / n_alarms as f64),
        mean_detection_time: None,
        mean_abs_time_vs_oracle: None,
    }
}

/// Reports grouped into estimator-R² deciles by rank. Reports without an R²
/// form a trailing group with no range. Groups partition the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Group {
    pub r2_min: Option<f64>,
    pub r2_max: Option<f64>,
    pub indices: Vec<usize>,
}

pub fn r2_deciles(reports: &[RunReport]) -> Vec<R2Group> {
    let mut with: Vec<(usize, f64)> = reports
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.estimator_r2.map(|v| (i, v)))
        .collect();
    with.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let n = with.len();
    let mut groups = Vec::new();
    for d in 0..10 {
        let (lo, hi) = (d * n / 10, (d + 1) * n / 10);
        if lo == hi {
            continue;
        }
        let chunk = &with[lo..hi];
        groups.push(R2Group {
            r2_min: Some(chunk[0].1),
            r2_max: Some(chunk[chunk.len() - 1].1),
            indices: chunk.iter().map(|&(i, _)| i).collect(),
        });
    }
    let without: Vec<usize> = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.estimator_r2.is_none())
        .map(|(i, _)| i)
        .collect();
    if !without.is_empty() {
        groups.push(R2Group {
            r2_min: None,
            r2_max: None,
            indices: without,
        });
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub r2_min: Option<f64>,
    pub r2_max: Option<f64>,
    pub n_reports: usize,
    pub detectors: Vec<SuiteMetrics>,
}

/// Payload of an evaluation: per-detector suite metrics and their breakdown
/// by estimator R² decile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub schema_version: u32,
    pub eps_harm: f64,
    pub eps_tol: f64,
    pub n_reports: usize,
    pub n_uncalibratable: usize,
    pub median_delta: Option<f64>,
    pub detectors: Vec<SuiteMetrics>,
    pub by_r2_decile: Vec<GroupMetrics>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

pub fn summarize(reports: &[RunReport], config: &HarnessConfig) -> Evaluation {
    let eps = config.eps_harm;
    let detectors = Detector::ALL
        .iter()
        .map(|&d| suite_metrics(reports, d, eps))
        .collect();
    let by_r2_decile = r2_deciles(reports)
        .into_iter()
        .map(|g| {
            let subset: Vec<RunReport> = g.indices.iter().map(|&i| reports[i].clone()).collect();
            GroupMetrics {
                r2_min: g.r2_min,
                r2_max: g.r2_max,
                n_reports: subset.len(),
                detectors: Detector::ALL
                    .iter()
                    .map(|&d| suite_metrics(&subset, d, eps))
                    .collect(),
            }
        })
        .collect();
    let mut deltas: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.quantile().map(|q| q.delta))
        .collect();
    Evaluation {
        schema_version: SCHEMA_VERSION,
        eps_harm: eps,
        eps_tol: config.monitor.eps_tol,
        n_reports: reports.len(),
        n_uncalibratable: reports.iter().filter(|r| !r.is_calibrated()).count(),
        median_delta: median(&mut deltas),
        detectors,
        by_r2_decile,
    }
}

/// One row of a tolerance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps_harm: f64,
    pub eps_tol: f64,
    pub detectors: Vec<SuiteMetrics>,
}

/// Power/FDP over a grid of harmfulness thresholds and detector tolerances,
/// computed from the runs' final bounds.
pub fn sweep(reports: &[RunReport], eps_harm: &[f64], eps_tol: &[f64]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &h in eps_harm {
        for &t in eps_tol {
            rows.push(SweepRow {
                eps_harm: h,
                eps_tol: t,
                detectors: Detector::ALL
                    .iter()
                    .map(|&d| suite_metrics_at(reports, d, h, t))
                    .collect(),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds(lower: f64, upper: f64) -> BoundPair {
        BoundPair { lower, upper }
    }

    /// A calibrated report whose quantile-family harmfulness is `harmful`
    /// and whose `phi_q2` fired iff `alarm` is set.
    fn fake(harmful: bool, alarm: Option<u64>, oracle: Option<u64>) -> RunReport {
        let stats = SourceStats {
            n: 100,
            rate_above_q: 0.1,
            rate_true_discovery: 0.05,
            rate_false_discovery: 0.01,
            w_n: 0.1,
            w_n_fd: 0.1,
            u_q: 0.2,
            u_q2: 0.15,
        };
        let q = QuantileRun {
            selector: Selector {
                q: 0.5,
                q_hat: 0.5,
                p: 0.9,
                p_hat: 0.9,
            },
            calibration_power: 0.5,
            calibration_fdp: 0.1,
            source: stats,
            phi_q: None,
            phi_q2: alarm,
            phi_q_bounds: bounds(0.0, 0.2),
            phi_q2_bounds: bounds(if alarm.is_some() { 0.3 } else { 0.0 }, 0.15),
            oracle,
            oracle_bounds: bounds(if harmful { 0.5 } else { 0.1 }, 0.2),
            delta: 0.0,
            production_selector: SelectorMetrics {
                power: 0.5,
                fdp: 0.1,
                n_selected: 1,
                n_high_error: 1,
                n_true_discoveries: 1,
            },
            trajectory: None,
        };
        RunReport {
            scenario_id: "x".into(),
            seed: 0,
            horizon: 100,
            onset: Some(50),
            estimator_r2: Some(0.2),
            calibration: CalibrationStatus::Calibrated(Box::new(q)),
            mean_plugin: None,
            mean_plugin_bounds: bounds(0.0, 0.3),
            mean_clipped: 0,
            oracle_mean: None,
            oracle_mean_bounds: bounds(0.0, 0.3),
            ground_truth_harmful: BTreeMap::new(),
        }
    }

    #[test]
    fn suite_counts_by_hand() {
        let mut reports = Vec::new();
        // 4 harmful, 3 detected
        for i in 0..4 {
            reports.push(fake(true, (i < 3).then_some(60 + i), Some(55)));
        }
        // 6 benign, 1 detected
        for i in 0..6 {
            reports.push(fake(false, (i == 0).then_some(90), None));
        }
        let m = suite_metrics(&reports, Detector::PhiQ2, 0.0);
        assert_eq!(m.power, Some(0.75));
        assert_eq!(m.fdp, Some(0.25));
        assert_eq!(m.mean_detection_time, Some(61.0));
        assert_eq!(m.mean_abs_time_vs_oracle, Some(6.0));
    }

    #[test]
    fn silent_detector_has_zero_power_and_no_fdp() {
        let reports: Vec<RunReport> = (0..3).map(|_| fake(true, None, Some(10))).collect();
        let m = suite_metrics(&reports, Detector::PhiQ2, 0.0);
        assert_eq!(m.power, Some(0.0));
        assert_eq!(m.fdp, None);
        assert_eq!(m.mean_detection_time, None);
    }

    #[test]
    fn all_detected_gives_full_power() {
        let reports: Vec<RunReport> = (0..3).map(|_| fake(true, Some(70), Some(60))).collect();
        let m = suite_metrics(&reports, Detector::PhiQ2, 0.0);
        assert_eq!((m.power, m.fdp), (Some(1.0), Some(0.0)));
    }

    #[test]
    fn harmful_set_shrinks_with_threshold() {
        let reports: Vec<RunReport> = (0..5).map(|i| fake(i % 2 == 0, None, None)).collect();
        let at = |eps: f64| -> Vec<bool> {
            reports
                .iter()
                .map(|r| r.harmful(DetectorFamily::Quantile, eps).unwrap())
                .collect()
        };
        let (a, b) = (at(0.0), at(0.35));
        for (x, y) in a.iter().zip(&b) {
            assert!(!*y || *x);
        }
        assert!(at(1.0).iter().all(|h| !h));
    }

    #[test]
    fn deciles_partition_reports() {
        let mut reports: Vec<RunReport> = (0..23)
            .map(|i| {
                let mut r = fake(false, None, None);
                r.estimator_r2 = Some((i * 7 % 23) as f64 / 23.0);
                r
            })
            .collect();
        reports[4].estimator_r2 = None;
        let groups = r2_deciles(&reports);
        let mut all: Vec<usize> = groups.iter().flat_map(|g| g.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(groups.last().unwrap().r2_min.is_none());
    }

    #[test]
    fn seeds_mix() {
        assert_ne!(mix_seed(0, 1), mix_seed(0, 2));
        assert_ne!(mix_seed(1, 1), mix_seed(0, 1));
        assert_eq!(mix_seed(7, 3), mix_seed(7, 3));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
