//! Sequential detectors.
//!
//! [`QuantileMonitor`] tracks the production rate of selected observations
//! `1{r̂(x) > q̂}` with a lower confidence sequence, subtracts an upper bound on
//! the source false-discovery rate, and compares the result `L̂_q` against two
//! source upper bounds:
//!
//! - `Û_q = (1/n) Σ 1{E⁰ > q} + w_n` (alarm `phi_q`),
//! - `Û²_q = (1/n) Σ 1{S = 1, E⁰ > q} + w_n` (alarm `phi_q2`).
//!
//! Since `Û²_q ≤ Û_q`, `phi_q2` always fires no later than `phi_q`.
//!
//! [`MeanMonitor`] is the mean detector: a lower confidence sequence on the
//! running mean of the stream against `mean(E⁰) + w_n`. Fed estimated scores
//! it is the plug-in detector; fed true errors it is the labeled oracle.

use serde::{Deserialize, Serialize};

use crate::confidence::{hoeffding_halfwidth, PmEbState};
use crate::data::{check_error, Dataset, Selector, StreamEvent};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// Miscoverage of the source upper bounds.
    pub alpha_source: f64,
    /// Total production miscoverage, split as `α₁ + α₂`.
    pub alpha_prod: f64,
    /// Fraction of `alpha_prod` given to the production confidence sequence (`α₁`).
    pub alpha_split: f64,
    pub eps_tol: f64,
    /// Slack subtracted from `L̂_q` for violations of the false-discovery
    /// stability assumption. Zero gives the plain detectors.
    pub delta_corr: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            alpha_source: 0.05,
            alpha_prod: 0.05,
            alpha_split: 0.5,
            eps_tol: 0.0,
            delta_corr: 0.0,
        }
    }
}

impl MonitorConfig {
    pub fn alpha_1(&self) -> f64 {
        self.alpha_prod * self.alpha_split
    }

    pub fn alpha_2(&self) -> f64 {
        self.alpha_prod * (1.0 - self.alpha_split)
    }

    pub fn validate(&self) -> Result<()> {
        let open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} = {v} outside (0, 1)")))
            }
        };
        open("alpha_source", self.alpha_source)?;
        open("alpha_prod", self.alpha_prod)?;
        open("alpha_split", self.alpha_split)?;
        if !(self.eps_tol >= 0.0 && self.eps_tol.is_finite()) {
            return Err(invalid(format!("eps_tol = {} must be >= 0", self.eps_tol)));
        }
        if !(self.delta_corr >= 0.0 && self.delta_corr.is_finite()) {
            return Err(invalid(format!(
                "delta_corr = {} must be >= 0",
                self.delta_corr
            )));
        }
        Ok(())
    }
}

/// Source-side rates and bounds for the quantile detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub n: usize,
    /// `(1/n) Σ 1{E⁰ > q}`
    pub rate_above_q: f64,
    /// `(1/n) Σ 1{S = 1, E⁰ > q}`
    pub rate_true_discovery: f64,
    /// `(1/n) Σ 1{S = 1, E⁰ ≤ q}`
    pub rate_false_discovery: f64,
    /// Hoeffding half-width at `alpha_source`.
    pub w_n: f64,
    /// Hoeffding half-width at `α₂`, used in the false-discovery term.
    pub w_n_fd: f64,
    pub u_q: f64,
    pub u_q2: f64,
}

impl SourceStats {
    /// Upper bound on the source false-discovery rate, `rate_fd + w_n(α₂)`.
    pub fn false_discovery_term(&self) -> f64 {
        self.rate_false_discovery + self.w_n_fd
    }
}

/// Computes [`SourceStats`] on scored, labeled source data.
pub fn source_statistics(
    source: &Dataset,
    selector: &Selector,
    config: &MonitorConfig,
) -> Result<SourceStats> {
    config.validate()?;
    let scores = source.scores()?;
    let n = source.len();
    let (mut above, mut td, mut fd) = (0usize, 0usize, 0usize);
    for (s, &score) in source.iter().zip(&scores) {
        let high = selector.is_high_error(s.true_error);
        let sel = selector.selects(score);
        above += high as usize;
        td += (sel && high) as usize;
        fd += (sel && !high) as usize;
    }
    let nf = n as f64;
    let w_n = hoeffding_halfwidth(n, config.alpha_source)?;
    let w_n_fd = hoeffding_halfwidth(n, config.alpha_2())?;
    let rate_above_q = above as f64 / nf;
    let rate_true_discovery = td as f64 / nf;
    Ok(SourceStats {
        n,
        rate_above_q,
        rate_true_discovery,
        rate_false_discovery: fd as f64 / nf,
        w_n,
        w_n_fd,
        u_q: rate_above_q + w_n,
        u_q2: rate_true_discovery + w_n,
    })
}

/// Latched alarm states after an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmDecision {
    pub phi_q: bool,
    pub phi_q2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: u64,
    /// Running fraction of selected observations.
    pub selection_rate: f64,
    #[serde(rename = "L_q")]
    pub l_q: f64,
    #[serde(rename = "U_q")]
    pub u_q: f64,
    #[serde(rename = "U_q2")]
    pub u_q2: f64,
    pub phi_q: bool,
    pub phi_q2: bool,
}

/// First-alarm times of the two quantile detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QuantileAlarms {
    pub phi_q: Option<u64>,
    pub phi_q2: Option<u64>,
}

/// Streaming state of the quantile detectors `Φ_q` and `Φ_q²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileMonitor {
    t: u64,
    selector: Selector,
    source: SourceStats,
    config: MonitorConfig,
    selection_cs: PmEbState,
    l_q_raw: f64,
    alarms: QuantileAlarms,
    trajectory: Vec<TrajectoryPoint>,
}

impl QuantileMonitor {
    pub fn new(selector: Selector, source: SourceStats, config: MonitorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            t: 0,
            selector,
            source,
            config,
            selection_cs: PmEbState::new(config.alpha_1())?,
            l_q_raw: f64::NEG_INFINITY,
            alarms: QuantileAlarms::default(),
            trajectory: Vec::new(),
        })
    }

    /// Builds the monitor from scored source data.
    pub fn calibrated(source: &Dataset, selector: Selector, config: MonitorConfig) -> Result<Self> {
        let stats = source_statistics(source, &selector, &config)?;
        Self::new(selector, stats, config)
    }

    /// The labeled oracle: selects `1{E > q}` directly, so its source
    /// false-discovery rate is zero and `Û²_q = Û_q`. Feed it with
    /// [`observe_labeled`](Self::observe_labeled).
    pub fn oracle(source: &Dataset, selector: &Selector, config: MonitorConfig) -> Result<Self> {
        let oracle = selector.oracle();
        let by_error = source.with_scores(&source.errors())?;
        Self::calibrated(&by_error, oracle, config)
    }

    /// Feeds one production event with its estimator score.
    pub fn observe(&mut self, event: &StreamEvent, score: f64) -> Result<AlarmDecision> {
        if event.t <= self.t {
            return Err(invalid(format!(
                "event time {} not after previous time {}",
                event.t, self.t
            )));
        }
        if score.is_nan() {
            return Err(invalid(format!("NaN score at t = {}", event.t)));
        }
        let selected = self.selector.selects(score);
        self.selection_cs.update(if selected { 1.0 } else { 0.0 })?;
        self.t = event.t;

        self.l_q_raw =
            self.selection_cs.lower() - self.source.false_discovery_term() - self.config.delta_corr;
        let l_q = self.l_q();
        let eps = self.config.eps_tol;
        if self.alarms.phi_q.is_none() && l_q > self.source.u_q + eps {
            self.alarms.phi_q = Some(self.t);
        }
        if self.alarms.phi_q2.is_none() && l_q > self.source.u_q2 + eps {
            self.alarms.phi_q2 = Some(self.t);
        }
        let decision = self.decision();
        self.trajectory.push(TrajectoryPoint {
            t: self.t,
            selection_rate: self.selection_cs.mean(),
            l_q,
            u_q: self.source.u_q,
            u_q2: self.source.u_q2,
            phi_q: decision.phi_q,
            phi_q2: decision.phi_q2,
        });
        Ok(decision)
    }

    /// Feeds an event using its true error as the score (oracle evaluation).
    pub fn observe_labeled(&mut self, event: &StreamEvent) -> Result<AlarmDecision> {
        let e = event
            .true_error
            .ok_or_else(|| invalid(format!("event at t = {} has no true error", event.t)))?;
        self.observe(event, e)
    }

    /// `L̂_q`, floored at 0.
    pub fn l_q(&self) -> f64 {
        self.l_q_raw.max(0.0)
    }

    /// `L̂_q` before the floor; `-inf` before any data.
    pub fn l_q_raw(&self) -> f64 {
        self.l_q_raw
    }

    pub fn decision(&self) -> AlarmDecision {
        AlarmDecision {
            phi_q: self.alarms.phi_q.is_some(),
            phi_q2: self.alarms.phi_q2.is_some(),
        }
    }

    pub fn alarms(&self) -> QuantileAlarms {
        self.alarms
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn source(&self) -> &SourceStats {
        &self.source
    }

    pub fn selector(&self) -> &Selector {
        &self.selector
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn trajectory(&self) -> &[TrajectoryPoint] {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> Vec<TrajectoryPoint> {
        self.trajectory
    }
}

/// Streaming state of the mean detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMonitor {
    t: u64,
    error_cs: PmEbState,
    source_mean: f64,
    source_upper: f64,
    eps_tol: f64,
    alarm: Option<u64>,
    clipped: u64,
}

impl MeanMonitor {
    /// `source_upper = mean(E⁰) + w_n(alpha_source)`; the production sequence
    /// runs at the full `alpha_prod`.
    pub fn new(source: &Dataset, config: &MonitorConfig) -> Result<Self> {
        config.validate()?;
        let n = source.len();
        let source_mean = source.iter().map(|s| s.true_error).sum::<f64>() / n as f64;
        Ok(Self {
            t: 0,
            error_cs: PmEbState::new(config.alpha_prod)?,
            source_mean,
            source_upper: source_mean + hoeffding_halfwidth(n, config.alpha_source)?,
            eps_tol: config.eps_tol,
            alarm: None,
            clipped: 0,
        })
    }

    /// Feeds a value that must already lie in `[0, 1]` (a true error).
    pub fn observe(&mut self, value: f64) -> Result<bool> {
        check_error(value)?;
        self.error_cs.update(value)?;
        self.t += 1;
        if self.alarm.is_none() && self.error_cs.lower() > self.source_upper + self.eps_tol {
            self.alarm = Some(self.t);
        }
        Ok(self.alarm.is_some())
    }

    /// Feeds an estimated score, clipping it into `[0, 1]` and counting clips.
    pub fn observe_score(&mut self, score: f64) -> Result<bool> {
        if !score.is_finite() {
            return Err(invalid(format!("non-finite score {score}")));
        }
        let clipped = score.clamp(0.0, 1.0);
        if clipped != score {
            self.clipped += 1;
        }
        self.observe(clipped)
    }

    pub fn lower(&self) -> f64 {
        self.error_cs.lower()
    }

    pub fn source_upper(&self) -> f64 {
        self.source_upper
    }

    pub fn source_mean(&self) -> f64 {
        self.source_mean
    }

    pub fn alarm(&self) -> Option<u64> {
        self.alarm
    }

    pub fn clipped_count(&self) -> u64 {
        self.clipped
    }

    pub fn t(&self) -> u64 {
        self.t
    }
}

/// Empirical `δ`: production false-discovery rate minus the source rate.
///
/// Negative values mean the false-discovery stability assumption held on
/// this stream. Needs true production errors.
pub fn delta_diagnostic(prod: &Dataset, selector: &Selector, source: &SourceStats) -> Result<f64> {
    let scores = prod.scores()?;
    let pairs: Vec<(f64, f64)> = prod.iter().map(|s| s.true_error).zip(scores).collect();
    Ok(delta_of(&pairs, selector, source))
}

/// [`delta_diagnostic`] over stream events and their scores.
pub fn delta_from_events(
    events: &[StreamEvent],
    scores: &[f64],
    selector: &Selector,
    source: &SourceStats,
) -> Result<f64> {
    if events.is_empty() || events.len() != scores.len() {
        return Err(invalid("delta needs one score per nonempty event list"));
    }
    let pairs = events
        .iter()
        .zip(scores)
        .map(|(e, &s)| {
            e.true_error
                .map(|err| (err, s))
                .ok_or_else(|| invalid(format!("event at t = {} has no true error", e.t)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(delta_of(&pairs, selector, source))
}

fn delta_of(pairs: &[(f64, f64)], selector: &Selector, source: &SourceStats) -> f64 {
    let fd = pairs
        .iter()
        .filter(|&&(e, s)| selector.selects(s) && !selector.is_high_error(e))
        .count();
    fd as f64 / pairs.len() as f64 - source.rate_false_discovery
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ErrorSample;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy() -> Dataset {
        let e = [0.1, 0.2, 0.3, 0.8, 0.9];
        let s = [0.05, 0.5, 0.1, 0.6, 0.7];
        Dataset::new(
            e.iter()
                .zip(&s)
                .map(|(&e, &s)| ErrorSample::scored(vec![e], e, s))
                .collect(),
        )
        .unwrap()
    }

    fn toy_selector() -> Selector {
        Selector {
            q: 0.3,
            q_hat: 0.45,
            p: 0.6,
            p_hat: 0.5,
        }
    }

    fn event(t: u64) -> StreamEvent {
        StreamEvent {
            t,
            features: vec![0.0],
            true_error: None,
            score: None,
        }
    }

    #[test]
    fn toy_source_statistics() {
        let st = source_statistics(&toy(), &toy_selector(), &MonitorConfig::default()).unwrap();
        assert_eq!(st.rate_above_q, 2.0 / 5.0);
        assert_eq!(st.rate_true_discovery, 2.0 / 5.0);
        assert_eq!(st.rate_false_discovery, 1.0 / 5.0);
        let w = (40f64.ln() / 10.0).sqrt();
        assert_relative_eq!(st.w_n, w, max_relative = 1e-12);
        assert_relative_eq!(st.w_n, 0.607_361_461_908_305_2, max_relative = 1e-12);
        assert_relative_eq!(st.u_q, 0.4 + w, max_relative = 1e-12);
        assert_relative_eq!(st.u_q2, st.u_q, max_relative = 1e-12);
        assert_relative_eq!(st.w_n_fd, (80f64.ln() / 10.0).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn perfect_estimator_has_equal_upper_bounds() {
        let d = toy();
        let by_err = d.with_scores(&d.errors()).unwrap();
        let sel = Selector {
            q: 0.3,
            q_hat: 0.3,
            p: 0.6,
            p_hat: 0.6,
        };
        let st = source_statistics(&by_err, &sel, &MonitorConfig::default()).unwrap();
        assert_eq!(st.rate_false_discovery, 0.0);
        assert_eq!(st.rate_true_discovery, st.rate_above_q);
        assert_eq!(st.u_q2, st.u_q);
    }

    #[test]
    fn empty_selection_has_zero_discovery_rates() {
        let sel = Selector {
            q_hat: 10.0,
            ..toy_selector()
        };
        let st = source_statistics(&toy(), &sel, &MonitorConfig::default()).unwrap();
        assert_eq!(st.rate_false_discovery, 0.0);
        assert_eq!(st.rate_true_discovery, 0.0);
    }

    fn stats(fd: f64, w_fd: f64, u_q: f64, u_q2: f64) -> SourceStats {
        SourceStats {
            n: 100,
            rate_above_q: u_q,
            rate_true_discovery: u_q2,
            rate_false_discovery: fd,
            w_n: 0.0,
            w_n_fd: w_fd,
            u_q,
            u_q2,
        }
    }

    /// Drives the selection sequence with a stream whose lower bound
    /// ends near 1, then checks the comparisons on the resulting `L̂_q`.
    #[test]
    fn alarm_comparisons() {
        let sel = toy_selector();
        let mut fires =
            QuantileMonitor::new(sel, stats(0.0, 0.0, 0.99, 0.3), MonitorConfig::default())
                .unwrap();
        let mut quiet =
            QuantileMonitor::new(sel, stats(0.0, 0.0, 0.99, 0.99), MonitorConfig::default())
                .unwrap();
        for t in 1..=200 {
            fires.observe(&event(t), 1.0).unwrap();
            quiet.observe(&event(t), 1.0).unwrap();
        }
        assert!(fires.l_q() > 0.4);
        assert!(fires.decision().phi_q2);
        assert!(!fires.decision().phi_q);
        assert!(!quiet.decision().phi_q2);
    }

    #[test]
    fn lower_bound_component_arithmetic() {
        // production lower bound 0.75, source false discovery 0.10, w_n(α₂) 0.05
        let st = stats(0.10, 0.05, 1.0, 1.0);
        let l = 0.75 - st.false_discovery_term() - 0.0;
        assert_relative_eq!(l, 0.60, max_relative = 1e-12);
    }

    #[test]
    fn out_of_order_events_rejected() {
        let mut m = QuantileMonitor::new(
            toy_selector(),
            stats(0.0, 0.0, 0.5, 0.5),
            MonitorConfig::default(),
        )
        .unwrap();
        m.observe(&event(3), 0.0).unwrap();
        assert!(m.observe(&event(3), 0.0).is_err());
        assert!(m.observe(&event(2), 0.0).is_err());
        assert_eq!(m.trajectory().len(), 1);
    }

    #[test]
    fn mean_monitor_constant_stream_at_source_mean_never_fires() {
        let source = Dataset::new(
            (0..200)
                .map(|i| ErrorSample::new(vec![0.0], if i % 2 == 0 { 0.2 } else { 0.4 }))
                .collect(),
        )
        .unwrap();
        let mut m = MeanMonitor::new(&source, &MonitorConfig::default()).unwrap();
        for _ in 0..10_000 {
            assert!(!m.observe(0.3).unwrap());
        }
        assert!(m.lower() < m.source_upper());
    }

    #[test]
    fn mean_monitor_fires_on_all_ones() {
        let source = Dataset::new(
            (0..2000)
                .map(|i| ErrorSample::new(vec![0.0], if i % 10 == 0 { 1.0 } else { 0.0 }))
                .collect(),
        )
        .unwrap();
        let mut m = MeanMonitor::new(&source, &MonitorConfig::default()).unwrap();
        for _ in 0..200 {
            m.observe(1.0).unwrap();
        }
        let t = m.alarm().expect("alarm should fire");
        assert!(t > 1 && t < 200, "alarm at {t}");
        // latched
        for _ in 0..50 {
            assert!(m.observe(0.0).unwrap());
        }
        assert_eq!(m.alarm(), Some(t));
    }

    #[test]
    fn mean_monitor_with_unit_tolerance_never_fires() {
        let source = Dataset::new(vec![ErrorSample::new(vec![0.0], 0.0); 50]).unwrap();
        let cfg = MonitorConfig {
            eps_tol: 1.0,
            ..Default::default()
        };
        let mut m = MeanMonitor::new(&source, &cfg).unwrap();
        for _ in 0..5000 {
            assert!(!m.observe(1.0).unwrap());
        }
    }

    #[test]
    fn mean_monitor_clips_scores() {
        let source = Dataset::new(vec![ErrorSample::new(vec![0.0], 0.5); 10]).unwrap();
        let mut m = MeanMonitor::new(&source, &MonitorConfig::default()).unwrap();
        m.observe_score(1.7).unwrap();
        m.observe_score(-0.2).unwrap();
        m.observe_score(0.5).unwrap();
        assert_eq!(m.clipped_count(), 2);
        assert!(m.observe(1.2).is_err());
        assert!(m.observe_score(f64::NAN).is_err());
    }

    #[test]
    fn delta_zero_when_production_is_the_source() {
        let d = toy();
        let st = source_statistics(&d, &toy_selector(), &MonitorConfig::default()).unwrap();
        assert_eq!(delta_diagnostic(&d, &toy_selector(), &st).unwrap(), 0.0);
    }

    #[test]
    fn delta_nonpositive_when_shift_adds_only_high_errors() {
        let d = toy();
        let sel = toy_selector();
        let st = source_statistics(&d, &sel, &MonitorConfig::default()).unwrap();
        let mut rows = d.clone().into_samples();
        rows.extend((0..5).map(|_| ErrorSample::scored(vec![0.95], 0.95, 0.3)));
        rows.extend((0..5).map(|_| ErrorSample::scored(vec![0.85], 0.85, 0.9)));
        let prod = Dataset::new(rows).unwrap();
        // 1 false discovery in 15 rows against 1 in 5 on the source
        let delta = delta_diagnostic(&prod, &sel, &st).unwrap();
        assert_relative_eq!(delta, 1.0 / 15.0 - 0.2, max_relative = 1e-12);
        assert!(delta <= 0.0);
    }

    #[test]
    fn delta_from_events_needs_labels() {
        let st = source_statistics(&toy(), &toy_selector(), &MonitorConfig::default()).unwrap();
        assert!(delta_from_events(&[event(1)], &[0.9], &toy_selector(), &st).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = MonitorConfig {
            alpha_prod: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let d = MonitorConfig::default();
        assert_relative_eq!(
            d.alpha_1() + d.alpha_2(),
            d.alpha_prod,
            max_relative = 1e-15
        );
    }

    proptest! {
        #[test]
        fn dominance_and_latching(
            bits in prop::collection::vec(prop::bool::weighted(0.6), 1..400),
            fd in 0.0f64..0.1,
            td in 0.0f64..0.5,
            above_extra in 0.0f64..0.3,
        ) {
            let st = stats(fd, 0.02, td + above_extra + 0.05, td + 0.05);
            let mut m = QuantileMonitor::new(toy_selector(), st, MonitorConfig::default()).unwrap();
            let mut prev = AlarmDecision { phi_q: false, phi_q2: false };
            for (i, b) in bits.iter().enumerate() {
                let d = m.observe(&event(i as u64 + 1), if *b { 1.0 } else { 0.0 }).unwrap();
                prop_assert!(!prev.phi_q || d.phi_q);
                prop_assert!(!prev.phi_q2 || d.phi_q2);
                prop_assert!(!d.phi_q || d.phi_q2);
                prev = d;
            }
            let a = m.alarms();
            if let Some(tq) = a.phi_q {
                prop_assert!(a.phi_q2.unwrap() <= tq);
            }
            prop_assert_eq!(m.trajectory().len(), bits.len());
        }

        #[test]
        fn delta_correction_shifts_lower_bound(
            bits in prop::collection::vec(prop::bool::weighted(0.7), 1..200),
            d in 0.0f64..0.2,
        ) {
            let st = stats(0.05, 0.02, 0.5, 0.4);
            let mut plain = QuantileMonitor::new(toy_selector(), st, MonitorConfig::default()).unwrap();
            let mut corr = QuantileMonitor::new(
                toy_selector(),
                st,
                MonitorConfig { delta_corr: d, ..Default::default() },
            ).unwrap();
            for (i, b) in bits.iter().enumerate() {
                let s = if *b { 1.0 } else { 0.0 };
                plain.observe(&event(i as u64 + 1), s).unwrap();
                corr.observe(&event(i as u64 + 1), s).unwrap();
                prop_assert!((plain.l_q_raw() - d - corr.l_q_raw()).abs() < 1e-12);
                prop_assert_eq!(corr.l_q(), corr.l_q_raw().max(0.0));
            }
        }

        #[test]
        fn l_q_invariant_to_monotone_scores(
            scores in prop::collection::vec(0.0f64..1.0, 1..200),
            q_hat in 0.0f64..1.0,
        ) {
            let st = stats(0.05, 0.02, 0.5, 0.4);
            let sel = Selector { q_hat, ..toy_selector() };
            let moved = Selector { q_hat: 2.0 * q_hat + 1.0, ..sel };
            let mut a = QuantileMonitor::new(sel, st, MonitorConfig::default()).unwrap();
            let mut b = QuantileMonitor::new(moved, st, MonitorConfig::default()).unwrap();
            for (i, &s) in scores.iter().enumerate() {
                a.observe(&event(i as u64 + 1), s).unwrap();
                b.observe(&event(i as u64 + 1), 2.0 * s + 1.0).unwrap();
                prop_assert_eq!(a.l_q(), b.l_q());
            }
        }
    }
}
