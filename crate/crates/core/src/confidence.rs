//! Bound constructions for bounded means.
//!
//! [`PmEbState`] is a one-sided predictably-mixed empirical-Bernstein
//! confidence sequence: a lower bound on the running average of the means of
//! a `[0, 1]`-valued stream that holds uniformly over time with probability
//! at least `1 - alpha`. [`hoeffding_halfwidth`] is the fixed-`n` interval
//! used for the source-side upper bounds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const LAMBDA_CAP: f64 = 0.5;
const MEAN_PRIOR: f64 = 0.5;
const VARIANCE_PRIOR: f64 = 0.25;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha {alpha} outside (0, 1)")))
    }
}

/// Half-width `sqrt(ln(2/alpha) / (2n))` of the two-sided Hoeffding interval
/// for the mean of `n` observations in `[0, 1]`.
pub fn hoeffding_halfwidth(n: usize, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("Hoeffding half-width needs n >= 1"));
    }
    check_alpha(alpha)?;
    Ok(((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingBound {
    pub n: usize,
    pub alpha: f64,
    pub halfwidth: f64,
}

impl HoeffdingBound {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        Ok(Self {
            n,
            alpha,
            halfwidth: hoeffding_halfwidth(n, alpha)?,
        })
    }
}

/// `ψ_E(λ) = (-ln(1 - λ) - λ) / 4`.
#[inline]
pub fn psi_e(lambda: f64) -> f64 {
    (-(1.0 - lambda).ln() - lambda) / 4.0
}

/// Streaming state of the lower PM-EB confidence sequence.
///
/// The tuning `λ_{t+1} = min(sqrt(2 ln(1/α) / (σ̂²_t (t+1) ln(t+2))), 1/2)` is
/// predictable: it only uses the shrunk variance estimate from before the
/// new observation. `best_lower` is the running maximum of the per-time lower
/// bounds, which is still a valid time-uniform bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmEbState {
    t: u64,
    alpha: f64,
    log_inv_alpha: f64,
    sum_lx: f64,
    sum_l: f64,
    sum_psi: f64,
    sum_x: f64,
    sum_sq_dev: f64,
    mu_hat: f64,
    sigma2_hat: f64,
    last_lower_raw: f64,
    best_lower: f64,
}

impl PmEbState {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            t: 0,
            alpha,
            log_inv_alpha: (1.0 / alpha).ln(),
            sum_lx: 0.0,
            sum_l: 0.0,
            sum_psi: 0.0,
            sum_x: 0.0,
            sum_sq_dev: 0.0,
            mu_hat: MEAN_PRIOR,
            sigma2_hat: VARIANCE_PRIOR,
            last_lower_raw: f64::NEG_INFINITY,
            best_lower: 0.0,
        })
    }

    /// Feeds one observation in `[0, 1]`.
    pub fn update(&mut self, x: f64) -> Result<()> {
        if !(x.is_finite() && (0.0..=1.0).contains(&x)) {
            return Err(invalid(format!(
                "confidence sequence observation {x} outside [0, 1]"
            )));
        }
        let t = self.t as f64;
        let lambda = (2.0 * self.log_inv_alpha / (self.sigma2_hat * (t + 1.0) * (t + 2.0).ln()))
            .sqrt()
            .min(LAMBDA_CAP);
        let dev = x - self.mu_hat;
        let v = 4.0 * dev * dev;

        self.sum_lx += lambda * x;
        self.sum_l += lambda;
        self.sum_psi += v * psi_e(lambda);

        self.t += 1;
        self.sum_x += x;
        let t_new = self.t as f64;
        self.mu_hat = (MEAN_PRIOR + self.sum_x) / (t_new + 1.0);
        let dev_new = x - self.mu_hat;
        self.sum_sq_dev += dev_new * dev_new;
        self.sigma2_hat = (VARIANCE_PRIOR + self.sum_sq_dev) / (t_new + 1.0);

        self.last_lower_raw = (self.sum_lx - self.log_inv_alpha - self.sum_psi) / self.sum_l;
        let clipped = self.last_lower_raw.clamp(0.0, 1.0);
        if clipped > self.best_lower {
            self.best_lower = clipped;
        }
        Ok(())
    }

    /// Returns the updated state; the functional form of [`update`](Self::update).
    pub fn updated(mut self, x: f64) -> Result<Self> {
        self.update(x)?;
        Ok(self)
    }

    /// Running-maximum lower bound; 0 before any data.
    pub fn lower(&self) -> f64 {
        self.best_lower
    }

    /// Unclipped lower bound from the latest step alone.
    pub fn last_lower_raw(&self) -> f64 {
        self.last_lower_raw
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Plain running mean of the observations (0 before any data).
    pub fn mean(&self) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            self.sum_x / self.t as f64
        }
    }

    pub fn shrunk_mean(&self) -> f64 {
        self.mu_hat
    }

    pub fn shrunk_variance(&self) -> f64 {
        self.sigma2_hat
    }
}

/// Functional update: `pmeb_update(state, x)`.
pub fn pmeb_update(state: PmEbState, x: f64) -> Result<PmEbState> {
    state.updated(x)
}

/// Accessor for the current best lower bound.
pub fn pmeb_lower(state: &PmEbState) -> f64 {
    state.lower()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hoeffding_examples() {
        // sqrt(ln(40) / 400) and sqrt(ln(40) / 100)
        let ln40 = 40f64.ln();
        assert_relative_eq!(
            hoeffding_halfwidth(200, 0.05).unwrap(),
            (ln40 / 400.0).sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            hoeffding_halfwidth(200, 0.05).unwrap(),
            0.096_032_279_131_992_08,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            hoeffding_halfwidth(50, 0.05).unwrap(),
            0.192_064_558_263_984_16,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            hoeffding_halfwidth(800, 0.05).unwrap(),
            hoeffding_halfwidth(200, 0.05).unwrap() / 2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn hoeffding_rejects_bad_input() {
        assert!(hoeffding_halfwidth(0, 0.05).is_err());
        assert!(hoeffding_halfwidth(10, 0.0).is_err());
        assert!(hoeffding_halfwidth(10, 1.0).is_err());
    }

    #[test]
    fn fresh_state_is_vacuous() {
        let s = PmEbState::new(0.05).unwrap();
        assert_eq!(pmeb_lower(&s), 0.0);
        assert_eq!(s.t(), 0);
    }

    #[test]
    fn all_zero_stream_stays_at_zero() {
        let mut s = PmEbState::new(0.05).unwrap();
        for _ in 0..100 {
            s.update(0.0).unwrap();
            assert_eq!(s.lower(), 0.0);
        }
    }

    #[test]
    fn single_one_matches_hand_evaluation() {
        let s = pmeb_update(PmEbState::new(0.05).unwrap(), 1.0).unwrap();
        // λ₁ = 0.5 (capped), v₁ = 4(1 - 0.5)² = 1, ψ_E(0.5) = (ln 2 - 0.5)/4.
        let psi = (2f64.ln() - 0.5) / 4.0;
        assert_relative_eq!(psi_e(0.5), psi, max_relative = 1e-12);
        assert_relative_eq!(psi, 0.048_286_795_139_986_32, max_relative = 1e-12);
        let raw = (0.5 - 20f64.ln() - psi) / 0.5;
        assert_relative_eq!(s.last_lower_raw(), raw, max_relative = 1e-12);
        assert_eq!(s.lower(), 0.0);
        assert_relative_eq!(s.shrunk_mean(), 0.75, max_relative = 1e-12);
    }

    #[test]
    fn all_ones_approach_one_from_below() {
        let mut s = PmEbState::new(0.05).unwrap();
        let mut prev = 0.0;
        for _ in 0..5000 {
            s.update(1.0).unwrap();
            assert!(s.lower() >= prev);
            assert!(s.lower() <= 1.0);
            prev = s.lower();
        }
        assert!(prev > 0.95, "lower bound after 5000 ones: {prev}");
    }

    #[test]
    fn rejects_out_of_range_observations() {
        let mut s = PmEbState::new(0.05).unwrap();
        assert!(s.update(1.5).is_err());
        assert!(s.update(-0.1).is_err());
        assert!(s.update(f64::NAN).is_err());
        assert!(PmEbState::new(1.0).is_err());
    }

    proptest! {
        #[test]
        fn best_lower_is_monotone_and_bounded(xs in prop::collection::vec(0.0f64..=1.0, 1..300)) {
            let mut s = PmEbState::new(0.05).unwrap();
            let mut prev = 0.0;
            for x in xs {
                s.update(x).unwrap();
                prop_assert!(s.lower() >= prev);
                prop_assert!((0.0..=1.0).contains(&s.lower()));
                prev = s.lower();
            }
        }

        #[test]
        fn update_is_deterministic(xs in prop::collection::vec(0.0f64..=1.0, 1..100)) {
            let run = || xs.iter().fold(PmEbState::new(0.1).unwrap(), |s, &x| s.updated(x).unwrap());
            prop_assert_eq!(run(), run());
        }

        #[test]
        fn hoeffding_monotone(n in 1usize..10_000, a in 0.001f64..0.5) {
            prop_assert!(hoeffding_halfwidth(n + 1, a).unwrap() < hoeffding_halfwidth(n, a).unwrap());
            prop_assert!(hoeffding_halfwidth(n, a / 2.0).unwrap() > hoeffding_halfwidth(n, a).unwrap());
        }
    }
}
