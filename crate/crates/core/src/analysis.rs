//! Closed-form reliability of the two mitigations and a Monte Carlo harness
//! that checks the PARA model against the simulator.
//!
//! Probability math is generic over the float type. [`survival_exact`] works
//! over any ring, which lets tests evaluate `(1 - p)^N` exactly with
//! rationals.

use num_traits::{Float, FromPrimitive, Num};
use rayon::prelude::*;
use serde::Serialize;

use crate::controller::{ParaHook, TimingParams};
use crate::disturbance::{DisturbanceEngine, DisturbanceProfile};
use crate::dram_model::{CellArray, Geometry, RowAddress};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParaModel<T> {
    pub p: T,
    /// Adjacent row closes inside the victim's window.
    pub closes: u64,
}

impl<T: Float> ParaModel<T> {
    pub fn new(p: T, closes: u64) -> Result<Self> {
        check_probability(p)?;
        Ok(ParaModel { p, closes })
    }

    pub fn survival(&self) -> Survival<T> {
        survival_unchecked(self.p, self.closes)
    }
}

/// Probability that a victim sees no PARA refresh, plus its log10.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Survival<T> {
    pub probability: T,
    pub log10: T,
}

fn check_probability<T: Float>(p: T) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(Error::Domain("probability must lie in [0, 1]".into()))
    }
}

/// `(1 - p)^closes`, evaluated through `ln(1 - p)` so the log stays finite
/// long after the probability underflows.
pub fn para_survival<T: Float>(p: T, closes: u64) -> Result<Survival<T>> {
    check_probability(p)?;
    Ok(survival_unchecked(p, closes))
}

fn survival_unchecked<T: Float>(p: T, closes: u64) -> Survival<T> {
    if closes == 0 || p == T::zero() {
        return Survival {
            probability: T::one(),
            log10: T::zero(),
        };
    }
    if p == T::one() {
        return Survival {
            probability: T::zero(),
            log10: T::neg_infinity(),
        };
    }
    let n = T::from(closes).unwrap();
    let ln = (-p).ln_1p() * n;
    Survival {
        probability: ln.exp(),
        log10: ln / T::from(std::f64::consts::LN_10).unwrap(),
    }
}

/// `(1 - p)^closes` by repeated squaring in any numeric ring.
pub fn survival_exact<T: Num + Clone>(p: T, closes: u64) -> T {
    let base = T::one() - p;
    let mut acc = T::one();
    let mut sq = base;
    let mut e = closes;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * sq.clone();
        }
        e >>= 1;
        if e > 0 {
            sq = sq.clone() * sq;
        }
    }
    acc
}

/// Refresh-window geometry seen by an attacker on one bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowModel {
    pub t_refw: u64,
    pub t_rc: u64,
    pub k: u64,
}

impl WindowModel {
    pub fn new(t_refw: u64, t_rc: u64, k: u64) -> Result<Self> {
        if t_rc == 0 || t_refw < t_rc || k == 0 {
            return Err(Error::Domain(format!(
                "window needs t_rc > 0, t_refw >= t_rc, k >= 1 (got {t_refw}, {t_rc}, {k})"
            )));
        }
        Ok(WindowModel { t_refw, t_rc, k })
    }

    pub fn with_k(self, k: u64) -> Self {
        WindowModel { k, ..self }
    }
}

impl From<TimingParams> for WindowModel {
    fn from(t: TimingParams) -> Self {
        WindowModel {
            t_refw: t.t_refw,
            t_rc: t.t_rc,
            k: t.refresh_multiplier_k as u64,
        }
    }
}

/// Most same-bank activations that fit between two refreshes of a row:
/// `floor(t_refw / k / t_rc)`.
pub fn max_hammers_per_window(w: &WindowModel) -> u64 {
    (w.t_refw as u128 / (w.k as u128 * w.t_rc as u128)) as u64
}

/// Smallest multiplier `k` whose window admits fewer than `t_min`
/// activations, i.e. the smallest `k` with `t_refw / k < t_rc * t_min`.
pub fn min_safe_multiplier(w: &WindowModel, t_min: u64) -> Result<u64> {
    if t_min == 0 {
        return Err(Error::Domain(
            "no refresh multiplier protects a cell with threshold 0".into(),
        ));
    }
    let budget = w.t_rc as u128 * t_min as u128;
    Ok((w.t_refw as u128 / budget + 1) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParaValidation<T> {
    pub p: T,
    pub closes: u64,
    pub trials: u64,
    pub analytic: T,
    pub empirical: T,
    pub abs_error: T,
    /// Binomial standard error of the empirical frequency.
    pub sigma: T,
}

impl<T: Float> ParaValidation<T> {
    pub fn within_sigmas(&self, n: T) -> bool {
        self.abs_error <= n * self.sigma
    }
}

/// Standard error of a frequency estimated from `trials` Bernoulli(q) samples.
pub fn binomial_sigma<T: Float>(q: T, trials: u64) -> T {
    (q * (T::one() - q) / T::from(trials).unwrap()).sqrt()
}

/// One victim, one aggressor, `closes` activations each followed by a PARA
/// close. Returns whether the victim was never refreshed.
fn micro_run(p: f64, closes: u64, seed: u64, trial: u64) -> Result<bool> {
    let geometry = Geometry::new(1, 2, 8)?;
    let mut engine = DisturbanceEngine::new(geometry, &DisturbanceProfile::empty())?;
    let mut data = CellArray::new(geometry);
    let mut para = ParaHook::with_stream(p, seed, trial)?;
    let aggressor = RowAddress::new(0, 0);
    let mut refreshed = 0u64;
    for t in 0..closes {
        engine.on_activate(aggressor, t, &mut data)?;
        refreshed += para.on_close(aggressor, &mut engine, t + 1)? as u64;
    }
    Ok(refreshed == 0)
}

/// Estimate the no-refresh probability with `trials` independent micro-runs
/// and compare it to [`para_survival`]. Trial `i` uses stream `i` of `seed`.
pub fn validate_para_model<T: Float + FromPrimitive>(
    p: T,
    closes: u64,
    trials: u64,
    seed: u64,
) -> Result<ParaValidation<T>> {
    if trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    let analytic = para_survival(p, closes)?.probability;
    let pf = p
        .to_f64()
        .ok_or_else(|| Error::Domain("probability not representable as f64".into()))?;
    let survivors = (0..trials)
        .into_par_iter()
        .map(|trial| micro_run(pf, closes, seed, trial).map(u64::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let empirical = T::from_u64(survivors).unwrap() / T::from_u64(trials).unwrap();
    Ok(ParaValidation {
        p,
        closes,
        trials,
        analytic,
        empirical,
        abs_error: (empirical - analytic).abs(),
        sigma: binomial_sigma(analytic, trials),
    })
}
