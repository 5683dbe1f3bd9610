//! Per-frame arrival models and backlog bookkeeping.
//!
//! mMTC arrivals are a Bernoulli population with activation probability
//! `p_act` plus a group of periodic devices that all fire every `t_m` frames.
//! URLLC arrivals follow a Beta-shaped activation profile that repeats every
//! `t_u` frames. Per-UE Bernoulli draws are aggregated into a single binomial
//! sample per class.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// mMTC population.
    pub k_m: u64,
    /// URLLC population.
    pub k_u: u64,
    /// Per-frame activation probability of each aperiodic mMTC device.
    pub p_act: f64,
    /// Periodic mMTC devices, a subset of `k_m`.
    pub k_m_periodic: u64,
    /// mMTC period in frames.
    pub t_m: u64,
    /// URLLC Beta period in frames.
    pub t_u: u64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            k_m: 1000,
            k_u: 25,
            p_act: 0.005,
            k_m_periodic: 10,
            t_m: 10,
            t_u: 10,
            alpha: 3.0,
            beta: 4.0,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_m_periodic > self.k_m {
            return Err(Error::config("traffic.k_m_periodic", "must not exceed k_m"));
        }
        if self.t_m < 1 {
            return Err(Error::config("traffic.t_m", "must be at least 1"));
        }
        if self.t_u < 1 {
            return Err(Error::config("traffic.t_u", "must be at least 1"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config("traffic.alpha", "must be positive"));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::config("traffic.beta", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_act) {
            return Err(Error::config("traffic.p_act", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn population(&self, mode: crate::UseMode) -> u64 {
        match mode {
            crate::UseMode::Urllc => self.k_u,
            crate::UseMode::Mmtc => self.k_m,
        }
    }
}

/// Per-UE URLLC activation probability at frame `t`.
///
/// Evaluates the Beta(alpha, beta) density stretched over one period at the
/// integer phase `t mod t_u`, clamped to `[0, 1]`.
pub fn beta_activation_profile(cfg: &TrafficConfig, t: u64) -> Result<f64> {
    if !(cfg.alpha > 0.0) {
        return Err(Error::config("traffic.alpha", "must be positive"));
    }
    if !(cfg.beta > 0.0) {
        return Err(Error::config("traffic.beta", "must be positive"));
    }
    if cfg.t_u < 1 {
        return Err(Error::config("traffic.t_u", "must be at least 1"));
    }
    let period = cfg.t_u as f64;
    let tau = (t % cfg.t_u) as f64;
    let head = tau.powf(cfg.alpha - 1.0);
    let tail = (period - tau).powf(cfg.beta - 1.0);
    let norm = ((cfg.alpha + cfg.beta - 1.0) * period.ln() + ln_beta(cfg.alpha, cfg.beta)).exp();
    let p = head * tail / norm;
    if p.is_nan() {
        return Ok(0.0);
    }
    Ok(p.clamp(0.0, 1.0))
}

pub fn sample_mmtc_arrivals<R: Rng + ?Sized>(cfg: &TrafficConfig, t: u64, rng: &mut R) -> u64 {
    let aperiodic = cfg.k_m - cfg.k_m_periodic;
    let random = binomial(aperiodic, cfg.p_act, rng);
    let periodic = if t.is_multiple_of(cfg.t_m) { cfg.k_m_periodic } else { 0 };
    random + periodic
}

pub fn sample_urllc_arrivals<R: Rng + ?Sized>(
    cfg: &TrafficConfig,
    t: u64,
    rng: &mut R,
) -> Result<u64> {
    let p = beta_activation_profile(cfg, t)?;
    Ok(binomial(cfg.k_u, p, rng))
}

pub(crate) fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("probability validated to (0, 1)")
        .sample(rng)
}

/// Active-device counts for one frame.
///
/// `active_*` is the backlog: new arrivals plus devices retrying after an
/// unsuccessful attempt in the previous frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacklogState {
    pub frame_index: u64,
    pub new_m: u64,
    pub new_u: u64,
    pub retry_m: u64,
    pub retry_u: u64,
    pub active_m: u64,
    pub active_u: u64,
}

impl BacklogState {
    /// Frame-0 state holding only first-frame arrivals.
    pub fn initial(cfg: &TrafficConfig, arrivals_m: u64, arrivals_u: u64) -> Self {
        let new_m = arrivals_m.min(cfg.k_m);
        let new_u = arrivals_u.min(cfg.k_u);
        Self {
            frame_index: 0,
            new_m,
            new_u,
            retry_m: 0,
            retry_u: 0,
            active_m: new_m,
            active_u: new_u,
        }
    }

    pub fn active(&self, mode: crate::UseMode) -> u64 {
        match mode {
            crate::UseMode::Urllc => self.active_u,
            crate::UseMode::Mmtc => self.active_m,
        }
    }

    pub fn total_active(&self) -> u64 {
        self.active_m + self.active_u
    }
}

/// Advance the backlog by one frame.
///
/// Every failed device retries in the next frame. Fresh arrivals can only come
/// from devices without a pending packet, so the new count is capped at the
/// idle part of the population.
pub fn update_backlog(
    state: &BacklogState,
    cfg: &TrafficConfig,
    arrivals_m: u64,
    arrivals_u: u64,
    failed_m: u64,
    failed_u: u64,
) -> Result<BacklogState> {
    if failed_m > state.active_m {
        return Err(Error::Backlog(format!(
            "{failed_m} mMTC failures exceed {} active devices",
            state.active_m
        )));
    }
    if failed_u > state.active_u {
        return Err(Error::Backlog(format!(
            "{failed_u} URLLC failures exceed {} active devices",
            state.active_u
        )));
    }
    let new_m = arrivals_m.min(cfg.k_m.saturating_sub(failed_m));
    let new_u = arrivals_u.min(cfg.k_u.saturating_sub(failed_u));
    Ok(BacklogState {
        frame_index: state.frame_index + 1,
        new_m,
        new_u,
        retry_m: failed_m,
        retry_u: failed_u,
        active_m: failed_m + new_m,
        active_u: failed_u + new_u,
    })
}
