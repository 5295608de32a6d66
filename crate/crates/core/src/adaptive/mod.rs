//! Distributed adaptation of `(tau, p)` by sign-feedback stochastic
//! subgradient steps, with the convergence diagnostics that go with it.

mod closed_loop;
mod field;

pub use closed_loop::{run_closed_loop, ClosedLoopRun, FrameRecord, SuFrameRow};
pub use field::{subgradient_field, FieldPoint, FieldSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{QosConstraints, SensingParams};
use crate::sim::{Disposition, SlotOutcome, SuSchedule};

/// Step sizes `alpha_k`, `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StepSchedule {
    /// `1 / k`.
    #[default]
    Harmonic,
    /// `k^-exponent`; square-summable but not summable for `exponent` in `(1/2, 1]`.
    Power { exponent: f64 },
    /// Constant step; not square-summable.
    Constant { alpha: f64 },
    /// No adaptation.
    Zero,
}

impl StepSchedule {
    pub fn alpha(&self, k: u64) -> f64 {
        let k = k.max(1) as f64;
        match *self {
            StepSchedule::Harmonic => 1.0 / k,
            StepSchedule::Power { exponent } => k.powf(-exponent),
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::Zero => 0.0,
        }
    }

    /// `sum_{i <= k} alpha_i`.
    pub fn partial_sum(&self, k: u64) -> f64 {
        (1..=k).map(|i| self.alpha(i)).sum()
    }

    /// `sum_{i >= 1} alpha_i^2`, or an error when it diverges.
    pub fn sum_of_squares(&self) -> Result<f64> {
        match *self {
            StepSchedule::Harmonic => Ok(std::f64::consts::PI.powi(2) / 6.0),
            StepSchedule::Power { exponent } if exponent > 0.5 => Ok(zeta(2.0 * exponent)),
            StepSchedule::Power { exponent } => Err(Error::InvalidSchedule(format!(
                "k^-{exponent} is not square-summable"
            ))),
            StepSchedule::Constant { alpha: 0.0 } => Ok(0.0),
            StepSchedule::Constant { alpha } => Err(Error::InvalidSchedule(format!(
                "constant step {alpha} is not square-summable"
            ))),
            StepSchedule::Zero => Ok(0.0),
        }
    }

    /// Square-summable and not summable.
    pub fn check_diminishing(&self) -> Result<()> {
        self.sum_of_squares()?;
        match *self {
            StepSchedule::Harmonic => Ok(()),
            StepSchedule::Power { exponent } if exponent <= 1.0 => Ok(()),
            _ => Err(Error::InvalidSchedule("step sizes are summable".into())),
        }
    }
}

/// Riemann zeta for `s > 1` by direct summation with an integral tail.
fn zeta(s: f64) -> f64 {
    let n = 10_000u32;
    let head: f64 = (1..n).map(|i| (i as f64).powf(-s)).sum();
    let nf = n as f64;
    head + nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s)
}

/// Which interference figure an SU feeds into its update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceReport {
    /// Network interference time of each slot, reported to every SU.
    #[default]
    Network,
    /// Interference time the SU itself caused.
    OwnCaused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Frame-level tuning only.
    #[default]
    One,
    /// Frame-level tuning plus a linear per-stage schedule.
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub algorithm: Algorithm,
    /// Slots per estimation frame.
    pub n_ep: usize,
    pub d_tau: f64,
    pub d_p: f64,
    pub d_tau1: f64,
    pub d_p1: f64,
    pub schedule: StepSchedule,
    pub tau_min: f64,
    /// Initial operating point of every SU.
    pub tau_init: f64,
    pub p_init: f64,
    pub interference: InterferenceReport,
    /// Spread SU update instants over the frame instead of updating together.
    pub asynchronous: bool,
}

impl AdaptiveConfig {
    /// `N_ep = 50`, `d_tau = d_tau1 = 0.01 T`, `d_p = d_p1 = 0.025`,
    /// `alpha_k = 1/k`, starting from `tau = 0.1 T`, `p = 0.8`.
    pub fn standard(slot_duration: f64, tau_min: f64) -> Self {
        Self {
            algorithm: Algorithm::One,
            n_ep: 50,
            d_tau: 0.01 * slot_duration,
            d_p: 0.025,
            d_tau1: 0.01 * slot_duration,
            d_p1: 0.025,
            schedule: StepSchedule::Harmonic,
            tau_min,
            tau_init: 0.1 * slot_duration,
            p_init: 0.8,
            interference: InterferenceReport::Network,
            asynchronous: false,
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn validate(&self, slot_duration: f64) -> Result<()> {
        if self.n_ep == 0 {
            return Err(Error::config("n_ep must be at least 1"));
        }
        let steps = [self.d_tau, self.d_p, self.d_tau1, self.d_p1];
        if steps.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::config("increments must be non-negative"));
        }
        SensingParams::new(self.tau_init, self.p_init).validate(slot_duration)?;
        if !(self.tau_min > 0.0 && self.tau_min <= slot_duration) {
            return Err(Error::config("tau_min must lie in (0, T]"));
        }
        Ok(())
    }
}

/// Controller state of one SU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptiveState {
    pub tau: f64,
    pub p: f64,
    pub tau_prev: f64,
    pub p_prev: f64,
    /// Throughput estimate of the previous frame.
    pub r_prev: f64,
    /// Frame index, starting at 1.
    pub k: u64,
}

impl AdaptiveState {
    /// Previous iterate at `(tau_min, 0)` and a zero previous estimate.
    pub fn new(tau_init: f64, p_init: f64, tau_min: f64) -> Self {
        Self {
            tau: tau_init,
            p: p_init,
            tau_prev: tau_min,
            p_prev: 0.0,
            r_prev: 0.0,
            k: 1,
        }
    }

    pub fn params(&self) -> SensingParams {
        SensingParams::new(self.tau, self.p)
    }
}

/// What an SU learned from one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameEstimate {
    /// Mean ACKed throughput per slot.
    pub r: f64,
    /// Mean normalized interference time per slot.
    pub t_i: f64,
    /// Analytic misdetection probability at the current sensing time.
    pub p_md: f64,
}

/// Averages a frame of slot outcomes for SU `su`.
pub fn frame_estimate(
    frame: &[SlotOutcome],
    su: usize,
    n_ep: usize,
    report: InterferenceReport,
    p_md: f64,
) -> Result<FrameEstimate> {
    if frame.len() < n_ep {
        return Err(Error::ShortFrame {
            got: frame.len(),
            expected: n_ep,
        });
    }
    let frame = &frame[..n_ep];
    let r = frame
        .iter()
        .map(|s| match s.su[su].disposition {
            Disposition::Transmitted => s.su[su].throughput,
            _ => 0.0,
        })
        .sum::<f64>()
        / n_ep as f64;
    let t_i = frame
        .iter()
        .map(|s| match report {
            InterferenceReport::Network => s.interference_time,
            InterferenceReport::OwnCaused => s.su[su].caused_interference,
        })
        .sum::<f64>()
        / n_ep as f64;
    Ok(FrameEstimate { r, t_i, p_md })
}

/// Events behind one update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Events {
    /// Throughput did not drop and both constraints hold.
    pub a: bool,
    /// The last move did not decrease `tau`.
    pub b: bool,
    /// The last move did not decrease `p`.
    pub c: bool,
    pub d: bool,
    pub e: bool,
}

fn indicator(x: bool) -> f64 {
    if x {
        1.0
    } else {
        -1.0
    }
}

impl Events {
    /// Subgradient estimate `(1_D d_tau, 1_E d_p)`; the update subtracts it.
    pub fn subgradient(&self, d_tau: f64, d_p: f64) -> (f64, f64) {
        (indicator(self.d) * d_tau, indicator(self.e) * d_p)
    }
}

/// One projected sign-feedback step.
pub fn alg1_update(
    state: &AdaptiveState,
    est: &FrameEstimate,
    qos: &QosConstraints,
    cfg: &AdaptiveConfig,
    slot_duration: f64,
) -> (AdaptiveState, Events) {
    let a = est.r >= state.r_prev && est.t_i <= qos.t_i_max && est.p_md <= qos.p_md_max;
    let b = state.tau >= state.tau_prev;
    let c = state.p >= state.p_prev;
    let ev = Events {
        a,
        b,
        c,
        d: a ^ b,
        e: a ^ c,
    };
    let alpha = cfg.schedule.alpha(state.k);
    let (g_tau, g_p) = ev.subgradient(cfg.d_tau, cfg.d_p);
    let next = AdaptiveState {
        tau: (state.tau - g_tau * alpha).clamp(0.0, slot_duration),
        p: (state.p - g_p * alpha).clamp(0.0, 1.0),
        tau_prev: state.tau,
        p_prev: state.p,
        r_prev: est.r,
        k: state.k + 1,
    };
    (next, ev)
}

/// Per-stage schedule: sensing time shrinks by `d_tau1` per stage down to
/// `tau_min`, access probability grows by `d_p1` per stage up to 1.
pub fn alg2_stage_schedule(state: &AdaptiveState, delta: usize, d_tau1: f64, d_p1: f64, tau_min: f64) -> SuSchedule {
    let delta = delta.max(1);
    let tau = (0..delta)
        .map(|n| {
            let t = state.tau - n as f64 * d_tau1;
            if n == 0 {
                state.tau
            } else {
                t.max(tau_min)
            }
        })
        .collect();
    let p = (0..delta)
        .map(|n| {
            if n == 0 {
                state.p
            } else {
                (state.p + n as f64 * d_p1).min(1.0)
            }
        })
        .collect();
    SuSchedule::staged(tau, p)
}

/// `(G^2, R^2)`: squared norm of the stacked subgradient and squared
/// diameter bound of the feasible box.
pub fn convergence_constants(n_su: usize, slot_duration: f64, d_tau: f64, d_p: f64) -> (f64, f64) {
    let n = n_su as f64;
    (n * (d_tau * d_tau + d_p * d_p), n * (slot_duration * slot_duration + 1.0))
}

/// Bound on `|f_best^k - f*|` after `k` steps.
pub fn convergence_bound(g_sq: f64, r_sq: f64, schedule: &StepSchedule, k: u64) -> Result<f64> {
    let sq = schedule.sum_of_squares()?;
    let sum = schedule.partial_sum(k);
    if !(sum > 0.0) {
        return Err(Error::InvalidSchedule("step sizes sum to zero".into()));
    }
    Ok((r_sq + g_sq * sq) / (2.0 * sum))
}

/// Whether `sum_{i <= k} alpha_i (2 eps - G^2 alpha_i) >= 0`.
pub fn corollary_check(g_sq: f64, epsilon: f64, schedule: &StepSchedule, k: u64) -> bool {
    corollary_partial_sum(g_sq, epsilon, schedule, k) >= 0.0
}

pub fn corollary_partial_sum(g_sq: f64, epsilon: f64, schedule: &StepSchedule, k: u64) -> f64 {
    (1..=k)
        .map(|i| {
            let a = schedule.alpha(i);
            a * (2.0 * epsilon - g_sq * a)
        })
        .sum()
}
