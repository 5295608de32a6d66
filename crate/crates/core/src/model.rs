//! Network scenario description, slot timing arithmetic and sensing orders.
//!
//! Times are seconds, frequencies hertz and powers linear. Channel indices are
//! zero-based throughout the crate; stage indices are one-based to match the
//! usual "stage n" vocabulary of sequential sensing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when flooring the stage count, so that exact
/// multiples such as `9ms / 1ms` do not lose a stage to rounding.
const FLOOR_SLACK: f64 = 1e-9;

/// Static description of a cognitive radio network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of secondary users.
    pub n_su: usize,
    /// Number of primary users, one licensed channel each.
    pub n_pu: usize,
    /// Slot duration `T`.
    pub slot_duration: f64,
    /// Reconfiguration time between two sensing stages.
    pub handoff_time: f64,
    /// Energy detector sampling frequency.
    pub sampling_freq: f64,
    /// Transmission rate in bits/s/Hz, shared by all SUs.
    pub tx_rate: f64,
    /// PU presence probability per channel.
    pub presence_prob: Vec<f64>,
    /// PU received power per channel.
    pub pu_power: Vec<f64>,
    /// Received power of one SU transmission.
    pub su_power: f64,
    /// Noise power.
    pub noise_power: f64,
}

impl NetworkConfig {
    /// Symmetric network with the 802.22-style defaults: `T = 10 ms`,
    /// `tau_h = 0.1 us`, `f_s = 6.857 MHz`, `C_R = 1`, PU presence 0.5 and a
    /// -10 dB received SNR for both PU and SU signals.
    pub fn symmetric(n_su: usize, n_pu: usize) -> Self {
        Self {
            n_su,
            n_pu,
            slot_duration: 10e-3,
            handoff_time: 0.1e-6,
            sampling_freq: 6.857e6,
            tx_rate: 1.0,
            presence_prob: vec![0.5; n_pu],
            pu_power: vec![0.1; n_pu],
            su_power: 0.1,
            noise_power: 1.0,
        }
    }

    pub fn with_presence(mut self, prob: f64) -> Self {
        self.presence_prob = vec![prob; self.n_pu];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_su == 0 || self.n_pu == 0 {
            return Err(Error::config("n_su and n_pu must be at least 1"));
        }
        if !(self.slot_duration > 0.0) {
            return Err(Error::config("slot_duration must be positive"));
        }
        if !(self.handoff_time >= 0.0) {
            return Err(Error::config("handoff_time must be non-negative"));
        }
        if !(self.sampling_freq > 0.0) {
            return Err(Error::config("sampling_freq must be positive"));
        }
        if !(self.tx_rate >= 0.0) {
            return Err(Error::config("tx_rate must be non-negative"));
        }
        if self.presence_prob.len() != self.n_pu || self.pu_power.len() != self.n_pu {
            return Err(Error::config(format!(
                "presence_prob and pu_power need {} entries",
                self.n_pu
            )));
        }
        if let Some(p) = self.presence_prob.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::config(format!("presence probability {p} outside [0, 1]")));
        }
        let powers = self.pu_power.iter().chain([&self.su_power, &self.noise_power]);
        if powers.into_iter().any(|w| !(*w > 0.0)) {
            return Err(Error::config("all powers must be positive"));
        }
        Ok(())
    }

    /// Stage-1 SNR of channel `m`, i.e. PU power over noise.
    pub fn pu_snr(&self, m: usize) -> f64 {
        self.pu_power[m] / self.noise_power
    }

    /// SNR contributed by a single SU transmission.
    pub fn su_snr(&self) -> f64 {
        self.su_power / self.noise_power
    }

    /// Weakest stage-1 SNR over all channels.
    pub fn min_pu_snr(&self) -> f64 {
        (0..self.n_pu)
            .map(|m| self.pu_snr(m))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn timing(&self, tau: f64) -> Result<SlotTiming> {
        SlotTiming::new(self.slot_duration, tau, self.handoff_time, self.n_pu)
    }
}

/// Decision variables: sensing time and sensing probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingParams {
    pub tau: f64,
    pub p: f64,
}

impl SensingParams {
    pub fn new(tau: f64, p: f64) -> Self {
        Self { tau, p }
    }

    /// Checks the box constraints `0 <= tau <= T` and `0 <= p <= 1`.
    pub fn validate(&self, slot_duration: f64) -> Result<()> {
        if !(0.0..=slot_duration).contains(&self.tau) {
            return Err(Error::config(format!(
                "tau = {} outside [0, {slot_duration}]",
                self.tau
            )));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::config(format!("p = {} outside [0, 1]", self.p)));
        }
        Ok(())
    }
}

/// Quality-of-service limits of the throughput maximization problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosConstraints {
    /// Maximum normalized interference time.
    pub t_i_max: f64,
    /// Maximum misdetection probability at any channel and stage.
    pub p_md_max: f64,
    /// Maximum false-alarm probability (used to calibrate the detector).
    pub p_fa_max: f64,
    /// Minimum detection probability (used to calibrate the detector).
    pub p_d_min: f64,
}

impl Default for QosConstraints {
    fn default() -> Self {
        Self {
            t_i_max: 0.05,
            p_md_max: 0.1,
            p_fa_max: 0.1,
            p_d_min: 0.9,
        }
    }
}

impl QosConstraints {
    pub fn validate(&self) -> Result<()> {
        let all = [self.t_i_max, self.p_md_max, self.p_fa_max, self.p_d_min];
        if all.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::config("QoS limits must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Constraints that every operating point satisfies.
    pub fn vacuous() -> Self {
        Self {
            t_i_max: 1.0,
            p_md_max: 1.0,
            ..Self::default()
        }
    }
}

/// Stage layout of one slot for a given sensing time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotTiming {
    pub slot_duration: f64,
    pub tau: f64,
    pub handoff_time: f64,
    /// Number of sensing stages that fit in the slot.
    pub delta: usize,
}

impl SlotTiming {
    pub fn new(slot_duration: f64, tau: f64, handoff_time: f64, n_pu: usize) -> Result<Self> {
        let delta = max_sensing_stages(slot_duration, tau, handoff_time, n_pu)?;
        Ok(Self {
            slot_duration,
            tau,
            handoff_time,
            delta,
        })
    }

    pub fn remaining_time(&self, n: usize) -> Result<f64> {
        if n == 0 || n > self.delta {
            return Err(Error::StageOutOfRange {
                stage: n,
                delta: self.delta,
            });
        }
        Ok(remaining_time_unchecked(
            n,
            self.slot_duration,
            self.tau,
            self.handoff_time,
        ))
    }

    /// `RT_1 ..= RT_delta`.
    pub fn remaining_times(&self) -> Vec<f64> {
        (1..=self.delta)
            .map(|n| remaining_time_unchecked(n, self.slot_duration, self.tau, self.handoff_time))
            .collect()
    }
}

/// Maximum number of channels an SU can sense in one slot:
/// `1 + min(floor((T - tau) / (tau + tau_h)), N_p - 1)`.
pub fn max_sensing_stages(slot_duration: f64, tau: f64, handoff_time: f64, n_pu: usize) -> Result<usize> {
    if !(tau > 0.0) || tau > slot_duration {
        return Err(Error::InvalidTiming(format!(
            "sensing time {tau} must lie in (0, {slot_duration}]"
        )));
    }
    if !(handoff_time >= 0.0) {
        return Err(Error::InvalidTiming(format!(
            "handoff time {handoff_time} is negative"
        )));
    }
    if n_pu == 0 {
        return Err(Error::InvalidTiming("no channels".into()));
    }
    let ratio = (slot_duration - tau) / (tau + handoff_time);
    let extra = (ratio + FLOOR_SLACK * ratio.max(1.0)).floor().max(0.0);
    let extra = if extra >= (n_pu - 1) as f64 {
        n_pu - 1
    } else {
        extra as usize
    };
    Ok(1 + extra)
}

/// Time left in the slot after sensing the `n`-th channel:
/// `T - tau - (n - 1)(tau + tau_h)`.
pub fn remaining_time(n: usize, slot_duration: f64, tau: f64, handoff_time: f64, n_pu: usize) -> Result<f64> {
    SlotTiming::new(slot_duration, tau, handoff_time, n_pu)?.remaining_time(n)
}

fn remaining_time_unchecked(n: usize, slot_duration: f64, tau: f64, handoff_time: f64) -> f64 {
    slot_duration - tau - (n as f64 - 1.0) * (tau + handoff_time)
}

/// Channels an SU probes in one slot, in order. Duplicates are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensingOrder(pub Vec<usize>);

impl SensingOrder {
    pub fn channels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Draws `delta` channels independently and uniformly, with replacement.
pub fn draw_sensing_order<R: Rng + ?Sized>(rng: &mut R, n_pu: usize, delta: usize) -> SensingOrder {
    SensingOrder((0..delta).map(|_| rng.random_range(0..n_pu)).collect())
}

/// Ideal network throughput: every free channel used by some SU, no sensing
/// cost, no errors. `min(N_s, sum_m (1 - P_m1))`.
pub fn upper_bound_throughput(n_su: usize, presence_prob: &[f64]) -> f64 {
    let free: f64 = presence_prob.iter().map(|p| 1.0 - p).sum();
    free.min(n_su as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const T: f64 = 10e-3;
    const TAU_H: f64 = 0.1e-6;

    #[test]
    fn stage_count_examples() {
        assert_eq!(max_sensing_stages(T, 10e-3, TAU_H, 5).unwrap(), 1);
        assert_eq!(max_sensing_stages(T, 1e-3, TAU_H, 5).unwrap(), 5);
        assert_eq!(max_sensing_stages(T, 1e-3, TAU_H, 20).unwrap(), 9);
        // exact multiple survives rounding
        assert_eq!(max_sensing_stages(T, 1e-3, 0.0, 20).unwrap(), 10);
    }

    #[test]
    fn stage_count_rejects_bad_tau() {
        assert!(matches!(
            max_sensing_stages(T, 0.0, TAU_H, 5),
            Err(Error::InvalidTiming(_))
        ));
        assert!(max_sensing_stages(T, 11e-3, TAU_H, 5).is_err());
    }

    #[test]
    fn remaining_time_examples() {
        let rt1 = remaining_time(1, T, 1e-3, TAU_H, 5).unwrap();
        assert!((rt1 - 9e-3).abs() < 1e-15);
        let rt3 = remaining_time(3, T, 1e-3, TAU_H, 5).unwrap();
        assert!((rt3 - 6.9998e-3).abs() < 1e-12);
        assert!(matches!(
            remaining_time(6, T, 1e-3, TAU_H, 5),
            Err(Error::StageOutOfRange { stage: 6, delta: 5 })
        ));
        let timing = SlotTiming::new(T, 1e-3, TAU_H, 20).unwrap();
        assert!(timing.remaining_time(timing.delta).unwrap() > 0.0);
    }

    #[test]
    fn single_channel_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(draw_sensing_order(&mut rng, 1, 3).0, vec![0, 0, 0]);
    }

    #[test]
    fn order_is_deterministic_per_seed() {
        let a = draw_sensing_order(&mut ChaCha8Rng::seed_from_u64(9), 7, 6);
        let b = draw_sensing_order(&mut ChaCha8Rng::seed_from_u64(9), 7, 6);
        assert_eq!(a, b);
    }

    #[test]
    fn order_marginals_are_uniform() {
        // 1e6 draws, 5 channels: per-position frequency within 4 sigma of 0.2.
        let n_draws = 1_000_000usize;
        let delta = 3;
        let mut counts = vec![[0usize; 5]; delta];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..n_draws {
            let order = draw_sensing_order(&mut rng, 5, delta);
            for (pos, &c) in order.channels().iter().enumerate() {
                counts[pos][c] += 1;
            }
        }
        let sigma = (0.2 * 0.8 / n_draws as f64).sqrt();
        for row in &counts {
            for &c in row {
                let freq = c as f64 / n_draws as f64;
                assert!((freq - 0.2).abs() < 0.002, "freq {freq}");
                assert!((freq - 0.2).abs() < 4.0 * sigma, "freq {freq}");
            }
        }
    }

    #[test]
    fn upper_bound_examples() {
        assert_eq!(upper_bound_throughput(5, &[1.0; 5]), 0.0);
        assert!((upper_bound_throughput(5, &[0.5; 5]) - 2.5).abs() < 1e-15);
        assert_eq!(upper_bound_throughput(1, &[0.0; 100]), 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = NetworkConfig::symmetric(3, 7);
        assert!(cfg.validate().is_ok());
        cfg.presence_prob[2] = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::symmetric(3, 7);
        cfg.su_power = 0.0;
        assert!(cfg.validate().is_err());
        assert!(SensingParams::new(0.02, 0.5).validate(T).is_err());
        assert!(SensingParams::new(0.001, 1.2).validate(T).is_err());
    }

    proptest! {
        #[test]
        fn stages_monotone(tau in 1e-5f64..10e-3, dtau in 0.0f64..1e-3, n_pu in 1usize..60) {
            let d1 = max_sensing_stages(T, tau, TAU_H, n_pu).unwrap();
            let tau2 = (tau + dtau).min(T);
            let d2 = max_sensing_stages(T, tau2, TAU_H, n_pu).unwrap();
            prop_assert!(d2 <= d1);
            let d3 = max_sensing_stages(T, tau, TAU_H, n_pu + 1).unwrap();
            prop_assert!(d3 >= d1);
            prop_assert!(d1 >= 1 && d1 <= n_pu);
        }

        #[test]
        fn remaining_time_constant_step(tau in 1e-5f64..5e-3, n_pu in 2usize..40) {
            let timing = SlotTiming::new(T, tau, TAU_H, n_pu).unwrap();
            let rts = timing.remaining_times();
            for w in rts.windows(2) {
                prop_assert!((w[0] - w[1] - (tau + TAU_H)).abs() < 1e-12);
            }
            prop_assert!(*rts.last().unwrap() >= -1e-15);
        }
    }
}
