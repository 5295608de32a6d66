//! Energy detector statistics under the Gaussian approximation.
//!
//! `lambda_norm` is always the decision threshold divided by the noise
//! power, so a value of 1 sits exactly on the noise-only mean.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::model::{NetworkConfig, QosConstraints};

/// Standard normal upper tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Inverse of [`q_function`] on `(0, 1)`.
pub fn q_inverse(prob: f64) -> f64 {
    let x = SQRT_2 * erfc_inv(2.0 * prob);
    if !x.is_finite() {
        return x;
    }
    // one Newton step polishes erfc_inv to full precision
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    x + (q_function(x) - prob) / pdf
}

fn samples(tau: f64, fs: f64) -> Result<f64> {
    let n = tau * fs;
    if !(n >= 1.0) {
        return Err(Error::TooFewSamples { samples: n });
    }
    Ok(n)
}

pub fn false_alarm_prob(lambda_norm: f64, tau: f64, fs: f64) -> Result<f64> {
    let n = samples(tau, fs)?;
    Ok(q_function((lambda_norm - 1.0) * n.sqrt()))
}

pub fn misdetection_prob(lambda_norm: f64, tau: f64, fs: f64, gamma: f64) -> Result<f64> {
    let n = samples(tau, fs)?;
    let arg = (lambda_norm - 1.0 - gamma) * (n / (1.0 + 2.0 * gamma)).sqrt();
    Ok(1.0 - q_function(arg))
}

/// Threshold that yields detection probability `p_d_target` at SNR `gamma`.
pub fn threshold_for_detection(gamma: f64, tau: f64, fs: f64, p_d_target: f64) -> f64 {
    1.0 + gamma + q_inverse(p_d_target) * ((1.0 + 2.0 * gamma) / (tau * fs)).sqrt()
}

/// Threshold that yields false-alarm probability `p_fa_target`.
pub fn threshold_for_false_alarm(tau: f64, fs: f64, p_fa_target: f64) -> f64 {
    1.0 + q_inverse(p_fa_target) / (tau * fs).sqrt()
}

/// Shortest sensing time meeting both `p_fa_max` and `p_d_min` at SNR `gamma`.
pub fn min_sensing_time(gamma: f64, fs: f64, p_fa_max: f64, p_d_min: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::DegenerateSnr);
    }
    let root = q_inverse(p_fa_max) - q_inverse(p_d_min) * (1.0 + 2.0 * gamma).sqrt();
    Ok(root * root / (gamma * gamma * fs))
}

/// SNR seen on channel `m` at stage `n` (one-based), taken literally from the
/// mean-field model. Stage 1 sees only the PU. From stage 2 on the PU term is
/// weighted by its presence probability and the SUs that began transmitting
/// earlier add their power. `su_tx` holds the mean number of SUs that started
/// transmitting on `m` at each earlier stage; under [`SnrModel::StageTwo`]
/// only the first entry is used.
pub fn stage_snr(cfg: &NetworkConfig, model: SnrModel, m: usize, n: usize, su_tx: &[f64]) -> f64 {
    if n <= 1 {
        return cfg.pu_snr(m);
    }
    let earlier = match model {
        SnrModel::StageTwo => su_tx.first().copied().unwrap_or(0.0),
        SnrModel::PerStage => su_tx.iter().take(n - 1).sum(),
    };
    (cfg.presence_prob[m] * cfg.pu_power[m] + earlier * cfg.su_power) / cfg.noise_power
}

/// How the SNR of later stages is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrModel {
    /// Stages 3 and later reuse the stage-2 SNR.
    #[default]
    StageTwo,
    /// Every stage accumulates the power of all earlier SU transmissions.
    PerStage,
}

/// How the detection threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum ThresholdRule {
    /// Meet `p_fa_max` and `p_d_min` exactly at the minimum sensing time of
    /// the weakest channel; the threshold is then fixed for all sensing times.
    #[default]
    Calibrated,
    /// Explicit normalized threshold.
    Normalized { lambda_norm: f64 },
    /// Threshold giving the stated false-alarm probability at sensing time `tau`.
    FalseAlarmTarget { p_fa: f64, tau: f64 },
    /// Bypass the energy detector: constant error probabilities.
    Fixed { p_fa: f64, p_d: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(default)]
    pub threshold: ThresholdRule,
    #[serde(default)]
    pub snr_model: SnrModel,
}

/// A detector with its threshold fixed, ready to produce error probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detector {
    kind: DetectorKind,
    pub snr_model: SnrModel,
    sampling_freq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum DetectorKind {
    Energy { lambda_norm: f64 },
    Fixed { p_fa: f64, p_d: f64 },
}

impl DetectorConfig {
    pub fn resolve(&self, cfg: &NetworkConfig, qos: &QosConstraints) -> Result<Detector> {
        let fs = cfg.sampling_freq;
        let kind = match self.threshold {
            ThresholdRule::Calibrated => {
                let gamma = cfg.min_pu_snr();
                let tau_min = min_sensing_time(gamma, fs, qos.p_fa_max, qos.p_d_min)?;
                let tau_cal = tau_min.max(1.0 / fs);
                DetectorKind::Energy {
                    lambda_norm: threshold_for_detection(gamma, tau_cal, fs, qos.p_d_min),
                }
            }
            ThresholdRule::Normalized { lambda_norm } => {
                if !(lambda_norm > 0.0) {
                    return Err(Error::config("threshold must be positive"));
                }
                DetectorKind::Energy { lambda_norm }
            }
            ThresholdRule::FalseAlarmTarget { p_fa, tau } => {
                if !(p_fa > 0.0 && p_fa < 1.0) {
                    return Err(Error::config("false-alarm target must lie in (0, 1)"));
                }
                samples(tau, fs)?;
                DetectorKind::Energy {
                    lambda_norm: threshold_for_false_alarm(tau, fs, p_fa),
                }
            }
            ThresholdRule::Fixed { p_fa, p_d } => {
                if !(0.0..=1.0).contains(&p_fa) || !(0.0..=1.0).contains(&p_d) {
                    return Err(Error::config("fixed detector probabilities must lie in [0, 1]"));
                }
                DetectorKind::Fixed { p_fa, p_d }
            }
        };
        Ok(Detector {
            kind,
            snr_model: self.snr_model,
            sampling_freq: fs,
        })
    }
}

impl Detector {
    pub fn energy(lambda_norm: f64, sampling_freq: f64, snr_model: SnrModel) -> Self {
        Self {
            kind: DetectorKind::Energy { lambda_norm },
            snr_model,
            sampling_freq,
        }
    }

    pub fn fixed(p_fa: f64, p_d: f64) -> Self {
        Self {
            kind: DetectorKind::Fixed { p_fa, p_d },
            snr_model: SnrModel::StageTwo,
            sampling_freq: f64::INFINITY,
        }
    }

    /// Normalized threshold, `None` for a fixed-probability detector.
    pub fn lambda_norm(&self) -> Option<f64> {
        match self.kind {
            DetectorKind::Energy { lambda_norm } => Some(lambda_norm),
            DetectorKind::Fixed { .. } => None,
        }
    }

    /// Sensing time actually used: at least one sample.
    pub fn effective_tau(&self, tau: f64) -> f64 {
        tau.max(1.0 / self.sampling_freq)
    }

    pub fn p_fa(&self, tau: f64) -> f64 {
        match self.kind {
            DetectorKind::Energy { lambda_norm } => {
                let n = self.effective_tau(tau) * self.sampling_freq;
                q_function((lambda_norm - 1.0) * n.sqrt())
            }
            DetectorKind::Fixed { p_fa, .. } => p_fa,
        }
    }

    pub fn p_d(&self, tau: f64, gamma: f64) -> f64 {
        match self.kind {
            DetectorKind::Energy { lambda_norm } => {
                let n = self.effective_tau(tau) * self.sampling_freq;
                q_function((lambda_norm - 1.0 - gamma) * (n / (1.0 + 2.0 * gamma)).sqrt())
            }
            DetectorKind::Fixed { p_d, .. } => p_d,
        }
    }

    pub fn p_md(&self, tau: f64, gamma: f64) -> f64 {
        1.0 - self.p_d(tau, gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Upper normal tail by composite Simpson quadrature of the density,
    /// independent of the erfc implementation.
    fn q_quadrature(x: f64) -> f64 {
        let (a, b) = (x.min(40.0), 40.0);
        if a >= b {
            return 0.0;
        }
        let n = 200_000;
        let h = (b - a) / n as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = pdf(a) + pdf(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * pdf(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn q_function_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert_abs_diff_eq!(q_function(1.2816), 0.1, epsilon = 1e-4);
        assert_abs_diff_eq!(q_function(2.0), 0.02275, epsilon = 1e-5);
        for x in [-3.0, -0.7, 0.3, 1.0, 2.5, 4.0] {
            assert_abs_diff_eq!(q_function(x), q_quadrature(x), epsilon = 1e-10);
        }
    }

    #[test]
    fn q_inverse_round_trip() {
        for p in [1e-6, 0.01, 0.1, 0.5, 0.9, 0.999] {
            assert_abs_diff_eq!(q_function(q_inverse(p)), p, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(q_inverse(0.1), 1.28155, epsilon = 1e-5);
    }

    #[test]
    fn false_alarm_examples() {
        assert_eq!(false_alarm_prob(1.0, 1e-3, 6.857e6).unwrap(), 0.5);
        assert_abs_diff_eq!(false_alarm_prob(1.2, 100.0, 1.0).unwrap(), 0.02275, epsilon = 1e-5);
        let a = false_alarm_prob(1.01, 1e-4, 6.857e6).unwrap();
        let b = false_alarm_prob(1.01, 2e-4, 6.857e6).unwrap();
        assert!(b < a);
        assert!(matches!(
            false_alarm_prob(1.1, 1e-7, 6.857e6),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn misdetection_examples() {
        assert_abs_diff_eq!(misdetection_prob(1.3, 1e-3, 6.857e6, 0.3).unwrap(), 0.5, epsilon = 1e-12);
        let pfa = false_alarm_prob(1.05, 1e-4, 6.857e6).unwrap();
        let pmd = misdetection_prob(1.05, 1e-4, 6.857e6, 0.0).unwrap();
        assert_abs_diff_eq!(pmd, 1.0 - pfa, epsilon = 1e-14);
        // 1 - Q(-0.1 * 20 / sqrt(1.4)) = Q(1.690)
        let pmd = misdetection_prob(1.1, 400.0, 1.0, 0.2).unwrap();
        assert_abs_diff_eq!(pmd, 0.0455, epsilon = 1e-3);
        assert_abs_diff_eq!(pmd, q_quadrature(2.0 / 1.4f64.sqrt()), epsilon = 1e-9);
    }

    #[test]
    fn threshold_examples() {
        assert_abs_diff_eq!(threshold_for_detection(0.2, 1e-3, 6.857e6, 0.5), 1.2, epsilon = 1e-15);
        let lam = threshold_for_detection(0.1, 685.7, 1.0, 0.9);
        assert_abs_diff_eq!(lam, 1.0464, epsilon = 1e-3);
    }

    #[test]
    fn min_sensing_time_examples() {
        assert_abs_diff_eq!(min_sensing_time(0.1, 6.857e6, 0.5, 0.5).unwrap(), 0.0, epsilon = 1e-18);
        let t = min_sensing_time(0.1, 6.857e6, 0.1, 0.9).unwrap();
        assert_abs_diff_eq!(t, 1.052e-4, epsilon = 1e-6);
        let t2 = min_sensing_time(0.1, 2.0 * 6.857e6, 0.1, 0.9).unwrap();
        assert_abs_diff_eq!(t2, t / 2.0, epsilon = 1e-18);
        assert!(matches!(min_sensing_time(0.0, 1e6, 0.1, 0.9), Err(Error::DegenerateSnr)));
    }

    #[test]
    fn calibrated_detector_meets_limits_at_tau_min() {
        let cfg = NetworkConfig::symmetric(3, 7);
        let qos = QosConstraints::default();
        let det = DetectorConfig::default().resolve(&cfg, &qos).unwrap();
        let tau_min = min_sensing_time(0.1, cfg.sampling_freq, 0.1, 0.9).unwrap();
        assert_abs_diff_eq!(det.p_fa(tau_min), 0.1, epsilon = 1e-9);
        assert_abs_diff_eq!(det.p_d(tau_min, 0.1), 0.9, epsilon = 1e-9);
        assert!(det.p_fa(2.0 * tau_min) < 0.1);
        assert!(det.p_d(2.0 * tau_min, 0.1) > 0.9);
    }

    #[test]
    fn false_alarm_target_rule() {
        let cfg = NetworkConfig::symmetric(20, 5);
        let rule = ThresholdRule::FalseAlarmTarget { p_fa: 0.3, tau: 1e-3 };
        let det = DetectorConfig { threshold: rule, snr_model: SnrModel::StageTwo }
            .resolve(&cfg, &QosConstraints::default())
            .unwrap();
        assert_abs_diff_eq!(det.p_fa(1e-3), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn stage_snr_examples() {
        let mut cfg = NetworkConfig::symmetric(20, 10);
        cfg.su_power = 1e-300;
        let g1 = cfg.pu_snr(0);
        assert_abs_diff_eq!(stage_snr(&cfg, SnrModel::StageTwo, 0, 2, &[3.0]), 0.5 * g1, epsilon = 1e-12);
        let cfg = NetworkConfig::symmetric(20, 10);
        assert_abs_diff_eq!(stage_snr(&cfg, SnrModel::StageTwo, 0, 2, &[0.0]), 0.5 * g1, epsilon = 1e-15);
        // N_s p / N_p = 1.6 SUs sense, half find the channel free
        let tx = 1.6 * 0.5;
        assert_abs_diff_eq!(stage_snr(&cfg, SnrModel::StageTwo, 0, 2, &[tx]), 1.3 * g1, epsilon = 1e-12);
        assert_eq!(stage_snr(&cfg, SnrModel::StageTwo, 0, 1, &[tx]), g1);
        let s3 = stage_snr(&cfg, SnrModel::StageTwo, 0, 3, &[tx, 0.5]);
        let p3 = stage_snr(&cfg, SnrModel::PerStage, 0, 3, &[tx, 0.5]);
        assert_abs_diff_eq!(s3, 1.3 * g1, epsilon = 1e-12);
        assert!(p3 > s3);
    }

    proptest! {
        #[test]
        fn round_trip_calibration(gamma in 0.0f64..3.0, n in 1.0f64..1e5, pd in 0.01f64..0.99) {
            let lam = threshold_for_detection(gamma, n, 1.0, pd);
            let pmd = misdetection_prob(lam, n, 1.0, gamma).unwrap();
            prop_assert!((pmd - (1.0 - pd)).abs() < 1e-9);
        }

        #[test]
        fn false_alarm_ignores_snr(lam in 0.5f64..2.0, tau in 1e-5f64..1e-2) {
            let det = Detector::energy(lam, 6.857e6, SnrModel::StageTwo);
            prop_assert_eq!(det.p_fa(tau), false_alarm_prob(lam, tau, 6.857e6).unwrap());
        }

        #[test]
        fn monotone_in_tau(lam in 1.0001f64..1.5, gamma in 0.0f64..1.0, tau in 1e-5f64..5e-3) {
            let fs = 6.857e6;
            let pfa1 = false_alarm_prob(lam, tau, fs).unwrap();
            let pfa2 = false_alarm_prob(lam, 2.0 * tau, fs).unwrap();
            prop_assert!(pfa2 <= pfa1);
            if lam < 1.0 + gamma {
                let m1 = misdetection_prob(lam, tau, fs, gamma).unwrap();
                let m2 = misdetection_prob(lam, 2.0 * tau, fs, gamma).unwrap();
                prop_assert!(m2 <= m1);
            }
        }

        #[test]
        fn detection_increases_with_snr(lam in 0.9f64..1.5, g in 0.0f64..1.0, dg in 0.0f64..1.0) {
            let det = Detector::energy(lam, 6.857e6, SnrModel::StageTwo);
            prop_assert!(det.p_d(1e-4, g + dg) + 1e-12 >= det.p_d(1e-4, g));
        }
    }
}
