use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::Detector;
use crate::error::Result;
use crate::model::{max_sensing_stages, NetworkConfig, SensingParams};

/// Access protocol of each SU inside a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Flip the access coin first and sense only on success.
    #[default]
    Modified,
    /// Always sense; flip the access coin only after sensing the channel free.
    Conventional,
}

/// PU activity across slots.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PuModel {
    /// Independent Bernoulli draw per slot and channel.
    #[default]
    Iid,
    /// Keeps the previous slot's state with probability `persistence`,
    /// otherwise redraws; the stationary presence probability is unchanged.
    OnOff { persistence: f64 },
}

/// SNR used for the detection draw of a busy channel.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DetectionSnr {
    /// PU power if present plus the power of every SU already transmitting.
    #[default]
    Realized,
    /// Mean-field SNR table indexed by channel then stage (zero-based); stages
    /// past the table reuse its last column.
    Table { snr: Vec<Vec<f64>> },
}

/// Per-stage sensing schedule of one SU. Stage `n` uses entry `n - 1`, or the
/// last entry when the schedule is shorter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuSchedule {
    pub tau: Vec<f64>,
    pub p: Vec<f64>,
}

impl SuSchedule {
    pub fn uniform(params: SensingParams) -> Self {
        Self {
            tau: vec![params.tau],
            p: vec![params.p],
        }
    }

    pub fn staged(tau: Vec<f64>, p: Vec<f64>) -> Self {
        assert!(!tau.is_empty() && !p.is_empty(), "schedule needs at least one stage");
        Self { tau, p }
    }

    pub fn tau_at(&self, stage: usize) -> f64 {
        self.tau[stage.min(self.tau.len() - 1)]
    }

    pub fn p_at(&self, stage: usize) -> f64 {
        self.p[stage.min(self.p.len() - 1)]
    }
}

/// Final state of one SU at the end of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Disposition {
    /// Transmitted alone on a free channel.
    Transmitted,
    /// Transmitted but hit a PU or another SU.
    Interfered,
    /// Never transmitted.
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuOutcome {
    pub disposition: Disposition,
    /// Channel and one-based stage of the transmission, if any.
    pub tx: Option<(usize, usize)>,
    /// Whether the channel was busy when the SU started transmitting.
    pub misdetected: bool,
    /// ACKed throughput of the slot, normalized by `T`.
    pub throughput: f64,
    /// Interference time this SU caused on a busy channel, normalized by `T * N_p`.
    pub caused_interference: f64,
    pub sensed: u32,
    pub handoffs: u32,
    /// Time from slot start to the start of transmission, `T` if none.
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotOutcome {
    pub pu_present: Vec<bool>,
    pub su: Vec<SuOutcome>,
    /// Network interference time of the slot, normalized by `T * N_p`.
    pub interference_time: f64,
    /// Number of stages that actually took place.
    pub stages: usize,
}

impl SlotOutcome {
    /// Mean ACKed throughput over SUs.
    pub fn mean_throughput(&self) -> f64 {
        self.su.iter().map(|s| s.throughput).sum::<f64>() / self.su.len() as f64
    }

    pub fn mean_sensed(&self) -> f64 {
        self.su.iter().map(|s| s.sensed as f64).sum::<f64>() / self.su.len() as f64
    }
}

/// PU state carried between slots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PuProcess {
    state: Option<Vec<bool>>,
}

impl PuProcess {
    pub fn new() -> Self {
        Self::default()
    }

    fn next<R: Rng + ?Sized>(&mut self, model: PuModel, presence: &[f64], rng: &mut R) -> Vec<bool> {
        let fresh: Vec<bool> = presence.iter().map(|&pr| rng.random::<f64>() < pr).collect();
        let state = match (model, self.state.take()) {
            (PuModel::OnOff { persistence }, Some(prev)) => prev
                .into_iter()
                .zip(fresh)
                .map(|(old, new)| if rng.random::<f64>() < persistence { old } else { new })
                .collect(),
            _ => fresh,
        };
        self.state = Some(state.clone());
        state
    }
}

/// Slot-level simulator of SUs running random-order sequential sensing.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub cfg: NetworkConfig,
    pub detector: Detector,
    pub protocol: Protocol,
    pub pu_model: PuModel,
    pub detection: DetectionSnr,
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Handoff,
    Done,
}

impl Simulator {
    pub fn new(cfg: NetworkConfig, detector: Detector) -> Self {
        Self {
            cfg,
            detector,
            protocol: Protocol::Modified,
            pu_model: PuModel::Iid,
            detection: DetectionSnr::Realized,
        }
    }

    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        self.protocol = protocol;
        self
    }

    pub fn with_pu_model(mut self, pu_model: PuModel) -> Self {
        self.pu_model = pu_model;
        self
    }

    pub fn with_detection(mut self, detection: DetectionSnr) -> Self {
        self.detection = detection;
        self
    }

    /// Number of stages an SU with this schedule may use.
    pub fn stages_for(&self, schedule: &SuSchedule) -> Result<usize> {
        let tau = self.detector.effective_tau(schedule.tau_at(0)).min(self.cfg.slot_duration);
        max_sensing_stages(self.cfg.slot_duration, tau, self.cfg.handoff_time, self.cfg.n_pu)
    }

    fn snr(&self, m: usize, stage: usize, pu: bool, su_count: usize) -> f64 {
        match &self.detection {
            DetectionSnr::Realized => {
                let pu_power = if pu { self.cfg.pu_power[m] } else { 0.0 };
                (pu_power + su_count as f64 * self.cfg.su_power) / self.cfg.noise_power
            }
            DetectionSnr::Table { snr } => {
                let row = &snr[m];
                row[stage.min(row.len() - 1)]
            }
        }
    }

    /// Runs one slot. Each SU consumes exactly three uniforms per stage it
    /// spends in a handoff state (access coin, channel, detector outcome), so
    /// both protocols see the same random numbers.
    pub fn run_slot<R: Rng + ?Sized>(
        &self,
        schedules: &[SuSchedule],
        pu_process: &mut PuProcess,
        rng: &mut R,
    ) -> Result<SlotOutcome> {
        let cfg = &self.cfg;
        let n_su = schedules.len();
        let n_pu = cfg.n_pu;
        let big_t = cfg.slot_duration;
        let pu = pu_process.next(self.pu_model, &cfg.presence_prob, rng);

        let deltas = schedules
            .iter()
            .map(|s| self.stages_for(s))
            .collect::<Result<Vec<_>>>()?;
        let max_delta = deltas.iter().copied().max().unwrap_or(0);

        let mut phase = vec![Phase::Handoff; n_su];
        let mut outcome = vec![
            SuOutcome {
                disposition: Disposition::Terminated,
                tx: None,
                misdetected: false,
                throughput: 0.0,
                caused_interference: 0.0,
                sensed: 0,
                handoffs: 0,
                delay: big_t,
            };
            n_su
        ];
        // transmissions that started in earlier stages, per channel
        let mut active_tx = vec![0usize; n_pu];
        let mut total_tx = vec![0usize; n_pu];
        let mut stage_tx: Vec<(usize, usize, bool)> = Vec::new();
        let mut remaining = Vec::with_capacity(max_delta);
        let mut interference = 0.0;
        let mut start = 0.0;
        let mut stages = 0;

        for n in 0..max_delta {
            let in_stage: Vec<usize> = (0..n_su)
                .filter(|&k| phase[k] == Phase::Handoff && n < deltas[k])
                .collect();
            if in_stage.is_empty() {
                break;
            }
            let duration = in_stage
                .iter()
                .map(|&k| self.detector.effective_tau(schedules[k].tau_at(n)))
                .fold(0.0, f64::max);
            let end = start + duration;
            let rt = big_t - end;
            if rt <= 0.0 {
                break;
            }
            stages += 1;
            remaining.push(rt);
            stage_tx.clear();

            for &k in &in_stage {
                if n > 0 {
                    outcome[k].handoffs += 1;
                }
                let u_access: f64 = rng.random();
                let u_channel: f64 = rng.random();
                let u_detect: f64 = rng.random();
                let access = u_access < schedules[k].p_at(n);
                if self.protocol == Protocol::Modified && !access {
                    continue;
                }
                let m = ((u_channel * n_pu as f64) as usize).min(n_pu - 1);
                outcome[k].sensed += 1;
                let busy = pu[m] || active_tx[m] > 0;
                let tau_k = schedules[k].tau_at(n);
                let sensed_free = if busy {
                    let gamma = self.snr(m, n, pu[m], active_tx[m]);
                    u_detect >= self.detector.p_d(tau_k, gamma)
                } else {
                    u_detect >= self.detector.p_fa(tau_k)
                };
                if sensed_free && access {
                    stage_tx.push((k, m, busy));
                }
            }

            let mut interfered = vec![false; n_pu];
            for &(k, m, busy) in &stage_tx {
                phase[k] = Phase::Done;
                total_tx[m] += 1;
                outcome[k].tx = Some((m, n + 1));
                outcome[k].misdetected = busy;
                outcome[k].delay = end;
                if busy {
                    interfered[m] = true;
                    outcome[k].caused_interference = rt / (big_t * n_pu as f64);
                }
            }
            for &(_, m, _) in &stage_tx {
                active_tx[m] += 1;
            }
            interference += interfered.iter().filter(|&&b| b).count() as f64 * rt;
            start = end + cfg.handoff_time;
        }

        for out in outcome.iter_mut() {
            if let Some((m, stage)) = out.tx {
                if !out.misdetected && total_tx[m] == 1 {
                    out.disposition = Disposition::Transmitted;
                    out.throughput = remaining[stage - 1] * cfg.tx_rate / big_t;
                } else {
                    out.disposition = Disposition::Interfered;
                }
            }
        }

        Ok(SlotOutcome {
            pu_present: pu,
            su: outcome,
            interference_time: interference / (big_t * n_pu as f64),
            stages,
        })
    }
}
