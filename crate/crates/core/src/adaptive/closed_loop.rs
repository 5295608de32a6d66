use std::collections::VecDeque;

use serde::Serialize;

use super::{
    alg1_update, alg2_stage_schedule, convergence_bound, convergence_constants, frame_estimate, AdaptiveConfig,
    AdaptiveState, Algorithm, Events,
};
use crate::chain::Analyzer;
use crate::error::Result;
use crate::model::{QosConstraints, SensingParams};
use crate::sim::{replication_rng, PuProcess, Simulator, SlotOutcome, SuSchedule};

/// Network view after each block of `n_ep` slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameRecord {
    pub k: u64,
    pub tau_mean: f64,
    pub p_mean: f64,
    /// Measured throughput per SU per slot over the frame.
    pub throughput: f64,
    /// Measured normalized interference time over the frame.
    pub interference_time: f64,
    /// Analyzer throughput per SU at the mean operating point.
    pub objective: f64,
    /// Best `objective` seen so far.
    pub best_objective: f64,
    /// Squared norm of the stacked subgradient estimate of the latest updates.
    pub grad_norm_sq: f64,
    /// Convergence bound after `k` steps, NaN for schedules without one.
    pub bound: f64,
}

/// One SU update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuFrameRow {
    pub k: u64,
    pub su: usize,
    pub tau: f64,
    pub p: f64,
    pub r_est: f64,
    pub t_i_est: f64,
    pub p_md: f64,
    pub a: bool,
    pub d: bool,
    pub e: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedLoopRun {
    pub frames: Vec<FrameRecord>,
    pub updates: Vec<SuFrameRow>,
    pub final_states: Vec<AdaptiveState>,
}

impl ClosedLoopRun {
    /// Mean measured throughput per SU and interference time over the last
    /// `fraction` of frames.
    pub fn converged(&self, fraction: f64) -> (f64, f64) {
        let n = self.frames.len();
        let take = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
        let tail = &self.frames[n.saturating_sub(take)..];
        let len = tail.len().max(1) as f64;
        (
            tail.iter().map(|f| f.throughput).sum::<f64>() / len,
            tail.iter().map(|f| f.interference_time).sum::<f64>() / len,
        )
    }
}

fn schedule_for(sim: &Simulator, state: &AdaptiveState, acfg: &AdaptiveConfig) -> Result<SuSchedule> {
    let uniform = SuSchedule::uniform(state.params());
    match acfg.algorithm {
        Algorithm::One => Ok(uniform),
        Algorithm::Two => {
            let delta = sim.stages_for(&uniform)?;
            Ok(alg2_stage_schedule(state, delta, acfg.d_tau1, acfg.d_p1, acfg.tau_min))
        }
    }
}

/// Misdetection probability the SU would see on its shortest sensing stage
/// at the weakest channel.
fn observed_p_md(sim: &Simulator, schedule: &SuSchedule) -> f64 {
    let tau = schedule.tau.iter().copied().fold(f64::INFINITY, f64::min);
    let tau = sim.detector.effective_tau(tau).min(sim.cfg.slot_duration);
    sim.detector.p_md(tau, sim.cfg.min_pu_snr())
}

/// Runs `n_frames * n_ep` slots with every SU adapting on its own estimates.
pub fn run_closed_loop(
    sim: &Simulator,
    qos: &QosConstraints,
    acfg: &AdaptiveConfig,
    n_frames: u64,
    seed: u64,
) -> Result<ClosedLoopRun> {
    let cfg = &sim.cfg;
    let big_t = cfg.slot_duration;
    acfg.validate(big_t)?;
    qos.validate()?;
    let n_su = cfg.n_su;
    let n_ep = acfg.n_ep;
    let analyzer = Analyzer::new(cfg.clone(), sim.detector);
    let (g_sq, r_sq) = convergence_constants(n_su, big_t, acfg.d_tau, acfg.d_p);

    let offsets: Vec<usize> = (0..n_su)
        .map(|m| if acfg.asynchronous { m * n_ep / n_su } else { 0 })
        .collect();
    let mut states = vec![AdaptiveState::new(acfg.tau_init, acfg.p_init, acfg.tau_min); n_su];
    let mut schedules = states
        .iter()
        .map(|s| schedule_for(sim, s, acfg))
        .collect::<Result<Vec<_>>>()?;
    let mut last_grad = vec![0.0; n_su];
    let mut window: VecDeque<SlotOutcome> = VecDeque::with_capacity(n_ep);
    let mut rng = replication_rng(seed, 0);
    let mut pu = PuProcess::new();

    let mut frames = Vec::with_capacity(n_frames as usize);
    let mut updates = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let (mut frame_r, mut frame_ti) = (0.0, 0.0);
    let total = n_frames as usize * n_ep;

    for slot in 0..total {
        let out = sim.run_slot(&schedules, &mut pu, &mut rng)?;
        frame_r += out.mean_throughput();
        frame_ti += out.interference_time;
        if window.len() == n_ep {
            window.pop_front();
        }
        window.push_back(out);

        for m in 0..n_su {
            let elapsed = slot + 1;
            if elapsed < offsets[m] + n_ep || !(elapsed - offsets[m]).is_multiple_of(n_ep) {
                continue;
            }
            let p_md = observed_p_md(sim, &schedules[m]);
            let est = frame_estimate(window.make_contiguous(), m, n_ep, acfg.interference, p_md)?;
            let (next, ev): (AdaptiveState, Events) = alg1_update(&states[m], &est, qos, acfg, big_t);
            let (gt, gp) = ev.subgradient(acfg.d_tau, acfg.d_p);
            last_grad[m] = gt * gt + gp * gp;
            updates.push(SuFrameRow {
                k: states[m].k,
                su: m,
                tau: states[m].tau,
                p: states[m].p,
                r_est: est.r,
                t_i_est: est.t_i,
                p_md,
                a: ev.a,
                d: ev.d,
                e: ev.e,
            });
            states[m] = next;
            schedules[m] = schedule_for(sim, &states[m], acfg)?;
        }

        if (slot + 1) % n_ep == 0 {
            let k = ((slot + 1) / n_ep) as u64;
            let tau_mean = states.iter().map(|s| s.tau).sum::<f64>() / n_su as f64;
            let p_mean = states.iter().map(|s| s.p).sum::<f64>() / n_su as f64;
            let tau_eval = sim.detector.effective_tau(tau_mean).min(big_t);
            let objective = analyzer
                .analyze(SensingParams::new(tau_eval, p_mean))?
                .throughput();
            best = best.max(objective);
            frames.push(FrameRecord {
                k,
                tau_mean,
                p_mean,
                throughput: frame_r / n_ep as f64,
                interference_time: frame_ti / n_ep as f64,
                objective,
                best_objective: best,
                grad_norm_sq: last_grad.iter().sum(),
                bound: convergence_bound(g_sq, r_sq, &acfg.schedule, k).unwrap_or(f64::NAN),
            });
            frame_r = 0.0;
            frame_ti = 0.0;
        }
    }

    Ok(ClosedLoopRun {
        frames,
        updates,
        final_states: states,
    })
}
