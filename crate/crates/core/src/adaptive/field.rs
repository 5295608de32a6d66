use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{alg1_update, frame_estimate, AdaptiveConfig, AdaptiveState};
use crate::chain::Analyzer;
use crate::error::{Error, Result};
use crate::model::{QosConstraints, SensingParams};
use crate::optimize::evaluate_point;
use crate::sim::{replication_rng, PuProcess, Simulator, SlotOutcome, SuSchedule};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSpec {
    pub taus: Vec<f64>,
    pub ps: Vec<f64>,
    pub n_realizations: usize,
    pub seed: u64,
}

/// Mean update direction at one operating point next to the analyzer gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldPoint {
    pub tau: f64,
    pub p: f64,
    /// `E[g | x]`, averaged over SUs and realizations.
    pub g_tau: f64,
    pub g_p: f64,
    /// Central-difference gradient of `-r` with the algorithm increments as steps.
    pub grad_tau: f64,
    pub grad_p: f64,
    pub r: f64,
    pub t_i: f64,
    /// The point and its four increment neighbours satisfy the constraints.
    pub feasible: bool,
}

impl FieldPoint {
    pub fn inner(&self) -> f64 {
        self.g_tau * self.grad_tau + self.g_p * self.grad_p
    }

    pub fn field_norm(&self) -> f64 {
        self.g_tau.hypot(self.g_p)
    }
}

fn run_frame<R: Rng + ?Sized>(
    sim: &Simulator,
    schedules: &[SuSchedule],
    n_ep: usize,
    pu: &mut PuProcess,
    rng: &mut R,
) -> Result<Vec<SlotOutcome>> {
    (0..n_ep).map(|_| sim.run_slot(schedules, pu, rng)).collect()
}

/// One realization: a frame at the previous iterate `x - s * increment` for a
/// random sign pair `s` shared by all SUs, then a frame at `x` and one update
/// per SU. Returns the SU-averaged subgradient estimate.
fn realization(
    sim: &Simulator,
    qos: &QosConstraints,
    acfg: &AdaptiveConfig,
    tau: f64,
    p: f64,
    seed: u64,
    rep: u64,
) -> Result<(f64, f64)> {
    let cfg = &sim.cfg;
    let n_su = cfg.n_su;
    let mut rng = replication_rng(seed, rep);
    let s_tau = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let s_p = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let prev = SensingParams::new(
        (tau - s_tau * acfg.d_tau).clamp(0.0, cfg.slot_duration),
        (p - s_p * acfg.d_p).clamp(0.0, 1.0),
    );
    let here = SensingParams::new(tau, p);
    let mut pu = PuProcess::new();

    let before = run_frame(sim, &vec![SuSchedule::uniform(prev); n_su], acfg.n_ep, &mut pu, &mut rng)?;
    let schedule = SuSchedule::uniform(here);
    let after = run_frame(sim, &vec![schedule.clone(); n_su], acfg.n_ep, &mut pu, &mut rng)?;
    let p_md = sim
        .detector
        .p_md(sim.detector.effective_tau(tau).min(cfg.slot_duration), cfg.min_pu_snr());

    let (mut g_tau, mut g_p) = (0.0, 0.0);
    for m in 0..n_su {
        let r_prev = frame_estimate(&before, m, acfg.n_ep, acfg.interference, p_md)?.r;
        let est = frame_estimate(&after, m, acfg.n_ep, acfg.interference, p_md)?;
        let state = AdaptiveState {
            tau,
            p,
            tau_prev: prev.tau,
            p_prev: prev.p,
            r_prev,
            k: 1,
        };
        let (_, ev) = alg1_update(&state, &est, qos, acfg, cfg.slot_duration);
        let (gt, gp) = ev.subgradient(acfg.d_tau, acfg.d_p);
        g_tau += gt;
        g_p += gp;
    }
    Ok((g_tau / n_su as f64, g_p / n_su as f64))
}

/// Monte Carlo estimate of the mean update direction on a grid of operating
/// points. Realizations run in parallel and are summed in index order.
pub fn subgradient_field(
    sim: &Simulator,
    qos: &QosConstraints,
    acfg: &AdaptiveConfig,
    spec: &FieldSpec,
) -> Result<Vec<FieldPoint>> {
    if spec.taus.is_empty() || spec.ps.is_empty() {
        return Err(Error::EmptyGrid("field grid has no points".into()));
    }
    if spec.n_realizations == 0 {
        return Err(Error::config("n_realizations must be at least 1"));
    }
    let big_t = sim.cfg.slot_duration;
    acfg.validate(big_t)?;
    let analyzer = Analyzer::new(sim.cfg.clone(), sim.detector);
    let eval = |tau: f64, p: f64| {
        evaluate_point(
            &analyzer,
            sim.detector.effective_tau(tau).min(big_t),
            p.clamp(0.0, 1.0),
            qos,
        )
    };

    let mut points = Vec::with_capacity(spec.taus.len() * spec.ps.len());
    for (i, &tau) in spec.taus.iter().enumerate() {
        for (j, &p) in spec.ps.iter().enumerate() {
            let idx = (i * spec.ps.len() + j) as u64;
            let seed = spec.seed.wrapping_add(idx.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let samples = (0..spec.n_realizations as u64)
                .into_par_iter()
                .map(|rep| realization(sim, qos, acfg, tau, p, seed, rep))
                .collect::<Result<Vec<_>>>()?;
            let n = samples.len() as f64;
            let g_tau = samples.iter().map(|s| s.0).sum::<f64>() / n;
            let g_p = samples.iter().map(|s| s.1).sum::<f64>() / n;

            let centre = eval(tau, p)?;
            let (dt, dp) = (acfg.d_tau, acfg.d_p);
            let tau_hi = eval(tau + dt, p)?;
            let tau_lo = eval(tau - dt, p)?;
            let p_hi = eval(tau, p + dp)?;
            let p_lo = eval(tau, p - dp)?;
            let feasible = [&centre, &tau_hi, &tau_lo, &p_hi, &p_lo].iter().all(|e| e.feasible)
                && tau - dt >= acfg.tau_min
                && p - dp >= 0.0
                && p + dp <= 1.0;
            points.push(FieldPoint {
                tau,
                p,
                g_tau,
                g_p,
                grad_tau: -(tau_hi.r - tau_lo.r) / (2.0 * dt),
                grad_p: -(p_hi.r - p_lo.r) / (2.0 * dp),
                r: centre.r,
                t_i: centre.t_i,
                feasible,
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorConfig;
    use crate::model::NetworkConfig;
    use crate::optimize::tau_floor;

    #[test]
    fn single_realization_is_a_signed_increment() {
        let cfg = NetworkConfig::symmetric(1, 5);
        let qos = QosConstraints::default();
        let det = DetectorConfig::default().resolve(&cfg, &qos).unwrap();
        let acfg = AdaptiveConfig::standard(cfg.slot_duration, tau_floor(&cfg, &qos).unwrap());
        let sim = Simulator::new(cfg, det);
        let spec = FieldSpec {
            taus: vec![1e-3],
            ps: vec![0.5],
            n_realizations: 1,
            seed: 3,
        };
        let pt = subgradient_field(&sim, &qos, &acfg, &spec).unwrap()[0];
        assert_eq!(pt.g_tau.abs(), acfg.d_tau);
        assert_eq!(pt.g_p.abs(), acfg.d_p);
        let again = subgradient_field(&sim, &qos, &acfg, &spec).unwrap()[0];
        assert_eq!(pt, again);
    }
}
