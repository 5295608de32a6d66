//! Mean-field Markov chain of one slot of random-order sequential sensing.
//!
//! Every SU starts the slot in handoff state `HO_1`. At stage `n` it either
//! skips (probability `1 - p`) or senses a uniformly drawn channel. A free
//! channel sensed free leads to a transmission (`T_n`), a busy channel sensed
//! free leads to interference (`I_n`), and a channel sensed busy sends the SU
//! to `HO_{n+1}`. After the last stage the SU terminates (`TE`).
//!
//! Vectors indexed by stage are zero-based: entry `n - 1` is stage `n`.

use serde::Serialize;

use crate::detector::{stage_snr, Detector};
use crate::error::Result;
use crate::model::{NetworkConfig, SensingParams, SlotTiming};

/// Tolerance for clamping probabilities that drift out of `[0, 1]`.
const DRIFT: f64 = 1e-9;

fn clamp_prob(x: f64) -> f64 {
    debug_assert!(x > -DRIFT && x < 1.0 + DRIFT, "probability drifted to {x}");
    x.clamp(0.0, 1.0)
}

/// `base^exp` with `0^0 = 1`.
fn real_pow(base: f64, exp: f64) -> f64 {
    if exp == 0.0 {
        1.0
    } else {
        base.powf(exp)
    }
}

/// Per channel and stage quantities of the occupancy recursion together with
/// the detector probabilities they were computed with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyTable {
    /// Probability that channel `m` is busy (PU or earlier SU) at stage `n`.
    pub occ: Vec<Vec<f64>>,
    /// Probability that at least one SU starts transmitting on `m` at stage `n`.
    pub u: Vec<Vec<f64>>,
    /// Mean number of SUs sensing each channel at stage `n`.
    pub l: Vec<f64>,
    /// Mean number of SUs in handoff state `n`.
    pub n_ho: Vec<f64>,
    /// Probability that an SU sensing `m` at stage `n` finds it busy.
    pub q: Vec<Vec<f64>>,
    pub snr: Vec<Vec<f64>>,
    /// False-alarm probability of each channel; identical over stages.
    pub p_fa: Vec<f64>,
    pub p_d: Vec<Vec<f64>>,
}

impl OccupancyTable {
    pub fn n_stages(&self) -> usize {
        self.l.len()
    }

    /// Largest misdetection probability over all channels and stages.
    pub fn max_misdetection(&self) -> f64 {
        self.p_d
            .iter()
            .flatten()
            .map(|pd| 1.0 - pd)
            .fold(0.0, f64::max)
    }
}

/// Occupancy recursion for homogeneous SUs sharing `(tau, p)`.
pub fn occupancy_evolution(
    cfg: &NetworkConfig,
    params: SensingParams,
    detector: &Detector,
    delta: usize,
) -> OccupancyTable {
    let n_pu = cfg.n_pu;
    let p = params.p;
    let share = p / n_pu as f64;
    let p_fa: Vec<f64> = (0..n_pu).map(|_| detector.p_fa(params.tau)).collect();

    let mut occ = vec![vec![0.0; delta]; n_pu];
    let mut u = vec![vec![0.0; delta]; n_pu];
    let mut q = vec![vec![0.0; delta]; n_pu];
    let mut snr = vec![vec![0.0; delta]; n_pu];
    let mut p_d = vec![vec![0.0; delta]; n_pu];
    let mut l = vec![0.0; delta];
    let mut n_ho = vec![0.0; delta];
    // mean number of SUs starting a transmission on m at each stage
    let mut su_tx = vec![Vec::with_capacity(delta); n_pu];

    n_ho[0] = cfg.n_su as f64;
    for n in 0..delta {
        if n > 0 {
            let routed: f64 = (0..n_pu).map(|m| q[m][n - 1]).sum::<f64>() * share;
            n_ho[n] = ((1.0 - p) + routed) * n_ho[n - 1];
        }
        l[n] = share * n_ho[n];
        // sensors of stages 1..n-1 that all raised false alarms
        let earlier_l: f64 = l[..n.saturating_sub(1)].iter().sum();
        for m in 0..n_pu {
            occ[m][n] = if n == 0 {
                cfg.presence_prob[m]
            } else {
                let free_before = real_pow(p_fa[m], earlier_l);
                clamp_prob(occ[m][n - 1] + (1.0 - cfg.presence_prob[m]) * free_before * u[m][n - 1])
            };
            let raw = stage_snr(cfg, detector.snr_model, m, n + 1, &su_tx[m]);
            snr[m][n] = if n == 0 { raw } else { raw.max(snr[m][n - 1]) };
            p_d[m][n] = detector.p_d(params.tau, snr[m][n]);
            q[m][n] = clamp_prob((1.0 - occ[m][n]) * p_fa[m] + occ[m][n] * p_d[m][n]);
            u[m][n] = clamp_prob(1.0 - real_pow(p_fa[m], l[n]));
            su_tx[m].push(l[n] * (1.0 - q[m][n]));
        }
    }

    OccupancyTable {
        occ,
        u,
        l,
        n_ho,
        q,
        snr,
        p_fa,
        p_d,
    }
}

/// State occupation probabilities of one tagged SU.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainDistribution {
    pub pi_ho: Vec<f64>,
    /// Probability of sensing channel `m` at stage `n` (same for all `m`).
    pub pi_channel: Vec<Vec<f64>>,
    /// Probability of transmitting on a free channel, per channel and stage.
    pub pi_t_channel: Vec<Vec<f64>>,
    /// Probability of transmitting on a busy channel, per channel and stage.
    pub pi_i_channel: Vec<Vec<f64>>,
    pub pi_t: Vec<f64>,
    pub pi_i: Vec<f64>,
    pub pi_te: f64,
    /// Mass that left through pruned edges; zero for the full chain.
    pub pi_pruned: f64,
}

impl ChainDistribution {
    /// Total probability over terminal dispositions, including pruned mass.
    pub fn total(&self) -> f64 {
        self.pi_te + self.pi_pruned + self.pi_t.iter().sum::<f64>() + self.pi_i.iter().sum::<f64>()
    }
}

/// Full chain distribution.
pub fn state_distribution(p: f64, table: &OccupancyTable) -> ChainDistribution {
    chain_walk(p, table, None)
}

/// Chain with the transmit and interfere exits of channel `m` removed from
/// stage `n` (one-based) onward. The removed mass is collected in
/// `pi_pruned`: those are the paths on which the tagged SU would have
/// transmitted on `m`.
pub fn pruned_distribution(p: f64, table: &OccupancyTable, m: usize, n: usize) -> ChainDistribution {
    chain_walk(p, table, Some((m, n)))
}

fn chain_walk(p: f64, table: &OccupancyTable, pruned: Option<(usize, usize)>) -> ChainDistribution {
    let n_pu = table.occ.len();
    let delta = table.n_stages();
    let share = p / n_pu as f64;
    let mut pi_ho = vec![0.0; delta + 1];
    let mut pi_channel = vec![vec![0.0; delta]; n_pu];
    let mut pi_t_channel = vec![vec![0.0; delta]; n_pu];
    let mut pi_i_channel = vec![vec![0.0; delta]; n_pu];
    let mut pi_t = vec![0.0; delta];
    let mut pi_i = vec![0.0; delta];
    let mut pi_pruned = 0.0;

    pi_ho[0] = 1.0;
    for n in 0..delta {
        let mut next = (1.0 - p) * pi_ho[n];
        for m in 0..n_pu {
            let at = share * pi_ho[n];
            pi_channel[m][n] = at;
            let t = at * (1.0 - table.occ[m][n]) * (1.0 - table.p_fa[m]);
            let i = at * table.occ[m][n] * (1.0 - table.p_d[m][n]);
            next += at * table.q[m][n];
            match pruned {
                Some((pm, pn)) if pm == m && n + 1 >= pn => pi_pruned += t + i,
                _ => {
                    pi_t_channel[m][n] = t;
                    pi_i_channel[m][n] = i;
                    pi_t[n] += t;
                    pi_i[n] += i;
                }
            }
        }
        pi_ho[n + 1] = clamp_prob(next);
    }
    let pi_te = pi_ho[delta];
    pi_ho.truncate(delta);

    ChainDistribution {
        pi_ho,
        pi_channel,
        pi_t_channel,
        pi_i_channel,
        pi_t,
        pi_i,
        pi_te,
        pi_pruned,
    }
}

/// Probability that a competitor never transmits on `m` during stages
/// `n..=delta`, read from the explicitly pruned chain.
pub fn pruned_no_tx_prob(p: f64, table: &OccupancyTable, m: usize, n: usize) -> f64 {
    let d = pruned_distribution(p, table, m, n);
    clamp_prob(d.total() - d.pi_pruned)
}

/// `Y[m][n]` for all channels and stages via suffix sums of the full chain.
/// Equivalent to [`pruned_no_tx_prob`] because pruning only removes exits and
/// never changes the handoff-state probabilities.
fn no_tx_table(dist: &ChainDistribution) -> Vec<Vec<f64>> {
    dist.pi_t_channel
        .iter()
        .zip(&dist.pi_i_channel)
        .map(|(t, i)| {
            let delta = t.len();
            let mut y = vec![0.0; delta];
            let mut suffix = 0.0;
            for n in (0..delta).rev() {
                suffix += t[n] + i[n];
                y[n] = clamp_prob(1.0 - suffix);
            }
            y
        })
        .collect()
}

/// Throughput and interference figures of one operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfMetrics {
    /// Per-SU average throughput, normalized by the slot duration.
    pub throughput: f64,
    /// Interference time normalized by `T * N_p`.
    pub interference_time: f64,
    pub success_prob: Vec<Vec<f64>>,
    pub no_interf_prob: Vec<Vec<f64>>,
    pub no_tx_prob: Vec<Vec<f64>>,
}

/// Everything the analyzer computes for one `(tau, p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub params: SensingParams,
    pub delta: usize,
    pub remaining: Vec<f64>,
    pub table: OccupancyTable,
    pub dist: ChainDistribution,
    pub metrics: PerfMetrics,
}

impl Analysis {
    pub fn throughput(&self) -> f64 {
        self.metrics.throughput
    }

    /// Sum of the per-SU throughput over the network.
    pub fn network_throughput(&self, n_su: usize) -> f64 {
        self.metrics.throughput * n_su as f64
    }

    pub fn interference_time(&self) -> f64 {
        self.metrics.interference_time
    }

    pub fn max_misdetection(&self) -> f64 {
        self.table.max_misdetection()
    }
}

pub fn perf_metrics(cfg: &NetworkConfig, timing: &SlotTiming, dist: &ChainDistribution) -> PerfMetrics {
    let n_su = cfg.n_su as i32;
    let rt = timing.remaining_times();
    let y = no_tx_table(dist);
    let mut throughput = 0.0;
    let mut interference = 0.0;
    let mut success_prob = Vec::with_capacity(cfg.n_pu);
    let mut no_interf_prob = Vec::with_capacity(cfg.n_pu);
    for m in 0..cfg.n_pu {
        let q_row: Vec<f64> = (0..timing.delta)
            .map(|n| dist.pi_t_channel[m][n] * y[m][n].powi(n_su - 1))
            .collect();
        let z_row: Vec<f64> = (0..timing.delta)
            .map(|n| (1.0 - dist.pi_i_channel[m][n]).powi(n_su))
            .collect();
        for n in 0..timing.delta {
            throughput += q_row[n] * rt[n];
            interference += (1.0 - z_row[n]) * rt[n];
        }
        success_prob.push(q_row);
        no_interf_prob.push(z_row);
    }
    PerfMetrics {
        throughput: throughput * cfg.tx_rate / timing.slot_duration,
        interference_time: clamp_prob(interference / (timing.slot_duration * cfg.n_pu as f64)),
        success_prob,
        no_interf_prob,
        no_tx_prob: y,
    }
}

/// Analytical model of a network with a fixed detector.
#[derive(Debug, Clone)]
pub struct Analyzer {
    pub cfg: NetworkConfig,
    pub detector: Detector,
}

impl Analyzer {
    pub fn new(cfg: NetworkConfig, detector: Detector) -> Self {
        Self { cfg, detector }
    }

    pub fn analyze(&self, params: SensingParams) -> Result<Analysis> {
        params.validate(self.cfg.slot_duration)?;
        let timing = self.cfg.timing(params.tau)?;
        let table = occupancy_evolution(&self.cfg, params, &self.detector, timing.delta);
        let dist = state_distribution(params.p, &table);
        let metrics = perf_metrics(&self.cfg, &timing, &dist);
        Ok(Analysis {
            params,
            delta: timing.delta,
            remaining: timing.remaining_times(),
            table,
            dist,
            metrics,
        })
    }

    pub fn avg_throughput(&self, params: SensingParams) -> Result<f64> {
        Ok(self.analyze(params)?.metrics.throughput)
    }

    pub fn avg_interference(&self, params: SensingParams) -> Result<f64> {
        Ok(self.analyze(params)?.metrics.interference_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::SnrModel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const T: f64 = 10e-3;

    fn net(n_su: usize, n_pu: usize, presence: f64) -> NetworkConfig {
        NetworkConfig::symmetric(n_su, n_pu).with_presence(presence)
    }

    /// tau giving exactly `delta` stages with the symmetric defaults
    fn tau_for(delta: usize) -> f64 {
        T / delta as f64 - 1e-6
    }

    #[test]
    fn occupancy_hand_case() {
        // two SUs, one free channel, both sense at stage 1 with P_fa = 0.5
        let cfg = net(2, 1, 0.0);
        let det = Detector::fixed(0.5, 0.9);
        let t = occupancy_evolution(&cfg, SensingParams::new(1e-3, 1.0), &det, 2);
        assert_abs_diff_eq!(t.l[0], 2.0);
        assert_abs_diff_eq!(t.u[0][0], 0.75);
        assert_abs_diff_eq!(t.occ[0][1], 0.75);
    }

    #[test]
    fn occupancy_degenerate_cases() {
        let cfg = net(4, 3, 0.3);
        let t = occupancy_evolution(&cfg, SensingParams::new(1e-3, 0.0), &Detector::fixed(0.1, 0.9), 3);
        assert!(t.occ.iter().flatten().all(|&o| o == 0.3));
        let t = occupancy_evolution(&cfg, SensingParams::new(1e-3, 0.7), &Detector::fixed(1.0, 0.9), 3);
        assert!(t.occ.iter().flatten().all(|&o| o == 0.3));
    }

    #[test]
    fn distribution_examples() {
        let cfg = net(3, 2, 0.5);
        let a = Analyzer::new(cfg, Detector::fixed(0.1, 0.9));
        let res = a.analyze(SensingParams::new(tau_for(2), 0.0)).unwrap();
        assert_eq!(res.dist.pi_te, 1.0);
        assert!(res.dist.pi_t.iter().chain(&res.dist.pi_i).all(|&x| x == 0.0));

        let a = Analyzer::new(net(1, 1, 0.0), Detector::fixed(0.0, 1.0));
        let res = a.analyze(SensingParams::new(T, 0.6)).unwrap();
        assert_eq!(res.delta, 1);
        assert_abs_diff_eq!(res.dist.pi_t[0], 0.6);

        let a = Analyzer::new(net(4, 2, 0.5), Detector::fixed(0.1, 0.9));
        let res = a.analyze(SensingParams::new(1e-3, 1.0)).unwrap();
        assert_abs_diff_eq!(res.dist.pi_t[0], 0.45, epsilon = 1e-15);
    }

    #[test]
    fn pruned_examples() {
        let cfg = net(2, 2, 0.0);
        let det = Detector::fixed(0.0, 1.0);
        let t = occupancy_evolution(&cfg, SensingParams::new(tau_for(2), 0.0), &det, 2);
        assert_eq!(pruned_no_tx_prob(0.0, &t, 0, 1), 1.0);

        // single always-free channel: every path of the tagged SU ends in a
        // transmission on it, so all of that mass is pruned
        let cfg = net(2, 1, 0.0);
        let t = occupancy_evolution(&cfg, SensingParams::new(tau_for(2), 1.0), &det, 1);
        let d = pruned_distribution(1.0, &t, 0, 1);
        assert_abs_diff_eq!(d.total(), 1.0);
        assert_abs_diff_eq!(d.pi_pruned, 1.0);
        assert_eq!(pruned_no_tx_prob(1.0, &t, 0, 1), 0.0);

        let cfg = net(2, 2, 0.0);
        let t = occupancy_evolution(&cfg, SensingParams::new(tau_for(2), 1.0), &det, 2);
        assert_abs_diff_eq!(pruned_no_tx_prob(1.0, &t, 0, 1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn two_su_two_channel_case() {
        let a = Analyzer::new(net(2, 2, 0.0), Detector::fixed(0.0, 1.0));
        let res = a.analyze(SensingParams::new(T, 1.0)).unwrap();
        let m = &res.metrics;
        assert_abs_diff_eq!(res.dist.pi_t_channel[0][0], 0.5);
        assert_abs_diff_eq!(m.no_tx_prob[0][0], 0.5);
        assert_abs_diff_eq!(m.success_prob[0][0], 0.25);
        assert_abs_diff_eq!(m.success_prob[0][0] + m.success_prob[1][0], 0.5);

        let tau = 1e-3;
        let res = Analyzer::new(net(2, 2, 0.0), Detector::fixed(0.0, 1.0))
            .analyze(SensingParams::new(tau, 1.0))
            .unwrap();
        // stage 2 is reachable but nobody gets there
        assert_abs_diff_eq!(res.throughput(), 0.5 * (T - tau) / T, epsilon = 1e-15);
    }

    #[test]
    fn throughput_and_interference_examples() {
        let a = Analyzer::new(net(5, 3, 0.5), Detector::fixed(0.1, 0.9));
        assert_eq!(a.avg_throughput(SensingParams::new(1e-3, 0.0)).unwrap(), 0.0);
        assert_eq!(a.avg_interference(SensingParams::new(1e-3, 0.0)).unwrap(), 0.0);

        let tau = T;
        let a = Analyzer::new(net(1, 1, 0.0), Detector::fixed(0.0, 1.0));
        assert_eq!(a.avg_throughput(SensingParams::new(tau, 1.0)).unwrap(), 0.0);
        let tau = 2e-3;
        let single = net(1, 1, 0.0);
        let r = Analyzer::new(single, Detector::fixed(0.0, 1.0))
            .avg_throughput(SensingParams::new(tau, 1.0))
            .unwrap();
        assert_abs_diff_eq!(r, (T - tau) / T, epsilon = 1e-15);

        let busy = net(1, 1, 1.0);
        let t_i = Analyzer::new(busy.clone(), Detector::fixed(0.0, 0.9))
            .avg_interference(SensingParams::new(T - 1e-4, 1.0))
            .unwrap();
        assert_abs_diff_eq!(t_i, 0.1 * 1e-4 / T, epsilon = 1e-15);
        let t_i = Analyzer::new(busy, Detector::fixed(0.2, 1.0))
            .avg_interference(SensingParams::new(1e-3, 1.0))
            .unwrap();
        assert_eq!(t_i, 0.0);
    }

    #[test]
    fn mean_field_can_exceed_ideal_bound() {
        // Competitors are treated as independent of the PU state, so with one
        // mostly busy channel the success probability is overstated.
        let a = energy_analyzer(10, 1, 0.876, SnrModel::StageTwo);
        let res = a.analyze(SensingParams::new(1.1e-4, 0.974)).unwrap();
        let bound = crate::model::upper_bound_throughput(10, &a.cfg.presence_prob);
        assert!(res.network_throughput(10) > bound);
    }

    #[test]
    fn deterministic() {
        let cfg = NetworkConfig::symmetric(20, 5);
        let det = crate::detector::DetectorConfig::default()
            .resolve(&cfg, &Default::default())
            .unwrap();
        let a = Analyzer::new(cfg, det);
        let x = a.analyze(SensingParams::new(1e-3, 0.8)).unwrap();
        let y = a.analyze(SensingParams::new(1e-3, 0.8)).unwrap();
        assert_eq!(x, y);
    }

    fn energy_analyzer(n_su: usize, n_pu: usize, presence: f64, model: SnrModel) -> Analyzer {
        let cfg = net(n_su, n_pu, presence);
        let cfg_det = crate::detector::DetectorConfig {
            snr_model: model,
            ..Default::default()
        };
        let det = cfg_det.resolve(&cfg, &Default::default()).unwrap();
        Analyzer::new(cfg, det)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn chain_invariants(
            n_su in 1usize..30,
            n_pu in 1usize..12,
            presence in 0.0f64..1.0,
            tau in 1.1e-4f64..5e-3,
            p in 0.0f64..1.0,
            per_stage in any::<bool>(),
        ) {
            let model = if per_stage { SnrModel::PerStage } else { SnrModel::StageTwo };
            let a = energy_analyzer(n_su, n_pu, presence, model);
            let res = a.analyze(SensingParams::new(tau, p)).unwrap();
            prop_assert!((res.dist.total() - 1.0).abs() < 1e-9);
            prop_assert_eq!(res.dist.pi_ho[0], 1.0);
            for m in 0..n_pu {
                prop_assert_eq!(res.table.occ[m][0], presence);
                for n in 1..res.delta {
                    prop_assert!(res.table.occ[m][n] >= res.table.occ[m][n - 1]);
                    prop_assert!(res.table.p_d[m][n] >= res.table.p_d[m][n - 1]);
                }
                for n in 1..=res.delta {
                    let d = pruned_distribution(p, &res.table, m, n);
                    prop_assert!((d.total() - 1.0).abs() < 1e-9);
                    let y = pruned_no_tx_prob(p, &res.table, m, n);
                    prop_assert!((y - res.metrics.no_tx_prob[m][n - 1]).abs() < 1e-12);
                }
            }
            for (&h, &l) in res.table.n_ho.iter().zip(&res.table.l) {
                prop_assert!(h >= 0.0 && h <= n_su as f64 + 1e-9);
                prop_assert!(l >= 0.0);
            }
            let r = res.throughput();
            prop_assert!(r >= 0.0);
            prop_assert!(r <= (T - tau) / T + 1e-12);
            let t_i = res.interference_time();
            prop_assert!((0.0..=1.0).contains(&t_i));
        }
    }
}
