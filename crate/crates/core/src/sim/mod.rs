//! Monte Carlo simulation of the slot process.

mod slot;

pub use slot::{
    DetectionSnr, Disposition, Protocol, PuModel, PuProcess, SlotOutcome, SuOutcome,
    SuSchedule, Simulator,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// z-value of a two-sided 95% normal interval.
const Z95: f64 = 1.96;

/// Random stream of replication `rep` under `seed`. Replication 0 uses the
/// default stream, so a single replication matches [`Simulator::run_replication`].
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Mean with its standard error and 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub ci_half_width: f64,
}

impl Estimate {
    fn new(mean: f64, std_err: f64) -> Self {
        Self {
            mean,
            std_err,
            ci_half_width: Z95 * std_err,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Standard error of the mean, zero with fewer than two samples.
    fn std_err(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    fn estimate(&self) -> Estimate {
        Estimate::new(self.mean(), self.std_err())
    }
}

/// Aggregated simulation outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub n_su: usize,
    pub n_slots: u64,
    pub n_reps: u64,
    /// Per-SU ACKed throughput per slot, normalized by `T`.
    pub throughput: Estimate,
    /// Network interference time, normalized by `T * N_p`.
    pub interference_time: Estimate,
    /// Channels sensed per SU per slot.
    pub sensing_overhead: Estimate,
    /// Handoffs per SU per slot.
    pub handoffs: f64,
    /// Mean time from slot start to first transmission, seconds.
    pub delay: f64,
    pub successes: u64,
    /// Transmissions on a free channel lost to another SU.
    pub collisions: u64,
    /// Transmissions started on a busy channel.
    pub misdetections: u64,
    pub terminated: u64,
    pub per_su_throughput: Vec<f64>,
}

impl RunMetrics {
    /// Sum of per-SU throughput over the network.
    pub fn network_throughput(&self) -> f64 {
        self.throughput.mean * self.n_su as f64
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    throughput: Moments,
    interference: Moments,
    overhead: Moments,
    handoffs: f64,
    delay: f64,
    successes: u64,
    collisions: u64,
    misdetections: u64,
    terminated: u64,
    per_su: Vec<f64>,
}

impl Accumulator {
    fn new(n_su: usize) -> Self {
        Self {
            throughput: Moments::default(),
            interference: Moments::default(),
            overhead: Moments::default(),
            handoffs: 0.0,
            delay: 0.0,
            successes: 0,
            collisions: 0,
            misdetections: 0,
            terminated: 0,
            per_su: vec![0.0; n_su],
        }
    }

    fn push(&mut self, out: &SlotOutcome) {
        self.throughput.push(out.mean_throughput());
        self.interference.push(out.interference_time);
        self.overhead.push(out.mean_sensed());
        for (k, su) in out.su.iter().enumerate() {
            self.handoffs += su.handoffs as f64;
            self.delay += su.delay;
            self.per_su[k] += su.throughput;
            match su.disposition {
                Disposition::Transmitted => self.successes += 1,
                Disposition::Interfered if su.misdetected => self.misdetections += 1,
                Disposition::Interfered => self.collisions += 1,
                Disposition::Terminated => self.terminated += 1,
            }
        }
    }

    fn finish(self) -> RunMetrics {
        let n_su = self.per_su.len();
        let slots = self.throughput.n;
        let visits = (slots * n_su as u64) as f64;
        RunMetrics {
            n_su,
            n_slots: slots,
            n_reps: 1,
            throughput: self.throughput.estimate(),
            interference_time: self.interference.estimate(),
            sensing_overhead: self.overhead.estimate(),
            handoffs: self.handoffs / visits,
            delay: self.delay / visits,
            successes: self.successes,
            collisions: self.collisions,
            misdetections: self.misdetections,
            terminated: self.terminated,
            per_su_throughput: self.per_su.iter().map(|s| s / slots as f64).collect(),
        }
    }
}

impl Simulator {
    /// Runs `n_slots` slots from a fresh PU process with the given stream.
    pub fn run_with_rng(&self, schedules: &[SuSchedule], n_slots: u64, rng: &mut ChaCha8Rng) -> Result<RunMetrics> {
        if n_slots == 0 {
            return Err(Error::config("n_slots must be at least 1"));
        }
        if schedules.len() != self.cfg.n_su {
            return Err(Error::config(format!(
                "{} schedules for {} SUs",
                schedules.len(),
                self.cfg.n_su
            )));
        }
        let mut acc = Accumulator::new(schedules.len());
        let mut pu = PuProcess::new();
        for _ in 0..n_slots {
            let out = self.run_slot(schedules, &mut pu, rng)?;
            acc.push(&out);
        }
        Ok(acc.finish())
    }

    pub fn run_replication(&self, schedules: &[SuSchedule], n_slots: u64, seed: u64) -> Result<RunMetrics> {
        self.run_with_rng(schedules, n_slots, &mut replication_rng(seed, 0))
    }

    /// Independent replications on `parallelism` worker threads. The result
    /// does not depend on the number of threads.
    pub fn monte_carlo(
        &self,
        schedules: &[SuSchedule],
        n_slots: u64,
        n_reps: u64,
        base_seed: u64,
        parallelism: usize,
    ) -> Result<RunMetrics> {
        if n_reps == 0 {
            return Err(Error::config("n_reps must be at least 1"));
        }
        let run = || {
            (0..n_reps)
                .into_par_iter()
                .map(|rep| self.run_with_rng(schedules, n_slots, &mut replication_rng(base_seed, rep)))
                .collect::<Result<Vec<_>>>()
        };
        let reps = if parallelism == 0 {
            run()?
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(parallelism)
                .build()
                .map_err(|e| Error::config(e.to_string()))?
                .install(run)?
        };
        Ok(aggregate(reps))
    }

    /// Per-slot trace, truncated to `max_rows` slots.
    pub fn trace(&self, schedules: &[SuSchedule], n_slots: u64, seed: u64, max_rows: usize) -> Result<Vec<SlotOutcome>> {
        let mut rng = replication_rng(seed, 0);
        let mut pu = PuProcess::new();
        let rows = (n_slots as usize).min(max_rows);
        (0..rows).map(|_| self.run_slot(schedules, &mut pu, &mut rng)).collect()
    }
}

/// Combines replications in index order. Uncertainty comes from the spread of
/// replication means, or from the within-replication error for a single one.
pub fn aggregate(reps: Vec<RunMetrics>) -> RunMetrics {
    let n = reps.len();
    assert!(n > 0, "no replications to aggregate");
    if n == 1 {
        return reps.into_iter().next().unwrap();
    }
    let across = |f: &dyn Fn(&RunMetrics) -> f64| {
        let mut m = Moments::default();
        for r in &reps {
            m.push(f(r));
        }
        m.estimate()
    };
    let mean = |f: &dyn Fn(&RunMetrics) -> f64| reps.iter().map(f).sum::<f64>() / n as f64;
    let n_su = reps[0].n_su;
    RunMetrics {
        n_su,
        n_slots: reps[0].n_slots,
        n_reps: n as u64,
        throughput: across(&|r| r.throughput.mean),
        interference_time: across(&|r| r.interference_time.mean),
        sensing_overhead: across(&|r| r.sensing_overhead.mean),
        handoffs: mean(&|r| r.handoffs),
        delay: mean(&|r| r.delay),
        successes: reps.iter().map(|r| r.successes).sum(),
        collisions: reps.iter().map(|r| r.collisions).sum(),
        misdetections: reps.iter().map(|r| r.misdetections).sum(),
        terminated: reps.iter().map(|r| r.terminated).sum(),
        per_su_throughput: (0..n_su)
            .map(|k| mean(&|r| r.per_su_throughput[k]))
            .collect(),
    }
}
