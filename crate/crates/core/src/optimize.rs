//! Exhaustive grid search over `(tau, p)` for the constrained throughput
//! maximization problem.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::Analyzer;
use crate::detector::min_sensing_time;
use crate::error::{Error, Result};
use crate::model::{NetworkConfig, QosConstraints, SensingParams};
use crate::sim::{Simulator, SuSchedule};

/// Slack on the misdetection comparison, so that the calibrated detector sits
/// on the boundary rather than just outside it.
const PMD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub tau_steps: usize,
    pub p_lo: f64,
    pub p_hi: f64,
    pub p_steps: usize,
}

impl GridSpec {
    /// 64 x 64 points over `tau in [tau_min, T/2]` and `p in [0.01, 1]`.
    pub fn default_for(cfg: &NetworkConfig, qos: &QosConstraints) -> Result<Self> {
        Ok(Self {
            tau_lo: tau_floor(cfg, qos)?,
            tau_hi: 0.5 * cfg.slot_duration,
            tau_steps: 64,
            p_lo: 0.01,
            p_hi: 1.0,
            p_steps: 64,
        })
    }

    pub fn with_steps(mut self, tau_steps: usize, p_steps: usize) -> Self {
        self.tau_steps = tau_steps;
        self.p_steps = p_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_steps == 0 || self.p_steps == 0 {
            return Err(Error::EmptyGrid("zero steps".into()));
        }
        if !(self.tau_lo <= self.tau_hi) || !(self.p_lo <= self.p_hi) {
            return Err(Error::EmptyGrid("range bounds out of order".into()));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
        if steps == 1 {
            return vec![lo];
        }
        (0..steps)
            .map(|i| {
                if i == steps - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (steps - 1) as f64
                }
            })
            .collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        Self::axis(self.tau_lo, self.tau_hi, self.tau_steps)
    }

    pub fn ps(&self) -> Vec<f64> {
        Self::axis(self.p_lo, self.p_hi, self.p_steps)
    }
}

/// Minimum sensing time of the weakest channel.
pub fn tau_floor(cfg: &NetworkConfig, qos: &QosConstraints) -> Result<f64> {
    let t = min_sensing_time(cfg.min_pu_snr(), cfg.sampling_freq, qos.p_fa_max, qos.p_d_min)?;
    Ok(t.max(1.0 / cfg.sampling_freq))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointEval {
    pub tau: f64,
    pub p: f64,
    /// Per-SU throughput.
    pub r: f64,
    pub t_i: f64,
    pub p_md_max: f64,
    pub feasible: bool,
}

impl PointEval {
    pub fn new(tau: f64, p: f64, r: f64, t_i: f64, p_md_max: f64, qos: &QosConstraints) -> Self {
        let feasible = t_i <= qos.t_i_max && p_md_max <= qos.p_md_max + PMD_SLACK;
        Self {
            tau,
            p,
            r,
            t_i,
            p_md_max,
            feasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptResult {
    pub tau_star: f64,
    pub p_star: f64,
    pub r_star: f64,
    pub t_i_at_star: f64,
    pub feasible: bool,
    pub tau_steps: usize,
    pub p_steps: usize,
    /// Grid in row-major order: `tau` outer, `p` inner.
    pub grid: Vec<PointEval>,
}

impl OptResult {
    pub fn at(&self, i_tau: usize, i_p: usize) -> &PointEval {
        &self.grid[i_tau * self.p_steps + i_p]
    }

    pub fn best(&self) -> SensingParams {
        SensingParams::new(self.tau_star, self.p_star)
    }

    /// Interior grid points that beat all eight neighbours while staying
    /// below `fraction * r_star`. An empty result supports unimodality.
    pub fn spurious_local_maxima(&self, fraction: f64) -> Vec<PointEval> {
        let mut out = Vec::new();
        for i in 1..self.tau_steps.saturating_sub(1) {
            for j in 1..self.p_steps.saturating_sub(1) {
                let here = self.at(i, j);
                let is_max = (i - 1..=i + 1)
                    .flat_map(|a| (j - 1..=j + 1).map(move |b| (a, b)))
                    .filter(|&(a, b)| (a, b) != (i, j))
                    .all(|(a, b)| self.at(a, b).r < here.r);
                if is_max && here.r < fraction * self.r_star {
                    out.push(*here);
                }
            }
        }
        out
    }
}

pub fn evaluate_point(analyzer: &Analyzer, tau: f64, p: f64, qos: &QosConstraints) -> Result<PointEval> {
    let res = analyzer.analyze(SensingParams::new(tau, p))?;
    Ok(PointEval::new(
        tau,
        p,
        res.throughput(),
        res.interference_time(),
        res.max_misdetection(),
        qos,
    ))
}

/// Same as [`evaluate_point`] with throughput and interference measured by
/// simulation; the misdetection constraint still uses the analytic value.
pub fn evaluate_point_simulated(
    analyzer: &Analyzer,
    sim: &Simulator,
    tau: f64,
    p: f64,
    qos: &QosConstraints,
    n_slots: u64,
    seed: u64,
) -> Result<PointEval> {
    let res = analyzer.analyze(SensingParams::new(tau, p))?;
    let sch = vec![SuSchedule::uniform(SensingParams::new(tau, p)); sim.cfg.n_su];
    let m = sim.run_replication(&sch, n_slots, seed)?;
    Ok(PointEval::new(
        tau,
        p,
        m.throughput.mean,
        m.interference_time.mean,
        res.max_misdetection(),
        qos,
    ))
}

pub fn brute_force_optimize(analyzer: &Analyzer, grid: &GridSpec, qos: &QosConstraints) -> Result<OptResult> {
    brute_force_with(grid, |tau, p| evaluate_point(analyzer, tau, p, qos))
}

/// Grid search with an arbitrary point evaluator. Points are evaluated in
/// parallel and collected in grid order; the winner is the feasible point of
/// largest throughput, ties going to the smaller `tau`, then the smaller `p`.
/// Without feasible points the best infeasible one is reported.
pub fn brute_force_with<F>(grid: &GridSpec, eval: F) -> Result<OptResult>
where
    F: Fn(f64, f64) -> Result<PointEval> + Sync,
{
    grid.validate()?;
    let taus = grid.taus();
    let ps = grid.ps();
    let points: Vec<(f64, f64)> = taus
        .iter()
        .flat_map(|&t| ps.iter().map(move |&p| (t, p)))
        .collect();
    let evals = points
        .par_iter()
        .map(|&(t, p)| eval(t, p))
        .collect::<Result<Vec<_>>>()?;

    let any_feasible = evals.iter().any(|e| e.feasible);
    let mut best: Option<&PointEval> = None;
    for e in evals.iter().filter(|e| e.feasible || !any_feasible) {
        let better = match best {
            None => true,
            Some(b) => e.r > b.r || (e.r == b.r && (e.tau, e.p) < (b.tau, b.p)),
        };
        if better {
            best = Some(e);
        }
    }
    let best = *best.ok_or_else(|| Error::EmptyGrid("no points evaluated".into()))?;
    Ok(OptResult {
        tau_star: best.tau,
        p_star: best.p,
        r_star: best.r,
        t_i_at_star: best.t_i,
        feasible: any_feasible,
        tau_steps: taus.len(),
        p_steps: ps.len(),
        grid: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{Detector, DetectorConfig};

    fn stub(tau: f64, p: f64, feasible: bool) -> Result<PointEval> {
        Ok(PointEval {
            tau,
            p,
            r: tau * p,
            t_i: 0.0,
            p_md_max: 0.0,
            feasible,
        })
    }

    fn grid(tau_lo: f64, tau_hi: f64, n_tau: usize, p_lo: f64, p_hi: f64, n_p: usize) -> GridSpec {
        GridSpec {
            tau_lo,
            tau_hi,
            tau_steps: n_tau,
            p_lo,
            p_hi,
            p_steps: n_p,
        }
    }

    #[test]
    fn single_point_grid() {
        let g = grid(1e-3, 1e-3, 1, 0.5, 0.5, 1);
        let r = brute_force_with(&g, |t, p| stub(t, p, true)).unwrap();
        assert_eq!((r.tau_star, r.p_star), (1e-3, 0.5));
        assert!(r.feasible);
    }

    #[test]
    fn monotone_stub_picks_corner() {
        let g = grid(1e-3, 2e-3, 2, 0.2, 0.9, 2);
        let r = brute_force_with(&g, |t, p| stub(t, p, true)).unwrap();
        assert_eq!((r.tau_star, r.p_star), (2e-3, 0.9));
    }

    #[test]
    fn ties_prefer_small_tau_then_small_p() {
        let g = grid(1e-3, 3e-3, 3, 0.1, 0.3, 3);
        let r = brute_force_with(&g, |t, p| {
            Ok(PointEval {
                tau: t,
                p,
                r: 1.0,
                t_i: 0.0,
                p_md_max: 0.0,
                feasible: true,
            })
        })
        .unwrap();
        assert_eq!((r.tau_star, r.p_star), (1e-3, 0.1));
    }

    #[test]
    fn infeasible_grid_reports_best_point() {
        let g = grid(1e-3, 2e-3, 2, 0.2, 0.9, 2);
        let r = brute_force_with(&g, |t, p| stub(t, p, false)).unwrap();
        assert!(!r.feasible);
        assert_eq!((r.tau_star, r.p_star), (2e-3, 0.9));
        let r = brute_force_with(&g, |t, p| stub(t, p, t < 1.5e-3)).unwrap();
        assert!(r.feasible);
        assert_eq!(r.tau_star, 1e-3);
    }

    #[test]
    fn empty_grid_rejected() {
        let g = grid(1e-3, 2e-3, 0, 0.2, 0.9, 2);
        assert!(matches!(brute_force_with(&g, |t, p| stub(t, p, true)), Err(Error::EmptyGrid(_))));
        let g = grid(2e-3, 1e-3, 2, 0.2, 0.9, 2);
        assert!(g.validate().is_err());
    }

    #[test]
    fn evaluate_point_examples() {
        let cfg = NetworkConfig::symmetric(3, 7);
        let qos = QosConstraints::default();
        let det = DetectorConfig::default().resolve(&cfg, &qos).unwrap();
        let a = Analyzer::new(cfg.clone(), det);
        let e = evaluate_point(&a, 1e-3, 0.0, &qos).unwrap();
        assert_eq!((e.r, e.t_i), (0.0, 0.0));
        assert!(e.feasible);

        let vac = QosConstraints::vacuous();
        for (t, p) in [(1e-5, 1.0), (5e-3, 0.3), (2e-4, 0.9)] {
            assert!(evaluate_point(&a, t, p, &vac).unwrap().feasible);
        }

        let tau_min = tau_floor(&cfg, &qos).unwrap();
        let below = evaluate_point(&a, 0.5 * tau_min, 0.5, &qos).unwrap();
        assert!(below.p_md_max > qos.p_md_max && !below.feasible);
        let at = evaluate_point(&a, tau_min, 0.5, &qos).unwrap();
        assert!(at.p_md_max <= qos.p_md_max + PMD_SLACK);
    }

    #[test]
    fn refining_never_loses() {
        let cfg = NetworkConfig::symmetric(3, 7);
        let qos = QosConstraints::default();
        let a = Analyzer::new(cfg.clone(), Detector::fixed(0.1, 0.9));
        let coarse = GridSpec::default_for(&cfg, &qos).unwrap().with_steps(9, 9);
        let fine = coarse.with_steps(17, 17);
        let rc = brute_force_optimize(&a, &coarse, &qos).unwrap();
        let rf = brute_force_optimize(&a, &fine, &qos).unwrap();
        assert!(rf.r_star >= rc.r_star);
    }
}
