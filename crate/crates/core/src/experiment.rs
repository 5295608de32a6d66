//! Experiment kinds behind the command-line tool. Each produces tables and a
//! JSON summary; writing them is left to the caller.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

use crate::adaptive::{run_closed_loop, subgradient_field, Algorithm, FieldSpec, StepSchedule};
use crate::error::{Error, Result};
use crate::model::upper_bound_throughput;
use crate::optimize::{brute_force_optimize, GridSpec};
use crate::report::CsvTable;
use crate::row;
use crate::scenario::{AxisName, Scenario, SweepAxis};
use crate::sim::{Protocol, SuSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Analyze,
    Simulate,
    Optimize,
    Adapt,
    Sweep,
    PpersistentCompare,
    SubgradientField,
    UpperBound,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Analyze,
        ExperimentKind::Simulate,
        ExperimentKind::Optimize,
        ExperimentKind::Adapt,
        ExperimentKind::Sweep,
        ExperimentKind::PpersistentCompare,
        ExperimentKind::SubgradientField,
        ExperimentKind::UpperBound,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Analyze => "analyze",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Optimize => "optimize",
            ExperimentKind::Adapt => "adapt",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::PpersistentCompare => "ppersistent-compare",
            ExperimentKind::SubgradientField => "subgradient-field",
            ExperimentKind::UpperBound => "upper-bound",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment kind {s:?}")))
    }
}

/// Adaptive algorithm choice; `None` freezes the initial operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmChoice {
    One,
    Two,
    None,
}

impl FromStr for AlgorithmChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(AlgorithmChoice::One),
            "2" => Ok(AlgorithmChoice::Two),
            "none" => Ok(AlgorithmChoice::None),
            other => Err(Error::config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Run settings; `None` falls back to the scenario.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub slots: Option<u64>,
    pub grid: Option<[usize; 2]>,
    pub protocol: Option<Protocol>,
    pub algorithm: Option<AlgorithmChoice>,
    /// Replaces the scenario's sweep axes when non-empty.
    pub axes: Vec<String>,
    pub frames: Option<u64>,
}

pub struct ExperimentOutput {
    pub tables: Vec<CsvTable>,
    pub summary: serde_json::Value,
    pub seed: u64,
}

fn axes(scenario: &Scenario, opts: &RunOptions) -> Result<Vec<SweepAxis>> {
    if opts.axes.is_empty() {
        Ok(scenario.sweep.clone())
    } else {
        opts.axes
            .iter()
            .map(|a| SweepAxis::parse(a, scenario.network.slot_duration))
            .collect()
    }
}

/// Cartesian product of the axes, first axis slowest.
fn sweep_points(scenario: &Scenario, axes: &[SweepAxis]) -> Result<Vec<(Vec<f64>, Scenario)>> {
    let mut points = vec![(Vec::new(), scenario.clone())];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for (coords, s) in &points {
            for &v in &axis.values {
                let mut c = coords.clone();
                c.push(v);
                next.push((c, s.with_axis(axis.name, v)?));
            }
        }
        points = next;
    }
    Ok(points)
}

fn is_axis(axes: &[SweepAxis], name: &str) -> bool {
    axes.iter().any(|a| a.name.as_str() == name)
}

/// Axis columns followed by the named columns that are not axes themselves.
fn columns<'a>(axes: &'a [SweepAxis], rest: &[&'a str]) -> Vec<&'a str> {
    axes.iter()
        .map(|a| a.name.as_str())
        .chain(rest.iter().copied().filter(|c| !is_axis(axes, c)))
        .collect()
}

/// Row matching `columns(axes, names)`.
fn with_coords(axes: &[SweepAxis], coords: &[f64], names: &[&str], rest: Vec<String>) -> Vec<String> {
    let mut row: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
    row.extend(
        names
            .iter()
            .zip(rest)
            .filter(|(n, _)| !is_axis(axes, n))
            .map(|(_, v)| v),
    );
    row
}

fn grid_for(s: &Scenario, opts: &RunOptions) -> Result<GridSpec> {
    let grid = GridSpec::default_for(&s.network, &s.qos)?;
    Ok(match opts.grid.or(s.grid) {
        Some([t, p]) => grid.with_steps(t, p),
        None => grid,
    })
}

pub fn run_experiment(kind: ExperimentKind, scenario: &Scenario, opts: &RunOptions) -> Result<ExperimentOutput> {
    let mut scenario = scenario.clone();
    if let Some(protocol) = opts.protocol {
        scenario.simulation.protocol = protocol;
    }
    let seed = opts.seed.unwrap_or(scenario.simulation.seed);
    let reps = opts.reps.unwrap_or(scenario.simulation.reps);
    let slots = opts.slots.unwrap_or(scenario.simulation.slots);
    let axes = axes(&scenario, opts)?;
    let points = sweep_points(&scenario, &axes)?;
    let (tables, summary) = match kind {
        ExperimentKind::Analyze => analyze(&axes, &points)?,
        ExperimentKind::Simulate => simulate(&axes, &points, slots, reps, seed)?,
        ExperimentKind::Sweep => sweep(&axes, &points, slots, reps, seed)?,
        ExperimentKind::Optimize => optimize(&axes, &points, opts, slots, reps, seed)?,
        ExperimentKind::Adapt => adapt(&scenario, opts, reps, seed)?,
        ExperimentKind::PpersistentCompare => compare(&axes, &points, slots, reps, seed)?,
        ExperimentKind::SubgradientField => field(&scenario, &axes, reps, seed)?,
        ExperimentKind::UpperBound => upper_bound(&axes, &points)?,
    };
    Ok(ExperimentOutput { tables, summary, seed })
}

type Tables = (Vec<CsvTable>, serde_json::Value);

fn analyze(axes: &[SweepAxis], points: &[(Vec<f64>, Scenario)]) -> Result<Tables> {
    let names = ["tau", "p", "stages", "r", "network_r", "t_i", "p_md_max", "upper_bound"];
    let mut t = CsvTable::new("analysis", &columns(axes, &names));
    for (coords, s) in points {
        let a = s.analyzer()?.analyze(s.sensing)?;
        t.push(with_coords(
            axes,
            coords,
            &names,
            row![
                s.sensing.tau,
                s.sensing.p,
                a.delta,
                a.throughput(),
                a.network_throughput(s.network.n_su),
                a.interference_time(),
                a.max_misdetection(),
                upper_bound_throughput(s.network.n_su, &s.network.presence_prob)
            ],
        ))?;
    }
    let mut tables = vec![t];
    if points.len() == 1 {
        let s = &points[0].1;
        let a = s.analyzer()?.analyze(s.sensing)?;
        let mut st = CsvTable::new("stages", &["channel", "stage", "occupancy", "snr", "p_fa", "p_d"]);
        for m in 0..s.network.n_pu {
            for n in 0..a.delta {
                st.push(row![
                    m,
                    n + 1,
                    a.table.occ[m][n],
                    a.table.snr[m][n],
                    a.table.p_fa[n],
                    a.table.p_d[m][n]
                ])?;
            }
        }
        tables.push(st);
    }
    let summary = json!({ "points": points.len() });
    Ok((tables, summary))
}

fn sim_row(s: &Scenario, slots: u64, reps: u64, seed: u64) -> Result<(Vec<String>, f64)> {
    let sim = s.simulator()?;
    let schedules = vec![SuSchedule::uniform(s.sensing); s.network.n_su];
    let m = sim.monte_carlo(&schedules, slots, reps, seed, 0)?;
    Ok((
        row![
            m.throughput.mean,
            m.throughput.ci_half_width,
            m.network_throughput(),
            m.interference_time.mean,
            m.interference_time.ci_half_width,
            m.sensing_overhead.mean,
            m.handoffs,
            m.delay,
            m.successes,
            m.collisions
        ],
        m.throughput.mean,
    ))
}

const SIM_COLUMNS: [&str; 10] = [
    "sim_r",
    "sim_r_ci",
    "sim_network_r",
    "sim_t_i",
    "sim_t_i_ci",
    "sensing_overhead",
    "handoffs",
    "delay",
    "successes",
    "collisions",
];

fn simulate(axes: &[SweepAxis], points: &[(Vec<f64>, Scenario)], slots: u64, reps: u64, seed: u64) -> Result<Tables> {
    let names = ["tau", "p"];
    let mut cols = columns(axes, &names);
    cols.extend(SIM_COLUMNS);
    let mut t = CsvTable::new("simulation", &cols);
    for (coords, s) in points {
        let (cells, _) = sim_row(s, slots, reps, seed)?;
        let mut row = with_coords(axes, coords, &names, row![s.sensing.tau, s.sensing.p]);
        row.extend(cells);
        t.push(row)?;
    }
    Ok((vec![t], json!({ "points": points.len(), "slots": slots, "reps": reps })))
}

fn sweep(axes: &[SweepAxis], points: &[(Vec<f64>, Scenario)], slots: u64, reps: u64, seed: u64) -> Result<Tables> {
    let names = ["tau", "p", "r", "t_i"];
    let mut cols = columns(axes, &names);
    cols.extend(SIM_COLUMNS);
    let mut t = CsvTable::new("sweep", &cols);
    for (coords, s) in points {
        let a = s.analyzer()?.analyze(s.sensing)?;
        let (cells, _) = sim_row(s, slots, reps, seed)?;
        let mut row = with_coords(
            axes,
            coords,
            &names,
            row![s.sensing.tau, s.sensing.p, a.throughput(), a.interference_time()],
        );
        row.extend(cells);
        t.push(row)?;
    }
    Ok((vec![t], json!({ "points": points.len(), "slots": slots, "reps": reps })))
}

fn optimize(
    axes: &[SweepAxis],
    points: &[(Vec<f64>, Scenario)],
    opts: &RunOptions,
    slots: u64,
    reps: u64,
    seed: u64,
) -> Result<Tables> {
    let names = [
        "tau_star",
        "p_star",
        "r_star",
        "network_r_star",
        "t_i_at_star",
        "feasible",
        "sim_r_at_star",
        "sim_r_ci",
    ];
    let cols = columns(axes, &names);
    let mut t = CsvTable::new("optimum", &cols);
    let mut grid_table = None;
    for (coords, s) in points {
        let grid = grid_for(s, opts)?;
        let res = brute_force_optimize(&s.analyzer()?, &grid, &s.qos)?;
        let sim = s.simulator()?;
        let m = sim.monte_carlo(&vec![SuSchedule::uniform(res.best()); s.network.n_su], slots, reps, seed, 0)?;
        t.push(with_coords(
            axes,
            coords,
            &names,
            row![
                res.tau_star,
                res.p_star,
                res.r_star,
                res.r_star * s.network.n_su as f64,
                res.t_i_at_star,
                res.feasible,
                m.throughput.mean,
                m.throughput.ci_half_width
            ],
        ))?;
        if points.len() == 1 {
            let mut g = CsvTable::new("grid", &["tau", "p", "r", "t_i", "p_md_max", "feasible"]);
            for pt in &res.grid {
                g.push(row![pt.tau, pt.p, pt.r, pt.t_i, pt.p_md_max, pt.feasible])?;
            }
            grid_table = Some(g);
        }
    }
    let mut tables = vec![t];
    tables.extend(grid_table);
    Ok((tables, json!({ "points": points.len() })))
}

fn adapt(scenario: &Scenario, opts: &RunOptions, reps: u64, seed: u64) -> Result<Tables> {
    let mut acfg = scenario.adaptive.config;
    match opts.algorithm.unwrap_or(match acfg.algorithm {
        Algorithm::One => AlgorithmChoice::One,
        Algorithm::Two => AlgorithmChoice::Two,
    }) {
        AlgorithmChoice::One => acfg.algorithm = Algorithm::One,
        AlgorithmChoice::Two => acfg.algorithm = Algorithm::Two,
        AlgorithmChoice::None => acfg.schedule = StepSchedule::Zero,
    }
    let frames = opts.frames.unwrap_or(scenario.adaptive.frames);
    let sim = scenario.simulator()?;
    let mut traj = CsvTable::new(
        "trajectory",
        &["rep", "k", "su", "tau", "p", "r_est", "t_i_est", "p_md", "a", "d", "e"],
    );
    let mut frame_t = CsvTable::new(
        "frames",
        &[
            "rep",
            "k",
            "tau_mean",
            "p_mean",
            "throughput",
            "interference_time",
            "objective",
            "best_objective",
            "grad_norm_sq",
            "bound",
        ],
    );
    let mut converged = Vec::new();
    for rep in 0..reps.max(1) {
        let run = run_closed_loop(&sim, &scenario.qos, &acfg, frames, seed.wrapping_add(rep))?;
        if rep == 0 {
            for u in &run.updates {
                traj.push(row![rep, u.k, u.su, u.tau, u.p, u.r_est, u.t_i_est, u.p_md, u.a, u.d, u.e])?;
            }
        }
        for f in &run.frames {
            frame_t.push(row![
                rep,
                f.k,
                f.tau_mean,
                f.p_mean,
                f.throughput,
                f.interference_time,
                f.objective,
                f.best_objective,
                f.grad_norm_sq,
                f.bound
            ])?;
        }
        converged.push(run.converged(0.5));
    }
    let n = converged.len() as f64;
    let r = converged.iter().map(|c| c.0).sum::<f64>() / n;
    let t_i = converged.iter().map(|c| c.1).sum::<f64>() / n;
    let summary = json!({
        "frames": frames,
        "reps": converged.len(),
        "converged_throughput": r,
        "converged_network_throughput": r * scenario.network.n_su as f64,
        "converged_interference": t_i,
    });
    Ok((vec![traj, frame_t], summary))
}

fn compare(axes: &[SweepAxis], points: &[(Vec<f64>, Scenario)], slots: u64, reps: u64, seed: u64) -> Result<Tables> {
    let names = [
        "tau",
        "p",
        "conventional_network_r",
        "modified_network_r",
        "conventional_overhead",
        "modified_overhead",
        "throughput_diff_pct",
        "overhead_reduction_pct",
    ];
    let mut t = CsvTable::new("ppersistent", &columns(axes, &names));
    for (coords, s) in points {
        let schedules = vec![SuSchedule::uniform(s.sensing); s.network.n_su];
        let run = |protocol| -> Result<(f64, f64)> {
            let sim = s.simulator()?.with_protocol(protocol);
            let m = sim.monte_carlo(&schedules, slots, reps, seed, 0)?;
            Ok((m.network_throughput(), m.sensing_overhead.mean * s.network.n_su as f64))
        };
        let (conv_r, conv_o) = run(Protocol::Conventional)?;
        let (mod_r, mod_o) = run(Protocol::Modified)?;
        let diff = if mod_r > 0.0 { 100.0 * (conv_r - mod_r) / mod_r } else { 0.0 };
        let reduction = if conv_o > 0.0 { 100.0 * (conv_o - mod_o) / conv_o } else { 0.0 };
        t.push(with_coords(
            axes,
            coords,
            &names,
            row![s.sensing.tau, s.sensing.p, conv_r, mod_r, conv_o, mod_o, diff, reduction],
        ))?;
    }
    Ok((vec![t], json!({ "points": points.len(), "slots": slots, "reps": reps })))
}

fn field(scenario: &Scenario, axes: &[SweepAxis], reps: u64, seed: u64) -> Result<Tables> {
    let values = |name: AxisName| {
        axes.iter()
            .find(|a| a.name == name)
            .map(|a| a.values.clone())
            .ok_or_else(|| Error::config(format!("subgradient field needs a {} axis", name.as_str())))
    };
    let spec = FieldSpec {
        taus: values(AxisName::Tau)?,
        ps: values(AxisName::P)?,
        n_realizations: reps as usize,
        seed,
    };
    let sim = scenario.simulator()?;
    let pts = subgradient_field(&sim, &scenario.qos, &scenario.adaptive.config, &spec)?;
    let mut t = CsvTable::new(
        "field",
        &["tau", "p", "g_tau", "g_p", "grad_tau", "grad_p", "inner", "r", "t_i", "feasible"],
    );
    for pt in &pts {
        t.push(row![pt.tau, pt.p, pt.g_tau, pt.g_p, pt.grad_tau, pt.grad_p, pt.inner(), pt.r, pt.t_i, pt.feasible])?;
    }
    let aligned = pts.iter().filter(|p| p.feasible && p.inner() >= 0.0).count();
    let feasible = pts.iter().filter(|p| p.feasible).count();
    Ok((
        vec![t],
        json!({ "points": pts.len(), "feasible": feasible, "aligned": aligned, "realizations": reps }),
    ))
}

fn upper_bound(axes: &[SweepAxis], points: &[(Vec<f64>, Scenario)]) -> Result<Tables> {
    let names = ["n_su", "n_pu", "upper_bound"];
    let mut t = CsvTable::new("upper_bound", &columns(axes, &names));
    let mut last = 0.0;
    for (coords, s) in points {
        last = upper_bound_throughput(s.network.n_su, &s.network.presence_prob);
        t.push(with_coords(axes, coords, &names, row![s.network.n_su, s.network.n_pu, last]))?;
    }
    Ok((vec![t], json!({ "points": points.len(), "upper_bound": last })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_bound_example() {
        let s = Scenario::bundled("default").unwrap().with_axis(AxisName::NSu, 5.0).unwrap();
        let out = run_experiment(ExperimentKind::UpperBound, &s, &RunOptions::default()).unwrap();
        assert_eq!(out.summary["upper_bound"], 2.5);
    }

    #[test]
    fn kinds_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.as_str().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("plot".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn sweep_product_order() {
        let s = Scenario::bundled("default").unwrap();
        let axes = vec![
            SweepAxis::parse("n_su=2,3", 0.01).unwrap(),
            SweepAxis::parse("p=0.5,1", 0.01).unwrap(),
        ];
        let pts = sweep_points(&s, &axes).unwrap();
        let coords: Vec<Vec<f64>> = pts.iter().map(|p| p.0.clone()).collect();
        assert_eq!(coords, vec![vec![2.0, 0.5], vec![2.0, 1.0], vec![3.0, 0.5], vec![3.0, 1.0]]);
        assert_eq!(pts[3].1.network.n_su, 3);
    }
}
