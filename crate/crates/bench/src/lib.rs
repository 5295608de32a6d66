//! Shared fixtures for the benchmarks.

use rsop_core::optimize::GridSpec;
use rsop_core::{Analyzer, Scenario, Simulator, SuSchedule};

pub struct Fixture {
    pub scenario: Scenario,
    pub analyzer: Analyzer,
    pub simulator: Simulator,
    pub schedules: Vec<SuSchedule>,
}

impl Fixture {
    pub fn bundled(name: &str) -> Self {
        let scenario = Scenario::bundled(name).expect("bundled scenario");
        let analyzer = scenario.analyzer().expect("analyzer");
        let simulator = scenario.simulator().expect("simulator");
        let schedules = vec![SuSchedule::uniform(scenario.sensing); scenario.network.n_su];
        Self {
            scenario,
            analyzer,
            simulator,
            schedules,
        }
    }

    /// Optimizer grid with `n` points per axis.
    pub fn grid(&self, n: usize) -> GridSpec {
        let mut g = GridSpec::default_for(&self.scenario.network, &self.scenario.qos).expect("grid");
        g.tau_steps = n;
        g.p_steps = n;
        g
    }
}
