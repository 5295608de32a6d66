#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adaptive;
pub mod chain;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod model;
pub mod optimize;
pub mod report;
pub mod scenario;
pub mod sim;

pub use chain::{Analysis, Analyzer, ChainDistribution, OccupancyTable, PerfMetrics};
pub use detector::{Detector, DetectorConfig, SnrModel, ThresholdRule};
pub use error::{Error, Result};
pub use model::{NetworkConfig, QosConstraints, SensingOrder, SensingParams, SlotTiming};
pub use adaptive::{AdaptiveConfig, AdaptiveState, Algorithm, FrameEstimate, InterferenceReport, StepSchedule};
pub use optimize::{brute_force_optimize, GridSpec, OptResult};
pub use sim::{Protocol, PuModel, RunMetrics, Simulator, SuSchedule};
pub use scenario::Scenario;
