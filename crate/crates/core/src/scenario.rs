//! Scenario files: TOML descriptions of a network, an operating point, QoS
//! limits and run settings, plus the scenarios bundled with the crate.
//!
//! Times accept `s`, `ms`, `us`/`µs`, `ns` or `T` (fraction of the slot),
//! frequencies `Hz`, `kHz`, `MHz`, `GHz`, and powers either a linear number or
//! a `dB` string relative to the noise power unit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptive::{AdaptiveConfig, Algorithm, InterferenceReport, StepSchedule};
use crate::chain::Analyzer;
use crate::detector::{DetectorConfig, SnrModel, ThresholdRule};
use crate::error::{Error, Result};
use crate::model::{NetworkConfig, QosConstraints, SensingParams};
use crate::optimize::tau_floor;
use crate::sim::{DetectionSnr, Protocol, PuModel, Simulator};

const BUNDLED: &[(&str, &str)] = &[
    ("default", include_str!("../scenarios/default.toml")),
    ("fig4-access", include_str!("../scenarios/fig4-access.toml")),
    ("fig5-sensing", include_str!("../scenarios/fig5-sensing.toml")),
    ("fig6-false-alarm", include_str!("../scenarios/fig6-false-alarm.toml")),
    ("fig7-ns2", include_str!("../scenarios/fig7-ns2.toml")),
    ("fig7-ns5", include_str!("../scenarios/fig7-ns5.toml")),
    ("table2-stages", include_str!("../scenarios/table2-stages.toml")),
    ("table5-3x7", include_str!("../scenarios/table5-3x7.toml")),
    ("table5-5x7", include_str!("../scenarios/table5-5x7.toml")),
    ("table5-7x3", include_str!("../scenarios/table5-7x3.toml")),
    ("table5-7x5", include_str!("../scenarios/table5-7x5.toml")),
    ("table6-3x7", include_str!("../scenarios/table6-3x7.toml")),
    ("table6-5x7", include_str!("../scenarios/table6-5x7.toml")),
    ("table6-7x3", include_str!("../scenarios/table6-7x3.toml")),
    ("table6-7x5", include_str!("../scenarios/table6-7x5.toml")),
    ("subgradient-field", include_str!("../scenarios/subgradient-field.toml")),
];

/// Names of the bundled scenarios.
pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

/// Source text of a bundled scenario.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum Quantity {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(Quantity),
    Many(Vec<Quantity>),
}

fn split_unit(text: &str) -> Result<(f64, &str)> {
    let text = text.trim();
    let end = text
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(text.len());
    // an exponent marker directly followed by a letter belongs to the unit
    let (mut num, mut unit) = text.split_at(end);
    if num.ends_with(['e', 'E']) {
        num = &num[..num.len() - 1];
        unit = &text[num.len()..];
    }
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("cannot read a number from {text:?}")))?;
    Ok((value, unit.trim()))
}

fn time(q: &Quantity, slot: f64) -> Result<f64> {
    match q {
        Quantity::Number(v) => Ok(*v),
        Quantity::Text(t) => {
            let (v, unit) = split_unit(t)?;
            let scale = match unit {
                "" | "s" => 1.0,
                "ms" => 1e-3,
                "us" | "µs" => 1e-6,
                "ns" => 1e-9,
                "T" => slot,
                other => return Err(Error::Parse(format!("unknown time unit {other:?} in {t:?}"))),
            };
            Ok(v * scale)
        }
    }
}

fn frequency(q: &Quantity) -> Result<f64> {
    match q {
        Quantity::Number(v) => Ok(*v),
        Quantity::Text(t) => {
            let (v, unit) = split_unit(t)?;
            let scale = match unit {
                "" | "Hz" => 1.0,
                "kHz" => 1e3,
                "MHz" => 1e6,
                "GHz" => 1e9,
                other => return Err(Error::Parse(format!("unknown frequency unit {other:?} in {t:?}"))),
            };
            Ok(v * scale)
        }
    }
}

fn power(q: &Quantity) -> Result<f64> {
    match q {
        Quantity::Number(v) => Ok(*v),
        Quantity::Text(t) => match split_unit(t)? {
            (v, "dB") => Ok(10f64.powf(v / 10.0)),
            (v, "") => Ok(v),
            (_, other) => Err(Error::Parse(format!("unknown power unit {other:?} in {t:?}"))),
        },
    }
}

fn plain(q: &Quantity) -> Result<f64> {
    match q {
        Quantity::Number(v) => Ok(*v),
        Quantity::Text(t) => match split_unit(t)? {
            (v, "") => Ok(v),
            (_, unit) => Err(Error::Parse(format!("unexpected unit {unit:?} in {t:?}"))),
        },
    }
}

fn per_channel(v: &OneOrMany, n_pu: usize, what: &str, conv: impl Fn(&Quantity) -> Result<f64>) -> Result<Vec<f64>> {
    match v {
        OneOrMany::One(q) => Ok(vec![conv(q)?; n_pu]),
        OneOrMany::Many(list) if list.len() == n_pu => list.iter().map(conv).collect(),
        OneOrMany::Many(list) => Err(Error::Parse(format!(
            "{what} lists {} values for {n_pu} channels",
            list.len()
        ))),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    description: Option<String>,
    network: NetworkSection,
    #[serde(default)]
    sensing: SensingSection,
    #[serde(default)]
    qos: QosSection,
    #[serde(default)]
    detector: DetectorSection,
    #[serde(default)]
    simulation: SimulationSection,
    #[serde(default)]
    adaptive: AdaptiveSection,
    #[serde(default)]
    sweep: SweepSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    n_su: usize,
    n_pu: usize,
    slot_duration: Option<Quantity>,
    handoff_time: Option<Quantity>,
    sampling_freq: Option<Quantity>,
    tx_rate: Option<f64>,
    presence_prob: Option<OneOrMany>,
    pu_power: Option<OneOrMany>,
    su_power: Option<Quantity>,
    noise_power: Option<Quantity>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensingSection {
    tau: Option<Quantity>,
    p: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct QosSection {
    t_i_max: Option<f64>,
    p_md_max: Option<f64>,
    p_fa_max: Option<f64>,
    p_d_min: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
enum RuleName {
    #[default]
    Calibrated,
    Normalized,
    FalseAlarmTarget,
    Fixed,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorSection {
    #[serde(default)]
    rule: RuleName,
    lambda_norm: Option<f64>,
    p_fa: Option<f64>,
    p_d: Option<f64>,
    /// Sensing time at which a false-alarm target holds; defaults to the
    /// scenario's sensing time.
    tau: Option<Quantity>,
    #[serde(default)]
    snr_model: SnrModel,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
    slots: Option<u64>,
    reps: Option<u64>,
    seed: Option<u64>,
    #[serde(default)]
    protocol: Protocol,
    persistence: Option<f64>,
    #[serde(default)]
    detection: DetectionMode,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdaptiveSection {
    algorithm: Option<u8>,
    n_ep: Option<usize>,
    d_tau: Option<Quantity>,
    d_p: Option<f64>,
    d_tau1: Option<Quantity>,
    d_p1: Option<f64>,
    step: Option<StepSchedule>,
    tau_min: Option<Quantity>,
    tau_init: Option<Quantity>,
    p_init: Option<f64>,
    interference: Option<InterferenceReport>,
    asynchronous: Option<bool>,
    frames: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    #[serde(default)]
    axes: Vec<String>,
    grid: Option<[usize; 2]>,
}

/// SNR the simulator uses for detection draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionMode {
    #[default]
    Realized,
    /// Mean-field stage SNR of the analyzer at the scenario operating point.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSettings {
    pub slots: u64,
    pub reps: u64,
    pub seed: u64,
    pub protocol: Protocol,
    pub pu_model: PuModel,
    pub detection: DetectionMode,
}

/// Sweepable scenario field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    Tau,
    P,
    NSu,
    NPu,
    PFa,
    Presence,
    TIMax,
}

impl AxisName {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "tau" => AxisName::Tau,
            "p" => AxisName::P,
            "n_su" => AxisName::NSu,
            "n_pu" => AxisName::NPu,
            "p_fa" => AxisName::PFa,
            "presence" => AxisName::Presence,
            "t_i_max" => AxisName::TIMax,
            other => return Err(Error::Parse(format!("unknown sweep axis {other:?}"))),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AxisName::Tau => "tau",
            AxisName::P => "p",
            AxisName::NSu => "n_su",
            AxisName::NPu => "n_pu",
            AxisName::PFa => "p_fa",
            AxisName::Presence => "presence",
            AxisName::TIMax => "t_i_max",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAxis {
    pub name: AxisName,
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// `name=lo:hi:step` or `name=v1,v2,...`. Time values of the `tau` axis
    /// accept units, e.g. `tau=0.2ms:5ms:0.2ms`.
    pub fn parse(spec: &str, slot_duration: f64) -> Result<Self> {
        let (name, body) = spec
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("sweep axis {spec:?} lacks '='")))?;
        let name = AxisName::parse(name.trim())?;
        let value = |s: &str| -> Result<f64> {
            let q = Quantity::Text(s.trim().to_string());
            if name == AxisName::Tau {
                time(&q, slot_duration)
            } else {
                plain(&q)
            }
        };
        let values = if body.contains(':') {
            let parts: Vec<&str> = body.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Parse(format!("range {body:?} must read lo:hi:step")));
            }
            let (lo, hi, step) = (value(parts[0])?, value(parts[1])?, value(parts[2])?);
            if !(step > 0.0) || hi < lo {
                return Err(Error::Parse(format!("range {body:?} is empty")));
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| lo + i as f64 * step).collect()
        } else {
            body.split(',').map(value).collect::<Result<Vec<_>>>()?
        };
        if values.is_empty() {
            return Err(Error::Parse(format!("sweep axis {spec:?} has no values")));
        }
        Ok(Self { name, values })
    }
}

/// Adaptive-controller settings of a scenario; missing values follow the
/// standard parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveSettings {
    pub config: AdaptiveConfig,
    pub frames: u64,
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub network: NetworkConfig,
    pub sensing: SensingParams,
    pub qos: QosConstraints,
    pub detector: DetectorConfig,
    pub simulation: SimulationSettings,
    pub adaptive: AdaptiveSettings,
    pub sweep: Vec<SweepAxis>,
    pub grid: Option<[usize; 2]>,
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(format!("{origin}: {e}")))?;
        Self::resolve(file, origin).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{origin}: {msg}")),
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let text = bundled_source(name).ok_or_else(|| {
            Error::config(format!(
                "no bundled scenario {name:?}; available: {}",
                bundled_names().join(", ")
            ))
        })?;
        Self::from_toml(text, name)
    }

    /// A bundled scenario name or a path to a scenario file.
    pub fn lookup(name_or_path: &str) -> Result<Self> {
        let path = Path::new(name_or_path);
        if bundled_source(name_or_path).is_some() {
            Self::bundled(name_or_path)
        } else if path.exists() {
            Self::load(path)
        } else {
            Err(Error::config(format!(
                "{name_or_path:?} is neither a bundled scenario nor a file; bundled: {}",
                bundled_names().join(", ")
            )))
        }
    }

    fn resolve(file: ScenarioFile, origin: &str) -> Result<Self> {
        let net = &file.network;
        let mut network = NetworkConfig::symmetric(net.n_su, net.n_pu);
        if let Some(q) = &net.slot_duration {
            network.slot_duration = time(q, f64::NAN)?;
        }
        let slot = network.slot_duration;
        if let Some(q) = &net.handoff_time {
            network.handoff_time = time(q, slot)?;
        }
        if let Some(q) = &net.sampling_freq {
            network.sampling_freq = frequency(q)?;
        }
        if let Some(v) = net.tx_rate {
            network.tx_rate = v;
        }
        if let Some(v) = &net.presence_prob {
            network.presence_prob = per_channel(v, net.n_pu, "presence_prob", plain)?;
        }
        if let Some(v) = &net.pu_power {
            network.pu_power = per_channel(v, net.n_pu, "pu_power", power)?;
        }
        if let Some(q) = &net.su_power {
            network.su_power = power(q)?;
        }
        if let Some(q) = &net.noise_power {
            network.noise_power = power(q)?;
        }
        network.validate()?;

        let sensing = SensingParams::new(
            match &file.sensing.tau {
                Some(q) => time(q, slot)?,
                None => 0.1 * slot,
            },
            file.sensing.p.unwrap_or(0.8),
        );
        sensing.validate(slot)?;

        let d = QosConstraints::default();
        let qos = QosConstraints {
            t_i_max: file.qos.t_i_max.unwrap_or(d.t_i_max),
            p_md_max: file.qos.p_md_max.unwrap_or(d.p_md_max),
            p_fa_max: file.qos.p_fa_max.unwrap_or(d.p_fa_max),
            p_d_min: file.qos.p_d_min.unwrap_or(d.p_d_min),
        };
        qos.validate()?;

        let det = &file.detector;
        let need = |v: Option<f64>, what: &str| v.ok_or_else(|| Error::Parse(format!("detector rule needs {what}")));
        let threshold = match det.rule {
            RuleName::Calibrated => ThresholdRule::Calibrated,
            RuleName::Normalized => ThresholdRule::Normalized {
                lambda_norm: need(det.lambda_norm, "lambda_norm")?,
            },
            RuleName::FalseAlarmTarget => ThresholdRule::FalseAlarmTarget {
                p_fa: need(det.p_fa, "p_fa")?,
                tau: match &det.tau {
                    Some(q) => time(q, slot)?,
                    None => sensing.tau,
                },
            },
            RuleName::Fixed => ThresholdRule::Fixed {
                p_fa: need(det.p_fa, "p_fa")?,
                p_d: need(det.p_d, "p_d")?,
            },
        };
        let detector = DetectorConfig {
            threshold,
            snr_model: det.snr_model,
        };
        detector.resolve(&network, &qos)?;

        let sim = &file.simulation;
        let simulation = SimulationSettings {
            slots: sim.slots.unwrap_or(10_000),
            reps: sim.reps.unwrap_or(10),
            seed: sim.seed.unwrap_or(1),
            protocol: sim.protocol,
            pu_model: match sim.persistence {
                Some(persistence) if (0.0..=1.0).contains(&persistence) => PuModel::OnOff { persistence },
                Some(_) => return Err(Error::config("persistence must lie in [0, 1]")),
                None => PuModel::Iid,
            },
            detection: sim.detection,
        };

        let ad = &file.adaptive;
        let floor = match &ad.tau_min {
            Some(q) => time(q, slot)?,
            None => tau_floor(&network, &qos)?,
        };
        let mut config = AdaptiveConfig::standard(slot, floor);
        config.algorithm = match ad.algorithm {
            None | Some(1) => Algorithm::One,
            Some(2) => Algorithm::Two,
            Some(other) => return Err(Error::Parse(format!("unknown algorithm {other}"))),
        };
        if let Some(v) = ad.n_ep {
            config.n_ep = v;
        }
        if let Some(q) = &ad.d_tau {
            config.d_tau = time(q, slot)?;
        }
        if let Some(v) = ad.d_p {
            config.d_p = v;
        }
        if let Some(q) = &ad.d_tau1 {
            config.d_tau1 = time(q, slot)?;
        }
        if let Some(v) = ad.d_p1 {
            config.d_p1 = v;
        }
        if let Some(s) = ad.step {
            s.check_diminishing()?;
            config.schedule = s;
        }
        if let Some(q) = &ad.tau_init {
            config.tau_init = time(q, slot)?;
        }
        if let Some(v) = ad.p_init {
            config.p_init = v;
        }
        if let Some(v) = ad.interference {
            config.interference = v;
        }
        if let Some(v) = ad.asynchronous {
            config.asynchronous = v;
        }
        config.validate(slot)?;

        let sweep = file
            .sweep
            .axes
            .iter()
            .map(|s| SweepAxis::parse(s, slot))
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            name: file.name.unwrap_or_else(|| origin.to_string()),
            description: file.description.unwrap_or_default(),
            network,
            sensing,
            qos,
            detector,
            simulation,
            adaptive: AdaptiveSettings {
                config,
                frames: ad.frames.unwrap_or(400),
            },
            sweep,
            grid: file.sweep.grid,
        })
    }

    /// SHA-256 of the resolved scenario, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn analyzer(&self) -> Result<Analyzer> {
        Ok(Analyzer::new(self.network.clone(), self.detector.resolve(&self.network, &self.qos)?))
    }

    pub fn simulator(&self) -> Result<Simulator> {
        let detector = self.detector.resolve(&self.network, &self.qos)?;
        let detection = match self.simulation.detection {
            DetectionMode::Realized => DetectionSnr::Realized,
            DetectionMode::Table => {
                let analysis = Analyzer::new(self.network.clone(), detector).analyze(self.sensing)?;
                DetectionSnr::Table {
                    snr: analysis.table.snr,
                }
            }
        };
        Ok(Simulator::new(self.network.clone(), detector)
            .with_protocol(self.simulation.protocol)
            .with_pu_model(self.simulation.pu_model)
            .with_detection(detection))
    }

    /// Copy with one sweep coordinate applied.
    pub fn with_axis(&self, axis: AxisName, value: f64) -> Result<Self> {
        let mut s = self.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(format!("{} must be a positive integer, got {v}", axis.as_str())))
            }
        };
        match axis {
            AxisName::Tau => s.sensing.tau = value,
            AxisName::P => s.sensing.p = value,
            AxisName::NSu => s.network.n_su = count(value)?,
            AxisName::NPu => {
                let n = count(value)?;
                s.network.presence_prob = resize_uniform(&s.network.presence_prob, n, "presence_prob")?;
                s.network.pu_power = resize_uniform(&s.network.pu_power, n, "pu_power")?;
                s.network.n_pu = n;
            }
            AxisName::PFa => {
                let tau = match s.detector.threshold {
                    ThresholdRule::FalseAlarmTarget { tau, .. } => tau,
                    _ => s.sensing.tau,
                };
                s.detector.threshold = ThresholdRule::FalseAlarmTarget { p_fa: value, tau };
            }
            AxisName::Presence => s.network = s.network.with_presence(value),
            AxisName::TIMax => s.qos.t_i_max = value,
        }
        s.network.validate()?;
        s.sensing.validate(s.network.slot_duration)?;
        s.qos.validate()?;
        s.detector.resolve(&s.network, &s.qos)?;
        Ok(s)
    }
}

fn resize_uniform(v: &[f64], n: usize, what: &str) -> Result<Vec<f64>> {
    match v.first() {
        Some(&x) if v.iter().all(|&y| y == x) => Ok(vec![x; n]),
        _ => Err(Error::config(format!("cannot resize non-uniform {what}"))),
    }
}
