//! Scenario file schema: a single TOML document referencing grid, feeder,
//! and MPPT profile files by path (resolved relative to the scenario file).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::ScenarioError;
use crate::cosim::SimTime;
use crate::der::MpptSeries;
use crate::distribution::{FeederNetwork, PhaseMask};
use crate::transmission::{Grid, GridEvent};

/// Exchange and control cadences, seconds.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cadences {
    /// Transmission-distribution boundary exchange.
    pub td_exchange_s: f64,
    /// Frequency measurement output.
    pub meas_out_s: f64,
    /// AGC signal hold period.
    pub agc_period_s: f64,
    /// Transmission internal integration step.
    pub internal_dt_s: f64,
    /// Headroom refresh period.
    pub vsm_refresh_s: f64,
}

impl Default for Cadences {
    fn default() -> Self {
        Self {
            td_exchange_s: 1.0,
            meas_out_s: 0.5,
            agc_period_s: 4.0,
            internal_dt_s: 1.0 / 30.0,
            vsm_refresh_s: 10.0,
        }
    }
}

/// One DER unit bound to a feeder node.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerConfig {
    pub name: String,
    /// Feeder node hosting the unit.
    pub node: String,
    /// Connected phases, e.g. "abc" or "a".
    #[serde(default = "default_phases")]
    pub phases: String,
    /// Dispatched reference power, MW.
    pub p_ref_mw: f64,
    /// Nameplate capacity, MW.
    pub p_caps_mw: f64,
    #[serde(default = "default_droop")]
    pub d_droop: f64,
    #[serde(default = "default_der_deadband")]
    pub deadband_hz: f64,
    #[serde(default = "default_tg")]
    pub tg_s: f64,
    /// Available-power time series file (CSV `time_s,p_mw`); mutually
    /// exclusive with `mppt_constant_mw`. Defaults to nameplate.
    #[serde(default)]
    pub mppt_file: Option<String>,
    #[serde(default)]
    pub mppt_constant_mw: Option<f64>,
}

fn default_phases() -> String {
    "abc".into()
}
fn default_droop() -> f64 {
    20.0
}
fn default_der_deadband() -> f64 {
    0.017
}
fn default_tg() -> f64 {
    0.1
}

impl DerConfig {
    /// Resolves the unit's availability series.
    pub fn mppt_series(&self, base_dir: &Path) -> Result<MpptSeries, ScenarioError> {
        match (&self.mppt_file, self.mppt_constant_mw) {
            (Some(_), Some(_)) => Err(ScenarioError::Validation(format!(
                "DER {:?}: mppt_file and mppt_constant_mw are mutually exclusive",
                self.name
            ))),
            (Some(file), None) => Ok(MpptSeries::from_path(base_dir.join(file))?),
            (None, Some(mw)) => Ok(MpptSeries::constant(mw)),
            (None, None) => Ok(MpptSeries::constant(self.p_caps_mw)),
        }
    }
}

/// A feeder participating in the federation, bound to one boundary bus.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederBinding {
    pub file: String,
    /// Transmission boundary bus.
    pub bus: String,
    /// Instance name; defaults to the feeder file's own name. Replicated
    /// feeders must override it to stay unique.
    #[serde(default)]
    pub name: Option<String>,
    /// AGC participation factor of this feeder's aggregator.
    #[serde(default)]
    pub agc_beta: f64,
    #[serde(default, rename = "der")]
    pub ders: Vec<DerConfig>,
}

/// Area AGC settings.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgcScenarioConfig {
    pub enabled: bool,
    /// Frequency bias, MW per 0.1 Hz; defaults to 1 % of the area peak
    /// load per 0.1 Hz, computed at initialization.
    pub b_mw_per_tenth_hz: Option<f64>,
    pub kp: f64,
    pub ki: f64,
    pub deadband_hz: f64,
    /// Anti-windup bound; defaults to the dispatchable margin of the
    /// participating units, computed at initialization.
    pub integrator_limit_mw: Option<f64>,
}

impl Default for AgcScenarioConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            b_mw_per_tenth_hz: None,
            kp: 0.1,
            ki: 0.05,
            deadband_hz: 0.0,
            integrator_limit_mw: None,
        }
    }
}

/// Random load variation settings.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadNoiseConfig {
    /// Standard deviation as a fraction of nominal (0.02 = 2 %).
    pub std: f64,
    pub seed: u64,
}

/// One scheduled grid event.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "snake_case")]
pub enum EventConfig {
    GeneratorTrip { gen: String, time_s: f64 },
    SetpointChange { gen: String, delta_mw: f64, time_s: f64 },
    LoadScale { bus: String, factor: f64, time_s: f64 },
}

impl EventConfig {
    pub fn time_s(&self) -> f64 {
        match self {
            EventConfig::GeneratorTrip { time_s, .. } => *time_s,
            EventConfig::SetpointChange { time_s, .. } => *time_s,
            EventConfig::LoadScale { time_s, .. } => *time_s,
        }
    }

    pub fn to_grid_event(&self) -> GridEvent {
        match self {
            EventConfig::GeneratorTrip { gen, time_s } => GridEvent::GeneratorTrip {
                gen: gen.clone(),
                t_s: *time_s,
            },
            EventConfig::SetpointChange {
                gen,
                delta_mw,
                time_s,
            } => GridEvent::SetpointChange {
                gen: gen.clone(),
                delta_mw: *delta_mw,
                t_s: *time_s,
            },
            EventConfig::LoadScale {
                bus,
                factor,
                time_s,
            } => GridEvent::LoadScale {
                bus: bus.clone(),
                factor: *factor,
                t_s: *time_s,
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            EventConfig::GeneratorTrip { gen, .. } => format!("generator_trip {gen}"),
            EventConfig::SetpointChange { gen, delta_mw, .. } => {
                format!("setpoint_change {gen} {delta_mw:+} MW")
            }
            EventConfig::LoadScale { bus, factor, .. } => {
                format!("load_scale {bus} x{factor}")
            }
        }
    }
}

/// Per-topic transport quality override.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationLinkConfig {
    pub topic: String,
    #[serde(default)]
    pub latency_s: f64,
    #[serde(default)]
    pub drop_probability: f64,
}

/// Kernel settings.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationScenarioConfig {
    pub seed: u64,
    pub inclusive_delivery: bool,
    #[serde(rename = "link")]
    pub links: Vec<FederationLinkConfig>,
}

impl Default for FederationScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            inclusive_delivery: true,
            links: Vec::new(),
        }
    }
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub stop_time_s: f64,
    pub output_dir: Option<PathBuf>,
    pub grid_file: PathBuf,
    pub feeders: Vec<FeederBinding>,
    pub agc: AgcScenarioConfig,
    pub cadences: Cadences,
    pub load_noise: Option<LoadNoiseConfig>,
    pub events: Vec<EventConfig>,
    pub federation: FederationScenarioConfig,
    /// Directory the scenario file lives in; file references resolve here.
    pub base_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    stop_time_s: f64,
    #[serde(default)]
    output_dir: Option<String>,
    grid: RawGridRef,
    #[serde(default, rename = "feeder")]
    feeders: Vec<FeederBinding>,
    #[serde(default)]
    agc: AgcScenarioConfig,
    #[serde(default)]
    cadences: Cadences,
    #[serde(default)]
    load_noise: Option<LoadNoiseConfig>,
    #[serde(default, rename = "event")]
    events: Vec<EventConfig>,
    #[serde(default)]
    federation: FederationScenarioConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGridRef {
    file: String,
}

fn divides(small: f64, large: f64) -> bool {
    let ratio = large / small;
    (ratio - ratio.round()).abs() <= 1e-9 * ratio.round().max(1.0) && ratio >= 1.0 - 1e-12
}

/// Parses and validates a scenario file. Referenced grid, feeder, and
/// profile files are parsed too so schema errors surface here rather than
/// mid-run.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let raw: RawScenario = toml::from_str(&text).map_err(|e| ScenarioError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let scenario = Scenario {
        name: raw.name,
        stop_time_s: raw.stop_time_s,
        output_dir: raw.output_dir.map(|d| base_dir.join(d)),
        grid_file: base_dir.join(&raw.grid.file),
        feeders: raw.feeders,
        agc: raw.agc,
        cadences: raw.cadences,
        load_noise: raw.load_noise,
        events: raw.events,
        federation: raw.federation,
        base_dir,
    };
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    /// The effective instance name of a feeder binding.
    pub fn feeder_name<'a>(binding: &'a FeederBinding, net: &'a FeederNetwork) -> &'a str {
        binding.name.as_deref().unwrap_or(&net.name)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Validation(m));
        if !self.stop_time_s.is_finite() || self.stop_time_s <= 0.0 {
            return invalid("stop_time_s must be positive".into());
        }
        let c = &self.cadences;
        for (label, v) in [
            ("td_exchange_s", c.td_exchange_s),
            ("meas_out_s", c.meas_out_s),
            ("agc_period_s", c.agc_period_s),
            ("internal_dt_s", c.internal_dt_s),
            ("vsm_refresh_s", c.vsm_refresh_s),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return invalid(format!("cadence {label} must be positive"));
            }
        }
        if !divides(c.internal_dt_s, c.td_exchange_s) {
            return invalid(format!(
                "internal_dt_s = {} does not divide td_exchange_s = {}",
                c.internal_dt_s, c.td_exchange_s
            ));
        }
        if !divides(c.internal_dt_s, c.meas_out_s) {
            return invalid(format!(
                "internal_dt_s = {} does not divide meas_out_s = {}",
                c.internal_dt_s, c.meas_out_s
            ));
        }
        if !divides(c.meas_out_s, c.agc_period_s) {
            return invalid(format!(
                "meas_out_s = {} does not divide agc_period_s = {}",
                c.meas_out_s, c.agc_period_s
            ));
        }
        if let Some(noise) = &self.load_noise {
            if noise.std < 0.0 {
                return invalid("load_noise.std must be non-negative".into());
            }
        }
        for link in &self.federation.links {
            if link.latency_s < 0.0 {
                return invalid(format!("link {:?}: negative latency", link.topic));
            }
            if !(0.0..=1.0).contains(&link.drop_probability) {
                return invalid(format!(
                    "link {:?}: drop probability outside [0, 1]",
                    link.topic
                ));
            }
        }

        // Referenced files must parse.
        let grid = Grid::from_path(&self.grid_file)?;
        let mut feeder_names = BTreeSet::new();
        let mut der_names = BTreeSet::new();
        let mut bound_buses = BTreeSet::new();
        let mut beta_total: f64 = grid.gens.iter().map(|g| g.beta).sum();
        for binding in &self.feeders {
            let net = FeederNetwork::from_path(&self.base_dir.join(&binding.file))?;
            let name = Self::feeder_name(binding, &net).to_string();
            if !feeder_names.insert(name.clone()) {
                return invalid(format!("duplicate feeder instance name {name:?}"));
            }
            let bus = grid
                .bus_index(&binding.bus)
                .ok_or_else(|| ScenarioError::Validation(format!(
                    "feeder {name:?} bound to unknown bus {:?}",
                    binding.bus
                )))?;
            if !grid.is_boundary(bus) {
                return invalid(format!(
                    "feeder {name:?} bound to non-boundary bus {:?}",
                    binding.bus
                ));
            }
            if !bound_buses.insert(bus) {
                return invalid(format!(
                    "bus {:?} is bound to more than one feeder",
                    binding.bus
                ));
            }
            if binding.agc_beta < 0.0 {
                return invalid(format!("feeder {name:?}: negative agc_beta"));
            }
            if binding.agc_beta > 0.0 && binding.ders.is_empty() {
                return invalid(format!(
                    "feeder {name:?} participates in AGC but hosts no DER"
                ));
            }
            beta_total += binding.agc_beta;
            for der in &binding.ders {
                if !der_names.insert(der.name.clone()) {
                    return invalid(format!("duplicate DER name {:?}", der.name));
                }
                if net.node_index(&der.node).is_none() {
                    return invalid(format!(
                        "DER {:?} references unknown node {:?} on feeder {name:?}",
                        der.name, der.node
                    ));
                }
                PhaseMask::parse(&der.phases)
                    .map_err(|e| ScenarioError::Validation(format!("DER {:?}: {e}", der.name)))?;
                if !der.p_caps_mw.is_finite() || der.p_caps_mw <= 0.0 {
                    return invalid(format!("DER {:?}: capacity must be positive", der.name));
                }
                if der.p_ref_mw < 0.0 || der.p_ref_mw > der.p_caps_mw {
                    return invalid(format!(
                        "DER {:?}: reference outside [0, capacity]",
                        der.name
                    ));
                }
                if !der.tg_s.is_finite() || der.tg_s <= 0.0 {
                    return invalid(format!("DER {:?}: tg_s must be positive", der.name));
                }
                der.mppt_series(&self.base_dir)?;
            }
        }
        if self.agc.enabled && (beta_total - 1.0).abs() > 1e-9 {
            return invalid(format!(
                "AGC participation factors sum to {beta_total}, expected 1 \
                 (generator beta plus feeder agc_beta)"
            ));
        }
        for event in &self.events {
            if event.time_s() < 0.0 {
                return invalid(format!("event {:?} has negative time", event.describe()));
            }
            match event {
                EventConfig::GeneratorTrip { gen, .. }
                | EventConfig::SetpointChange { gen, .. } => {
                    if grid.gen_index(gen).is_none() {
                        return invalid(format!("event references unknown generator {gen:?}"));
                    }
                }
                EventConfig::LoadScale { bus, factor, .. } => {
                    if grid.bus_index(bus).is_none() {
                        return invalid(format!("event references unknown bus {bus:?}"));
                    }
                    if *factor < 0.0 {
                        return invalid(format!("load_scale on {bus:?}: negative factor"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn td_exchange(&self) -> SimTime {
        SimTime::from_secs_f64(self.cadences.td_exchange_s)
    }

    pub fn stop_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.stop_time_s)
    }
}
