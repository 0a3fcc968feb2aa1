//! Grid description: buses, branches, generators, loads, boundary buses.
//!
//! Grids load from a TOML file. All impedances are per-unit on the system
//! MVA base; generator power limits and dispatch are in MW for readability
//! and converted to per-unit internally.

use std::path::Path;

use serde::Deserialize;

use super::{GridParseError, TransmissionError};

/// How native (transmission-side) loads respond to voltage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadModel {
    /// Folded into the admittance matrix at the power-flow solution.
    #[default]
    ConstantImpedance,
    /// Held at the specified complex power.
    ConstantPower,
}

#[derive(Debug, Clone)]
pub struct Bus {
    pub name: String,
}

/// A transmission line or transformer as a pi-branch.
#[derive(Debug, Clone)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Total line charging susceptance, split half per end.
    pub b_pu: f64,
    /// Off-nominal turns ratio on the `from` side; 1.0 for lines.
    pub tap: f64,
}

/// Synchronous generator with its turbine-governor, all per-unit values on
/// the system base.
#[derive(Debug, Clone)]
pub struct GenParams {
    pub name: String,
    pub bus: usize,
    /// Inertia constant H, seconds.
    pub h_s: f64,
    /// Damping coefficient, pu power per pu speed deviation.
    pub d_pu: f64,
    /// Transient reactance, pu.
    pub xd_pu: f64,
    /// Governor droop, pu speed per pu power.
    pub r_droop: f64,
    /// Governor time constant, seconds.
    pub tg_s: f64,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    /// Initial dispatch, MW (ignored for the slack, which balances).
    pub p_mw: f64,
    /// Terminal voltage setpoint, pu.
    pub v_set: f64,
    pub slack: bool,
    /// AGC participation factor; 0 excludes the unit from dispatch.
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct NativeLoad {
    pub bus: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
}

/// Scheduled disturbances, applied at the first internal step at or after
/// their time.
#[derive(Debug, Clone, PartialEq)]
pub enum GridEvent {
    GeneratorTrip { gen: String, t_s: f64 },
    SetpointChange { gen: String, delta_mw: f64, t_s: f64 },
    LoadScale { bus: String, factor: f64, t_s: f64 },
}

impl GridEvent {
    pub fn time_s(&self) -> f64 {
        match self {
            GridEvent::GeneratorTrip { t_s, .. } => *t_s,
            GridEvent::SetpointChange { t_s, .. } => *t_s,
            GridEvent::LoadScale { t_s, .. } => *t_s,
        }
    }
}

/// A parsed, validated transmission grid.
#[derive(Debug, Clone)]
pub struct Grid {
    pub name: String,
    pub s_base_mva: f64,
    pub load_model: LoadModel,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub gens: Vec<GenParams>,
    pub loads: Vec<NativeLoad>,
    /// Buses that take their load from a distribution federate.
    pub boundary_buses: Vec<usize>,
}

impl Grid {
    pub fn bus_index(&self, name: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.name == name)
    }

    pub fn gen_index(&self, name: &str) -> Option<usize> {
        self.gens.iter().position(|g| g.name == name)
    }

    pub fn is_boundary(&self, bus: usize) -> bool {
        self.boundary_buses.contains(&bus)
    }

    /// Sum of native load, MW.
    pub fn total_native_load_mw(&self) -> f64 {
        self.loads.iter().map(|l| l.p_mw).sum()
    }

    pub fn from_path(path: &Path) -> Result<Self, TransmissionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GridParseError(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TransmissionError> {
        let raw: RawGrid =
            toml::from_str(text).map_err(|e| GridParseError(e.to_string()))?;
        raw.build()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    name: String,
    s_base_mva: f64,
    #[serde(default)]
    load_model: LoadModel,
    #[serde(default, rename = "bus")]
    buses: Vec<RawBus>,
    #[serde(default, rename = "branch")]
    branches: Vec<RawBranch>,
    #[serde(default, rename = "generator")]
    generators: Vec<RawGen>,
    #[serde(default, rename = "load")]
    loads: Vec<RawLoad>,
    #[serde(default, rename = "boundary")]
    boundaries: Vec<RawBoundary>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBus {
    name: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    from: String,
    to: String,
    r_pu: f64,
    x_pu: f64,
    #[serde(default)]
    b_pu: f64,
    #[serde(default = "one")]
    tap: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGen {
    name: String,
    bus: String,
    h_s: f64,
    #[serde(default)]
    d_pu: f64,
    xd_pu: f64,
    r_droop: f64,
    tg_s: f64,
    p_min_mw: f64,
    p_max_mw: f64,
    #[serde(default)]
    p_mw: f64,
    #[serde(default = "one")]
    v_set: f64,
    #[serde(default)]
    slack: bool,
    #[serde(default)]
    beta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    bus: String,
    p_mw: f64,
    #[serde(default)]
    q_mvar: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    bus: String,
}

impl RawGrid {
    fn build(self) -> Result<Grid, TransmissionError> {
        let invalid = |message: String| TransmissionError::InvalidGrid {
            grid: self.name.clone(),
            message,
        };
        if self.s_base_mva <= 0.0 {
            return Err(invalid("s_base_mva must be positive".into()));
        }
        if self.buses.is_empty() {
            return Err(invalid("at least one bus required".into()));
        }
        let mut buses = Vec::with_capacity(self.buses.len());
        for raw in &self.buses {
            if buses.iter().any(|b: &Bus| b.name == raw.name) {
                return Err(invalid(format!("duplicate bus {:?}", raw.name)));
            }
            buses.push(Bus {
                name: raw.name.clone(),
            });
        }
        let index = |name: &str| -> Result<usize, TransmissionError> {
            buses
                .iter()
                .position(|b| b.name == name)
                .ok_or_else(|| invalid(format!("unknown bus {name:?}")))
        };

        let mut branches = Vec::with_capacity(self.branches.len());
        for raw in &self.branches {
            if raw.x_pu == 0.0 && raw.r_pu == 0.0 {
                return Err(invalid(format!(
                    "branch {}-{} has zero impedance",
                    raw.from, raw.to
                )));
            }
            if raw.tap <= 0.0 {
                return Err(invalid(format!(
                    "branch {}-{} has non-positive tap",
                    raw.from, raw.to
                )));
            }
            branches.push(Branch {
                from: index(&raw.from)?,
                to: index(&raw.to)?,
                r_pu: raw.r_pu,
                x_pu: raw.x_pu,
                b_pu: raw.b_pu,
                tap: raw.tap,
            });
        }

        let mut gens = Vec::with_capacity(self.generators.len());
        let mut slack_count = 0;
        for raw in &self.generators {
            if gens.iter().any(|g: &GenParams| g.name == raw.name) {
                return Err(invalid(format!("duplicate generator {:?}", raw.name)));
            }
            if raw.h_s <= 0.0 {
                return Err(invalid(format!("generator {:?}: H must be positive", raw.name)));
            }
            if raw.r_droop <= 0.0 {
                return Err(invalid(format!(
                    "generator {:?}: droop R must be positive",
                    raw.name
                )));
            }
            if raw.tg_s <= 0.0 {
                return Err(invalid(format!(
                    "generator {:?}: governor Tg must be positive",
                    raw.name
                )));
            }
            if raw.xd_pu <= 0.0 {
                return Err(invalid(format!(
                    "generator {:?}: xd must be positive",
                    raw.name
                )));
            }
            if raw.p_min_mw > raw.p_max_mw {
                return Err(invalid(format!(
                    "generator {:?}: p_min exceeds p_max",
                    raw.name
                )));
            }
            if raw.slack {
                slack_count += 1;
            }
            if raw.beta < 0.0 {
                return Err(invalid(format!(
                    "generator {:?}: participation factor must be non-negative",
                    raw.name
                )));
            }
            gens.push(GenParams {
                name: raw.name.clone(),
                bus: index(&raw.bus)?,
                h_s: raw.h_s,
                d_pu: raw.d_pu,
                xd_pu: raw.xd_pu,
                r_droop: raw.r_droop,
                tg_s: raw.tg_s,
                p_min_mw: raw.p_min_mw,
                p_max_mw: raw.p_max_mw,
                p_mw: raw.p_mw,
                v_set: raw.v_set,
                slack: raw.slack,
                beta: raw.beta,
            });
        }
        if slack_count != 1 {
            return Err(invalid(format!(
                "exactly one slack generator required, found {slack_count}"
            )));
        }

        let mut loads = Vec::with_capacity(self.loads.len());
        for raw in &self.loads {
            loads.push(NativeLoad {
                bus: index(&raw.bus)?,
                p_mw: raw.p_mw,
                q_mvar: raw.q_mvar,
            });
        }

        let mut boundary_buses = Vec::with_capacity(self.boundaries.len());
        for raw in &self.boundaries {
            let b = index(&raw.bus)?;
            if boundary_buses.contains(&b) {
                return Err(invalid(format!("duplicate boundary bus {:?}", raw.bus)));
            }
            boundary_buses.push(b);
        }

        Ok(Grid {
            name: self.name,
            s_base_mva: self.s_base_mva,
            load_model: self.load_model,
            buses,
            branches,
            gens,
            loads,
            boundary_buses,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"
        name = "g2"
        s_base_mva = 100.0
        load_model = "constant_power"

        [[bus]]
        name = "bus1"

        [[bus]]
        name = "bus2"

        [[branch]]
        from = "bus1"
        to = "bus2"
        r_pu = 0.0
        x_pu = 0.1

        [[generator]]
        name = "gen1"
        bus = "bus1"
        h_s = 5.0
        xd_pu = 0.2
        r_droop = 0.05
        tg_s = 0.5
        p_min_mw = 0.0
        p_max_mw = 200.0
        slack = true

        [[load]]
        bus = "bus2"
        p_mw = 100.0
        q_mvar = 50.0

        [[boundary]]
        bus = "bus2"
    "#;

    #[test]
    fn parses_a_two_bus_grid() {
        let grid = Grid::from_toml_str(TWO_BUS).unwrap();
        assert_eq!(grid.buses.len(), 2);
        assert_eq!(grid.load_model, LoadModel::ConstantPower);
        assert_eq!(grid.gens[0].v_set, 1.0);
        assert!(grid.is_boundary(1));
        assert!(!grid.is_boundary(0));
        assert_eq!(grid.total_native_load_mw(), 100.0);
    }

    #[test]
    fn rejects_two_slacks() {
        let text = TWO_BUS.replace(
            "[[load]]",
            r#"[[generator]]
        name = "gen2"
        bus = "bus2"
        h_s = 3.0
        xd_pu = 0.2
        r_droop = 0.05
        tg_s = 0.5
        p_min_mw = 0.0
        p_max_mw = 100.0
        slack = true

        [[load]]"#,
        );
        let err = Grid::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("slack"));
    }

    #[test]
    fn rejects_unknown_bus_reference() {
        let text = TWO_BUS.replace("bus = \"bus2\"\n        p_mw", "bus = \"nope\"\n        p_mw");
        assert!(Grid::from_toml_str(&text).is_err());
    }
}
