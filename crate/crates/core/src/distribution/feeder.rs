//! Feeder network description and its file format.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{FeederError, PHASE_NAMES};
use crate::Cplx;

/// Phase presence set (subset of a, b, c).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseMask(u8);

impl PhaseMask {
    pub const ABC: PhaseMask = PhaseMask(0b111);

    pub fn parse(s: &str) -> Result<Self, String> {
        let mut bits = 0u8;
        for ch in s.chars() {
            let bit = match ch {
                'a' => 1,
                'b' => 2,
                'c' => 4,
                _ => return Err(format!("invalid phase {ch:?} in {s:?}")),
            };
            if bits & bit != 0 {
                return Err(format!("repeated phase {ch:?} in {s:?}"));
            }
            bits |= bit;
        }
        if bits == 0 {
            return Err("empty phase set".to_string());
        }
        Ok(PhaseMask(bits))
    }

    pub fn has(self, phase: usize) -> bool {
        self.0 & (1 << phase) != 0
    }

    pub fn contains(self, other: PhaseMask) -> bool {
        self.0 & other.0 == other.0
    }

    /// Phase indices present, ascending (a=0, b=1, c=2).
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..3).filter(move |&p| self.has(p))
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }
}

impl std::fmt::Display for PhaseMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for p in self.iter() {
            write!(f, "{}", PHASE_NAMES[p])?;
        }
        Ok(())
    }
}

/// A feeder node (bus) with its present phases.
#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub phases: PhaseMask,
}

/// A series branch with its 3x3 phase impedance in pu.
#[derive(Debug, Clone)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Phase impedance matrix, pu on the feeder base. Rows and columns for
    /// phases absent on the child node are ignored.
    pub z_pu: [[Cplx; 3]; 3],
    /// Per-phase current rating in amperes, if rated.
    pub ampacity_a: Option<f64>,
}

/// A constant-power load; entries for absent phases are zero.
#[derive(Debug, Clone)]
pub struct Load {
    pub node: usize,
    /// Per-phase complex power in pu on the single-phase base.
    pub s_pu: [Cplx; 3],
}

/// A DER connection point.
#[derive(Debug, Clone)]
pub struct DerNode {
    pub id: String,
    pub node: usize,
    pub phases: PhaseMask,
}

/// A three-phase feeder network with per-unit data and a precomputed
/// traversal order when radial.
#[derive(Debug, Clone)]
pub struct FeederNetwork {
    pub name: String,
    pub v_base_ln_v: f64,
    pub s_base_mva: f64,
    pub substation: usize,
    pub nodes: Vec<Node>,
    pub branches: Vec<Branch>,
    pub loads: Vec<Load>,
    pub ders: Vec<DerNode>,
    /// Branch indices in breadth-first order from the substation, with
    /// branches oriented parent -> child; empty when the feeder is meshed.
    pub(crate) sweep_order: Vec<usize>,
    pub(crate) radial: bool,
}

impl FeederNetwork {
    /// Single-phase MVA base.
    pub fn s_base_1ph_mva(&self) -> f64 {
        self.s_base_mva / 3.0
    }

    /// Base impedance in ohms (line-to-neutral voltage over single-phase base).
    pub fn impedance_base_ohm(&self) -> f64 {
        self.v_base_ln_v * self.v_base_ln_v / (self.s_base_mva * 1e6 / 3.0)
    }

    /// Base current in amperes.
    pub fn current_base_a(&self) -> f64 {
        self.s_base_mva * 1e6 / 3.0 / self.v_base_ln_v
    }

    pub fn is_radial(&self) -> bool {
        self.radial
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Registers a DER at a named node with the given phase connection.
    pub fn add_der(
        &mut self,
        id: impl Into<String>,
        node: &str,
        phases: PhaseMask,
    ) -> Result<(), FeederError> {
        let id = id.into();
        let index = self.node_index(node).ok_or_else(|| FeederError::InvalidNetwork {
            feeder: self.name.clone(),
            message: format!("DER {id:?} references unknown node {node:?}"),
        })?;
        if !self.nodes[index].phases.contains(phases) {
            return Err(FeederError::InvalidNetwork {
                feeder: self.name.clone(),
                message: format!(
                    "DER {id:?} uses phases {phases} absent at node {node:?}"
                ),
            });
        }
        if self.ders.iter().any(|d| d.id == id) {
            return Err(FeederError::InvalidNetwork {
                feeder: self.name.clone(),
                message: format!("duplicate DER id {id:?}"),
            });
        }
        self.ders.push(DerNode {
            id,
            node: index,
            phases,
        });
        Ok(())
    }

    /// Total connected load in MW (all phases).
    pub fn total_load_mw(&self) -> f64 {
        let base = self.s_base_1ph_mva();
        self.loads
            .iter()
            .map(|l| l.s_pu.iter().map(|s| s.re).sum::<f64>() * base)
            .sum()
    }

    pub fn from_path(path: &Path) -> Result<Self, FeederError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            FeederError::Parse(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, FeederError> {
        let raw: RawFeeder =
            toml::from_str(text).map_err(|e| FeederError::Parse(e.to_string()))?;
        raw.build()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeeder {
    name: String,
    v_base_ln_v: f64,
    s_base_mva: f64,
    substation: String,
    #[serde(default, rename = "node")]
    nodes: Vec<RawNode>,
    #[serde(default, rename = "branch")]
    branches: Vec<RawBranch>,
    #[serde(default, rename = "line_config")]
    line_configs: Vec<RawLineConfig>,
    #[serde(default, rename = "load")]
    loads: Vec<RawLoad>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    name: String,
    phases: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    from: String,
    to: String,
    length_km: f64,
    config: String,
    #[serde(default)]
    ampacity_a: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLineConfig {
    name: String,
    r_self_ohm_per_km: f64,
    x_self_ohm_per_km: f64,
    #[serde(default)]
    r_mutual_ohm_per_km: f64,
    #[serde(default)]
    x_mutual_ohm_per_km: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    node: String,
    phases: String,
    kw: Vec<f64>,
    kvar: Vec<f64>,
}

impl RawFeeder {
    fn build(self) -> Result<FeederNetwork, FeederError> {
        let invalid = |message: String| FeederError::InvalidNetwork {
            feeder: self.name.clone(),
            message,
        };
        if self.v_base_ln_v <= 0.0 || self.s_base_mva <= 0.0 {
            return Err(invalid("voltage and power bases must be positive".into()));
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        for raw in &self.nodes {
            if index.contains_key(&raw.name) {
                return Err(invalid(format!("duplicate node {:?}", raw.name)));
            }
            let phases = PhaseMask::parse(&raw.phases).map_err(&invalid)?;
            index.insert(raw.name.clone(), nodes.len());
            nodes.push(Node {
                name: raw.name.clone(),
                phases,
            });
        }
        let substation = *index
            .get(&self.substation)
            .ok_or_else(|| invalid(format!("unknown substation node {:?}", self.substation)))?;

        let configs: BTreeMap<&str, &RawLineConfig> = self
            .line_configs
            .iter()
            .map(|c| (c.name.as_str(), c))
            .collect();
        let z_base = {
            let v = self.v_base_ln_v;
            v * v / (self.s_base_mva * 1e6 / 3.0)
        };
        let mut branches = Vec::with_capacity(self.branches.len());
        for raw in &self.branches {
            let from = *index
                .get(&raw.from)
                .ok_or_else(|| invalid(format!("branch from unknown node {:?}", raw.from)))?;
            let to = *index
                .get(&raw.to)
                .ok_or_else(|| invalid(format!("branch to unknown node {:?}", raw.to)))?;
            let cfg = configs
                .get(raw.config.as_str())
                .ok_or_else(|| invalid(format!("unknown line config {:?}", raw.config)))?;
            if raw.length_km <= 0.0 {
                return Err(invalid(format!(
                    "branch {}-{} must have positive length",
                    raw.from, raw.to
                )));
            }
            let z_self = Cplx::new(cfg.r_self_ohm_per_km, cfg.x_self_ohm_per_km)
                * raw.length_km
                / z_base;
            let z_mutual = Cplx::new(cfg.r_mutual_ohm_per_km, cfg.x_mutual_ohm_per_km)
                * raw.length_km
                / z_base;
            let mut z_pu = [[Cplx::new(0.0, 0.0); 3]; 3];
            for (i, row) in z_pu.iter_mut().enumerate() {
                for (j, z) in row.iter_mut().enumerate() {
                    *z = if i == j { z_self } else { z_mutual };
                }
            }
            branches.push(Branch {
                from,
                to,
                z_pu,
                ampacity_a: raw.ampacity_a,
            });
        }

        let s_base_1ph = self.s_base_mva / 3.0;
        let mut loads = Vec::with_capacity(self.loads.len());
        for raw in &self.loads {
            let node = *index
                .get(&raw.node)
                .ok_or_else(|| invalid(format!("load at unknown node {:?}", raw.node)))?;
            let phases = PhaseMask::parse(&raw.phases).map_err(&invalid)?;
            if !nodes[node].phases.contains(phases) {
                return Err(invalid(format!(
                    "load at {:?} uses phases {} absent on the node",
                    raw.node, phases
                )));
            }
            if raw.kw.len() != phases.count() || raw.kvar.len() != phases.count() {
                return Err(invalid(format!(
                    "load at {:?}: kw/kvar length must match phase count {}",
                    raw.node,
                    phases.count()
                )));
            }
            let mut s_pu = [Cplx::new(0.0, 0.0); 3];
            for (k, ph) in phases.iter().enumerate() {
                s_pu[ph] = Cplx::new(raw.kw[k], raw.kvar[k]) / 1000.0 / s_base_1ph;
            }
            loads.push(Load { node, s_pu });
        }

        let mut net = FeederNetwork {
            name: self.name,
            v_base_ln_v: self.v_base_ln_v,
            s_base_mva: self.s_base_mva,
            substation,
            nodes,
            branches,
            loads,
            ders: Vec::new(),
            sweep_order: Vec::new(),
            radial: false,
        };
        net.finalize()?;
        Ok(net)
    }
}

impl FeederNetwork {
    /// Checks connectivity, decides radial vs meshed, and orients branches
    /// parent -> child in breadth-first order for the sweep solver.
    pub(crate) fn finalize(&mut self) -> Result<(), FeederError> {
        let n = self.nodes.len();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (b, br) in self.branches.iter().enumerate() {
            adjacency[br.from].push(b);
            adjacency[br.to].push(b);
        }
        let mut visited = vec![false; n];
        let mut order = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        visited[self.substation] = true;
        queue.push_back(self.substation);
        let mut oriented: Vec<Option<(usize, usize)>> = vec![None; self.branches.len()];
        while let Some(node) = queue.pop_front() {
            for &b in &adjacency[node] {
                let br = &self.branches[b];
                let other = if br.from == node { br.to } else { br.from };
                if !visited[other] {
                    visited[other] = true;
                    oriented[b] = Some((node, other));
                    order.push(b);
                    queue.push_back(other);
                }
            }
        }
        if let Some(missing) = visited.iter().position(|v| !v) {
            return Err(FeederError::NotConnected {
                feeder: self.name.clone(),
                node: self.nodes[missing].name.clone(),
            });
        }
        let radial = self.branches.len() == n - 1;
        if radial {
            for (b, orientation) in oriented.iter().enumerate() {
                let (parent, child) = orientation.expect("connected radial branch was traversed");
                if self.branches[b].from != parent {
                    self.branches[b] = Branch {
                        from: parent,
                        to: child,
                        z_pu: self.branches[b].z_pu,
                        ampacity_a: self.branches[b].ampacity_a,
                    };
                }
                let child_phases = self.nodes[child].phases;
                if !self.nodes[parent].phases.contains(child_phases) {
                    return Err(FeederError::InvalidNetwork {
                        feeder: self.name.clone(),
                        message: format!(
                            "node {:?} carries phases {} absent on its parent {:?}",
                            self.nodes[child].name, child_phases, self.nodes[parent].name
                        ),
                    });
                }
            }
        }
        self.sweep_order = order;
        self.radial = radial;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
        name = "t1"
        v_base_ln_v = 2400.0
        s_base_mva = 3.0
        substation = "sub"

        [[node]]
        name = "sub"
        phases = "abc"

        [[node]]
        name = "n1"
        phases = "abc"

        [[node]]
        name = "n2"
        phases = "a"

        [[branch]]
        from = "sub"
        to = "n1"
        length_km = 2.0
        config = "c1"
        ampacity_a = 300.0

        [[branch]]
        from = "n1"
        to = "n2"
        length_km = 1.0
        config = "c1"

        [[line_config]]
        name = "c1"
        r_self_ohm_per_km = 0.2
        x_self_ohm_per_km = 0.4
        r_mutual_ohm_per_km = 0.05
        x_mutual_ohm_per_km = 0.1

        [[load]]
        node = "n1"
        phases = "abc"
        kw = [100.0, 90.0, 110.0]
        kvar = [30.0, 25.0, 35.0]

        [[load]]
        node = "n2"
        phases = "a"
        kw = [50.0]
        kvar = [10.0]
    "#;

    #[test]
    fn parses_and_per_units_a_small_feeder() {
        let net = FeederNetwork::from_toml_str(SMALL).unwrap();
        assert_eq!(net.nodes.len(), 3);
        assert!(net.is_radial());
        assert_eq!(net.substation, 0);
        // z_base = 2400^2 / 1e6 = 5.76 ohm; branch 0 self z = (0.4, 0.8) ohm.
        let z = net.branches[0].z_pu[0][0];
        assert!((z.re - 0.4 / 5.76).abs() < 1e-12);
        assert!((z.im - 0.8 / 5.76).abs() < 1e-12);
        // Load 100 kW on phase a of n1: 0.1 MW / 1 MVA single-phase base.
        assert!((net.loads[0].s_pu[0].re - 0.1).abs() < 1e-12);
        assert!((net.total_load_mw() - 0.35).abs() < 1e-12);
    }

    #[test]
    fn phase_mask_parsing_and_iteration() {
        let m = PhaseMask::parse("ac").unwrap();
        assert!(m.has(0) && !m.has(1) && m.has(2));
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![0, 2]);
        assert!(PhaseMask::parse("d").is_err());
        assert!(PhaseMask::parse("aa").is_err());
        assert!(PhaseMask::parse("").is_err());
    }

    #[test]
    fn disconnected_node_is_rejected() {
        let text = SMALL.replace("from = \"n1\"\n        to = \"n2\"", "from = \"n2\"\n        to = \"n2\"");
        assert!(FeederNetwork::from_toml_str(&text).is_err());
    }

    #[test]
    fn phase_load_on_missing_phase_is_rejected() {
        let text = SMALL.replace(
            "node = \"n2\"\n        phases = \"a\"",
            "node = \"n2\"\n        phases = \"b\"",
        );
        assert!(FeederNetwork::from_toml_str(&text).is_err());
    }

    #[test]
    fn der_registration_validates_node_and_phases() {
        let mut net = FeederNetwork::from_toml_str(SMALL).unwrap();
        net.add_der("d1", "n2", PhaseMask::parse("a").unwrap()).unwrap();
        assert!(net.add_der("d2", "nope", PhaseMask::ABC).is_err());
        assert!(net.add_der("d3", "n2", PhaseMask::ABC).is_err());
        assert!(net.add_der("d1", "n1", PhaseMask::ABC).is_err());
    }
}
