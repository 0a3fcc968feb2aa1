//! Three-phase unbalanced distribution feeders solved quasi-statically.
//!
//! Each feeder federate solves a steady-state power flow per exchange
//! interval: substation voltage comes from transmission, DER phasor
//! injections from the aggregator, and the resulting substation load flows
//! back as a positive-sequence aggregate.

mod federate;
mod feeder;
mod solver;

pub use federate::{balanced_three_phase, DerSchedule, FeederFederate, FeederRecord, FeederSeries};
pub use feeder::{Branch, DerNode, FeederNetwork, Load, Node, PhaseMask};
pub use solver::{solve_feeder, FeederInputs, FeederSolution};

use crate::Cplx;

/// Distribution-side failures.
#[derive(Debug, Clone, thiserror::Error)]
pub enum FeederError {
    #[error("feeder {feeder:?}: {message}")]
    InvalidNetwork { feeder: String, message: String },
    #[error("feeder {feeder:?} power flow did not converge in {iterations} sweeps (residual {residual:.3e})")]
    NonConvergence {
        feeder: String,
        iterations: usize,
        residual: f64,
    },
    #[error("feeder {feeder:?} node {node:?} is not connected to the substation")]
    NotConnected { feeder: String, node: String },
    #[error("feeder file: {0}")]
    Parse(String),
}

/// Phase-wise complex powers reduced to the positive-sequence equivalent:
/// the arithmetic mean of the three phase powers.
pub fn aggregate_positive_sequence(s_abc: [Cplx; 3]) -> Cplx {
    (s_abc[0] + s_abc[1] + s_abc[2]) / 3.0
}

/// A voltage or thermal limit violation.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// `node.phase` for voltage, `from-to.phase` for thermal.
    pub location: String,
    /// Voltage in pu or current in amperes, depending on `kind`.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    UnderVoltage,
    OverVoltage,
    Thermal,
}

/// Scans a solution for voltage-band and ampacity violations.
pub fn check_limits(
    net: &FeederNetwork,
    sol: &FeederSolution,
    v_min: f64,
    v_max: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for (n, node) in net.nodes.iter().enumerate() {
        for ph in node.phases.iter() {
            let mag = sol.v[n][ph].norm();
            if mag < v_min {
                out.push(Violation {
                    kind: ViolationKind::UnderVoltage,
                    location: format!("{}.{}", node.name, PHASE_NAMES[ph]),
                    magnitude: mag,
                });
            } else if mag > v_max {
                out.push(Violation {
                    kind: ViolationKind::OverVoltage,
                    location: format!("{}.{}", node.name, PHASE_NAMES[ph]),
                    magnitude: mag,
                });
            }
        }
    }
    let i_base = net.current_base_a();
    for (b, branch) in net.branches.iter().enumerate() {
        if let Some(ampacity) = branch.ampacity_a {
            for ph in net.nodes[branch.to].phases.iter() {
                let amps = sol.branch_i[b][ph].norm() * i_base;
                if amps > ampacity {
                    out.push(Violation {
                        kind: ViolationKind::Thermal,
                        location: format!(
                            "{}-{}.{}",
                            net.nodes[branch.from].name,
                            net.nodes[branch.to].name,
                            PHASE_NAMES[ph]
                        ),
                        magnitude: amps,
                    });
                }
            }
        }
    }
    out
}

pub(crate) const PHASE_NAMES: [char; 3] = ['a', 'b', 'c'];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_sequence_aggregate_is_the_phase_mean() {
        let s = [
            Cplx::new(1.0, 1.0),
            Cplx::new(2.0, -1.0),
            Cplx::new(3.0, 3.0),
        ];
        let agg = aggregate_positive_sequence(s);
        assert!((agg - Cplx::new(2.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn single_loaded_phase_spreads_over_three() {
        let s = [Cplx::new(3.0, 0.0), Cplx::new(0.0, 0.0), Cplx::new(0.0, 0.0)];
        assert!((aggregate_positive_sequence(s) - Cplx::new(1.0, 0.0)).norm() < 1e-15);
    }
}
