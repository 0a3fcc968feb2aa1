//! Distribution federate: one feeder solved at every exchange boundary.
//!
//! Between grants the substation voltage and DER setpoints are held
//! constant (zero-order hold). Each grant re-solves the feeder at the
//! current load multipliers, publishes the positive-sequence boundary
//! power and the mean load multiplier, and records a per-step summary.

use std::collections::BTreeMap;

use super::feeder::FeederNetwork;
use super::solver::{solve_feeder, FeederInputs};
use super::{aggregate_positive_sequence, check_limits, Violation};
use crate::cosim::{CosimError, Federate, FederateDecl, PublishContext, SimTime, TimeGrant, Value};
use crate::Cplx;

/// Phasor-side DER parameters: the feeder models each DER at its scheduled
/// operating point, leaving the fast droop response to the dynamic model.
#[derive(Debug, Clone, Copy)]
pub struct DerSchedule {
    /// Scheduled active power, MW.
    pub p_ref_mw: f64,
    /// Nameplate capacity, MW.
    pub p_caps_mw: f64,
}

/// One solved exchange point.
#[derive(Debug, Clone)]
pub struct FeederRecord {
    pub time: SimTime,
    /// Lowest node-phase voltage magnitude, pu.
    pub v_min_pu: f64,
    /// Highest node-phase voltage magnitude, pu.
    pub v_max_pu: f64,
    /// Mean node-phase voltage magnitude, pu.
    pub v_mean_pu: f64,
    /// Population standard deviation of node-phase voltages, pu.
    pub v_std_pu: f64,
    /// Substation meter power, total three-phase MVA.
    pub s_meter_mva: Cplx,
    /// Meter power with DER output added back, total three-phase MVA.
    pub s_gross_mva: Cplx,
    /// Mean load multiplier applied this step.
    pub load_multiplier: f64,
    pub iterations: usize,
    pub violations: Vec<Violation>,
}

/// Time series accumulated by a feeder over a run.
#[derive(Debug, Clone, Default)]
pub struct FeederSeries {
    pub records: Vec<FeederRecord>,
}

impl FeederSeries {
    /// Mean substation active power over the run, MW.
    pub fn mean_meter_mw(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.s_meter_mva.re).sum::<f64>() / self.records.len() as f64
    }

    pub fn violation_count(&self) -> usize {
        self.records.iter().map(|r| r.violations.len()).sum()
    }
}

/// A three-phase feeder participating in a federation.
pub struct FeederFederate {
    net: FeederNetwork,
    boundary_bus: String,
    interval: SimTime,
    ders: BTreeMap<String, DerSchedule>,
    /// Per-grant rows of per-load multipliers; empty means all ones.
    load_rows: Vec<Vec<f64>>,
    v_min: f64,
    v_max: f64,
    v_sub_pos: Cplx,
    p_ext_mw: BTreeMap<String, f64>,
    series: FeederSeries,
}

impl FeederFederate {
    pub fn new(net: FeederNetwork, boundary_bus: &str) -> Self {
        let p_ext_mw = net.ders.iter().map(|d| (d.id.clone(), 0.0)).collect();
        Self {
            net,
            boundary_bus: boundary_bus.to_string(),
            interval: SimTime::from_micros(1_000_000),
            ders: BTreeMap::new(),
            load_rows: Vec::new(),
            v_min: 0.95,
            v_max: 1.05,
            v_sub_pos: Cplx::new(1.0, 0.0),
            p_ext_mw,
            series: FeederSeries::default(),
        }
    }

    /// Registers the phasor-side schedule for a DER present in the network.
    pub fn set_der_schedule(&mut self, der_id: &str, schedule: DerSchedule) {
        self.ders.insert(der_id.to_string(), schedule);
    }

    /// Installs per-grant load multiplier rows, one row per exchange,
    /// each row parallel to the network's load list. The last row holds
    /// beyond the end of the series.
    pub fn set_load_rows(&mut self, rows: Vec<Vec<f64>>) {
        self.load_rows = rows;
    }

    pub fn set_voltage_limits(&mut self, v_min: f64, v_max: f64) {
        self.v_min = v_min;
        self.v_max = v_max;
    }

    /// Overrides the default 1 s exchange cadence.
    pub fn set_interval(&mut self, interval: SimTime) {
        self.interval = interval;
    }

    /// Seeds the substation voltage from the initialization handshake.
    pub fn set_initial_voltage(&mut self, v_pos: Cplx) {
        self.v_sub_pos = v_pos;
    }

    pub fn network(&self) -> &FeederNetwork {
        &self.net
    }

    pub fn series(&self) -> &FeederSeries {
        &self.series
    }

    pub fn into_series(self) -> FeederSeries {
        self.series
    }

    fn load_row(&self, step: usize) -> Option<&[f64]> {
        if self.load_rows.is_empty() {
            None
        } else {
            let idx = step.min(self.load_rows.len() - 1);
            Some(&self.load_rows[idx])
        }
    }

    /// Realized phasor-side injections: schedule plus the external AGC
    /// setpoint, clamped to the unit's physical range.
    fn der_injections(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for der in &self.net.ders {
            let schedule = self.ders.get(&der.id).copied().unwrap_or(DerSchedule {
                p_ref_mw: 0.0,
                p_caps_mw: 0.0,
            });
            let ext = self.p_ext_mw.get(&der.id).copied().unwrap_or(0.0);
            let p = (schedule.p_ref_mw + ext).clamp(0.0, schedule.p_caps_mw);
            out.insert(der.id.clone(), p);
        }
        out
    }
}

/// Expands a positive-sequence phasor into a balanced three-phase set.
pub fn balanced_three_phase(v_pos: Cplx) -> [Cplx; 3] {
    let alpha = Cplx::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    [v_pos, v_pos * alpha * alpha, v_pos * alpha]
}

impl Federate for FeederFederate {
    fn declaration(&self) -> FederateDecl {
        let mut decl = FederateDecl::new(&self.net.name, self.interval)
            .publishes(format!("boundary_power.{}", self.boundary_bus))
            .publishes(format!("feeder_state.{}", self.net.name))
            .subscribes(format!("boundary_voltage.{}", self.boundary_bus));
        for der in &self.net.ders {
            decl = decl.subscribes(format!("der_setpoint.{}", der.id));
        }
        decl
    }

    fn on_grant(
        &mut self,
        ctx: &mut PublishContext<'_>,
        grant: &TimeGrant,
    ) -> Result<SimTime, CosimError> {
        let voltage_topic = format!("boundary_voltage.{}", self.boundary_bus);
        if let Some(message) = grant.latest(&voltage_topic) {
            if let Some(v) = message.value.as_complex() {
                self.v_sub_pos = v;
            }
        }
        for der in &self.net.ders {
            let topic = format!("der_setpoint.{}", der.id);
            if let Some(message) = grant.latest(&topic) {
                if let Some(p) = message.value.as_scalar() {
                    self.p_ext_mw.insert(der.id.clone(), p);
                }
            }
        }

        let step = (grant.granted_time.as_micros() / self.interval.as_micros()) as usize;
        let load_scale: Vec<f64> = self.load_row(step).map(<[f64]>::to_vec).unwrap_or_default();
        let multiplier = if load_scale.is_empty() {
            1.0
        } else {
            load_scale.iter().sum::<f64>() / load_scale.len() as f64
        };

        let der_p = self.der_injections();
        let inputs = FeederInputs {
            v_sub: balanced_three_phase(self.v_sub_pos),
            der_p_mw: &der_p,
            load_scale: &load_scale,
        };
        let sol = solve_feeder(&self.net, &inputs).map_err(|err| CosimError::Federate {
            federate: self.net.name.clone(),
            message: err.to_string(),
        })?;

        let gross = sol.s_boundary_gross();
        let s_pos = aggregate_positive_sequence(gross);
        ctx.publish(
            &format!("boundary_power.{}", self.boundary_bus),
            Value::Complex(s_pos),
        )?;
        ctx.publish(
            &format!("feeder_state.{}", self.net.name),
            Value::Scalar(multiplier),
        )?;

        let mut v_min = f64::INFINITY;
        let mut v_max = 0.0f64;
        let mut mags = Vec::new();
        for (n, node) in self.net.nodes.iter().enumerate() {
            for p in node.phases.iter() {
                let mag = sol.v[n][p].norm();
                v_min = v_min.min(mag);
                v_max = v_max.max(mag);
                mags.push(mag);
            }
        }
        let v_mean = mags.iter().sum::<f64>() / mags.len() as f64;
        let v_var = mags.iter().map(|m| (m - v_mean).powi(2)).sum::<f64>() / mags.len() as f64;
        let violations = check_limits(&self.net, &sol, self.v_min, self.v_max);
        self.series.records.push(FeederRecord {
            time: grant.granted_time,
            v_min_pu: v_min,
            v_max_pu: v_max,
            v_mean_pu: v_mean,
            v_std_pu: v_var.sqrt(),
            s_meter_mva: sol.s_substation.iter().sum(),
            s_gross_mva: gross.iter().sum(),
            load_multiplier: multiplier,
            iterations: sol.iterations,
            violations,
        });

        Ok(grant.granted_time + self.interval)
    }
}
