//! The transmission federate: advances the grid DAE on a fixed internal
//! step between exchange grants, hosts the DER dynamic states, applies
//! scheduled events, and exchanges boundary quantities with the
//! distribution and control federates.

use std::collections::{BTreeMap, BTreeSet};

use super::grid::GridEvent;
use super::model::GridModel;
use super::TransmissionError;
use crate::cosim::{CosimError, Federate, FederateDecl, PublishContext, SimTime, TimeGrant, Value};
use crate::dae::{trapezoidal_step, NewtonOptions};
use crate::der::DerUnit;

/// Default internal integration step, seconds.
const DT_S: f64 = 1.0 / 30.0;
/// Default internal steps per second.
const STEPS_PER_S: u64 = 30;
/// Default recording decimation: every third step puts a sample on the
/// 0.1 s grid.
const RECORD_EVERY: u64 = 3;

/// Recorded trajectory of one hosted DER unit, on the series time grid.
#[derive(Debug, Clone)]
pub struct DerTrace {
    pub name: String,
    pub p_out_mw: Vec<f64>,
    /// Droop contribution to the command, MW.
    pub p_drp_mw: Vec<f64>,
    /// External (AGC) setpoint component, MW.
    pub p_ext_mw: Vec<f64>,
    /// Available source power, MW.
    pub p_mppt_mw: Vec<f64>,
    /// Reference plus granted headroom, MW.
    pub licensed_mw: Vec<f64>,
    /// False if any internal step broke the output envelope.
    pub envelope_ok: bool,
    /// Largest observed output excess over the licensed level while the
    /// envelope was broken, MW.
    pub worst_excess_mw: f64,
}

/// Recorded transmission trajectory on a 0.1 s grid.
#[derive(Debug, Clone, Default)]
pub struct TransmissionSeries {
    pub time_s: Vec<f64>,
    pub freq_hz: Vec<f64>,
    pub der: Vec<DerTrace>,
}

impl TransmissionSeries {
    /// Frequency at the sample nearest to `t_s`.
    pub fn frequency_at(&self, t_s: f64) -> f64 {
        let idx = self
            .time_s
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1 - t_s).abs();
                let db = (b.1 - t_s).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .expect("series is never empty");
        self.freq_hz[idx]
    }

    /// Minimum frequency and its time over `[t0, t1]`.
    pub fn nadir_in(&self, t0_s: f64, t1_s: f64) -> (f64, f64) {
        let mut best = (t0_s, f64::INFINITY);
        for (t, f) in self.time_s.iter().zip(&self.freq_hz) {
            if *t >= t0_s && *t <= t1_s && *f < best.1 {
                best = (*t, *f);
            }
        }
        best
    }

    /// Mean frequency over `[t0, t1]`.
    pub fn window_mean(&self, t0_s: f64, t1_s: f64) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (t, f) in self.time_s.iter().zip(&self.freq_hz) {
            if *t >= t0_s && *t <= t1_s {
                sum += f;
                count += 1;
            }
        }
        sum / count as f64
    }

    /// True when every hosted DER respected its output envelope throughout.
    pub fn envelope_ok(&self) -> bool {
        self.der.iter().all(|d| d.envelope_ok)
    }
}

struct DerAttachment {
    unit: DerUnit,
    bus: usize,
}

/// The transmission federate. Exchange cadence is 0.5 s; frequency is
/// published at every grant and boundary voltages on the 1 s grid.
pub struct TransmissionFederate {
    name: String,
    model: GridModel,
    x: Vec<f64>,
    y: Vec<f64>,
    k: u64,
    dt_s: f64,
    steps_per_s: u64,
    record_every: u64,
    interval: SimTime,
    newton: NewtonOptions<f64>,
    feeder_buses: Vec<String>,
    agc_gens: Vec<String>,
    ders: Vec<DerAttachment>,
    der_buses: BTreeSet<usize>,
    events: Vec<GridEvent>,
    next_event: usize,
    series: TransmissionSeries,
}

impl TransmissionFederate {
    pub fn new(model: GridModel, x0: Vec<f64>, y0: Vec<f64>) -> Self {
        let mut series = TransmissionSeries::default();
        series.time_s.push(0.0);
        series.freq_hz.push(model.coi_frequency_hz(&x0));
        Self {
            name: "transmission".into(),
            model,
            x: x0,
            y: y0,
            k: 0,
            dt_s: DT_S,
            steps_per_s: STEPS_PER_S,
            record_every: RECORD_EVERY,
            interval: SimTime::from_secs_f64(0.5),
            newton: NewtonOptions::default(),
            feeder_buses: Vec::new(),
            agc_gens: Vec::new(),
            ders: Vec::new(),
            der_buses: BTreeSet::new(),
            events: Vec::new(),
            next_event: 0,
            series,
        }
    }

    /// Wires a boundary bus to a feeder federate: the bus's voltage is
    /// published and its gross load subscribed.
    pub fn attach_feeder(&mut self, bus_name: &str) -> Result<(), TransmissionError> {
        let idx = self
            .model
            .grid()
            .bus_index(bus_name)
            .ok_or_else(|| TransmissionError::UnknownElement(bus_name.to_string()))?;
        if !self.model.grid().is_boundary(idx) {
            return Err(TransmissionError::NotBoundary(bus_name.to_string()));
        }
        self.feeder_buses.push(bus_name.to_string());
        Ok(())
    }

    /// Hosts a DER unit's dynamics at a boundary bus.
    pub fn attach_der(&mut self, bus_name: &str, unit: DerUnit) -> Result<(), TransmissionError> {
        let bus = self
            .model
            .grid()
            .bus_index(bus_name)
            .ok_or_else(|| TransmissionError::UnknownElement(bus_name.to_string()))?;
        self.der_buses.insert(bus);
        let mppt0 = unit.mppt.sample(0.0).expect("t = 0 is never negative");
        self.series.der.push(DerTrace {
            name: unit.params.name.clone(),
            p_out_mw: vec![unit.p_out_mw],
            p_drp_mw: vec![0.0],
            p_ext_mw: vec![unit.p_ext_mw],
            p_mppt_mw: vec![mppt0],
            licensed_mw: vec![unit.licensed_mw()],
            envelope_ok: true,
            worst_excess_mw: 0.0,
        });
        self.ders.push(DerAttachment { unit, bus });
        self.refresh_der_injections();
        Ok(())
    }

    /// Subscribes a generator to AGC setpoint commands.
    pub fn subscribe_agc(&mut self, gen_name: &str) -> Result<(), TransmissionError> {
        if !self.model.gens().iter().any(|g| g.name == gen_name) {
            return Err(TransmissionError::UnknownElement(gen_name.to_string()));
        }
        self.agc_gens.push(gen_name.to_string());
        Ok(())
    }

    /// Overrides the default timing (33.3 ms internal step, 0.5 s exchange
    /// cadence). The internal step must divide one second and the exchange
    /// interval evenly. Only valid before the first grant.
    pub fn set_timing(
        &mut self,
        internal_dt_s: f64,
        exchange_s: f64,
    ) -> Result<(), TransmissionError> {
        let bad = |m: String| TransmissionError::BadTiming(m);
        if self.k != 0 {
            return Err(bad("timing is fixed once integration has started".into()));
        }
        if !internal_dt_s.is_finite()
            || internal_dt_s <= 0.0
            || !exchange_s.is_finite()
            || exchange_s <= 0.0
        {
            return Err(bad("steps must be positive".into()));
        }
        let steps = (1.0 / internal_dt_s).round();
        if steps < 1.0 || ((1.0 / internal_dt_s) - steps).abs() > 1e-6 * steps {
            return Err(bad(format!(
                "internal step {internal_dt_s} s must divide one second evenly"
            )));
        }
        let per_exchange = exchange_s / internal_dt_s;
        if (per_exchange - per_exchange.round()).abs() > 1e-9 * per_exchange.round().max(1.0) {
            return Err(bad(format!(
                "internal step {internal_dt_s} s must divide the {exchange_s} s exchange interval"
            )));
        }
        self.steps_per_s = steps as u64;
        self.dt_s = 1.0 / steps;
        self.record_every = ((0.1 / self.dt_s).round() as u64).max(1);
        self.interval = SimTime::from_secs_f64(exchange_s);
        Ok(())
    }

    /// The configured internal integration step, seconds.
    pub fn internal_dt_s(&self) -> f64 {
        self.dt_s
    }

    /// Schedules a grid event; events apply at the first internal step
    /// boundary at or after their time.
    pub fn add_event(&mut self, event: GridEvent) {
        self.events.push(event);
        self.events
            .sort_by(|a, b| a.time_s().partial_cmp(&b.time_s()).unwrap());
    }

    pub fn model(&self) -> &GridModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut GridModel {
        &mut self.model
    }

    pub fn series(&self) -> &TransmissionSeries {
        &self.series
    }

    pub fn into_series(self) -> TransmissionSeries {
        self.series
    }

    /// Pushes every hosted unit's current output into the network model.
    fn refresh_der_injections(&mut self) {
        let mut by_bus: BTreeMap<usize, f64> = BTreeMap::new();
        for att in &self.ders {
            *by_bus.entry(att.bus).or_insert(0.0) += att.unit.p_out_mw;
        }
        for &bus in &self.der_buses {
            self.model
                .set_der_injection(bus, by_bus.get(&bus).copied().unwrap_or(0.0));
        }
    }

    fn fed_err(&self, message: impl std::fmt::Display) -> CosimError {
        CosimError::Federate {
            federate: self.name.clone(),
            message: message.to_string(),
        }
    }

    /// Applies scheduled events due at or before internal step `k`.
    fn apply_due_events(&mut self, k: u64) -> Result<bool, TransmissionError> {
        let t_k = k as f64 * self.dt_s;
        let mut applied = false;
        while self.next_event < self.events.len()
            && self.events[self.next_event].time_s() <= t_k + 1e-9
        {
            match self.events[self.next_event].clone() {
                GridEvent::GeneratorTrip { gen, .. } => self.model.trip_generator(&gen)?,
                GridEvent::SetpointChange { gen, delta_mw, .. } => {
                    self.model.shift_setpoint(&gen, delta_mw)?
                }
                GridEvent::LoadScale { bus, factor, .. } => {
                    self.model.scale_native_load(&bus, factor)?
                }
            }
            self.next_event += 1;
            applied = true;
        }
        Ok(applied)
    }

    fn ingest(&mut self, grant: &TimeGrant) -> Result<bool, CosimError> {
        let mut algebraic_dirty = false;
        for bus in &self.feeder_buses.clone() {
            if let Some(m) = grant.latest(&format!("boundary_power.{bus}")) {
                let s_pos = m
                    .value
                    .as_complex()
                    .ok_or_else(|| self.fed_err(format!("boundary_power.{bus}: wrong payload")))?;
                // The wire carries the mean per-phase power; the bus load is
                // the three-phase total.
                self.model
                    .set_boundary_load(bus, 3.0 * s_pos)
                    .map_err(|e| self.fed_err(e))?;
                algebraic_dirty = true;
            }
        }
        for gen in &self.agc_gens.clone() {
            if let Some(m) = grant.latest(&format!("agc_setpoint.{gen}")) {
                let mw = m
                    .value
                    .as_scalar()
                    .ok_or_else(|| self.fed_err(format!("agc_setpoint.{gen}: wrong payload")))?;
                self.model
                    .set_agc_setpoint(gen, mw)
                    .map_err(|e| self.fed_err(e))?;
            }
        }
        for i in 0..self.ders.len() {
            let name = self.ders[i].unit.params.name.clone();
            if let Some(m) = grant.latest(&format!("der_setpoint.{name}")) {
                self.ders[i].unit.p_ext_mw = m
                    .value
                    .as_scalar()
                    .ok_or_else(|| self.fed_err(format!("der_setpoint.{name}: wrong payload")))?;
            }
            if let Some(m) = grant.latest(&format!("der_headroom.{name}")) {
                self.ders[i].unit.headroom_mw = m
                    .value
                    .as_scalar()
                    .ok_or_else(|| self.fed_err(format!("der_headroom.{name}: wrong payload")))?;
            }
        }
        Ok(algebraic_dirty)
    }

    /// One internal step: DER co-update, then the implicit network step.
    fn internal_step(&mut self) -> Result<(), CosimError> {
        if self
            .apply_due_events(self.k)
            .map_err(|e| self.fed_err(e))?
        {
            self.model
                .solve_algebraic(&self.x, &mut self.y)
                .map_err(|e| self.fed_err(e))?;
        }
        let f_coi = self.model.coi_frequency_hz(&self.x);
        let t_k = self.k as f64 * self.dt_s;
        let dt = self.dt_s;
        for (i, att) in self.ders.iter_mut().enumerate() {
            let outcome = att
                .unit
                .step(f_coi, t_k, dt)
                .map_err(|e| CosimError::Federate {
                    federate: "transmission".into(),
                    message: e.to_string(),
                })?;
            if !outcome.within_envelope {
                let trace = &mut self.series.der[i];
                trace.envelope_ok = false;
                trace.worst_excess_mw = trace
                    .worst_excess_mw
                    .max(outcome.p_out_mw - att.unit.licensed_mw());
            }
        }
        self.refresh_der_injections();
        trapezoidal_step(
            &self.model,
            t_k,
            self.dt_s,
            &mut self.x,
            &mut self.y,
            &self.newton,
        )
        .map_err(|e| self.fed_err(e))?;
        self.model.clamp_governors(&mut self.x);
        self.k += 1;
        if self.k.is_multiple_of(self.record_every) {
            let t = self.k as f64 * self.dt_s;
            let f_now = self.model.coi_frequency_hz(&self.x);
            self.series.time_s.push(t);
            self.series.freq_hz.push(f_now);
            for (i, att) in self.ders.iter().enumerate() {
                let trace = &mut self.series.der[i];
                trace.p_out_mw.push(att.unit.p_out_mw);
                trace
                    .p_drp_mw
                    .push(att.unit.params.p_caps_mw * att.unit.droop_response_pu(f_now));
                trace.p_ext_mw.push(att.unit.p_ext_mw);
                let mppt = att.unit.mppt.sample(t).map_err(|e| CosimError::Federate {
                    federate: "transmission".into(),
                    message: e.to_string(),
                })?;
                trace.p_mppt_mw.push(mppt);
                trace.licensed_mw.push(att.unit.licensed_mw());
            }
        }
        Ok(())
    }
}

impl Federate for TransmissionFederate {
    fn declaration(&self) -> FederateDecl {
        let mut decl =
            FederateDecl::new(self.name.clone(), self.interval).publishes("freq_hz");
        for bus in &self.feeder_buses {
            decl = decl
                .publishes(format!("boundary_voltage.{bus}"))
                .subscribes(format!("boundary_power.{bus}"));
        }
        for gen in &self.agc_gens {
            decl = decl.subscribes(format!("agc_setpoint.{gen}"));
        }
        for att in &self.ders {
            decl = decl
                .subscribes(format!("der_setpoint.{}", att.unit.params.name))
                .subscribes(format!("der_headroom.{}", att.unit.params.name));
        }
        decl
    }

    fn on_grant(
        &mut self,
        ctx: &mut PublishContext<'_>,
        grant: &TimeGrant,
    ) -> Result<SimTime, CosimError> {
        if self.ingest(grant)? {
            self.model
                .solve_algebraic(&self.x, &mut self.y)
                .map_err(|e| self.fed_err(e))?;
        }

        // Advance the internal clock to the granted time.
        let micros = grant.granted_time.as_micros();
        debug_assert!(
            grant.granted_time.is_multiple_of(self.interval),
            "transmission grants stay on the exchange grid"
        );
        let k_target = micros / 1_000_000 * self.steps_per_s
            + micros % 1_000_000 * self.steps_per_s / 1_000_000;
        while self.k < k_target {
            self.internal_step()?;
        }

        ctx.publish(
            "freq_hz",
            Value::Scalar(self.model.coi_frequency_hz(&self.x)),
        )?;
        if grant
            .granted_time
            .is_multiple_of(SimTime::from_secs_f64(1.0))
        {
            for bus in &self.feeder_buses {
                let v = self
                    .model
                    .boundary_voltage(&self.y, bus)
                    .map_err(|e| CosimError::Federate {
                        federate: self.name.clone(),
                        message: e.to_string(),
                    })?;
                ctx.publish(&format!("boundary_voltage.{bus}"), Value::Complex(v))?;
            }
        }
        Ok(grant.granted_time + self.interval)
    }
}
