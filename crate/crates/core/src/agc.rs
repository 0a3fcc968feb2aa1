//! Secondary frequency response: area control error with a deadband, a
//! sampled PI loop held on a coarse signal grid, and participation-factor
//! dispatch to generators and DER aggregators.

use crate::cosim::{CosimError, Federate, FederateDecl, PublishContext, SimTime, TimeGrant, Value};
use crate::F_NOMINAL_HZ;

/// AGC module errors.
#[derive(Debug, Clone, thiserror::Error)]
pub enum AgcError {
    #[error("participation table is empty")]
    EmptyTable,
    #[error("participation table invalid: {0}")]
    BadParticipation(String),
    #[error("AGC configuration invalid: {0}")]
    BadConfig(String),
}

/// Area control parameters.
#[derive(Debug, Clone)]
pub struct AgcParams {
    /// Frequency bias B, MW per 0.1 Hz.
    pub b_mw_per_tenth_hz: f64,
    /// Scheduled frequency, Hz.
    pub f0_hz: f64,
    /// Frequency error tolerance: ACE is zero inside this band.
    pub deadband_hz: f64,
    pub kp: f64,
    pub ki: f64,
    /// Anti-windup bound on the integral contribution `ki * integral`, MW.
    pub integrator_limit_mw: f64,
    /// Cadence at which the dispatched signal may change, seconds.
    pub signal_period_s: f64,
    /// Frequency measurement cadence, seconds.
    pub measurement_period_s: f64,
}

impl Default for AgcParams {
    fn default() -> Self {
        Self {
            b_mw_per_tenth_hz: 2.5,
            f0_hz: F_NOMINAL_HZ,
            deadband_hz: 0.0,
            kp: 0.1,
            ki: 0.05,
            integrator_limit_mw: f64::INFINITY,
            signal_period_s: 4.0,
            measurement_period_s: 0.5,
        }
    }
}

impl AgcParams {
    pub fn validate(&self) -> Result<(), AgcError> {
        if self.b_mw_per_tenth_hz <= 0.0 {
            return Err(AgcError::BadConfig("frequency bias B must be positive".into()));
        }
        if self.deadband_hz < 0.0 {
            return Err(AgcError::BadConfig("deadband must be non-negative".into()));
        }
        if self.measurement_period_s <= 0.0 || self.signal_period_s <= 0.0 {
            return Err(AgcError::BadConfig("periods must be positive".into()));
        }
        let ratio = self.signal_period_s / self.measurement_period_s;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(AgcError::BadConfig(
                "signal period must be an integer multiple of the measurement period".into(),
            ));
        }
        Ok(())
    }
}

/// Area control error: zero inside the frequency deadband, otherwise
/// `-10 B (f - f0)` so low frequency yields a positive (raise) command.
pub fn compute_ace(f_meas_hz: f64, params: &AgcParams) -> f64 {
    if (f_meas_hz - params.f0_hz).abs() <= params.deadband_hz {
        0.0
    } else {
        -10.0 * params.b_mw_per_tenth_hz * (f_meas_hz - params.f0_hz)
    }
}

/// PI loop state. The emitted signal is sampled and held: it changes only
/// when the clock crosses a multiple of the signal period.
#[derive(Debug, Clone, Default)]
pub struct AgcState {
    pub integral_mw_s: f64,
    pub last_ace_mw: f64,
    pub last_signal_mw: f64,
}

impl AgcState {
    /// One measurement update at grant instant `t`: integrates the ACE over
    /// the elapsed measurement period (no period has elapsed at t=0) and
    /// refreshes the held signal on the signal-period grid. Returns the
    /// currently held signal.
    pub fn pi_update(&mut self, params: &AgcParams, ace_mw: f64, t: SimTime) -> f64 {
        self.last_ace_mw = ace_mw;
        if t > SimTime::ZERO {
            self.integral_mw_s += ace_mw * params.measurement_period_s;
            if params.ki > 0.0 {
                let bound = params.integrator_limit_mw / params.ki;
                self.integral_mw_s = self.integral_mw_s.clamp(-bound, bound);
            }
        }
        if t.is_multiple_of(SimTime::from_secs_f64(params.signal_period_s)) {
            self.last_signal_mw = params.kp * ace_mw + params.ki * self.integral_mw_s;
        }
        self.last_signal_mw
    }
}

/// Participation factors over AGC units (generators and DER aggregators).
#[derive(Debug, Clone)]
pub struct ParticipationTable {
    entries: Vec<(String, f64)>,
}

impl ParticipationTable {
    /// Validates factors: non-empty, non-negative, summing to one.
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self, AgcError> {
        if entries.is_empty() {
            return Err(AgcError::EmptyTable);
        }
        for (unit, beta) in &entries {
            if *beta < 0.0 || !beta.is_finite() {
                return Err(AgcError::BadParticipation(format!(
                    "unit {unit:?} has factor {beta}"
                )));
            }
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AgcError::BadParticipation(format!(
                "factors sum to {total}, expected 1"
            )));
        }
        Ok(Self { entries })
    }

    pub fn units(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.0.as_str())
    }

    /// Splits `signal` by factor. The last unit absorbs the floating-point
    /// remainder so the shares sum back to the signal exactly under
    /// left-to-right addition.
    pub fn dispatch(&self, signal_mw: f64) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .entries
            .iter()
            .map(|(unit, beta)| (unit.clone(), beta * signal_mw))
            .collect();
        let partial: f64 = out[..out.len() - 1].iter().map(|e| e.1).sum();
        let last = out.last_mut().expect("validated non-empty");
        last.1 = signal_mw - partial;
        out
    }
}

/// One measurement record.
#[derive(Debug, Clone, Copy)]
pub struct AgcRecord {
    pub time_s: f64,
    pub f_hz: f64,
    pub ace_mw: f64,
    /// The held area signal after this measurement.
    pub signal_mw: f64,
}

/// The area AGC federate: measures frequency every measurement period,
/// publishes per-unit setpoints on the signal-period grid.
pub struct AgcFederate {
    name: String,
    params: AgcParams,
    table: ParticipationTable,
    state: AgcState,
    f_meas_hz: f64,
    /// When false the loop observes but always dispatches zero.
    enabled: bool,
    records: Vec<AgcRecord>,
}

impl AgcFederate {
    pub fn new(params: AgcParams, table: ParticipationTable) -> Result<Self, AgcError> {
        params.validate()?;
        Ok(Self {
            name: "agc".into(),
            params,
            table,
            state: AgcState::default(),
            f_meas_hz: F_NOMINAL_HZ,
            enabled: true,
            records: Vec::new(),
        })
    }

    /// Disables dispatch (the federate still publishes zeros so the
    /// federation wiring is unchanged).
    pub fn set_enabled(&mut self, enabled: bool) {
        self.enabled = enabled;
    }

    pub fn records(&self) -> &[AgcRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<AgcRecord> {
        self.records
    }
}

impl Federate for AgcFederate {
    fn declaration(&self) -> FederateDecl {
        let mut decl = FederateDecl::new(
            self.name.clone(),
            SimTime::from_secs_f64(self.params.measurement_period_s),
        )
        .subscribes("freq_hz");
        for unit in self.table.units() {
            decl = decl.publishes(format!("agc_setpoint.{unit}"));
        }
        decl
    }

    fn on_grant(
        &mut self,
        ctx: &mut PublishContext<'_>,
        grant: &TimeGrant,
    ) -> Result<SimTime, CosimError> {
        if let Some(m) = grant.latest("freq_hz") {
            if let Some(f) = m.value.as_scalar() {
                self.f_meas_hz = f;
            }
        }
        // The error is always measured; disabling AGC freezes the
        // controller and zeroes the dispatch, which keeps the records
        // meaningful for with/without comparisons.
        let ace = compute_ace(self.f_meas_hz, &self.params);
        let on_boundary = grant
            .granted_time
            .is_multiple_of(SimTime::from_secs_f64(self.params.signal_period_s));
        let signal = if self.enabled {
            self.state.pi_update(&self.params, ace, grant.granted_time)
        } else {
            0.0
        };
        if on_boundary {
            for (unit, share) in self.table.dispatch(signal) {
                ctx.publish(&format!("agc_setpoint.{unit}"), Value::Scalar(share))?;
            }
        }
        self.records.push(AgcRecord {
            time_s: grant.granted_time.as_secs_f64(),
            f_hz: self.f_meas_hz,
            ace_mw: ace,
            signal_mw: signal,
        });
        Ok(grant.granted_time + SimTime::from_secs_f64(self.params.measurement_period_s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(b: f64, db: f64, kp: f64, ki: f64) -> AgcParams {
        AgcParams {
            b_mw_per_tenth_hz: b,
            deadband_hz: db,
            kp,
            ki,
            ..AgcParams::default()
        }
    }

    #[test]
    fn ace_follows_bias_outside_the_deadband() {
        let p = params(20.0, 0.0, 0.1, 0.05);
        assert_eq!(compute_ace(60.0, &p), 0.0);
        // 50 mHz low with B = 20 MW per 0.1 Hz raises 10 MW.
        assert_relative_eq!(compute_ace(59.95, &p), 10.0, epsilon = 1e-12);
        let banded = params(20.0, 0.01, 0.1, 0.05);
        assert_eq!(compute_ace(60.005, &banded), 0.0);
        assert!(compute_ace(60.02, &banded) < 0.0);
    }

    #[test]
    fn integral_only_loop_accumulates_on_the_grid() {
        // Constant 10 MW ACE, Ki = 0.1, Kp = 0: after the 4 s boundary the
        // held signal is 0.1 * 10 * 4 = 4 MW, held until 8 s.
        let p = params(20.0, 0.0, 0.0, 0.1);
        let mut state = AgcState::default();
        let mut signals = Vec::new();
        for k in 0..=16 {
            let t = SimTime::from_secs_f64(k as f64 * 0.5);
            signals.push(state.pi_update(&p, 10.0, t));
        }
        assert_eq!(signals[0], 0.0);
        assert_relative_eq!(signals[8], 4.0, epsilon = 1e-12); // t = 4 s
        assert_relative_eq!(signals[9], 4.0, epsilon = 1e-12); // held
        assert_relative_eq!(signals[15], 4.0, epsilon = 1e-12);
        assert_relative_eq!(signals[16], 8.0, epsilon = 1e-12); // t = 8 s
    }

    #[test]
    fn proportional_signal_holds_between_boundaries() {
        // Kp = 1, Ki = 0, ACE steps to 10 at t = 0.5: the signal stays at
        // its t = 0 value until the 4 s boundary, then becomes 10.
        let p = params(20.0, 0.0, 1.0, 0.0);
        let mut state = AgcState::default();
        assert_eq!(state.pi_update(&p, 0.0, SimTime::ZERO), 0.0);
        for k in 1..8 {
            let t = SimTime::from_secs_f64(k as f64 * 0.5);
            assert_eq!(state.pi_update(&p, 10.0, t), 0.0);
        }
        assert_relative_eq!(
            state.pi_update(&p, 10.0, SimTime::from_secs_f64(4.0)),
            10.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn anti_windup_caps_the_integral_contribution() {
        let mut p = params(20.0, 0.0, 0.0, 0.1);
        p.integrator_limit_mw = 2.0;
        let mut state = AgcState::default();
        for k in 1..=1000 {
            state.pi_update(&p, 50.0, SimTime::from_secs_f64(k as f64 * 0.5));
        }
        assert_relative_eq!(p.ki * state.integral_mw_s, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn dispatch_conserves_the_signal_exactly() {
        // Twenty DERs at 0.5 % each and two thermal units sharing 90 %.
        let mut entries: Vec<(String, f64)> = (0..20)
            .map(|i| (format!("agg{i}"), 0.005))
            .collect();
        entries.push(("gen1".into(), 0.45));
        entries.push(("gen2".into(), 0.45));
        let table = ParticipationTable::new(entries).unwrap();
        let shares = table.dispatch(10.0);
        assert_relative_eq!(shares[0].1, 0.05, epsilon = 1e-12);
        let thermal: f64 = shares[20].1 + shares[21].1;
        assert_relative_eq!(thermal, 9.0, epsilon = 1e-9);
        let sum: f64 = shares.iter().map(|s| s.1).sum();
        assert_eq!(sum, 10.0);
        // Awkward totals still sum back exactly.
        for &signal in &[1.0 / 3.0, -0.77, 123.456789] {
            let sum: f64 = table.dispatch(signal).iter().map(|s| s.1).sum();
            assert_eq!(sum, signal);
        }
    }

    #[test]
    fn participation_validation_rejects_bad_tables() {
        assert!(matches!(
            ParticipationTable::new(vec![]),
            Err(AgcError::EmptyTable)
        ));
        assert!(ParticipationTable::new(vec![("a".into(), 0.4), ("b".into(), 0.4)]).is_err());
        assert!(ParticipationTable::new(vec![("a".into(), -0.2), ("b".into(), 1.2)]).is_err());
        assert!(ParticipationTable::new(vec![("a".into(), 1.0)]).is_ok());
    }

    #[test]
    fn quiet_frequency_inside_the_deadband_never_moves_the_signal() {
        let p = params(20.0, 0.017, 0.3, 0.2);
        let mut state = AgcState::default();
        for k in 0..=120 {
            let f = 60.0 + 0.016 * ((k as f64) * 0.7).sin();
            let ace = compute_ace(f, &p);
            let t = SimTime::from_secs_f64(k as f64 * 0.5);
            assert_eq!(state.pi_update(&p, ace, t), 0.0);
        }
    }
}
