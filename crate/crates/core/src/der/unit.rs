//! A single DER unit: droop, command limiting, first-order tracking.

use super::{DerError, MpptSeries};
use crate::F_NOMINAL_HZ;

/// Static parameters of a DER unit.
#[derive(Debug, Clone)]
pub struct DerParams {
    pub name: String,
    /// Scheduled output, MW.
    pub p_ref_mw: f64,
    /// Nameplate rating, MW.
    pub p_caps_mw: f64,
    /// Droop gain: per-unit power (on the nameplate) per per-unit
    /// frequency deviation beyond the deadband.
    pub d_droop: f64,
    /// Half-width of the frequency deadband, Hz.
    pub deadband_hz: f64,
    /// Output tracking time constant, seconds.
    pub tg_s: f64,
}

impl DerParams {
    /// Conventional response settings: 0.017 Hz deadband, droop gain 20,
    /// 0.1 s tracking.
    pub fn new(name: impl Into<String>, p_ref_mw: f64, p_caps_mw: f64) -> Self {
        Self {
            name: name.into(),
            p_ref_mw,
            p_caps_mw,
            d_droop: 20.0,
            deadband_hz: 0.017,
            tg_s: 0.1,
        }
    }
}

/// Result of one tracking step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub p_out_mw: f64,
    /// True when the new output respects the granted envelope: output above
    /// the licensed level (schedule plus headroom) may only decay.
    pub within_envelope: bool,
}

/// A DER unit's dynamic state and external commands.
#[derive(Debug, Clone)]
pub struct DerUnit {
    pub params: DerParams,
    pub mppt: MpptSeries,
    /// Current output, MW.
    pub p_out_mw: f64,
    /// AGC command share, MW (may be negative).
    pub p_ext_mw: f64,
    /// Granted headroom share above the schedule, MW.
    pub headroom_mw: f64,
}

impl DerUnit {
    /// Creates a unit producing its schedule, clamped to what is available.
    pub fn new(params: DerParams, mppt: MpptSeries) -> Result<Self, DerError> {
        let p0 = params
            .p_ref_mw
            .min(mppt.sample(0.0)?)
            .min(params.p_caps_mw)
            .max(0.0);
        Ok(Self {
            params,
            mppt,
            p_out_mw: p0,
            p_ext_mw: 0.0,
            headroom_mw: 0.0,
        })
    }

    /// Droop response in per-unit on the nameplate: positive below the
    /// deadband (raise output), negative above it.
    pub fn droop_response_pu(&self, f_hz: f64) -> f64 {
        let lo = F_NOMINAL_HZ - self.params.deadband_hz;
        let hi = F_NOMINAL_HZ + self.params.deadband_hz;
        if f_hz < lo {
            (lo - f_hz) / F_NOMINAL_HZ * self.params.d_droop
        } else if f_hz > hi {
            -(f_hz - hi) / F_NOMINAL_HZ * self.params.d_droop
        } else {
            0.0
        }
    }

    /// The limited power command: desired output (schedule + AGC share +
    /// droop) capped by available solar power, the nameplate, and the
    /// licensed level, floored at zero.
    pub fn command_mw(&self, f_hz: f64, t_s: f64) -> Result<f64, DerError> {
        let p_mppt = self.mppt.sample(t_s)?;
        let p_droop = self.droop_response_pu(f_hz) * self.params.p_caps_mw;
        let desired = self.params.p_ref_mw + self.p_ext_mw + p_droop;
        Ok(desired
            .min(p_mppt)
            .min(self.params.p_caps_mw)
            .min(self.licensed_mw())
            .max(0.0))
    }

    /// The licensed output level: schedule plus granted headroom.
    pub fn licensed_mw(&self) -> f64 {
        self.params.p_ref_mw + self.headroom_mw
    }

    /// Advances the output one step of `dt_s` toward the limited command at
    /// the given frequency, and checks the envelope condition.
    pub fn step(&mut self, f_hz: f64, t_s: f64, dt_s: f64) -> Result<StepOutcome, DerError> {
        let command = self.command_mw(f_hz, t_s)?;
        let alpha = dt_s / self.params.tg_s;
        let p_prev = self.p_out_mw;
        let cap = self.mppt.sample(t_s)?.min(self.params.p_caps_mw);
        self.p_out_mw = (p_prev + alpha * (command - p_prev)).clamp(0.0, cap.max(0.0));
        let within_envelope =
            envelope_respected(p_prev, self.p_out_mw, self.licensed_mw(), cap, alpha);
        Ok(StepOutcome {
            p_out_mw: self.p_out_mw,
            within_envelope,
        })
    }
}

/// The output envelope: power above the licensed level (schedule plus
/// granted headroom) may persist only while decaying at the tracking rate,
/// and output never exceeds what is physically available. Usable on
/// recorded traces as well as live steps.
pub fn envelope_respected(
    p_prev_mw: f64,
    p_new_mw: f64,
    licensed_mw: f64,
    cap_mw: f64,
    alpha: f64,
) -> bool {
    let allowed_excess = (p_prev_mw - licensed_mw).max(0.0) * (1.0 - alpha) + 1e-9;
    p_new_mw - licensed_mw <= allowed_excess && p_new_mw <= cap_mw + 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> DerUnit {
        let mut params = DerParams::new("pv1", 0.5, 1.0);
        params.tg_s = 0.1;
        DerUnit::new(params, MpptSeries::constant(0.8)).unwrap()
    }

    #[test]
    fn droop_is_zero_inside_the_deadband() {
        let u = unit();
        assert_eq!(u.droop_response_pu(60.0), 0.0);
        assert_eq!(u.droop_response_pu(60.016), 0.0);
        assert_eq!(u.droop_response_pu(59.984), 0.0);
    }

    #[test]
    fn droop_raises_on_low_frequency_and_lowers_on_high() {
        let u = unit();
        // 59.9 Hz: (59.983 - 59.9)/60 * 20 on the nameplate.
        let expected = (59.983 - 59.9) / 60.0 * 20.0;
        assert_relative_eq!(u.droop_response_pu(59.9), expected, epsilon = 1e-12);
        let expected_hi = -(60.1 - 60.017) / 60.0 * 20.0;
        assert_relative_eq!(u.droop_response_pu(60.1), expected_hi, epsilon = 1e-12);
    }

    #[test]
    fn command_respects_every_cap() {
        let mut u = unit();
        // No grants: command cannot exceed the schedule even at low frequency.
        assert_relative_eq!(u.command_mw(59.5, 0.0).unwrap(), 0.5, epsilon = 1e-12);
        // A headroom grant opens the gap; at 59 Hz the droop asks for
        // 0.33 MW extra, so available power (0.8) becomes the cap.
        u.headroom_mw = 0.4;
        assert_relative_eq!(u.command_mw(59.0, 0.0).unwrap(), 0.8, epsilon = 1e-12);
        u.headroom_mw = 0.1;
        assert_relative_eq!(u.command_mw(59.0, 0.0).unwrap(), 0.6, epsilon = 1e-12);
        // Large negative AGC share floors at zero.
        u.p_ext_mw = -2.0;
        assert_eq!(u.command_mw(60.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn output_tracks_the_command_first_order() {
        let mut u = unit();
        u.headroom_mw = 0.3;
        u.p_ext_mw = 0.2;
        let cmd = u.command_mw(60.0, 0.0).unwrap();
        assert_relative_eq!(cmd, 0.7, epsilon = 1e-12);
        let dt = 1.0 / 30.0;
        let first = u.step(60.0, 0.0, dt).unwrap();
        assert_relative_eq!(
            first.p_out_mw,
            0.5 + dt / 0.1 * (0.7 - 0.5),
            epsilon = 1e-12
        );
        for k in 1..300 {
            u.step(60.0, k as f64 * dt, dt).unwrap();
        }
        assert_relative_eq!(u.p_out_mw, 0.7, epsilon = 1e-6);
    }

    #[test]
    fn revoked_headroom_forces_decay_and_envelope_tracks_it() {
        let mut u = unit();
        u.headroom_mw = 0.3;
        u.p_ext_mw = 0.3;
        let dt = 1.0 / 30.0;
        for k in 0..300 {
            let out = u.step(59.9, k as f64 * dt, dt).unwrap();
            assert!(out.within_envelope);
        }
        assert_relative_eq!(u.p_out_mw, 0.8, epsilon = 1e-6);
        // Grant revoked: output is now above the licensed level and must decay.
        u.headroom_mw = 0.0;
        let mut prev = u.p_out_mw;
        for k in 300..600 {
            let out = u.step(59.9, k as f64 * dt, dt).unwrap();
            assert!(out.within_envelope);
            assert!(out.p_out_mw <= prev + 1e-12);
            prev = out.p_out_mw;
        }
        assert_relative_eq!(u.p_out_mw, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn envelope_monitor_flags_non_decaying_excess() {
        // Holding 0.25 MW above the license without decaying is a violation;
        // decaying by the tracking factor is the boundary of legality.
        assert!(!envelope_respected(0.75, 0.75, 0.5, 1.0, 1.0 / 3.0));
        assert!(envelope_respected(0.75, 0.75 - 0.25 / 3.0, 0.5, 1.0, 1.0 / 3.0));
        // Exceeding available power is a violation even below the license.
        assert!(!envelope_respected(0.4, 0.45, 0.5, 0.42, 1.0 / 3.0));
        assert!(envelope_respected(0.4, 0.41, 0.5, 0.42, 1.0 / 3.0));
    }
}
