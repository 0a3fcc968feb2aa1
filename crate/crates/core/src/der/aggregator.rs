//! The aggregator federate: receives its AGC command and its feeder's
//! headroom grant, and fans both out to its DER units in equal shares.

use crate::cosim::{CosimError, Federate, FederateDecl, PublishContext, SimTime, TimeGrant, Value};

/// One dispatch record.
#[derive(Debug, Clone, Copy)]
pub struct AggregatorRecord {
    pub time_s: f64,
    pub p_ext_total_mw: f64,
    pub headroom_total_mw: f64,
}

/// Fans the aggregate AGC command `agc_setpoint.<name>` and the feeder
/// headroom grant `headroom.<feeder>` out as per-unit `der_setpoint.<der>`
/// and `der_headroom.<der>` topics. Shares are equal, with the last unit
/// absorbing rounding so the shares sum exactly.
pub struct AggregatorFederate {
    name: String,
    feeder: String,
    der_names: Vec<String>,
    interval: SimTime,
    p_ext_total_mw: f64,
    headroom_total_mw: f64,
    records: Vec<AggregatorRecord>,
}

impl AggregatorFederate {
    pub fn new(
        name: impl Into<String>,
        feeder: impl Into<String>,
        der_names: Vec<String>,
    ) -> Self {
        assert!(!der_names.is_empty(), "aggregator controls at least one DER");
        Self {
            name: name.into(),
            feeder: feeder.into(),
            der_names,
            interval: SimTime::from_secs_f64(2.0),
            p_ext_total_mw: 0.0,
            headroom_total_mw: 0.0,
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[AggregatorRecord] {
        &self.records
    }

    /// Equal shares of `total` over `n` participants that sum back exactly
    /// under left-to-right addition: the last share is the remainder after
    /// the running sum of the others.
    pub fn equal_shares(total: f64, n: usize) -> Vec<f64> {
        let share = total / n as f64;
        let mut shares = vec![share; n];
        let partial: f64 = shares[..n - 1].iter().sum();
        shares[n - 1] = total - partial;
        shares
    }
}

impl Federate for AggregatorFederate {
    fn declaration(&self) -> FederateDecl {
        let mut decl = FederateDecl::new(self.name.clone(), self.interval)
            .subscribes(format!("agc_setpoint.{}", self.name))
            .subscribes(format!("headroom.{}", self.feeder));
        for der in &self.der_names {
            decl = decl
                .publishes(format!("der_setpoint.{der}"))
                .publishes(format!("der_headroom.{der}"));
        }
        decl
    }

    fn on_grant(
        &mut self,
        ctx: &mut PublishContext<'_>,
        grant: &TimeGrant,
    ) -> Result<SimTime, CosimError> {
        if let Some(m) = grant.latest(&format!("agc_setpoint.{}", self.name)) {
            if let Some(v) = m.value.as_scalar() {
                self.p_ext_total_mw = v;
            }
        }
        if let Some(m) = grant.latest(&format!("headroom.{}", self.feeder)) {
            if let Some(v) = m.value.as_scalar() {
                self.headroom_total_mw = v;
            }
        }
        let n = self.der_names.len();
        let setpoints = Self::equal_shares(self.p_ext_total_mw, n);
        let headrooms = Self::equal_shares(self.headroom_total_mw, n);
        for (i, der) in self.der_names.iter().enumerate() {
            ctx.publish(&format!("der_setpoint.{der}"), Value::Scalar(setpoints[i]))?;
            ctx.publish(&format!("der_headroom.{der}"), Value::Scalar(headrooms[i]))?;
        }
        self.records.push(AggregatorRecord {
            time_s: grant.granted_time.as_secs_f64(),
            p_ext_total_mw: self.p_ext_total_mw,
            headroom_total_mw: self.headroom_total_mw,
        });
        Ok(grant.granted_time + self.interval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shares_sum_exactly_even_with_awkward_totals() {
        for &total in &[0.1, 1.0 / 3.0, -0.7, 5.000000001] {
            for n in 1..=7 {
                let shares = AggregatorFederate::equal_shares(total, n);
                let sum: f64 = shares.iter().sum();
                assert_eq!(sum, total, "n={n} total={total}");
            }
        }
    }
}
