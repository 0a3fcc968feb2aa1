//! Collected outcome of a scenario run: every federate's recorded series,
//! the federation exchange log, and summary statistics.

use crate::agc::AgcRecord;
use crate::cosim::FederationLog;
use crate::der::AggregatorRecord;
use crate::distribution::FeederSeries;
use crate::headroom::HeadroomRecord;
use crate::transmission::TransmissionSeries;

/// Mean, population standard deviation, and extrema of a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    /// Computes the statistics of `values`; an empty series yields NaNs.
    pub fn from_series(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            mean,
            std: var.sqrt(),
            min,
            max,
        }
    }
}

/// Everything produced by one scenario run, ready for emission to disk or
/// inspection by tests.
#[derive(Debug)]
pub struct RunResults {
    pub scenario_name: String,
    pub seed: u64,
    pub stop_time_s: f64,
    /// Transmission trajectory including one trace per hosted DER.
    pub transmission: TransmissionSeries,
    /// AGC measurement/dispatch log (empty when AGC is absent).
    pub agc: Vec<AgcRecord>,
    /// One recorded series per feeder, keyed by instance name, in
    /// scenario order.
    pub feeders: Vec<(String, FeederSeries)>,
    /// Headroom grants per feeder that hosts DERs, in scenario order.
    pub headroom: Vec<(String, Vec<HeadroomRecord>)>,
    /// Aggregator dispatch logs per feeder with DERs, in scenario order.
    pub aggregators: Vec<(String, Vec<AggregatorRecord>)>,
    /// Applied disturbances as (time, description) pairs.
    pub events: Vec<(f64, String)>,
    /// Kernel exchange log for structural inspection.
    pub log: FederationLog,
    /// Wall-clock duration of the federation run, seconds.
    pub wall_clock_s: f64,
    pub freq_stats: SummaryStats,
    pub ace_stats: SummaryStats,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_match_hand_computation() {
        let s = SummaryStats::from_series(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        // Population variance of {1,2,3,4} is 1.25.
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_series_yields_nans() {
        let s = SummaryStats::from_series(&[]);
        assert!(s.mean.is_nan() && s.std.is_nan());
    }
}
