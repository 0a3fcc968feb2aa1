//! Result emission: CSV series, plot data, and a summary table written to
//! the scenario's output directory.
//!
//! Every float is formatted with Rust's shortest round-trip notation, so
//! statistics recomputed from the emitted files match the in-memory values
//! exactly and identical runs produce byte-identical files. Wall-clock
//! timing goes only to `run_info.txt`, keeping every other file
//! deterministic.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::results::{RunResults, SummaryStats};
use super::ScenarioError;

/// Number of bins in the frequency histogram plot data.
const HISTOGRAM_BINS: usize = 20;

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), ScenarioError> {
    let path = dir.join(name);
    fs::write(&path, content)
        .map_err(|e| ScenarioError::Io(format!("writing {}: {e}", path.display())))
}

fn frequency_csv(results: &RunResults) -> String {
    let mut out = String::from("t_s,freq_hz\n");
    for (t, f) in results
        .transmission
        .time_s
        .iter()
        .zip(&results.transmission.freq_hz)
    {
        let _ = writeln!(out, "{t},{f}");
    }
    out
}

fn ace_csv(results: &RunResults) -> String {
    let mut out = String::from("t_s,f_hz,ace_mw,signal_mw\n");
    for r in &results.agc {
        let _ = writeln!(out, "{},{},{},{}", r.time_s, r.f_hz, r.ace_mw, r.signal_mw);
    }
    out
}

fn der_csv(results: &RunResults, idx: usize) -> String {
    let trace = &results.transmission.der[idx];
    let mut out = String::from("t_s,p_out_mw,p_drp_mw,p_ext_mw,p_mppt_mw,vsm_limit_mw\n");
    for (k, t) in results.transmission.time_s.iter().enumerate() {
        let _ = writeln!(
            out,
            "{t},{},{},{},{},{}",
            trace.p_out_mw[k],
            trace.p_drp_mw[k],
            trace.p_ext_mw[k],
            trace.p_mppt_mw[k],
            trace.licensed_mw[k],
        );
    }
    out
}

fn voltage_csv(series: &crate::distribution::FeederSeries) -> String {
    let mut out = String::from("t_s,v_mean_pu,v_std_pu,v_min_pu,v_max_pu\n");
    for r in &series.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.time.as_secs_f64(),
            r.v_mean_pu,
            r.v_std_pu,
            r.v_min_pu,
            r.v_max_pu,
        );
    }
    out
}

fn substation_csv(series: &crate::distribution::FeederSeries) -> String {
    let mut out = String::from("t_s,p_meter_mw,q_meter_mvar,p_gross_mw,q_gross_mvar,load_multiplier\n");
    for r in &series.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.time.as_secs_f64(),
            r.s_meter_mva.re,
            r.s_meter_mva.im,
            r.s_gross_mva.re,
            r.s_gross_mva.im,
            r.load_multiplier,
        );
    }
    out
}

fn headroom_csv(records: &[crate::headroom::HeadroomRecord]) -> String {
    let mut out = String::from("t_s,headroom_mw,feasible\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.time_s, r.headroom_mw, r.feasible);
    }
    out
}

fn histogram_csv(freq_hz: &[f64]) -> String {
    let mut out = String::from("bin_lo_hz,bin_hi_hz,count\n");
    if freq_hz.is_empty() {
        return out;
    }
    let min = freq_hz.iter().copied().fold(f64::INFINITY, f64::min);
    let max = freq_hz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max - min < 1e-12 {
        let _ = writeln!(out, "{min},{max},{}", freq_hz.len());
        return out;
    }
    let width = (max - min) / HISTOGRAM_BINS as f64;
    let mut counts = [0usize; HISTOGRAM_BINS];
    for &f in freq_hz {
        let idx = (((f - min) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[idx] += 1;
    }
    for (i, count) in counts.iter().enumerate() {
        let lo = min + i as f64 * width;
        let hi = min + (i + 1) as f64 * width;
        let _ = writeln!(out, "{lo},{hi},{count}");
    }
    out
}

fn events_csv(results: &RunResults) -> String {
    let mut out = String::from("t_s,event\n");
    for (t, what) in &results.events {
        let _ = writeln!(out, "{t},{what}");
    }
    out
}

fn stats_row(label: &str, s: &SummaryStats) -> String {
    format!(
        "{label:<14} mean={} std={} min={} max={}\n",
        s.mean, s.std, s.min, s.max
    )
}

fn summary_text(results: &RunResults) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", results.scenario_name);
    let _ = writeln!(out, "seed: {}", results.seed);
    let _ = writeln!(out, "stop_time_s: {}", results.stop_time_s);
    out.push('\n');
    out.push_str(&stats_row("frequency_hz", &results.freq_stats));
    out.push_str(&stats_row("ace_mw", &results.ace_stats));
    for (name, series) in &results.feeders {
        let _ = writeln!(
            out,
            "feeder {name}: mean_meter_mw={} voltage_violations={}",
            series.mean_meter_mw(),
            series.violation_count(),
        );
    }
    out
}

fn run_info_text(results: &RunResults) -> String {
    format!(
        "scenario: {}\nseed: {}\nstop_time_s: {}\nwall_clock_s: {:.3}\n",
        results.scenario_name, results.seed, results.stop_time_s, results.wall_clock_s
    )
}

/// Writes every result file into `dir`, creating it if needed.
///
/// Emitted files: `frequency.csv`, `ace.csv`, one `der_<name>.csv` per
/// hosted DER, `voltage_<feeder>.csv` and `substation_<feeder>.csv` per
/// feeder, `headroom_<feeder>.csv` per DER-hosting feeder,
/// `freq_histogram.csv`, `events.csv`, `summary.txt`, `run_info.txt`, and
/// `federation_log.txt`.
pub fn emit_outputs(results: &RunResults, dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir)
        .map_err(|e| ScenarioError::Io(format!("creating {}: {e}", dir.display())))?;

    write_file(dir, "frequency.csv", &frequency_csv(results))?;
    write_file(dir, "ace.csv", &ace_csv(results))?;
    for (idx, trace) in results.transmission.der.iter().enumerate() {
        write_file(dir, &format!("der_{}.csv", trace.name), &der_csv(results, idx))?;
    }
    for (name, series) in &results.feeders {
        write_file(dir, &format!("voltage_{name}.csv"), &voltage_csv(series))?;
        write_file(dir, &format!("substation_{name}.csv"), &substation_csv(series))?;
    }
    for (name, records) in &results.headroom {
        write_file(dir, &format!("headroom_{name}.csv"), &headroom_csv(records))?;
    }
    write_file(
        dir,
        "freq_histogram.csv",
        &histogram_csv(&results.transmission.freq_hz),
    )?;
    write_file(dir, "events.csv", &events_csv(results))?;
    write_file(dir, "summary.txt", &summary_text(results))?;
    write_file(dir, "run_info.txt", &run_info_text(results))?;
    write_file(dir, "federation_log.txt", &results.log.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cosim::FederationLog;
    use crate::transmission::TransmissionSeries;

    fn synthetic_results() -> RunResults {
        let transmission = TransmissionSeries {
            time_s: vec![0.0, 0.1, 0.2],
            freq_hz: vec![60.0, 59.987_654_321, 60.000_000_2],
            der: Vec::new(),
        };
        let freq_stats = SummaryStats::from_series(&transmission.freq_hz);
        RunResults {
            scenario_name: "synthetic".into(),
            seed: 1,
            stop_time_s: 0.2,
            transmission,
            agc: Vec::new(),
            feeders: Vec::new(),
            headroom: Vec::new(),
            aggregators: Vec::new(),
            events: vec![(0.1, "setpoint_change gen=g1 delta_mw=-10".into())],
            log: FederationLog::default(),
            wall_clock_s: 0.01,
            freq_stats,
            ace_stats: SummaryStats::from_series(&[]),
        }
    }

    #[test]
    fn frequency_file_has_contract_header() {
        let text = frequency_csv(&synthetic_results());
        assert!(text.starts_with("t_s,freq_hz\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn stats_recomputed_from_csv_match_exactly() {
        let results = synthetic_results();
        let text = frequency_csv(&results);
        let parsed: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        let recomputed = SummaryStats::from_series(&parsed);
        assert_eq!(recomputed, results.freq_stats);
    }

    #[test]
    fn emit_writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(&synthetic_results(), dir.path()).unwrap();
        for name in [
            "frequency.csv",
            "ace.csv",
            "freq_histogram.csv",
            "events.csv",
            "summary.txt",
            "run_info.txt",
            "federation_log.txt",
        ] {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }
    }

    #[test]
    fn histogram_covers_every_sample() {
        let freq: Vec<f64> = (0..100).map(|k| 60.0 + (k as f64) * 1e-4).collect();
        let text = histogram_csv(&freq);
        let total: usize = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 100);
    }

    #[test]
    fn constant_series_collapses_to_one_bin() {
        let text = histogram_csv(&[60.0; 7]);
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().ends_with(",7"));
    }
}
