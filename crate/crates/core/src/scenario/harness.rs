//! Federation assembly and execution.
//!
//! `build` turns a validated scenario into live federates. The crucial part
//! is the initialization handshake: the feeder solutions and the
//! transmission power flow are iterated to a common fixed point before the
//! dynamic model is assembled, so a scenario without disturbances starts at
//! equilibrium and stays there. `run` registers the federates in a fixed
//! order (transmission, feeders, AGC, headroom, aggregators), executes the
//! federation, and collects every recorded series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use super::config::Scenario;
use super::noise::load_multiplier_rows;
use super::results::{RunResults, SummaryStats};
use super::ScenarioError;
use crate::agc::{AgcFederate, AgcParams, ParticipationTable};
use crate::cosim::{run_federation, Federate, FederationConfig, LinkQuality, SimTime};
use crate::der::{AggregatorFederate, DerParams, DerUnit};
use crate::distribution::{
    aggregate_positive_sequence, balanced_three_phase, solve_feeder, DerSchedule, FeederFederate,
    FeederInputs, FeederNetwork, PhaseMask,
};
use crate::headroom::HeadroomFederate;
use crate::transmission::{solve_power_flow, Grid, GridModel, TransmissionFederate};
use crate::Cplx;

/// Maximum fixed-point rounds for the initialization handshake.
const HANDSHAKE_ROUNDS: usize = 50;
/// Boundary-voltage change below which the handshake stops early, pu.
const HANDSHAKE_TOL: f64 = 1e-12;
/// Largest residual accepted as converged after all rounds, pu.
const HANDSHAKE_ACCEPT: f64 = 1e-9;

/// Command-line adjustments applied on top of the scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    /// Replaces the federation seed (also mixed into the load-noise
    /// streams so a new seed draws a new noise realization).
    pub seed: Option<u64>,
    /// Disables AGC dispatch while keeping the federation wiring, so the
    /// same scenario can be compared with and without secondary control.
    pub no_agc: bool,
    pub stop_time_s: Option<f64>,
}

/// Assembled federation, ready to execute.
struct Setup {
    config: FederationConfig,
    stop: SimTime,
    stop_time_s: f64,
    transmission: TransmissionFederate,
    feeders: Vec<FeederFederate>,
    feeder_names: Vec<String>,
    agc: AgcFederate,
    headrooms: Vec<HeadroomFederate>,
    /// Instance names of the DER-hosting feeders, parallel to `headrooms`
    /// and `aggregators`.
    der_feeder_names: Vec<String>,
    aggregators: Vec<AggregatorFederate>,
    events: Vec<(f64, String)>,
    summary: String,
}

fn build(scenario: &Scenario, overrides: &RunOverrides) -> Result<Setup, ScenarioError> {
    let seed = overrides.seed.unwrap_or(scenario.federation.seed);
    let stop_time_s = overrides.stop_time_s.unwrap_or(scenario.stop_time_s);
    if !stop_time_s.is_finite() || stop_time_s <= 0.0 {
        return Err(ScenarioError::Validation(
            "stop time override must be positive".into(),
        ));
    }
    let cad = &scenario.cadences;
    let grid = Grid::from_path(&scenario.grid_file)?;
    let gen_info: Vec<(String, f64)> = grid.gens.iter().map(|g| (g.name.clone(), g.beta)).collect();
    let native_mw = grid.total_native_load_mw();

    // Feeder networks under their instance names, DER nodes registered.
    let mut nets: Vec<FeederNetwork> = Vec::new();
    for binding in &scenario.feeders {
        let mut net = FeederNetwork::from_path(&scenario.base_dir.join(&binding.file))?;
        if let Some(name) = &binding.name {
            net.name = name.clone();
        }
        for der in &binding.ders {
            let mask = PhaseMask::parse(&der.phases)
                .map_err(|e| ScenarioError::Validation(format!("DER {:?}: {e}", der.name)))?;
            net.add_der(&der.name, &der.node, mask)?;
        }
        nets.push(net);
    }
    let feeder_names: Vec<String> = nets.iter().map(|n| n.name.clone()).collect();
    let bus_names: Vec<String> = scenario.feeders.iter().map(|b| b.bus.clone()).collect();

    // Dynamic-side DER units; their t = 0 output feeds the handshake.
    let mut units: Vec<Vec<DerUnit>> = Vec::new();
    for binding in &scenario.feeders {
        let mut list = Vec::new();
        for der in &binding.ders {
            let mut params = DerParams::new(&der.name, der.p_ref_mw, der.p_caps_mw);
            params.d_droop = der.d_droop;
            params.deadband_hz = der.deadband_hz;
            params.tg_s = der.tg_s;
            list.push(DerUnit::new(params, der.mppt_series(&scenario.base_dir)?)?);
        }
        units.push(list);
    }

    // Load multiplier rows, one per exchange grant including t = 0. The
    // override seed is mixed in so a reseeded run draws fresh noise.
    let td = SimTime::from_secs_f64(cad.td_exchange_s);
    let n_exchanges = (SimTime::from_secs_f64(stop_time_s).as_micros() / td.as_micros()) as usize + 1;
    let rows: Vec<Vec<Vec<f64>>> = nets
        .iter()
        .map(|net| match &scenario.load_noise {
            Some(noise) if noise.std > 0.0 => load_multiplier_rows(
                noise.seed ^ seed,
                &net.name,
                net.loads.len(),
                noise.std,
                n_exchanges,
            ),
            _ => Vec::new(),
        })
        .collect();

    // Phasor-side scheduled injections at t = 0 (external setpoint zero).
    let phasor_p: Vec<BTreeMap<String, f64>> = scenario
        .feeders
        .iter()
        .map(|b| {
            b.ders
                .iter()
                .map(|d| (d.name.clone(), d.p_ref_mw.clamp(0.0, d.p_caps_mw)))
                .collect()
        })
        .collect();

    // Initialization handshake: feeders are solved at the current boundary
    // voltages, the power flow is solved at the resulting net boundary
    // loads (gross minus dynamic-side DER output), and the boundary
    // voltages are refreshed, until the voltages stop moving.
    let mut v_pos = vec![Cplx::new(1.0, 0.0); nets.len()];
    let mut gross = vec![Cplx::new(0.0, 0.0); nets.len()];
    let mut pf = None;
    let mut residual = f64::INFINITY;
    let mut rounds = 0;
    for round in 1..=HANDSHAKE_ROUNDS {
        rounds = round;
        let mut boundary_net = BTreeMap::new();
        for (i, net) in nets.iter().enumerate() {
            let row0: &[f64] = rows[i].first().map(Vec::as_slice).unwrap_or(&[]);
            let inputs = FeederInputs {
                v_sub: balanced_three_phase(v_pos[i]),
                der_p_mw: &phasor_p[i],
                load_scale: row0,
            };
            let sol = solve_feeder(net, &inputs)?;
            gross[i] = 3.0 * aggregate_positive_sequence(sol.s_boundary_gross());
            let der0: f64 = units[i].iter().map(|u| u.p_out_mw).sum();
            boundary_net.insert(bus_names[i].clone(), gross[i] - Cplx::new(der0, 0.0));
        }
        let sol = solve_power_flow(&grid, &boundary_net)?;
        residual = 0.0;
        for (i, bus) in bus_names.iter().enumerate() {
            let k = grid.bus_index(bus).expect("validated at load");
            residual = residual.max((sol.v_rect[k] - v_pos[i]).norm());
            v_pos[i] = sol.v_rect[k];
        }
        pf = Some(sol);
        if residual <= HANDSHAKE_TOL {
            break;
        }
    }
    let pf = pf.expect("the handshake runs at least one round");
    if nets.is_empty() {
        residual = 0.0;
    }
    log::debug!(
        "handshake for {}: {rounds} rounds, residual {residual:.3e} pu",
        scenario.name
    );
    if residual > HANDSHAKE_ACCEPT {
        return Err(ScenarioError::HandshakeDiverged {
            iterations: rounds,
            residual,
        });
    }

    let boundary_gross: BTreeMap<String, Cplx> = bus_names
        .iter()
        .cloned()
        .zip(gross.iter().copied())
        .collect();
    let mut der0_by_bus: BTreeMap<String, f64> = BTreeMap::new();
    for (i, list) in units.iter().enumerate() {
        if !list.is_empty() {
            *der0_by_bus.entry(bus_names[i].clone()).or_insert(0.0) +=
                list.iter().map(|u| u.p_out_mw).sum::<f64>();
        }
    }
    let (model, x0, y0) = GridModel::initialize(grid, &pf, &boundary_gross, &der0_by_bus)?;
    let s_base = model.s_base_mva();

    // AGC participation: generators with a factor, then every DER-hosting
    // feeder's aggregator (zero factors allowed; they keep the dispatch
    // topics alive). With dispatch disabled the factors only shape the
    // wiring, so an off-nominal sum is renormalized instead of rejected.
    let enabled = scenario.agc.enabled && !overrides.no_agc;
    let mut entries: Vec<(String, f64)> = gen_info
        .iter()
        .filter(|(_, beta)| *beta > 0.0)
        .cloned()
        .collect();
    for (i, binding) in scenario.feeders.iter().enumerate() {
        if !binding.ders.is_empty() {
            entries.push((format!("agg_{}", feeder_names[i]), binding.agc_beta));
        }
    }
    if !enabled {
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if entries.is_empty() {
            entries.push((gen_info[0].0.clone(), 1.0));
        } else if (total - 1.0).abs() > 1e-9 {
            if total > 0.0 {
                for e in &mut entries {
                    e.1 /= total;
                }
                let last = entries.len() - 1;
                let partial: f64 = entries[..last].iter().map(|e| e.1).sum();
                entries[last].1 = (1.0 - partial).max(0.0);
            } else {
                for e in &mut entries {
                    e.1 = 0.0;
                }
                entries[0].1 = 1.0;
            }
        }
    }

    let area_peak_mw = native_mw + gross.iter().map(|s| s.re).sum::<f64>();
    let bias = scenario
        .agc
        .b_mw_per_tenth_hz
        .unwrap_or_else(|| (0.01 * area_peak_mw).max(1e-3));
    let margin_gens: f64 = model
        .gens()
        .iter()
        .filter(|g| entries.iter().any(|(n, beta)| n == &g.name && *beta > 0.0))
        .map(|g| ((g.p_max_pu - g.pref_pu) * s_base).max(0.0))
        .sum();
    let margin_ders: f64 = scenario
        .feeders
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let unit = format!("agg_{}", feeder_names[*i]);
            entries.iter().any(|(n, beta)| n == &unit && *beta > 0.0)
        })
        .map(|(_, b)| {
            b.ders
                .iter()
                .map(|d| (d.p_caps_mw - d.p_ref_mw).max(0.0))
                .sum::<f64>()
        })
        .sum();
    let margin = margin_gens + margin_ders;
    let agc_params = AgcParams {
        b_mw_per_tenth_hz: bias,
        deadband_hz: scenario.agc.deadband_hz,
        kp: scenario.agc.kp,
        ki: scenario.agc.ki,
        integrator_limit_mw: scenario.agc.integrator_limit_mw.unwrap_or(if margin > 0.0 {
            margin
        } else {
            f64::INFINITY
        }),
        signal_period_s: cad.agc_period_s,
        measurement_period_s: cad.meas_out_s,
        ..AgcParams::default()
    };
    let mut agc = AgcFederate::new(agc_params, ParticipationTable::new(entries.clone())?)?;
    agc.set_enabled(enabled);

    let mut transmission = TransmissionFederate::new(model, x0, y0);
    transmission.set_timing(cad.internal_dt_s, cad.meas_out_s)?;
    for bus in &bus_names {
        transmission.attach_feeder(bus)?;
    }
    for (i, list) in units.into_iter().enumerate() {
        for unit in list {
            transmission.attach_der(&bus_names[i], unit)?;
        }
    }
    for (name, _) in &entries {
        if gen_info.iter().any(|(g, _)| g == name) {
            transmission.subscribe_agc(name)?;
        }
    }
    let mut events: Vec<(f64, String)> = Vec::new();
    for event in &scenario.events {
        transmission.add_event(event.to_grid_event());
        events.push((event.time_s(), event.describe()));
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut feeders = Vec::new();
    let mut headrooms = Vec::new();
    let mut der_feeder_names = Vec::new();
    let mut aggregators = Vec::new();
    for (i, net) in nets.into_iter().enumerate() {
        let binding = &scenario.feeders[i];
        if !binding.ders.is_empty() {
            let p_base: Vec<f64> = net.ders.iter().map(|d| phasor_p[i][&d.id]).collect();
            let caps: Vec<f64> = net
                .ders
                .iter()
                .map(|d| {
                    binding
                        .ders
                        .iter()
                        .find(|c| c.name == d.id)
                        .expect("DER registered from this binding")
                        .p_caps_mw
                })
                .collect();
            let mut headroom = HeadroomFederate::new(
                net.clone(),
                balanced_three_phase(v_pos[i]),
                p_base,
                caps,
            )?;
            headroom.set_interval(SimTime::from_secs_f64(cad.vsm_refresh_s));
            headrooms.push(headroom);
            der_feeder_names.push(net.name.clone());
            let der_ids: Vec<String> = net.ders.iter().map(|d| d.id.clone()).collect();
            aggregators.push(AggregatorFederate::new(
                format!("agg_{}", net.name),
                net.name.clone(),
                der_ids,
            ));
        }
        let mut fed = FeederFederate::new(net, &binding.bus);
        fed.set_interval(td);
        fed.set_initial_voltage(v_pos[i]);
        for der in &binding.ders {
            fed.set_der_schedule(
                &der.name,
                DerSchedule {
                    p_ref_mw: der.p_ref_mw,
                    p_caps_mw: der.p_caps_mw,
                },
            );
        }
        if !rows[i].is_empty() {
            fed.set_load_rows(rows[i].clone());
        }
        feeders.push(fed);
    }

    let mut links = BTreeMap::new();
    for link in &scenario.federation.links {
        links.insert(
            link.topic.clone(),
            LinkQuality {
                latency: SimTime::from_secs_f64(link.latency_s),
                drop_probability: link.drop_probability,
            },
        );
    }
    let config = FederationConfig {
        seed,
        links,
        inclusive_delivery: scenario.federation.inclusive_delivery,
    };

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "scenario {}: {} s, seed {seed}, agc {}",
        scenario.name,
        stop_time_s,
        if enabled { "enabled" } else { "disabled" },
    );
    let _ = writeln!(
        summary,
        "transmission: {} buses, {} generators, {} MW native load",
        transmission.model().grid().buses.len(),
        transmission.model().gens().len(),
        native_mw,
    );
    for (i, fed) in feeders.iter().enumerate() {
        let net = fed.network();
        let _ = writeln!(
            summary,
            "feeder {} at bus {}: {} nodes, {} MW load, {} DER, boundary {:.1} + j{:.1} MVA",
            feeder_names[i],
            bus_names[i],
            net.nodes.len(),
            net.total_load_mw(),
            net.ders.len(),
            gross[i].re,
            gross[i].im,
        );
    }
    let _ = writeln!(
        summary,
        "handshake: {rounds} rounds, boundary voltage residual {residual:.2e} pu",
    );
    let _ = writeln!(
        summary,
        "agc: bias {bias} MW per 0.1 Hz, participation {}",
        entries
            .iter()
            .map(|(n, b)| format!("{n}={b}"))
            .collect::<Vec<_>>()
            .join(" "),
    );

    Ok(Setup {
        config,
        stop: SimTime::from_secs_f64(stop_time_s),
        stop_time_s,
        transmission,
        feeders,
        feeder_names,
        agc,
        headrooms,
        der_feeder_names,
        aggregators,
        events,
        summary,
    })
}

/// Builds the federation and checks the initialization handshake without
/// running it, returning a human-readable description.
pub fn validate(scenario: &Scenario) -> Result<String, ScenarioError> {
    Ok(build(scenario, &RunOverrides::default())?.summary)
}

/// Executes a scenario and collects every recorded series.
pub fn run(scenario: &Scenario, overrides: &RunOverrides) -> Result<RunResults, ScenarioError> {
    let mut setup = build(scenario, overrides)?;
    let config = setup.config.clone();
    let stop = setup.stop;

    let started = Instant::now();
    let log = {
        let mut feds: Vec<&mut dyn Federate> = Vec::new();
        feds.push(&mut setup.transmission);
        for fed in &mut setup.feeders {
            feds.push(fed);
        }
        feds.push(&mut setup.agc);
        for fed in &mut setup.headrooms {
            feds.push(fed);
        }
        for fed in &mut setup.aggregators {
            feds.push(fed);
        }
        run_federation(config, feds, stop)?
    };
    let wall_clock_s = started.elapsed().as_secs_f64();
    log::info!(
        "scenario {} ran {} simulated seconds in {wall_clock_s:.3} s",
        scenario.name,
        setup.stop_time_s
    );

    let transmission = setup.transmission.into_series();
    let agc = setup.agc.into_records();
    let feeders: Vec<_> = setup
        .feeder_names
        .into_iter()
        .zip(setup.feeders.into_iter().map(FeederFederate::into_series))
        .collect();
    let headroom: Vec<_> = setup
        .der_feeder_names
        .iter()
        .cloned()
        .zip(setup.headrooms.iter().map(|h| h.records().to_vec()))
        .collect();
    let aggregators: Vec<_> = setup
        .der_feeder_names
        .into_iter()
        .zip(setup.aggregators.iter().map(|a| a.records().to_vec()))
        .collect();

    let freq_stats = SummaryStats::from_series(&transmission.freq_hz);
    let ace: Vec<f64> = agc.iter().map(|r| r.ace_mw).collect();
    let ace_stats = SummaryStats::from_series(&ace);

    Ok(RunResults {
        scenario_name: scenario.name.clone(),
        seed: setup.config.seed,
        stop_time_s: setup.stop_time_s,
        transmission,
        agc,
        feeders,
        headroom,
        aggregators,
        events: setup.events,
        log,
        wall_clock_s,
        freq_stats,
        ace_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;
    use std::fs;
    use std::path::PathBuf;

    const GRID: &str = r#"
name = "pair"
s_base_mva = 100.0
load_model = "constant_power"

[[bus]]
name = "b1"

[[bus]]
name = "b2"

[[branch]]
from = "b1"
to = "b2"
r_pu = 0.0
x_pu = 0.1

[[generator]]
name = "g1"
bus = "b1"
h_s = 4.0
d_pu = 1.0
xd_pu = 0.3
r_droop = 0.05
tg_s = 0.5
p_min_mw = 0.0
p_max_mw = 80.0
p_mw = 0.0
v_set = 1.0
slack = true
beta = 0.8

[[load]]
bus = "b1"
p_mw = 5.0
q_mvar = 1.0

[[boundary]]
bus = "b2"
"#;

    const FEEDER: &str = r#"
name = "lateral"
v_base_ln_v = 2400.0
s_base_mva = 1.0
substation = "sub"

[[node]]
name = "sub"
phases = "abc"

[[node]]
name = "n2"
phases = "abc"

[[line_config]]
name = "oh"
r_self_ohm_per_km = 0.4
x_self_ohm_per_km = 0.3
r_mutual_ohm_per_km = 0.05
x_mutual_ohm_per_km = 0.1

[[branch]]
from = "sub"
to = "n2"
length_km = 1.0
config = "oh"

[[load]]
node = "n2"
phases = "abc"
kw = [100.0, 100.0, 100.0]
kvar = [30.0, 30.0, 30.0]
"#;

    fn write_scenario(extra: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("grid.toml"), GRID).unwrap();
        fs::write(dir.path().join("feeder.toml"), FEEDER).unwrap();
        let scenario = format!(
            r#"
name = "harness-test"
stop_time_s = 10.0

[grid]
file = "grid.toml"

[[feeder]]
file = "feeder.toml"
bus = "b2"
agc_beta = 0.2

[[feeder.der]]
name = "der1"
node = "n2"
p_ref_mw = 0.1
p_caps_mw = 0.3
{extra}
"#
        );
        let path = dir.path().join("scenario.toml");
        fs::write(&path, scenario).unwrap();
        (dir, path)
    }

    #[test]
    fn undisturbed_run_stays_at_nominal_frequency() {
        let (_dir, path) = write_scenario("");
        let scenario = load_scenario(&path).unwrap();
        let results = run(&scenario, &RunOverrides::default()).unwrap();
        for (t, f) in results
            .transmission
            .time_s
            .iter()
            .zip(&results.transmission.freq_hz)
        {
            assert!(
                (f - 60.0).abs() <= 1e-6,
                "frequency {f} at t = {t} departs from nominal"
            );
        }
        assert!(results.transmission.envelope_ok());
        let (_, series) = &results.feeders[0];
        assert!(!series.records.is_empty());
        assert_eq!(series.violation_count(), 0);
        assert!(!results.headroom[0].1.is_empty());
    }

    #[test]
    fn identical_runs_reproduce_bit_identical_series() {
        let (_dir, path) = write_scenario(
            "\n[load_noise]\nstd = 0.02\nseed = 7\n",
        );
        let scenario = load_scenario(&path).unwrap();
        let a = run(&scenario, &RunOverrides::default()).unwrap();
        let b = run(&scenario, &RunOverrides::default()).unwrap();
        assert_eq!(a.transmission.freq_hz, b.transmission.freq_hz);
        let va: Vec<f64> = a.feeders[0].1.records.iter().map(|r| r.v_mean_pu).collect();
        let vb: Vec<f64> = b.feeders[0].1.records.iter().map(|r| r.v_mean_pu).collect();
        assert_eq!(va, vb);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn reseeding_changes_the_noise_realization() {
        let (_dir, path) = write_scenario(
            "\n[load_noise]\nstd = 0.02\nseed = 7\n",
        );
        let scenario = load_scenario(&path).unwrap();
        let a = run(&scenario, &RunOverrides::default()).unwrap();
        let b = run(
            &scenario,
            &RunOverrides {
                seed: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        let va: Vec<f64> = a.feeders[0].1.records.iter().map(|r| r.v_mean_pu).collect();
        let vb: Vec<f64> = b.feeders[0].1.records.iter().map(|r| r.v_mean_pu).collect();
        assert_ne!(va, vb);
    }

    #[test]
    fn disabling_agc_zeroes_the_dispatch_but_keeps_the_wiring() {
        let (_dir, path) = write_scenario(
            "\n[[event]]\ntype = \"setpoint_change\"\ngen = \"g1\"\ndelta_mw = -2.0\ntime_s = 2.0\n",
        );
        let scenario = load_scenario(&path).unwrap();
        let results = run(
            &scenario,
            &RunOverrides {
                no_agc: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!results.agc.is_empty());
        assert!(results.agc.iter().all(|r| r.signal_mw == 0.0));
        // The disturbance still moves frequency, so the error is measured
        // even though nothing is dispatched.
        assert!(results.agc.iter().any(|r| r.ace_mw != 0.0));
        let with_agc = run(&scenario, &RunOverrides::default()).unwrap();
        assert!(with_agc.agc.iter().any(|r| r.signal_mw != 0.0));
    }

    #[test]
    fn validate_reports_the_assembled_federation() {
        let (_dir, path) = write_scenario("");
        let scenario = load_scenario(&path).unwrap();
        let summary = validate(&scenario).unwrap();
        assert!(summary.contains("lateral"));
        assert!(summary.contains("handshake"));
    }
}
