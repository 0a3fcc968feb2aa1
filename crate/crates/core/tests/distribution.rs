//! Feeder power-flow checks against closed-form and independently-coded
//! oracles, plus the feeder federate exchange behavior.

use std::collections::BTreeMap;

use tandem_core::cosim::{
    run_federation, CosimError, Federate, FederateDecl, FederationConfig, PublishContext, SimTime,
    TimeGrant, Value,
};
use tandem_core::distribution::{
    aggregate_positive_sequence, balanced_three_phase, check_limits, solve_feeder, DerSchedule,
    FeederFederate, FeederInputs, FeederNetwork, PhaseMask, ViolationKind,
};
use tandem_core::Cplx;

fn two_bus(r_ohm_km: f64, x_ohm_km: f64, kw: f64, kvar: f64) -> FeederNetwork {
    let text = format!(
        r#"
        name = "twobus"
        v_base_ln_v = 2400.0
        s_base_mva = 3.0
        substation = "sub"

        [[node]]
        name = "sub"
        phases = "abc"

        [[node]]
        name = "n1"
        phases = "abc"

        [[branch]]
        from = "sub"
        to = "n1"
        length_km = 1.0
        config = "c1"

        [[line_config]]
        name = "c1"
        r_self_ohm_per_km = {r_ohm_km}
        x_self_ohm_per_km = {x_ohm_km}

        [[load]]
        node = "n1"
        phases = "abc"
        kw = [{kw}, {kw}, {kw}]
        kvar = [{kvar}, {kvar}, {kvar}]
    "#
    );
    FeederNetwork::from_toml_str(&text).unwrap()
}

fn no_der() -> BTreeMap<String, f64> {
    BTreeMap::new()
}

/// Balanced two-bus constant-power load has a closed-form voltage: with
/// V_sub = 1 and per-phase quantities, V = |V|^2 + conj(z) s, whose real
/// part solves a quadratic in |V|^2 terms.
#[test]
fn two_bus_voltage_matches_closed_form() {
    let kw = 450.0;
    let kvar = 150.0;
    let net = two_bus(0.3, 0.6, kw, kvar);
    let z_base = net.impedance_base_ohm();
    let z = Cplx::new(0.3 / z_base, 0.6 / z_base);
    let s = Cplx::new(kw / 1000.0, kvar / 1000.0) / net.s_base_1ph_mva();

    // V = a + jb with b = x_eff from the imaginary part, then a from the
    // real-part quadratic a^2 - a + (b^2 + re(conj(z) s)) = 0.
    let zs = z.conj() * s;
    let b = zs.im;
    let c = b * b + zs.re;
    let a = 0.5 * (1.0 + (1.0 - 4.0 * c).sqrt());
    let expected = Cplx::new(a, b);

    let ders = no_der();
    let inputs = FeederInputs {
        v_sub: balanced_three_phase(Cplx::new(1.0, 0.0)),
        der_p_mw: &ders,
        load_scale: &[],
    };
    let sol = solve_feeder(&net, &inputs).unwrap();
    for p in 0..3 {
        // Rotate each phase back by the positive-sequence angle.
        let reference = inputs.v_sub[p];
        let normalized = sol.v[1][p] / reference;
        assert!(
            (normalized - expected).norm() < 1e-8,
            "phase {p}: got {normalized}, expected {expected}"
        );
    }
    assert!(!sol.used_fallback);

    // Meter power equals load plus ohmic loss computed from the oracle.
    let i = ((s / expected).conj()).norm();
    let loss = i * i * z.re * net.s_base_1ph_mva();
    let meter: f64 = sol.s_substation.iter().map(|s| s.re).sum();
    assert!((meter - 3.0 * (kw / 1000.0 + loss)).abs() < 1e-7);
}

#[test]
fn power_balance_holds_on_unbalanced_feeder() {
    let text = r#"
        name = "lateral"
        v_base_ln_v = 2400.0
        s_base_mva = 3.0
        substation = "sub"

        [[node]]
        name = "sub"
        phases = "abc"

        [[node]]
        name = "mid"
        phases = "abc"

        [[node]]
        name = "leaf"
        phases = "b"

        [[branch]]
        from = "sub"
        to = "mid"
        length_km = 1.5
        config = "main"

        [[branch]]
        from = "mid"
        to = "leaf"
        length_km = 0.8
        config = "main"

        [[line_config]]
        name = "main"
        r_self_ohm_per_km = 0.25
        x_self_ohm_per_km = 0.5
        r_mutual_ohm_per_km = 0.06
        x_mutual_ohm_per_km = 0.12

        [[load]]
        node = "mid"
        phases = "abc"
        kw = [120.0, 80.0, 160.0]
        kvar = [40.0, 20.0, 50.0]

        [[load]]
        node = "leaf"
        phases = "b"
        kw = [70.0]
        kvar = [15.0]
    "#;
    let mut net = FeederNetwork::from_toml_str(text).unwrap();
    net.add_der("pv1", "mid", PhaseMask::ABC).unwrap();
    let mut ders = BTreeMap::new();
    ders.insert("pv1".to_string(), 0.15);
    let inputs = FeederInputs {
        v_sub: balanced_three_phase(Cplx::new(1.0, 0.0)),
        der_p_mw: &ders,
        load_scale: &[],
    };
    let sol = solve_feeder(&net, &inputs).unwrap();
    // Absent phases carry no voltage or current.
    let leaf = net.node_index("leaf").unwrap();
    assert_eq!(sol.v[leaf][0], Cplx::new(0.0, 0.0));
    assert_eq!(sol.v[leaf][2], Cplx::new(0.0, 0.0));
    assert!(sol.v[leaf][1].norm() > 0.9);

    let residual = sol.power_balance_mva(&net, &inputs);
    let tol = 1e-6 * net.s_base_1ph_mva();
    for phase_residual in residual {
        assert!(
            phase_residual.norm() < tol,
            "imbalance {phase_residual} exceeds {tol}"
        );
    }
}

#[test]
fn doubling_loads_on_lossless_feeder_doubles_power_exactly() {
    let net = two_bus(0.0, 0.0, 300.0, 100.0);
    let ders = no_der();
    let base_inputs = FeederInputs {
        v_sub: balanced_three_phase(Cplx::new(1.0, 0.0)),
        der_p_mw: &ders,
        load_scale: &[],
    };
    let doubled_scale = [2.0];
    let doubled_inputs = FeederInputs {
        v_sub: balanced_three_phase(Cplx::new(1.0, 0.0)),
        der_p_mw: &ders,
        load_scale: &doubled_scale,
    };
    let s1 = solve_feeder(&net, &base_inputs).unwrap().s_substation;
    let s2 = solve_feeder(&net, &doubled_inputs).unwrap().s_substation;
    for p in 0..3 {
        assert_eq!(s2[p], s1[p] * 2.0);
    }
}

/// Independently coded single-phase ladder sweep used as the oracle for
/// the balanced-reduction property. Chain topology: node k+1 hangs off
/// node k through z[k] and draws s[k].
fn scalar_ladder(z: &[Cplx], s: &[Cplx], v_sub: Cplx) -> Vec<Cplx> {
    let n = z.len();
    let mut v = vec![v_sub; n + 1];
    for _ in 0..200 {
        let mut currents = vec![Cplx::new(0.0, 0.0); n];
        for k in (0..n).rev() {
            currents[k] = (s[k] / v[k + 1]).conj();
            if k + 1 < n {
                let downstream = currents[k + 1];
                currents[k] += downstream;
            }
        }
        let mut delta: f64 = 0.0;
        for k in 0..n {
            let v_new = v[k] - z[k] * currents[k];
            delta = delta.max((v_new - v[k + 1]).norm());
            v[k + 1] = v_new;
        }
        if delta <= 1e-12 {
            break;
        }
    }
    v
}

#[test]
fn balanced_feeder_reduces_to_single_phase_equivalent() {
    let text = r#"
        name = "chain"
        v_base_ln_v = 7200.0
        s_base_mva = 6.0
        substation = "sub"

        [[node]]
        name = "sub"
        phases = "abc"

        [[node]]
        name = "n1"
        phases = "abc"

        [[node]]
        name = "n2"
        phases = "abc"

        [[branch]]
        from = "sub"
        to = "n1"
        length_km = 2.0
        config = "c"

        [[branch]]
        from = "n1"
        to = "n2"
        length_km = 1.0
        config = "c"

        [[line_config]]
        name = "c"
        r_self_ohm_per_km = 0.3
        x_self_ohm_per_km = 0.7

        [[load]]
        node = "n1"
        phases = "abc"
        kw = [400.0, 400.0, 400.0]
        kvar = [120.0, 120.0, 120.0]

        [[load]]
        node = "n2"
        phases = "abc"
        kw = [250.0, 250.0, 250.0]
        kvar = [60.0, 60.0, 60.0]
    "#;
    let net = FeederNetwork::from_toml_str(text).unwrap();
    let ders = no_der();
    let inputs = FeederInputs {
        v_sub: balanced_three_phase(Cplx::new(1.0, 0.0)),
        der_p_mw: &ders,
        load_scale: &[],
    };
    let sol = solve_feeder(&net, &inputs).unwrap();

    // The scalar equivalent: same chain, one phase, per-phase powers.
    let base = net.s_base_1ph_mva();
    let z = vec![net.branches[0].z_pu[0][0], net.branches[1].z_pu[0][0]];
    let s = vec![
        Cplx::new(0.4, 0.12) / base,
        Cplx::new(0.25, 0.06) / base,
    ];
    let v_oracle = scalar_ladder(&z, &s, Cplx::new(1.0, 0.0));

    for (node, expected) in [(1usize, v_oracle[1]), (2, v_oracle[2])] {
        let got = sol.v[node][0];
        assert!(
            (got - expected).norm() < 1e-8,
            "node {node}: got {got}, oracle {expected}"
        );
    }
    // Positive-sequence aggregate equals the scalar meter power.
    let meter_pos = aggregate_positive_sequence(sol.s_substation);
    let i_sub = ((s[0] / v_oracle[1]).conj()) + ((s[1] / v_oracle[2]).conj());
    let scalar_meter = Cplx::new(1.0, 0.0) * i_sub.conj() * base;
    assert!((meter_pos - scalar_meter).norm() < 1e-8);
}

#[test]
fn der_injection_offsets_meter_power_by_delta_minus_loss_change() {
    // DER exports through the feeder (reverse flow), so pushing harder
    // increases branch current and thus losses.
    let mut net = two_bus(0.3, 0.6, 60.0, 20.0);
    net.add_der("pv", "n1", PhaseMask::ABC).unwrap();

    let solve_at = |p_mw: f64| {
        let mut ders = BTreeMap::new();
        ders.insert("pv".to_string(), p_mw);
        let inputs = FeederInputs {
            v_sub: balanced_three_phase(Cplx::new(1.0, 0.0)),
            der_p_mw: &ders,
            load_scale: &[],
        };
        let sol = solve_feeder(&net, &inputs).unwrap();
        let meter: f64 = sol.s_substation.iter().map(|s| s.re).sum();
        let loss: f64 = (0..3)
            .map(|p| {
                let dv = sol.v[0][p] - sol.v[1][p];
                (dv * sol.branch_i[0][p].conj()).re * net.s_base_1ph_mva()
            })
            .sum();
        (meter, loss)
    };

    let delta = 0.2;
    let (meter_lo, loss_lo) = solve_at(0.8);
    let (meter_hi, loss_hi) = solve_at(0.8 + delta);
    let loss_change = loss_hi - loss_lo;
    assert!(loss_change >= 0.0, "reverse flow must not reduce losses");
    assert!(
        (meter_hi - (meter_lo - delta + loss_change)).abs() < 1e-6,
        "meter change must equal the injection minus marginal losses"
    );
}

#[test]
fn parallel_branch_mesh_agrees_with_radial_equivalent() {
    let radial = two_bus(0.3, 0.6, 450.0, 150.0);

    // Same electrical network expressed as two parallel branches of twice
    // the impedance; the loop forces the admittance-matrix path.
    let meshed_text = r#"
        name = "meshed"
        v_base_ln_v = 2400.0
        s_base_mva = 3.0
        substation = "sub"

        [[node]]
        name = "sub"
        phases = "abc"

        [[node]]
        name = "n1"
        phases = "abc"

        [[branch]]
        from = "sub"
        to = "n1"
        length_km = 2.0
        config = "c1"

        [[branch]]
        from = "sub"
        to = "n1"
        length_km = 2.0
        config = "c1"

        [[line_config]]
        name = "c1"
        r_self_ohm_per_km = 0.3
        x_self_ohm_per_km = 0.6

        [[load]]
        node = "n1"
        phases = "abc"
        kw = [450.0, 450.0, 450.0]
        kvar = [150.0, 150.0, 150.0]
    "#;
    let meshed = FeederNetwork::from_toml_str(meshed_text).unwrap();
    assert!(!meshed.is_radial());

    let ders = no_der();
    let inputs = FeederInputs {
        v_sub: balanced_three_phase(Cplx::new(1.0, 0.0)),
        der_p_mw: &ders,
        load_scale: &[],
    };
    let sol_radial = solve_feeder(&radial, &inputs).unwrap();
    let sol_meshed = solve_feeder(&meshed, &inputs).unwrap();
    assert!(sol_meshed.used_fallback);
    for p in 0..3 {
        assert!((sol_radial.v[1][p] - sol_meshed.v[1][p]).norm() < 1e-7);
        assert!((sol_radial.s_substation[p] - sol_meshed.s_substation[p]).norm() < 1e-6);
    }
}

#[test]
fn infeasible_loading_reports_non_convergence() {
    // Load far beyond the feeder's maximum transfer: no solution exists.
    let net = two_bus(0.3, 0.6, 4000.0, 1500.0);
    let ders = no_der();
    let inputs = FeederInputs {
        v_sub: balanced_three_phase(Cplx::new(1.0, 0.0)),
        der_p_mw: &ders,
        load_scale: &[],
    };
    let err = solve_feeder(&net, &inputs).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("twobus"), "error names the feeder: {text}");
}

#[test]
fn limit_checks_flag_voltage_and_thermal_violations() {
    let net = two_bus(0.3, 0.6, 450.0, 150.0);
    let ders = no_der();
    let inputs = FeederInputs {
        v_sub: balanced_three_phase(Cplx::new(1.0, 0.0)),
        der_p_mw: &ders,
        load_scale: &[],
    };
    let sol = solve_feeder(&net, &inputs).unwrap();

    // Wide limits: clean. The solved voltage sits near 0.95 pu here.
    assert!(check_limits(&net, &sol, 0.5, 1.5).is_empty());

    // Tighten the lower bound above the solved voltage.
    let undervolts = check_limits(&net, &sol, 0.99, 1.5);
    assert_eq!(undervolts.len(), 3);
    assert!(undervolts
        .iter()
        .all(|v| matches!(v.kind, ViolationKind::UnderVoltage)));

    // An ampacity below the actual current trips the thermal check.
    let mut tight = two_bus(0.3, 0.6, 450.0, 150.0);
    tight.branches[0].ampacity_a = Some(1.0);
    let sol_tight = solve_feeder(&tight, &inputs).unwrap();
    let thermal = check_limits(&tight, &sol_tight, 0.5, 1.5);
    assert_eq!(thermal.len(), 3);
    assert!(thermal
        .iter()
        .all(|v| matches!(v.kind, ViolationKind::Thermal)));
    assert!(thermal[0].magnitude > 1.0, "magnitude is in amperes");
}

/// Boundary-side stub that drives a feeder federate: publishes a fixed
/// substation voltage and a DER setpoint step, and records the boundary
/// power it receives back.
struct BoundaryStub {
    bus: String,
    der: String,
    received: Vec<(SimTime, Cplx)>,
}

impl Federate for BoundaryStub {
    fn declaration(&self) -> FederateDecl {
        FederateDecl::new("grid", SimTime::from_micros(1_000_000))
            .publishes(format!("boundary_voltage.{}", self.bus))
            .publishes(format!("der_setpoint.{}", self.der))
            .subscribes(format!("boundary_power.{}", self.bus))
    }

    fn on_grant(
        &mut self,
        ctx: &mut PublishContext<'_>,
        grant: &TimeGrant,
    ) -> Result<SimTime, CosimError> {
        let topic = format!("boundary_power.{}", self.bus);
        if let Some(message) = grant.latest(&topic) {
            if let Some(s) = message.value.as_complex() {
                self.received.push((grant.granted_time, s));
            }
        }
        ctx.publish(
            &format!("boundary_voltage.{}", self.bus),
            Value::Complex(Cplx::new(1.0, 0.0)),
        )?;
        // Step the external setpoint up after two seconds.
        let ext = if grant.granted_time.as_secs_f64() >= 2.0 {
            0.5
        } else {
            0.0
        };
        ctx.publish(&format!("der_setpoint.{}", self.der), Value::Scalar(ext))?;
        Ok(grant.granted_time + SimTime::from_micros(1_000_000))
    }
}

#[test]
fn feeder_federate_publishes_gross_boundary_power() {
    let mut net = two_bus(0.3, 0.6, 300.0, 100.0);
    net.add_der("pv", "n1", PhaseMask::ABC).unwrap();
    let mut feeder = FeederFederate::new(net, "bus4");
    feeder.set_der_schedule(
        "pv",
        DerSchedule {
            p_ref_mw: 0.4,
            p_caps_mw: 1.0,
        },
    );

    let mut stub = BoundaryStub {
        bus: "bus4".to_string(),
        der: "pv".to_string(),
        received: Vec::new(),
    };

    {
        let federates: Vec<&mut dyn Federate> = vec![&mut stub, &mut feeder];
        run_federation(
            FederationConfig::default(),
            federates,
            SimTime::from_micros(5_000_000),
        )
        .unwrap();
    }

    let series = feeder.series();
    assert_eq!(series.records.len(), 6);

    // Gross power adds the DER back: it tracks the raw load (plus small,
    // setpoint-dependent losses), while the meter dips by the full step.
    let first = &series.records[0];
    let last = &series.records[series.records.len() - 1];
    assert!((first.s_gross_mva.re - last.s_gross_mva.re).abs() < 0.01);
    assert!(last.s_meter_mva.re < first.s_meter_mva.re - 0.49);

    // The stub saw the feeder's publications with one-interval transport
    // delay and the gross values match the feeder's own records.
    assert!(!stub.received.is_empty());
    let (_, s_first) = stub.received[0];
    let expected = first.s_gross_mva / 3.0;
    assert!((s_first - expected).norm() < 1e-9);
}
