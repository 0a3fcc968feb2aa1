//! Dispatchable-headroom assessment for feeder-connected DER: numeric
//! sensitivities of monitored voltages (and thermally limited branch
//! currents) to DER injections, a linear program that maximizes total DER
//! output inside network limits, and the federate that refreshes the grant
//! on a slow cadence.

use std::collections::BTreeMap;

use crate::cosim::{CosimError, Federate, FederateDecl, PublishContext, SimTime, TimeGrant, Value};
use crate::distribution::{
    solve_feeder, FeederError, FeederInputs, FeederNetwork, FeederSolution,
};
use crate::linalg::Mat;
use crate::simplex::{self, LpStatus};
use crate::Cplx;

const PHASE_NAMES: [&str; 3] = ["a", "b", "c"];
/// Constraint slack below which a row counts as binding, and the tolerance
/// for base-point feasibility screening.
const BINDING_TOL: f64 = 1e-7;

/// Headroom module errors.
#[derive(Debug, Clone, thiserror::Error)]
pub enum HeadroomError {
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error("headroom input invalid: {0}")]
    BadInput(String),
}

/// Numeric sensitivities of the feeder's monitored quantities to per-DER
/// active-power injections, built by forward differences around a base
/// operating point.
#[derive(Debug, Clone)]
pub struct Vsm {
    /// DER ids in feeder declaration order; one matrix column each.
    pub der_ids: Vec<String>,
    /// Monitored voltage labels, `node.phase`.
    pub v_labels: Vec<String>,
    /// Voltage magnitudes at the base point, pu.
    pub v_base_pu: Vec<f64>,
    /// d|V| / dP, pu per MW.
    pub dv_dp: Mat<f64>,
    /// Thermally limited branch labels, `from-to.phase` (only branches
    /// with an ampacity rating).
    pub i_labels: Vec<String>,
    /// Current magnitudes at the base point, pu.
    pub i_base_pu: Vec<f64>,
    /// Current ratings, pu.
    pub i_limit_pu: Vec<f64>,
    /// d|I| / dP, pu per MW.
    pub di_dp: Mat<f64>,
}

fn solve_at(
    net: &FeederNetwork,
    v_sub: [Cplx; 3],
    p_mw: &[f64],
    load_scale: &[f64],
) -> Result<FeederSolution, FeederError> {
    let der_p: BTreeMap<String, f64> = net
        .ders
        .iter()
        .zip(p_mw)
        .map(|(d, p)| (d.id.clone(), *p))
        .collect();
    solve_feeder(
        net,
        &FeederInputs {
            v_sub,
            der_p_mw: &der_p,
            load_scale,
        },
    )
}

fn voltage_magnitudes(net: &FeederNetwork, sol: &FeederSolution) -> Vec<f64> {
    let mut out = Vec::new();
    for (n, node) in net.nodes.iter().enumerate() {
        for p in node.phases.iter() {
            out.push(sol.v[n][p].norm());
        }
    }
    out
}

fn current_magnitudes(net: &FeederNetwork, sol: &FeederSolution) -> Vec<f64> {
    let mut out = Vec::new();
    for (b, branch) in net.branches.iter().enumerate() {
        if branch.ampacity_a.is_none() {
            continue;
        }
        for p in net.nodes[branch.to].phases.iter() {
            out.push(sol.branch_i[b][p].norm());
        }
    }
    out
}

/// Builds the sensitivity matrices around `(p_base_mw, load_scale)` with
/// one extra feeder solve per DER, perturbing each injection by
/// `delta_mw`. Every energized node phase is monitored; current rows cover
/// only branches with an ampacity rating.
pub fn build_vsm(
    net: &FeederNetwork,
    v_sub: [Cplx; 3],
    p_base_mw: &[f64],
    load_scale: &[f64],
    delta_mw: f64,
) -> Result<Vsm, HeadroomError> {
    if p_base_mw.len() != net.ders.len() {
        return Err(HeadroomError::BadInput(format!(
            "{} base injections for {} DERs",
            p_base_mw.len(),
            net.ders.len()
        )));
    }
    if delta_mw <= 0.0 {
        return Err(HeadroomError::BadInput("perturbation must be positive".into()));
    }

    let base = solve_at(net, v_sub, p_base_mw, load_scale)?;
    let v_base = voltage_magnitudes(net, &base);
    let i_base = current_magnitudes(net, &base);

    let mut v_labels = Vec::with_capacity(v_base.len());
    for node in &net.nodes {
        for p in node.phases.iter() {
            v_labels.push(format!("{}.{}", node.name, PHASE_NAMES[p]));
        }
    }
    let mut i_labels = Vec::with_capacity(i_base.len());
    let mut i_limit = Vec::with_capacity(i_base.len());
    let i_base_a = net.current_base_a();
    for branch in &net.branches {
        let Some(amp) = branch.ampacity_a else { continue };
        for p in net.nodes[branch.to].phases.iter() {
            i_labels.push(format!(
                "{}-{}.{}",
                net.nodes[branch.from].name, net.nodes[branch.to].name, PHASE_NAMES[p]
            ));
            i_limit.push(amp / i_base_a);
        }
    }

    let m = net.ders.len();
    let mut dv_dp = Mat::zeros(v_base.len(), m);
    let mut di_dp = Mat::zeros(i_base.len(), m);
    let mut perturbed = p_base_mw.to_vec();
    for j in 0..m {
        perturbed[j] += delta_mw;
        let sol = solve_at(net, v_sub, &perturbed, load_scale)?;
        perturbed[j] = p_base_mw[j];
        for (i, v) in voltage_magnitudes(net, &sol).iter().enumerate() {
            dv_dp[(i, j)] = (v - v_base[i]) / delta_mw;
        }
        for (i, c) in current_magnitudes(net, &sol).iter().enumerate() {
            di_dp[(i, j)] = (c - i_base[i]) / delta_mw;
        }
    }

    Ok(Vsm {
        der_ids: net.ders.iter().map(|d| d.id.clone()).collect(),
        v_labels,
        v_base_pu: v_base,
        dv_dp,
        i_labels,
        i_base_pu: i_base,
        i_limit_pu: i_limit,
        di_dp,
    })
}

/// Headroom solve settings.
#[derive(Debug, Clone)]
pub struct HeadroomOptions {
    pub v_lo_pu: f64,
    pub v_hi_pu: f64,
    /// Forward-difference perturbation for sensitivity columns, MW.
    pub delta_mw: f64,
    /// Include linearized branch-current rows for rated branches.
    pub current_limits: bool,
}

impl Default for HeadroomOptions {
    fn default() -> Self {
        Self {
            v_lo_pu: 0.95,
            v_hi_pu: 1.05,
            delta_mw: 0.01,
            current_limits: true,
        }
    }
}

/// Result of one headroom assessment.
#[derive(Debug, Clone)]
pub struct HeadroomResult {
    pub der_ids: Vec<String>,
    pub p_base_mw: Vec<f64>,
    /// Limit-respecting dispatch that maximizes total output.
    pub p_star_mw: Vec<f64>,
    /// Total additional power available: sum of `p_star` minus sum of base.
    pub headroom_mw: f64,
    /// False when the base point itself violates a limit.
    pub feasible: bool,
    /// Labels of constraints active at the reported dispatch.
    pub binding: Vec<String>,
    /// Present when the grant is zero for a structural reason.
    pub diagnostic: Option<String>,
}

/// Maximizes total DER output under linearized voltage (and optional
/// current) limits and per-unit capability boxes. The optimization
/// variable is the absolute dispatch `q = p_base + shift`, kept inside
/// `[0, cap]`, so the LP is in natural `x >= 0` form. An infeasible base
/// point yields a zero grant with a diagnostic rather than an error.
pub fn solve_headroom(
    vsm: &Vsm,
    p_base_mw: &[f64],
    caps_mw: &[f64],
    opts: &HeadroomOptions,
) -> Result<HeadroomResult, HeadroomError> {
    let m = vsm.der_ids.len();
    if p_base_mw.len() != m || caps_mw.len() != m {
        return Err(HeadroomError::BadInput(format!(
            "{} base / {} cap entries for {} DERs",
            p_base_mw.len(),
            caps_mw.len(),
            m
        )));
    }
    if opts.v_lo_pu >= opts.v_hi_pu {
        return Err(HeadroomError::BadInput("voltage band is empty".into()));
    }
    for (j, cap) in caps_mw.iter().enumerate() {
        if !cap.is_finite() || *cap < 0.0 {
            return Err(HeadroomError::BadInput(format!(
                "DER {:?} capability {cap} must be finite and non-negative",
                vsm.der_ids[j]
            )));
        }
    }
    let zero_grant = |feasible: bool, diagnostic: Option<String>| HeadroomResult {
        der_ids: vsm.der_ids.clone(),
        p_base_mw: p_base_mw.to_vec(),
        p_star_mw: p_base_mw.to_vec(),
        headroom_mw: 0.0,
        feasible,
        binding: Vec::new(),
        diagnostic,
    };
    if m == 0 {
        return Ok(zero_grant(true, Some("feeder hosts no DER".into())));
    }

    // Rows: voltage ceiling, voltage floor, optional current ceiling,
    // capability box. All in terms of q with J q <= b.
    let n_v = vsm.v_base_pu.len();
    let n_i = if opts.current_limits { vsm.i_base_pu.len() } else { 0 };
    let rows = 2 * n_v + n_i + m;
    let mut a = Mat::zeros(rows, m);
    let mut b = vec![0.0; rows];
    let mut labels = Vec::with_capacity(rows);
    for i in 0..n_v {
        let j_dot_base: f64 = (0..m).map(|j| vsm.dv_dp[(i, j)] * p_base_mw[j]).sum();
        for j in 0..m {
            a[(i, j)] = vsm.dv_dp[(i, j)];
            a[(n_v + i, j)] = -vsm.dv_dp[(i, j)];
        }
        b[i] = opts.v_hi_pu - vsm.v_base_pu[i] + j_dot_base;
        b[n_v + i] = vsm.v_base_pu[i] - opts.v_lo_pu - j_dot_base;
        labels.push(format!("v_hi {}", vsm.v_labels[i]));
    }
    for i in 0..n_v {
        labels.push(format!("v_lo {}", vsm.v_labels[i]));
    }
    for i in 0..n_i {
        let j_dot_base: f64 = (0..m).map(|j| vsm.di_dp[(i, j)] * p_base_mw[j]).sum();
        for j in 0..m {
            a[(2 * n_v + i, j)] = vsm.di_dp[(i, j)];
        }
        b[2 * n_v + i] = vsm.i_limit_pu[i] - vsm.i_base_pu[i] + j_dot_base;
        labels.push(format!("ampacity {}", vsm.i_labels[i]));
    }
    for j in 0..m {
        a[(2 * n_v + n_i + j, j)] = 1.0;
        b[2 * n_v + n_i + j] = caps_mw[j];
        labels.push(format!("cap {}", vsm.der_ids[j]));
    }

    // Screen the base point: if it already violates a limit the linear
    // model cannot certify additional power.
    let mut worst: Option<(f64, usize)> = None;
    for i in 0..rows {
        let lhs: f64 = (0..m).map(|j| a[(i, j)] * p_base_mw[j]).sum();
        let violation = lhs - b[i];
        if violation > BINDING_TOL && worst.is_none_or(|(w, _)| violation > w) {
            worst = Some((violation, i));
        }
    }
    if let Some((violation, i)) = worst {
        return Ok(zero_grant(
            false,
            Some(format!(
                "base point violates {} by {violation:.3e}",
                labels[i]
            )),
        ));
    }

    let c = vec![1.0; m];
    let lp = simplex::maximize(&c, &a, &b);
    match lp.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Ok(zero_grant(
                false,
                Some("program infeasible despite feasible base point".into()),
            ));
        }
        LpStatus::Unbounded => {
            return Err(HeadroomError::BadInput(
                "unbounded program: a capability box is missing".into(),
            ));
        }
    }
    let p_star = lp.x;
    let mut binding = Vec::new();
    for i in 0..rows {
        let slack = b[i] - (0..m).map(|j| a[(i, j)] * p_star[j]).sum::<f64>();
        if slack <= BINDING_TOL {
            binding.push(labels[i].clone());
        }
    }
    let total_base: f64 = p_base_mw.iter().sum();
    let headroom = (lp.objective - total_base).max(0.0);
    Ok(HeadroomResult {
        der_ids: vsm.der_ids.clone(),
        p_base_mw: p_base_mw.to_vec(),
        p_star_mw: p_star,
        headroom_mw: headroom,
        feasible: true,
        binding,
        diagnostic: None,
    })
}

/// One refresh record.
#[derive(Debug, Clone, Copy)]
pub struct HeadroomRecord {
    pub time_s: f64,
    pub headroom_mw: f64,
    pub feasible: bool,
}

/// The headroom federate: re-solves the grant for one feeder on a slow
/// cadence and publishes the total as `headroom.<feeder>`.
///
/// It works on its own copy of the feeder and approximates the feeder's
/// current loading by scaling every load with the scalar multiplier
/// received on `feeder_state.<feeder>`; base injections are the DER
/// reference schedule, not the realized outputs.
pub struct HeadroomFederate {
    name: String,
    feeder: String,
    net: FeederNetwork,
    v_sub: [Cplx; 3],
    p_base_mw: Vec<f64>,
    caps_mw: Vec<f64>,
    opts: HeadroomOptions,
    interval: SimTime,
    load_multiplier: f64,
    records: Vec<HeadroomRecord>,
    last: Option<HeadroomResult>,
}

impl HeadroomFederate {
    pub fn new(
        net: FeederNetwork,
        v_sub: [Cplx; 3],
        p_base_mw: Vec<f64>,
        caps_mw: Vec<f64>,
    ) -> Result<Self, HeadroomError> {
        if p_base_mw.len() != net.ders.len() || caps_mw.len() != net.ders.len() {
            return Err(HeadroomError::BadInput(format!(
                "{} base / {} cap entries for {} DERs",
                p_base_mw.len(),
                caps_mw.len(),
                net.ders.len()
            )));
        }
        Ok(Self {
            name: format!("headroom_{}", net.name),
            feeder: net.name.clone(),
            net,
            v_sub,
            p_base_mw,
            caps_mw,
            opts: HeadroomOptions::default(),
            interval: SimTime::from_secs_f64(10.0),
            load_multiplier: 1.0,
            records: Vec::new(),
            last: None,
        })
    }

    pub fn set_options(&mut self, opts: HeadroomOptions) {
        self.opts = opts;
    }

    pub fn set_interval(&mut self, interval: SimTime) {
        self.interval = interval;
    }

    pub fn records(&self) -> &[HeadroomRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&HeadroomResult> {
        self.last.as_ref()
    }
}

impl Federate for HeadroomFederate {
    fn declaration(&self) -> FederateDecl {
        FederateDecl::new(self.name.clone(), self.interval)
            .subscribes(format!("feeder_state.{}", self.feeder))
            .publishes(format!("headroom.{}", self.feeder))
    }

    fn on_grant(
        &mut self,
        ctx: &mut PublishContext<'_>,
        grant: &TimeGrant,
    ) -> Result<SimTime, CosimError> {
        if let Some(m) = grant.latest(&format!("feeder_state.{}", self.feeder)) {
            if let Some(v) = m.value.as_scalar() {
                self.load_multiplier = v;
            }
        }
        let scale = vec![self.load_multiplier; self.net.loads.len()];
        let result = build_vsm(
            &self.net,
            self.v_sub,
            &self.p_base_mw,
            &scale,
            self.opts.delta_mw,
        )
        .and_then(|vsm| solve_headroom(&vsm, &self.p_base_mw, &self.caps_mw, &self.opts))
        .map_err(|e| CosimError::Federate {
            federate: self.name.clone(),
            message: e.to_string(),
        })?;
        ctx.publish(
            &format!("headroom.{}", self.feeder),
            Value::Scalar(result.headroom_mw),
        )?;
        self.records.push(HeadroomRecord {
            time_s: grant.granted_time.as_secs_f64(),
            headroom_mw: result.headroom_mw,
            feasible: result.feasible,
        });
        self.last = Some(result);
        Ok(grant.granted_time + self.interval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{balanced_three_phase, PhaseMask};
    use approx::assert_relative_eq;

    fn two_node_feeder(
        r_ohm_per_km: f64,
        x_ohm_per_km: f64,
        kw_per_phase: f64,
        kvar_per_phase: f64,
    ) -> FeederNetwork {
        let toml = format!(
            r#"
name = "pair"
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
name = "cfg"
r_self_ohm_per_km = {r_ohm_per_km}
x_self_ohm_per_km = {x_ohm_per_km}

[[branch]]
from = "sub"
to = "n2"
length_km = 1.0
config = "cfg"

[[load]]
node = "n2"
phases = "abc"
kw = [{kw_per_phase}, {kw_per_phase}, {kw_per_phase}]
kvar = [{kvar_per_phase}, {kvar_per_phase}, {kvar_per_phase}]
"#
        );
        let mut net = FeederNetwork::from_toml_str(&toml).unwrap();
        net.add_der("der1", "n2", PhaseMask::ABC).unwrap();
        net
    }

    #[test]
    fn two_node_voltage_sensitivity_matches_the_line_resistance() {
        // For a lightly loaded balanced line the magnitude sensitivity to a
        // three-phase injection of P MW is close to r_pu / (s_base |V2|);
        // the first-order oracle degrades with the standing voltage drop,
        // so keep the drop small.
        let net = two_node_feeder(0.5, 1.0, 100.0, 33.0);
        let r_pu = 0.5 / net.impedance_base_ohm();
        let vsm = build_vsm(&net, balanced_three_phase(Cplx::new(1.0, 0.0)), &[0.2], &[], 0.01)
            .unwrap();
        let row = vsm.v_labels.iter().position(|l| l == "n2.a").unwrap();
        let v2 = vsm.v_base_pu[row];
        let expected = r_pu / (net.s_base_mva * v2);
        assert_relative_eq!(vsm.dv_dp[(row, 0)], expected, max_relative = 0.05);
        // The substation row never moves.
        let sub = vsm.v_labels.iter().position(|l| l == "sub.a").unwrap();
        assert_eq!(vsm.dv_dp[(sub, 0)], 0.0);
    }

    #[test]
    fn zero_impedance_feeder_has_zero_sensitivity() {
        let net = two_node_feeder(0.0, 0.0, 167.0, 55.0);
        let vsm = build_vsm(&net, balanced_three_phase(Cplx::new(1.0, 0.0)), &[0.2], &[], 0.01)
            .unwrap();
        for i in 0..vsm.v_base_pu.len() {
            assert!(vsm.dv_dp[(i, 0)].abs() <= 1e-12);
        }
    }

    #[test]
    fn halving_the_perturbation_barely_moves_the_columns() {
        let net = two_node_feeder(1.0, 2.0, 167.0, 55.0);
        let v_sub = balanced_three_phase(Cplx::new(1.0, 0.0));
        let coarse = build_vsm(&net, v_sub, &[0.2], &[], 0.01).unwrap();
        let fine = build_vsm(&net, v_sub, &[0.2], &[], 0.005).unwrap();
        for i in 0..coarse.v_base_pu.len() {
            let a = coarse.dv_dp[(i, 0)];
            let b = fine.dv_dp[(i, 0)];
            assert!((a - b).abs() <= 0.05 * a.abs().max(b.abs()) + 1e-9);
        }
    }

    #[test]
    fn grant_grows_with_a_looser_voltage_ceiling() {
        let net = two_node_feeder(1.0, 2.0, 167.0, 55.0);
        let v_sub = balanced_three_phase(Cplx::new(1.0, 0.0));
        let vsm = build_vsm(&net, v_sub, &[0.2], &[], 0.01).unwrap();
        let mut opts = HeadroomOptions { v_hi_pu: 1.01, ..HeadroomOptions::default() };
        let tight = solve_headroom(&vsm, &[0.2], &[50.0], &opts).unwrap();
        opts.v_hi_pu = 1.05;
        let loose = solve_headroom(&vsm, &[0.2], &[50.0], &opts).unwrap();
        assert!(tight.feasible && loose.feasible);
        assert!(loose.headroom_mw >= tight.headroom_mw);
        assert!(tight.headroom_mw > 0.0);
        // With a generous capability the voltage ceiling binds.
        assert!(tight.binding.iter().any(|l| l.starts_with("v_hi")));
    }

    #[test]
    fn capability_box_binds_before_a_distant_voltage_limit() {
        let net = two_node_feeder(0.1, 0.2, 167.0, 55.0);
        let v_sub = balanced_three_phase(Cplx::new(1.0, 0.0));
        let vsm = build_vsm(&net, v_sub, &[0.2], &[], 0.01).unwrap();
        let res = solve_headroom(&vsm, &[0.2], &[0.5], &HeadroomOptions::default()).unwrap();
        assert!(res.feasible);
        assert_relative_eq!(res.headroom_mw, 0.3, epsilon = 1e-6);
        assert_eq!(res.binding, vec!["cap der1".to_string()]);
    }

    #[test]
    fn feeder_without_der_reports_zero() {
        let mut net = two_node_feeder(1.0, 2.0, 167.0, 55.0);
        net.ders.clear();
        let v_sub = balanced_three_phase(Cplx::new(1.0, 0.0));
        let vsm = build_vsm(&net, v_sub, &[], &[], 0.01).unwrap();
        let res = solve_headroom(&vsm, &[], &[], &HeadroomOptions::default()).unwrap();
        assert!(res.feasible);
        assert_eq!(res.headroom_mw, 0.0);
        assert!(res.diagnostic.is_some());
    }

    #[test]
    fn infeasible_base_point_reports_zero_with_a_diagnostic() {
        // A large standing injection lifts n2 above a deliberately tight
        // ceiling, so no additional power can be certified.
        let net = two_node_feeder(1.0, 2.0, 167.0, 55.0);
        let v_sub = balanced_three_phase(Cplx::new(1.0, 0.0));
        let vsm = build_vsm(&net, v_sub, &[3.0], &[], 0.01).unwrap();
        let opts = HeadroomOptions { v_hi_pu: 1.002, ..HeadroomOptions::default() };
        let res = solve_headroom(&vsm, &[3.0], &[10.0], &opts).unwrap();
        assert!(!res.feasible);
        assert_eq!(res.headroom_mw, 0.0);
        assert!(res.diagnostic.as_deref().unwrap().contains("v_hi"));
    }

    #[test]
    fn linear_grant_tracks_a_nonlinear_sweep_on_the_two_node_feeder() {
        // Brute force: walk the injection up in 10 kW steps and keep the
        // last dispatch whose true (nonlinear) solution stays inside the
        // voltage band. A resistance-dominant line and a base point near
        // the ceiling keep the tangent model tight.
        let net = two_node_feeder(1.0, 0.4, 30.0, 10.0);
        let v_sub = balanced_three_phase(Cplx::new(1.0, 0.0));
        let p_base = [0.5];
        let opts = HeadroomOptions::default();
        let vsm = build_vsm(&net, v_sub, &p_base, &[], opts.delta_mw).unwrap();
        let lp = solve_headroom(&vsm, &p_base, &[50.0], &opts).unwrap();
        assert!(lp.feasible);

        let mut best = 0.0f64;
        let mut q = 0.0;
        while q <= 5.0 {
            let sol = solve_at(&net, v_sub, &[q], &[]).unwrap();
            let ok = voltage_magnitudes(&net, &sol)
                .iter()
                .all(|v| *v >= opts.v_lo_pu && *v <= opts.v_hi_pu);
            if ok {
                best = best.max(q - p_base[0]);
            }
            q += 0.01;
        }
        assert_relative_eq!(lp.headroom_mw, best, max_relative = 0.05);
        // Certified headroom never exceeds the true limit by more than the
        // linearization tolerance, regardless of the operating point.
        assert!(lp.headroom_mw <= 1.05 * best + 1e-9);

        // The reported dispatch re-solved nonlinearly violates nothing:
        // voltage rise is concave in injected power, so the tangent model
        // overestimates the rise and the certified point remains inside.
        let sol = solve_at(&net, v_sub, &lp.p_star_mw, &[]).unwrap();
        for v in voltage_magnitudes(&net, &sol) {
            assert!(v >= opts.v_lo_pu - 1e-9 && v <= opts.v_hi_pu + 1e-9);
        }
    }
}
