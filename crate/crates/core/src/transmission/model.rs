//! The transmission DAE: classical generators with turbine-governors on
//! an admittance network, in rectangular algebraic coordinates.
//!
//! States per generator: rotor angle delta (rad), speed omega (pu),
//! mechanical power Pm (pu). Algebraic pair per bus: V_re, V_im (pu).
//! Native constant-impedance loads fold into the admittance matrix at the
//! power-flow point; constant-power loads (native when configured, and
//! all boundary loads) enter the current balance directly, as do DER
//! injections at unity power factor.

use std::collections::BTreeMap;

use super::grid::{Grid, LoadModel};
use super::power_flow::{bus_load_pu, PowerFlowSolution};
use super::ybus::build_ybus;
use super::TransmissionError;
use crate::dae::Dae;
use crate::linalg::{Lu, Mat};
use crate::{Cplx, F_NOMINAL_HZ};

/// Synchronous speed, rad/s.
const OMEGA_S: f64 = 2.0 * std::f64::consts::PI * F_NOMINAL_HZ;

/// One generator's dynamic parameters and status.
#[derive(Debug, Clone)]
pub struct GenState {
    pub name: String,
    pub bus: usize,
    /// 2H, the mass-matrix entry of the swing equation, seconds.
    pub m: f64,
    pub h_s: f64,
    pub d_pu: f64,
    pub xd_pu: f64,
    pub r_droop: f64,
    pub tg_s: f64,
    pub p_min_pu: f64,
    pub p_max_pu: f64,
    /// Internal EMF magnitude behind xd, fixed at initialization.
    pub e_mag: f64,
    /// Governor reference from the dispatch, pu.
    pub pref_pu: f64,
    /// AGC addition to the reference, pu.
    pub p_agc_pu: f64,
    pub online: bool,
}

/// The assembled dynamic model. Inputs (boundary loads, AGC setpoints,
/// DER injections) are fields updated between integration steps.
pub struct GridModel {
    grid: Grid,
    /// Admittance with constant-impedance loads folded in.
    y_g: Mat<f64>,
    y_b: Mat<f64>,
    gens: Vec<GenState>,
    /// Native constant-power load per bus, pu (zero under the
    /// constant-impedance model).
    s_native: Vec<Cplx>,
    /// Boundary (distribution) gross load per bus, pu.
    s_boundary: Vec<Cplx>,
    /// Folded constant-impedance admittance per bus, for load scaling.
    y_load: Vec<Cplx>,
    /// Native load scale factors from events.
    native_scale: Vec<f64>,
    /// Total DER active injection per bus, pu.
    der_p: Vec<f64>,
}

impl GridModel {
    /// Builds the model at a solved operating point. `boundary_gross_mva`
    /// is each boundary bus's distribution load with DER production added
    /// back; `der_mw` is the total DER output per bus. The power flow must
    /// have been solved at the net load (gross minus DER) for the initial
    /// point to be an equilibrium.
    pub fn initialize(
        grid: Grid,
        pf: &PowerFlowSolution,
        boundary_gross_mva: &BTreeMap<String, Cplx>,
        der_mw: &BTreeMap<String, f64>,
    ) -> Result<(Self, Vec<f64>, Vec<f64>), TransmissionError> {
        let n = grid.buses.len();
        let ybus = build_ybus(&grid);
        let mut y_g = Mat::zeros(n, n);
        let mut y_b = Mat::zeros(n, n);
        for k in 0..n {
            for m in 0..n {
                y_g[(k, m)] = ybus[k][m].re;
                y_b[(k, m)] = ybus[k][m].im;
            }
        }

        // Split load handling by model. Constant-impedance native loads
        // fold into the diagonal at the power-flow voltage.
        let native = bus_load_pu(&grid, &BTreeMap::new());
        let mut s_native = vec![Cplx::new(0.0, 0.0); n];
        let mut y_load = vec![Cplx::new(0.0, 0.0); n];
        match grid.load_model {
            LoadModel::ConstantImpedance => {
                for k in 0..n {
                    if native[k] != Cplx::new(0.0, 0.0) {
                        let v2 = pf.v_rect[k].norm_sqr();
                        let y = native[k].conj() / v2;
                        y_load[k] = y;
                        y_g[(k, k)] += y.re;
                        y_b[(k, k)] += y.im;
                    }
                }
            }
            LoadModel::ConstantPower => {
                s_native = native;
            }
        }

        let mut s_boundary = vec![Cplx::new(0.0, 0.0); n];
        for (name, s) in boundary_gross_mva {
            let k = grid
                .bus_index(name)
                .ok_or_else(|| TransmissionError::UnknownElement(name.clone()))?;
            if !grid.is_boundary(k) {
                return Err(TransmissionError::NotBoundary(name.clone()));
            }
            s_boundary[k] = s / grid.s_base_mva;
        }
        let mut der_p = vec![0.0; n];
        for (name, mw) in der_mw {
            let k = grid
                .bus_index(name)
                .ok_or_else(|| TransmissionError::UnknownElement(name.clone()))?;
            der_p[k] = mw / grid.s_base_mva;
        }

        // Back-initialize generator internals from the power flow.
        let mut gens = Vec::with_capacity(grid.gens.len());
        let mut x0 = Vec::with_capacity(3 * grid.gens.len());
        for (gi, g) in grid.gens.iter().enumerate() {
            let v = pf.v_rect[g.bus];
            let s = pf.gen_s_pu[gi];
            let current = (s / v).conj();
            let emf = v + Cplx::new(0.0, g.xd_pu) * current;
            let delta = emf.arg();
            let pm = s.re;
            gens.push(GenState {
                name: g.name.clone(),
                bus: g.bus,
                m: 2.0 * g.h_s,
                h_s: g.h_s,
                d_pu: g.d_pu,
                xd_pu: g.xd_pu,
                r_droop: g.r_droop,
                tg_s: g.tg_s,
                p_min_pu: g.p_min_mw / grid.s_base_mva,
                p_max_pu: g.p_max_mw / grid.s_base_mva,
                e_mag: emf.norm(),
                pref_pu: pm,
                p_agc_pu: 0.0,
                online: true,
            });
            x0.extend_from_slice(&[delta, 1.0, pm]);
        }

        let mut y0 = Vec::with_capacity(2 * n);
        for v in &pf.v_rect {
            y0.push(v.re);
            y0.push(v.im);
        }

        let native_scale = vec![1.0; n];
        let model = Self {
            grid,
            y_g,
            y_b,
            gens,
            s_native,
            s_boundary,
            y_load,
            native_scale,
            der_p,
        };
        Ok((model, x0, y0))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn gens(&self) -> &[GenState] {
        &self.gens
    }

    pub fn s_base_mva(&self) -> f64 {
        self.grid.s_base_mva
    }

    /// Updates a boundary bus's gross load (total three-phase MVA).
    pub fn set_boundary_load(
        &mut self,
        bus_name: &str,
        s_mva: Cplx,
    ) -> Result<(), TransmissionError> {
        let k = self
            .grid
            .bus_index(bus_name)
            .ok_or_else(|| TransmissionError::UnknownElement(bus_name.to_string()))?;
        if !self.grid.is_boundary(k) {
            return Err(TransmissionError::NotBoundary(bus_name.to_string()));
        }
        self.s_boundary[k] = s_mva / self.grid.s_base_mva;
        Ok(())
    }

    /// Positive-sequence voltage at a boundary bus.
    pub fn boundary_voltage(
        &self,
        y: &[f64],
        bus_name: &str,
    ) -> Result<Cplx, TransmissionError> {
        let k = self
            .grid
            .bus_index(bus_name)
            .ok_or_else(|| TransmissionError::UnknownElement(bus_name.to_string()))?;
        if !self.grid.is_boundary(k) {
            return Err(TransmissionError::NotBoundary(bus_name.to_string()));
        }
        Ok(Cplx::new(y[2 * k], y[2 * k + 1]))
    }

    /// Sets the total DER injection at a bus, MW.
    pub fn set_der_injection(&mut self, bus: usize, mw: f64) {
        self.der_p[bus] = mw / self.grid.s_base_mva;
    }

    /// Applies an AGC setpoint to a generator, MW added to its reference.
    pub fn set_agc_setpoint(&mut self, gen_name: &str, mw: f64) -> Result<(), TransmissionError> {
        let g = self
            .gens
            .iter_mut()
            .find(|g| g.name == gen_name)
            .ok_or_else(|| TransmissionError::UnknownElement(gen_name.to_string()))?;
        g.p_agc_pu = mw / self.grid.s_base_mva;
        Ok(())
    }

    /// Takes a generator offline: its states freeze and its injection
    /// leaves the network. The caller must re-solve the algebraic system.
    pub fn trip_generator(&mut self, gen_name: &str) -> Result<(), TransmissionError> {
        let idx = self
            .gens
            .iter()
            .position(|g| g.name == gen_name)
            .ok_or_else(|| TransmissionError::UnknownElement(gen_name.to_string()))?;
        if !self.gens[idx].online {
            return Ok(());
        }
        if self.gens.iter().filter(|g| g.online).count() == 1 {
            return Err(TransmissionError::LastSourceTrip(gen_name.to_string()));
        }
        self.gens[idx].online = false;
        Ok(())
    }

    /// Shifts a generator's governor reference by `delta_mw`.
    pub fn shift_setpoint(&mut self, gen_name: &str, delta_mw: f64) -> Result<(), TransmissionError> {
        let g = self
            .gens
            .iter_mut()
            .find(|g| g.name == gen_name)
            .ok_or_else(|| TransmissionError::UnknownElement(gen_name.to_string()))?;
        g.pref_pu += delta_mw / self.grid.s_base_mva;
        Ok(())
    }

    /// Scales the native load at a bus. Constant-impedance loads adjust
    /// the admittance diagonal; constant-power loads scale directly.
    pub fn scale_native_load(&mut self, bus_name: &str, factor: f64) -> Result<(), TransmissionError> {
        let k = self
            .grid
            .bus_index(bus_name)
            .ok_or_else(|| TransmissionError::UnknownElement(bus_name.to_string()))?;
        let previous = self.native_scale[k];
        self.native_scale[k] = factor;
        match self.grid.load_model {
            LoadModel::ConstantImpedance => {
                let delta = (factor - previous) * self.y_load[k];
                self.y_g[(k, k)] += delta.re;
                self.y_b[(k, k)] += delta.im;
            }
            LoadModel::ConstantPower => {
                if previous != 0.0 {
                    let base = self.s_native[k] / previous;
                    self.s_native[k] = base * factor;
                }
            }
        }
        Ok(())
    }

    /// Center-of-inertia frequency over online machines, Hz.
    pub fn coi_frequency_hz(&self, x: &[f64]) -> f64 {
        let mut h_total = 0.0;
        let mut weighted = 0.0;
        for (i, g) in self.gens.iter().enumerate() {
            if g.online {
                h_total += g.h_s;
                weighted += g.h_s * x[3 * i + 1];
            }
        }
        F_NOMINAL_HZ * weighted / h_total
    }

    /// Electrical air-gap power of a generator, pu.
    pub fn electrical_power(&self, x: &[f64], y: &[f64], gen: usize) -> f64 {
        let g = &self.gens[gen];
        if !g.online {
            return 0.0;
        }
        let delta = x[3 * gen];
        let (sd, cd) = delta.sin_cos();
        let v_re = y[2 * g.bus];
        let v_im = y[2 * g.bus + 1];
        g.e_mag * (v_re * sd - v_im * cd) / g.xd_pu
    }

    /// Clamps governor outputs to their limits after a step.
    pub fn clamp_governors(&self, x: &mut [f64]) {
        for (i, g) in self.gens.iter().enumerate() {
            if g.online {
                x[3 * i + 2] = x[3 * i + 2].clamp(g.p_min_pu, g.p_max_pu);
            }
        }
    }

    /// Effective constant-power draw at a bus (native + boundary - DER), pu.
    fn s_effective(&self, k: usize) -> Cplx {
        self.s_native[k] * self.native_scale[k] + self.s_boundary[k]
            - Cplx::new(self.der_p[k], 0.0)
    }

    /// Re-solves the algebraic equations at fixed states, for consistency
    /// after discrete events.
    pub fn solve_algebraic(&self, x: &[f64], y: &mut [f64]) -> Result<(), TransmissionError> {
        let ny = self.n_algebraic();
        let nx = self.n_states();
        let mut residual = vec![0.0; ny];
        let mut dgdx = Mat::zeros(ny, nx);
        let mut dgdy = Mat::zeros(ny, ny);
        let mut dfdx = Mat::zeros(nx, nx);
        let mut dfdy = Mat::zeros(nx, ny);
        for _ in 0..20 {
            self.g(x, y, &mut residual);
            let worst = residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
            if worst <= 1e-10 {
                return Ok(());
            }
            self.jacobian(x, y, &mut dfdx, &mut dfdy, &mut dgdx, &mut dgdy);
            let lu = Lu::factor(dgdy.clone())
                .map_err(|_| TransmissionError::AlgebraicResolve(worst))?;
            lu.solve_in_place(&mut residual);
            for (v, step) in y.iter_mut().zip(&residual) {
                *v -= step;
            }
        }
        self.g(x, y, &mut residual);
        let worst = residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        if worst <= 1e-8 {
            Ok(())
        } else {
            Err(TransmissionError::AlgebraicResolve(worst))
        }
    }
}

impl Dae<f64> for GridModel {
    fn n_states(&self) -> usize {
        3 * self.gens.len()
    }

    fn n_algebraic(&self) -> usize {
        2 * self.grid.buses.len()
    }

    fn mass_diagonal(&self, out: &mut [f64]) {
        for (i, g) in self.gens.iter().enumerate() {
            if g.online {
                out[3 * i] = 1.0;
                out[3 * i + 1] = g.m;
                out[3 * i + 2] = g.tg_s;
            } else {
                out[3 * i] = 1.0;
                out[3 * i + 1] = 1.0;
                out[3 * i + 2] = 1.0;
            }
        }
    }

    fn f(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        for (i, g) in self.gens.iter().enumerate() {
            if !g.online {
                out[3 * i] = 0.0;
                out[3 * i + 1] = 0.0;
                out[3 * i + 2] = 0.0;
                continue;
            }
            let omega = x[3 * i + 1];
            let pm = x[3 * i + 2];
            let pe = self.electrical_power(x, y, i);
            out[3 * i] = OMEGA_S * (omega - 1.0);
            out[3 * i + 1] = pm - pe - g.d_pu * (omega - 1.0);
            out[3 * i + 2] = g.pref_pu + g.p_agc_pu - pm - (omega - 1.0) / g.r_droop;
        }
    }

    fn g(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = self.grid.buses.len();
        // Network currents: I = Y V.
        for k in 0..n {
            let mut i_re = 0.0;
            let mut i_im = 0.0;
            for m in 0..n {
                let g_km = self.y_g[(k, m)];
                let b_km = self.y_b[(k, m)];
                if g_km == 0.0 && b_km == 0.0 {
                    continue;
                }
                let v_re = y[2 * m];
                let v_im = y[2 * m + 1];
                i_re += g_km * v_re - b_km * v_im;
                i_im += b_km * v_re + g_km * v_im;
            }
            out[2 * k] = i_re;
            out[2 * k + 1] = i_im;
        }
        // Generator injections.
        for (i, g) in self.gens.iter().enumerate() {
            if !g.online {
                continue;
            }
            let delta = x[3 * i];
            let (sd, cd) = delta.sin_cos();
            let v_re = y[2 * g.bus];
            let v_im = y[2 * g.bus + 1];
            out[2 * g.bus] -= (g.e_mag * sd - v_im) / g.xd_pu;
            out[2 * g.bus + 1] -= (v_re - g.e_mag * cd) / g.xd_pu;
        }
        // Constant-power draws (loads minus DER).
        for k in 0..n {
            let s = self.s_effective(k);
            if s == Cplx::new(0.0, 0.0) {
                continue;
            }
            let v_re = y[2 * k];
            let v_im = y[2 * k + 1];
            let d = v_re * v_re + v_im * v_im;
            out[2 * k] += (s.re * v_re + s.im * v_im) / d;
            out[2 * k + 1] += (s.re * v_im - s.im * v_re) / d;
        }
    }

    fn jacobian(
        &self,
        x: &[f64],
        y: &[f64],
        dfdx: &mut Mat<f64>,
        dfdy: &mut Mat<f64>,
        dgdx: &mut Mat<f64>,
        dgdy: &mut Mat<f64>,
    ) {
        let n = self.grid.buses.len();
        dfdx.fill_zero();
        dfdy.fill_zero();
        dgdx.fill_zero();
        dgdy.fill_zero();

        for (i, g) in self.gens.iter().enumerate() {
            if !g.online {
                continue;
            }
            let delta = x[3 * i];
            let (sd, cd) = delta.sin_cos();
            let v_re = y[2 * g.bus];
            let v_im = y[2 * g.bus + 1];
            let e_over_x = g.e_mag / g.xd_pu;

            // Rotor angle equation.
            dfdx[(3 * i, 3 * i + 1)] = OMEGA_S;
            // Swing equation: d(pm - pe - D(omega-1)).
            let dpe_ddelta = e_over_x * (v_re * cd + v_im * sd);
            dfdx[(3 * i + 1, 3 * i)] = -dpe_ddelta;
            dfdx[(3 * i + 1, 3 * i + 1)] = -g.d_pu;
            dfdx[(3 * i + 1, 3 * i + 2)] = 1.0;
            dfdy[(3 * i + 1, 2 * g.bus)] = -e_over_x * sd;
            dfdy[(3 * i + 1, 2 * g.bus + 1)] = e_over_x * cd;
            // Governor equation.
            dfdx[(3 * i + 2, 3 * i + 1)] = -1.0 / g.r_droop;
            dfdx[(3 * i + 2, 3 * i + 2)] = -1.0;

            // Generator current terms in g.
            dgdx[(2 * g.bus, 3 * i)] = -e_over_x * cd;
            dgdx[(2 * g.bus + 1, 3 * i)] = -e_over_x * sd;
            dgdy[(2 * g.bus, 2 * g.bus + 1)] += 1.0 / g.xd_pu;
            dgdy[(2 * g.bus + 1, 2 * g.bus)] -= 1.0 / g.xd_pu;
        }

        // Network linear part.
        for k in 0..n {
            for m in 0..n {
                let g_km = self.y_g[(k, m)];
                let b_km = self.y_b[(k, m)];
                if g_km == 0.0 && b_km == 0.0 {
                    continue;
                }
                dgdy[(2 * k, 2 * m)] += g_km;
                dgdy[(2 * k, 2 * m + 1)] -= b_km;
                dgdy[(2 * k + 1, 2 * m)] += b_km;
                dgdy[(2 * k + 1, 2 * m + 1)] += g_km;
            }
        }

        // Constant-power draw terms.
        for k in 0..n {
            let s = self.s_effective(k);
            if s == Cplx::new(0.0, 0.0) {
                continue;
            }
            let v_re = y[2 * k];
            let v_im = y[2 * k + 1];
            let d = v_re * v_re + v_im * v_im;
            let re_num = s.re * v_re + s.im * v_im;
            let im_num = s.re * v_im - s.im * v_re;
            dgdy[(2 * k, 2 * k)] += s.re / d - re_num * 2.0 * v_re / (d * d);
            dgdy[(2 * k, 2 * k + 1)] += s.im / d - re_num * 2.0 * v_im / (d * d);
            dgdy[(2 * k + 1, 2 * k)] += -s.im / d - im_num * 2.0 * v_re / (d * d);
            dgdy[(2 * k + 1, 2 * k + 1)] += s.re / d - im_num * 2.0 * v_im / (d * d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dae::{trapezoidal_step, NewtonOptions};
    use crate::transmission::solve_power_flow;

    fn two_gen_grid() -> Grid {
        Grid::from_toml_str(
            r#"
            name = "g2m"
            s_base_mva = 100.0
            load_model = "constant_impedance"

            [[bus]]
            name = "bus1"

            [[bus]]
            name = "bus2"

            [[bus]]
            name = "bus3"

            [[branch]]
            from = "bus1"
            to = "bus3"
            r_pu = 0.0
            x_pu = 0.08

            [[branch]]
            from = "bus2"
            to = "bus3"
            r_pu = 0.0
            x_pu = 0.08

            [[generator]]
            name = "gen1"
            bus = "bus1"
            h_s = 5.0
            d_pu = 1.0
            xd_pu = 0.2
            r_droop = 0.05
            tg_s = 0.5
            p_min_mw = 0.0
            p_max_mw = 150.0
            slack = true

            [[generator]]
            name = "gen2"
            bus = "bus2"
            h_s = 4.0
            d_pu = 1.0
            xd_pu = 0.25
            r_droop = 0.04
            tg_s = 0.6
            p_min_mw = 0.0
            p_max_mw = 120.0
            p_mw = 40.0

            [[load]]
            bus = "bus3"
            p_mw = 90.0
            q_mvar = 20.0
        "#,
        )
        .unwrap()
    }

    fn build() -> (GridModel, Vec<f64>, Vec<f64>) {
        let grid = two_gen_grid();
        let pf = solve_power_flow(&grid, &BTreeMap::new()).unwrap();
        GridModel::initialize(grid, &pf, &BTreeMap::new(), &BTreeMap::new()).unwrap()
    }

    #[test]
    fn initialization_is_an_equilibrium() {
        let (model, x, y) = build();
        let mut f_out = vec![0.0; model.n_states()];
        let mut g_out = vec![0.0; model.n_algebraic()];
        model.f(&x, &y, &mut f_out);
        model.g(&x, &y, &mut g_out);
        for v in &f_out {
            assert!(v.abs() < 1e-9, "state residual {v}");
        }
        for v in &g_out {
            assert!(v.abs() < 1e-8, "algebraic residual {v}");
        }
        assert!((model.coi_frequency_hz(&x) - 60.0).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_is_a_fixed_point_of_integration() {
        let (model, mut x, mut y) = build();
        let x0 = x.clone();
        let opts = NewtonOptions::default();
        for k in 0..30 {
            trapezoidal_step(&model, k as f64 / 30.0, 1.0 / 30.0, &mut x, &mut y, &opts).unwrap();
        }
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-9, "drift {a} vs {b}");
        }
    }

    #[test]
    fn load_step_dips_frequency_and_governors_respond() {
        let (mut model, mut x, mut y) = build();
        model.scale_native_load("bus3", 1.1).unwrap();
        model.solve_algebraic(&x, &mut y).unwrap();
        let opts = NewtonOptions::default();
        let mut min_f: f64 = 61.0;
        for k in 0..300 {
            trapezoidal_step(&model, k as f64 / 30.0, 1.0 / 30.0, &mut x, &mut y, &opts).unwrap();
            model.clamp_governors(&mut x);
            min_f = min_f.min(model.coi_frequency_hz(&x));
        }
        let f_end = model.coi_frequency_hz(&x);
        assert!(min_f < 59.99, "frequency should dip, got {min_f}");
        assert!(f_end > min_f, "governors should arrest the decline");
        // Mechanical power rose on both units.
        assert!(x[2] > model.gens()[0].pref_pu);
        assert!(x[5] > model.gens()[1].pref_pu);
    }

    #[test]
    fn coi_frequency_weights_by_inertia() {
        let (model, mut x, _) = build();
        // H = {5, 4}: omega {1.001, 0.999} -> 60 * (5*1.001 + 4*0.999) / 9.
        x[1] = 1.001;
        x[4] = 0.999;
        let expected = 60.0 * (5.0 * 1.001 + 4.0 * 0.999) / 9.0;
        assert!((model.coi_frequency_hz(&x) - expected).abs() < 1e-12);
    }

    #[test]
    fn trip_guard_protects_last_source()  {
        let (mut model, _, _) = build();
        model.trip_generator("gen2").unwrap();
        let err = model.trip_generator("gen1").unwrap_err();
        assert!(matches!(err, TransmissionError::LastSourceTrip(_)));
    }

    #[test]
    fn trip_transfers_load_to_survivor() {
        let (mut model, mut x, mut y) = build();
        model.trip_generator("gen2").unwrap();
        model.solve_algebraic(&x, &mut y).unwrap();
        let opts = NewtonOptions::default();
        for k in 0..600 {
            trapezoidal_step(&model, k as f64 / 30.0, 1.0 / 30.0, &mut x, &mut y, &opts).unwrap();
            model.clamp_governors(&mut x);
        }
        // Tripped machine is frozen; survivor picked up the balance (the
        // constant-impedance load draws a little less at sagged voltage).
        assert!(model.electrical_power(&x, &y, 1) == 0.0);
        let pe1 = model.electrical_power(&x, &y, 0);
        assert!(pe1 > 0.75, "survivor output {pe1}");
        assert!(model.coi_frequency_hz(&x) < 60.0);
    }
}
