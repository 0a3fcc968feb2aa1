//! Newton-Raphson power flow in polar coordinates.

use std::collections::BTreeMap;

use super::grid::Grid;
use super::ybus::build_ybus;
use super::TransmissionError;
use crate::linalg::{Lu, Mat};
use crate::Cplx;

/// Mismatch tolerance, pu.
pub const TOLERANCE: f64 = 1e-8;
/// Iteration cap.
pub const MAX_ITERATIONS: usize = 50;

/// A converged power-flow operating point.
#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    /// Bus voltages, rectangular pu.
    pub v_rect: Vec<Cplx>,
    pub v_mag: Vec<f64>,
    pub theta_rad: Vec<f64>,
    /// Net complex power injection per bus, pu.
    pub s_injection_pu: Vec<Cplx>,
    /// Electrical output per generator (parallel to `grid.gens`), pu.
    pub gen_s_pu: Vec<Cplx>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// Total specified complex load per bus in pu: native loads plus boundary
/// loads (total three-phase MVA keyed by bus name).
pub fn bus_load_pu(grid: &Grid, boundary_mva: &BTreeMap<String, Cplx>) -> Vec<Cplx> {
    let mut load = vec![Cplx::new(0.0, 0.0); grid.buses.len()];
    for l in &grid.loads {
        load[l.bus] += Cplx::new(l.p_mw, l.q_mvar) / grid.s_base_mva;
    }
    for (bus_name, s) in boundary_mva {
        if let Some(b) = grid.bus_index(bus_name) {
            load[b] += s / grid.s_base_mva;
        }
    }
    load
}

/// Solves the steady-state power flow. Boundary loads are constant-power;
/// native loads are constant-power for the solve (the load model matters
/// only to the dynamic simulation).
pub fn solve_power_flow(
    grid: &Grid,
    boundary_mva: &BTreeMap<String, Cplx>,
) -> Result<PowerFlowSolution, TransmissionError> {
    let n = grid.buses.len();
    check_connected(grid)?;

    let ybus = build_ybus(grid);
    let load = bus_load_pu(grid, boundary_mva);

    let slack_gen = grid
        .gens
        .iter()
        .position(|g| g.slack)
        .expect("validated at parse");
    let slack_bus = grid.gens[slack_gen].bus;

    // Bus classification: slack, PV (generator bus), PQ.
    let mut is_pv = vec![false; n];
    let mut v_sched = vec![1.0; n];
    let mut p_gen_spec = vec![0.0; n];
    for g in &grid.gens {
        if g.bus != slack_bus {
            is_pv[g.bus] = true;
        }
        v_sched[g.bus] = g.v_set;
        if !g.slack {
            p_gen_spec[g.bus] += g.p_mw / grid.s_base_mva;
        }
    }

    let mut v_mag: Vec<f64> = (0..n)
        .map(|k| if is_pv[k] || k == slack_bus { v_sched[k] } else { 1.0 })
        .collect();
    let mut theta = vec![0.0f64; n];

    // Unknown ordering: angles for all non-slack buses, then magnitudes
    // for PQ buses.
    let ang_pos: Vec<Option<usize>> = {
        let mut next = 0;
        (0..n)
            .map(|k| {
                if k == slack_bus {
                    None
                } else {
                    let p = next;
                    next += 1;
                    Some(p)
                }
            })
            .collect()
    };
    let n_ang = n - 1;
    let mag_pos: Vec<Option<usize>> = {
        let mut next = 0;
        (0..n)
            .map(|k| {
                if k == slack_bus || is_pv[k] {
                    None
                } else {
                    let p = next;
                    next += 1;
                    Some(p)
                }
            })
            .collect()
    };
    let n_mag = mag_pos.iter().flatten().count();
    let unknowns = n_ang + n_mag;

    let p_spec: Vec<f64> = (0..n).map(|k| p_gen_spec[k] - load[k].re).collect();
    let q_spec: Vec<f64> = (0..n).map(|k| -load[k].im).collect();

    let calc = |v_mag: &[f64], theta: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for k in 0..n {
            for m in 0..n {
                let y = ybus[k][m];
                if y == Cplx::new(0.0, 0.0) {
                    continue;
                }
                let dt = theta[k] - theta[m];
                let (s, c) = dt.sin_cos();
                p[k] += v_mag[k] * v_mag[m] * (y.re * c + y.im * s);
                q[k] += v_mag[k] * v_mag[m] * (y.re * s - y.im * c);
            }
        }
        (p, q)
    };

    let mut iterations = 0;
    let mut max_mismatch;
    loop {
        let (p_calc, q_calc) = calc(&v_mag, &theta);
        let mut mismatch = vec![0.0; unknowns];
        max_mismatch = 0.0f64;
        let mut worst_bus = slack_bus;
        for k in 0..n {
            if let Some(row) = ang_pos[k] {
                mismatch[row] = p_spec[k] - p_calc[k];
                if mismatch[row].abs() > max_mismatch {
                    max_mismatch = mismatch[row].abs();
                    worst_bus = k;
                }
            }
            if let Some(col) = mag_pos[k] {
                mismatch[n_ang + col] = q_spec[k] - q_calc[k];
                if mismatch[n_ang + col].abs() > max_mismatch {
                    max_mismatch = mismatch[n_ang + col].abs();
                    worst_bus = k;
                }
            }
        }
        if max_mismatch <= TOLERANCE {
            break;
        }
        if iterations >= MAX_ITERATIONS {
            return Err(TransmissionError::PowerFlowDiverged {
                iterations,
                mismatch: max_mismatch,
                bus: grid.buses[worst_bus].name.clone(),
            });
        }
        iterations += 1;

        let mut jac = Mat::zeros(unknowns, unknowns);
        for k in 0..n {
            for m in 0..n {
                let y = ybus[k][m];
                if y == Cplx::new(0.0, 0.0) && k != m {
                    continue;
                }
                let dt = theta[k] - theta[m];
                let (s, c) = dt.sin_cos();
                // dP_k/dtheta_m and dP_k/dV_m.
                if let Some(row) = ang_pos[k] {
                    if k == m {
                        if let Some(col) = ang_pos[m] {
                            jac[(row, col)] = -q_calc[k] - y.im * v_mag[k] * v_mag[k];
                        }
                        if let Some(col) = mag_pos[m] {
                            jac[(row, n_ang + col)] = p_calc[k] / v_mag[k] + y.re * v_mag[k];
                        }
                    } else {
                        if let Some(col) = ang_pos[m] {
                            jac[(row, col)] = v_mag[k] * v_mag[m] * (y.re * s - y.im * c);
                        }
                        if let Some(col) = mag_pos[m] {
                            jac[(row, n_ang + col)] = v_mag[k] * (y.re * c + y.im * s);
                        }
                    }
                }
                // dQ_k/dtheta_m and dQ_k/dV_m.
                if let Some(qrow) = mag_pos[k] {
                    if k == m {
                        if let Some(col) = ang_pos[m] {
                            jac[(n_ang + qrow, col)] = p_calc[k] - y.re * v_mag[k] * v_mag[k];
                        }
                        if let Some(col) = mag_pos[m] {
                            jac[(n_ang + qrow, n_ang + col)] =
                                q_calc[k] / v_mag[k] - y.im * v_mag[k];
                        }
                    } else {
                        if let Some(col) = ang_pos[m] {
                            jac[(n_ang + qrow, col)] =
                                -v_mag[k] * v_mag[m] * (y.re * c + y.im * s);
                        }
                        if let Some(col) = mag_pos[m] {
                            jac[(n_ang + qrow, n_ang + col)] = v_mag[k] * (y.re * s - y.im * c);
                        }
                    }
                }
            }
        }

        let lu = Lu::factor(jac).map_err(|_| TransmissionError::PowerFlowDiverged {
            iterations,
            mismatch: max_mismatch,
            bus: grid.buses[worst_bus].name.clone(),
        })?;
        lu.solve_in_place(&mut mismatch);
        for k in 0..n {
            if let Some(row) = ang_pos[k] {
                theta[k] += mismatch[row];
            }
            if let Some(col) = mag_pos[k] {
                v_mag[k] += mismatch[n_ang + col];
            }
        }
    }

    let (p_calc, q_calc) = calc(&v_mag, &theta);
    let v_rect: Vec<Cplx> = (0..n)
        .map(|k| Cplx::from_polar(v_mag[k], theta[k]))
        .collect();
    let s_injection_pu: Vec<Cplx> = (0..n).map(|k| Cplx::new(p_calc[k], q_calc[k])).collect();

    // Allocate bus-level generation back to units: dispatch P for non-slack
    // units, network balance for the slack; reactive power split equally
    // among a bus's units.
    let mut gens_at_bus = vec![0usize; n];
    for g in &grid.gens {
        gens_at_bus[g.bus] += 1;
    }
    let mut gen_s_pu = Vec::with_capacity(grid.gens.len());
    for g in &grid.gens {
        let q_bus = q_calc[g.bus] + load[g.bus].im;
        let q = q_bus / gens_at_bus[g.bus] as f64;
        let p = if g.slack {
            let others: f64 = grid
                .gens
                .iter()
                .filter(|o| o.bus == g.bus && !o.slack)
                .map(|o| o.p_mw / grid.s_base_mva)
                .sum();
            p_calc[g.bus] + load[g.bus].re - others
        } else {
            g.p_mw / grid.s_base_mva
        };
        gen_s_pu.push(Cplx::new(p, q));
    }

    Ok(PowerFlowSolution {
        v_rect,
        v_mag,
        theta_rad: theta,
        s_injection_pu,
        gen_s_pu,
        iterations,
        max_mismatch,
    })
}

fn check_connected(grid: &Grid) -> Result<(), TransmissionError> {
    let n = grid.buses.len();
    let mut adjacency = vec![Vec::new(); n];
    for br in &grid.branches {
        adjacency[br.from].push(br.to);
        adjacency[br.to].push(br.from);
    }
    let start = grid
        .gens
        .iter()
        .find(|g| g.slack)
        .map(|g| g.bus)
        .unwrap_or(0);
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([start]);
    seen[start] = true;
    while let Some(k) = queue.pop_front() {
        for &m in &adjacency[k] {
            if !seen[m] {
                seen[m] = true;
                queue.push_back(m);
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(TransmissionError::Islanded {
            bus: grid.buses[missing].name.clone(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus_grid() -> Grid {
        Grid::from_toml_str(
            r#"
            name = "g2"
            s_base_mva = 100.0

            [[bus]]
            name = "bus1"

            [[bus]]
            name = "bus2"

            [[branch]]
            from = "bus1"
            to = "bus2"
            r_pu = 0.0
            x_pu = 0.1

            [[generator]]
            name = "gen1"
            bus = "bus1"
            h_s = 5.0
            xd_pu = 0.2
            r_droop = 0.05
            tg_s = 0.5
            p_min_mw = 0.0
            p_max_mw = 200.0
            slack = true

            [[load]]
            bus = "bus2"
            p_mw = 100.0
            q_mvar = 50.0
        "#,
        )
        .unwrap()
    }

    #[test]
    fn zero_load_gives_flat_solution_exactly() {
        let mut grid = two_bus_grid();
        grid.loads.clear();
        let sol = solve_power_flow(&grid, &BTreeMap::new()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.v_mag, vec![1.0, 1.0]);
        assert_eq!(sol.theta_rad, vec![0.0, 0.0]);
    }

    #[test]
    fn two_bus_matches_gauss_seidel_oracle() {
        let grid = two_bus_grid();
        let sol = solve_power_flow(&grid, &BTreeMap::new()).unwrap();

        // Independent oracle: Gauss-Seidel on V2 with fixed V1 = 1+j0.
        let y12 = Cplx::new(0.0, 10.0); // -1/(j0.1)
        let y22 = Cplx::new(0.0, -10.0);
        let s2 = Cplx::new(-1.0, -0.5);
        let mut v2 = Cplx::new(1.0, 0.0);
        for _ in 0..200 {
            let rhs = (s2 / v2).conj() - y12 * Cplx::new(1.0, 0.0);
            v2 = rhs / y22;
        }
        assert!((sol.v_rect[1] - v2).norm() < 1e-8, "{} vs {v2}", sol.v_rect[1]);
        // Slack covers the load plus losses (lossless line: exactly P).
        assert!((sol.gen_s_pu[0].re - 1.0).abs() < 1e-7);
    }

    #[test]
    fn disconnected_bus_is_reported_as_islanded() {
        let mut grid = two_bus_grid();
        grid.branches.clear();
        let err = solve_power_flow(&grid, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, TransmissionError::Islanded { .. }));
    }

    #[test]
    fn boundary_load_shifts_the_solution() {
        let grid = two_bus_grid();
        let mut boundary = BTreeMap::new();
        boundary.insert("bus2".to_string(), Cplx::new(30.0, 9.0));
        let sol_heavy = solve_power_flow(&grid, &boundary).unwrap();
        let sol_base = solve_power_flow(&grid, &BTreeMap::new()).unwrap();
        assert!(sol_heavy.v_mag[1] < sol_base.v_mag[1]);
        assert!((sol_heavy.gen_s_pu[0].re - 1.3).abs() < 1e-6);
    }
}
