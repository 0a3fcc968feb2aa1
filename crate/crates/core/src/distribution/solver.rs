//! Steady-state feeder power flow.
//!
//! Radial feeders use the backward-forward sweep: aggregate load currents
//! from the leaves toward the substation, then propagate voltage drops
//! outward, repeating until the voltage update falls below tolerance.
//! Meshed feeders fall back to a fixed-point iteration on the phase-domain
//! admittance matrix with the substation phases held as the source.

use std::collections::BTreeMap;

use super::feeder::FeederNetwork;
use super::FeederError;
use crate::linalg::{Lu, Mat};
use crate::Cplx;

/// Convergence tolerance on the voltage update, pu.
pub const TOLERANCE: f64 = 1e-8;
/// Sweep / fixed-point iteration cap.
pub const MAX_ITERATIONS: usize = 100;

/// Inputs for one feeder solve.
#[derive(Debug, Clone)]
pub struct FeederInputs<'a> {
    /// Substation per-phase voltage, pu.
    pub v_sub: [Cplx; 3],
    /// Realized DER active power in MW by DER id (unity power factor).
    pub der_p_mw: &'a BTreeMap<String, f64>,
    /// Per-load multipliers parallel to `FeederNetwork::loads`; empty means
    /// all ones.
    pub load_scale: &'a [f64],
}

/// A converged feeder operating point.
#[derive(Debug, Clone)]
pub struct FeederSolution {
    /// Node voltages, pu; zero on absent phases.
    pub v: Vec<[Cplx; 3]>,
    /// Branch currents oriented parent -> child, pu.
    pub branch_i: Vec<[Cplx; 3]>,
    /// Substation net three-phase power (loads minus DER output plus
    /// losses), physical MVA per phase.
    pub s_substation: [Cplx; 3],
    /// Realized per-DER per-phase power, physical MVA.
    pub der_s: BTreeMap<String, [Cplx; 3]>,
    pub iterations: usize,
    /// Final infinity-norm voltage update, pu.
    pub residual: f64,
    /// True when the meshed fixed-point path solved this case.
    pub used_fallback: bool,
}

impl FeederSolution {
    /// Substation power with DER output added back: the feeder's gross
    /// load as seen from transmission once DER injections are modeled
    /// separately on the transmission side.
    pub fn s_boundary_gross(&self) -> [Cplx; 3] {
        let mut out = self.s_substation;
        for s in self.der_s.values() {
            for p in 0..3 {
                out[p] += s[p];
            }
        }
        out
    }

    /// Per-phase power balance residual: substation MVA minus loads plus
    /// DERs minus losses. Near zero for a converged solution.
    pub fn power_balance_mva(&self, net: &FeederNetwork, inputs: &FeederInputs) -> [Cplx; 3] {
        let base = net.s_base_1ph_mva();
        let mut residual = self.s_substation;
        for (l, load) in net.loads.iter().enumerate() {
            let scale = inputs.load_scale.get(l).copied().unwrap_or(1.0);
            for (r, s) in residual.iter_mut().zip(load.s_pu) {
                *r -= s * scale * base;
            }
        }
        for s in self.der_s.values() {
            for p in 0..3 {
                residual[p] += s[p];
            }
        }
        for (b, branch) in net.branches.iter().enumerate() {
            for p in net.nodes[branch.to].phases.iter() {
                let dv = self.v[branch.from][p] - self.v[branch.to][p];
                residual[p] -= dv * self.branch_i[b][p].conj() * base;
            }
        }
        residual
    }
}

/// Per-phase pu injections (negative for consumption) at every node.
fn nodal_injections(
    net: &FeederNetwork,
    inputs: &FeederInputs,
    v: &[[Cplx; 3]],
) -> Result<Vec<[Cplx; 3]>, FeederError> {
    let base = net.s_base_1ph_mva();
    let mut s_inj = vec![[Cplx::new(0.0, 0.0); 3]; net.nodes.len()];
    for (l, load) in net.loads.iter().enumerate() {
        let scale = inputs.load_scale.get(l).copied().unwrap_or(1.0);
        for (inj, s) in s_inj[load.node].iter_mut().zip(load.s_pu) {
            *inj -= s * scale;
        }
    }
    for der in &net.ders {
        let p_mw = inputs.der_p_mw.get(&der.id).copied().unwrap_or(0.0);
        let per_phase = p_mw / der.phases.count() as f64 / base;
        for p in der.phases.iter() {
            s_inj[der.node][p] += Cplx::new(per_phase, 0.0);
        }
    }
    // Convert power injections to current injections at the present voltage.
    let mut i_inj = vec![[Cplx::new(0.0, 0.0); 3]; net.nodes.len()];
    for (n, node) in net.nodes.iter().enumerate() {
        for p in node.phases.iter() {
            let s = s_inj[n][p];
            if s != Cplx::new(0.0, 0.0) {
                let vp = v[n][p];
                if vp.norm() < 1e-6 {
                    return Err(FeederError::NonConvergence {
                        feeder: net.name.clone(),
                        iterations: 0,
                        residual: f64::INFINITY,
                    });
                }
                i_inj[n][p] = (s / vp).conj();
            }
        }
    }
    Ok(i_inj)
}

/// Solves the feeder at the given operating inputs.
pub fn solve_feeder(
    net: &FeederNetwork,
    inputs: &FeederInputs,
) -> Result<FeederSolution, FeederError> {
    for der in &net.ders {
        if !inputs.der_p_mw.contains_key(&der.id) {
            return Err(FeederError::InvalidNetwork {
                feeder: net.name.clone(),
                message: format!("missing injection for DER {:?}", der.id),
            });
        }
    }
    if net.is_radial() {
        sweep_solve(net, inputs)
    } else {
        ybus_solve(net, inputs)
    }
}

fn init_voltages(net: &FeederNetwork, v_sub: [Cplx; 3]) -> Vec<[Cplx; 3]> {
    let mut v = vec![[Cplx::new(0.0, 0.0); 3]; net.nodes.len()];
    for (n, node) in net.nodes.iter().enumerate() {
        for p in node.phases.iter() {
            v[n][p] = v_sub[p];
        }
    }
    v
}

fn sweep_solve(
    net: &FeederNetwork,
    inputs: &FeederInputs,
) -> Result<FeederSolution, FeederError> {
    let n = net.nodes.len();
    let mut v = init_voltages(net, inputs.v_sub);
    let mut branch_i = vec![[Cplx::new(0.0, 0.0); 3]; net.branches.len()];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        let i_inj = nodal_injections(net, inputs, &v)?;
        // Backward: accumulate currents from the leaves to the substation.
        let mut downstream = vec![[Cplx::new(0.0, 0.0); 3]; n];
        for (node, inj) in i_inj.iter().enumerate() {
            for p in 0..3 {
                downstream[node][p] = -inj[p];
            }
        }
        for &b in net.sweep_order.iter().rev() {
            let branch = &net.branches[b];
            for p in 0..3 {
                branch_i[b][p] = downstream[branch.to][p];
                downstream[branch.from][p] += branch_i[b][p];
            }
        }
        // Forward: propagate voltage drops from the substation outward.
        let mut delta_max = 0.0f64;
        for &b in &net.sweep_order {
            let branch = &net.branches[b];
            let phases = net.nodes[branch.to].phases;
            for p in phases.iter() {
                let mut drop = Cplx::new(0.0, 0.0);
                for q in phases.iter() {
                    drop += branch.z_pu[p][q] * branch_i[b][q];
                }
                let v_new = v[branch.from][p] - drop;
                delta_max = delta_max.max((v_new - v[branch.to][p]).norm());
                v[branch.to][p] = v_new;
            }
        }
        residual = delta_max;
        if residual <= TOLERANCE {
            return Ok(finish_solution(
                net, inputs, v, branch_i, iterations, residual, false,
            ));
        }
    }
    Err(FeederError::NonConvergence {
        feeder: net.name.clone(),
        iterations,
        residual,
    })
}

/// Phase-domain node index map for the admittance fallback.
struct PhaseIndex {
    /// (node, phase) -> matrix position; substation phases excluded.
    slot: Vec<[Option<usize>; 3]>,
    order: Vec<(usize, usize)>,
}

impl PhaseIndex {
    fn build(net: &FeederNetwork) -> Self {
        let mut slot = vec![[None; 3]; net.nodes.len()];
        let mut order = Vec::new();
        for (nn, node) in net.nodes.iter().enumerate() {
            if nn == net.substation {
                continue;
            }
            for p in node.phases.iter() {
                slot[nn][p] = Some(order.len());
                order.push((nn, p));
            }
        }
        Self { slot, order }
    }
}

fn ybus_solve(
    net: &FeederNetwork,
    inputs: &FeederInputs,
) -> Result<FeederSolution, FeederError> {
    let index = PhaseIndex::build(net);
    let m = index.order.len();
    // Dense complex admittance as separate G and B for the real embedding.
    let mut y_ll = vec![vec![Cplx::new(0.0, 0.0); m]; m];
    let mut y_ls = vec![[Cplx::new(0.0, 0.0); 3]; m];
    let mut branch_y: Vec<[[Cplx; 3]; 3]> = Vec::with_capacity(net.branches.len());
    for branch in &net.branches {
        let phases = net.nodes[branch.to].phases;
        let y = invert_phase_block(&branch.z_pu, phases.iter().collect::<Vec<_>>().as_slice());
        branch_y.push(y);
        for p in phases.iter() {
            for q in phases.iter() {
                let admittance = y[p][q];
                let add = |node_a: usize,
                           pa: usize,
                           node_b: usize,
                           pb: usize,
                           sign: f64,
                           y_ll: &mut Vec<Vec<Cplx>>,
                           y_ls: &mut Vec<[Cplx; 3]>| {
                    if let Some(i) = index.slot[node_a][pa] {
                        match index.slot[node_b][pb] {
                            Some(j) => y_ll[i][j] += admittance * sign,
                            None => {
                                if node_b == net.substation {
                                    y_ls[i][pb] += admittance * sign;
                                }
                            }
                        }
                    }
                };
                add(branch.from, p, branch.from, q, 1.0, &mut y_ll, &mut y_ls);
                add(branch.to, p, branch.to, q, 1.0, &mut y_ll, &mut y_ls);
                add(branch.from, p, branch.to, q, -1.0, &mut y_ll, &mut y_ls);
                add(branch.to, p, branch.from, q, -1.0, &mut y_ll, &mut y_ls);
            }
        }
    }

    // Real 2m x 2m embedding [[G, -B], [B, G]].
    let mut embedded = Mat::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let y = y_ll[i][j];
            embedded[(i, j)] = y.re;
            embedded[(i, j + m)] = -y.im;
            embedded[(i + m, j)] = y.im;
            embedded[(i + m, j + m)] = y.re;
        }
    }
    let lu = Lu::factor(embedded).map_err(|_| FeederError::NonConvergence {
        feeder: net.name.clone(),
        iterations: 0,
        residual: f64::INFINITY,
    })?;

    let mut v = init_voltages(net, inputs.v_sub);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        let i_inj = nodal_injections(net, inputs, &v)?;
        // Right-hand side: injections minus the substation coupling.
        let mut rhs = vec![0.0; 2 * m];
        for (row, &(node, p)) in index.order.iter().enumerate() {
            let mut total = i_inj[node][p];
            for (y, v_s) in y_ls[row].iter().zip(inputs.v_sub) {
                total -= y * v_s;
            }
            rhs[row] = total.re;
            rhs[row + m] = total.im;
        }
        lu.solve_in_place(&mut rhs);
        let mut delta_max = 0.0f64;
        for (row, &(node, p)) in index.order.iter().enumerate() {
            let v_new = Cplx::new(rhs[row], rhs[row + m]);
            delta_max = delta_max.max((v_new - v[node][p]).norm());
            v[node][p] = v_new;
        }
        residual = delta_max;
        if residual <= TOLERANCE {
            let mut branch_i = vec![[Cplx::new(0.0, 0.0); 3]; net.branches.len()];
            for (b, branch) in net.branches.iter().enumerate() {
                let phases = net.nodes[branch.to].phases;
                for p in phases.iter() {
                    let mut current = Cplx::new(0.0, 0.0);
                    for q in phases.iter() {
                        current += branch_y[b][p][q] * (v[branch.from][q] - v[branch.to][q]);
                    }
                    branch_i[b][p] = current;
                }
            }
            return Ok(finish_solution(
                net, inputs, v, branch_i, iterations, residual, true,
            ));
        }
    }
    Err(FeederError::NonConvergence {
        feeder: net.name.clone(),
        iterations,
        residual,
    })
}

/// Inverts the submatrix of `z` restricted to `phases`, returning a full
/// 3x3 matrix that is zero outside those phases.
fn invert_phase_block(z: &[[Cplx; 3]; 3], phases: &[usize]) -> [[Cplx; 3]; 3] {
    let k = phases.len();
    let mut a = vec![vec![Cplx::new(0.0, 0.0); 2 * k]; k];
    for (i, &p) in phases.iter().enumerate() {
        for (j, &q) in phases.iter().enumerate() {
            a[i][j] = z[p][q];
        }
        a[i][k + i] = Cplx::new(1.0, 0.0);
    }
    // Gauss-Jordan with partial pivoting on the complex block.
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| {
                a[x][col]
                    .norm()
                    .partial_cmp(&a[y][col].norm())
                    .expect("finite impedance entries")
            })
            .expect("non-empty block");
        a.swap(col, pivot);
        let inv = Cplx::new(1.0, 0.0) / a[col][col];
        for entry in &mut a[col] {
            *entry *= inv;
        }
        let pivot_row = a[col].clone();
        for (row, row_data) in a.iter_mut().enumerate() {
            if row != col {
                let factor = row_data[col];
                if factor != Cplx::new(0.0, 0.0) {
                    for (dst, src) in row_data.iter_mut().zip(&pivot_row) {
                        *dst -= factor * src;
                    }
                }
            }
        }
    }
    let mut out = [[Cplx::new(0.0, 0.0); 3]; 3];
    for (i, &p) in phases.iter().enumerate() {
        for (j, &q) in phases.iter().enumerate() {
            out[p][q] = a[i][k + j];
        }
    }
    out
}

fn finish_solution(
    net: &FeederNetwork,
    inputs: &FeederInputs,
    v: Vec<[Cplx; 3]>,
    branch_i: Vec<[Cplx; 3]>,
    iterations: usize,
    residual: f64,
    used_fallback: bool,
) -> FeederSolution {
    let base = net.s_base_1ph_mva();
    // Substation current: branches leaving the substation plus local loads.
    let mut i_sub = [Cplx::new(0.0, 0.0); 3];
    for (b, branch) in net.branches.iter().enumerate() {
        if branch.from == net.substation {
            for p in 0..3 {
                i_sub[p] += branch_i[b][p];
            }
        }
    }
    for (l, load) in net.loads.iter().enumerate() {
        if load.node == net.substation {
            let scale = inputs.load_scale.get(l).copied().unwrap_or(1.0);
            for p in net.nodes[net.substation].phases.iter() {
                let s = load.s_pu[p] * scale;
                if s != Cplx::new(0.0, 0.0) {
                    i_sub[p] += (s / v[net.substation][p]).conj();
                }
            }
        }
    }
    for der in &net.ders {
        if der.node == net.substation {
            let p_mw = inputs.der_p_mw.get(&der.id).copied().unwrap_or(0.0);
            let per_phase = p_mw / der.phases.count() as f64 / base;
            for p in der.phases.iter() {
                let s = Cplx::new(per_phase, 0.0);
                i_sub[p] -= (s / v[net.substation][p]).conj();
            }
        }
    }
    let mut s_substation = [Cplx::new(0.0, 0.0); 3];
    for p in 0..3 {
        s_substation[p] = v[net.substation][p] * i_sub[p].conj() * base;
    }
    let mut der_s = BTreeMap::new();
    for der in &net.ders {
        let p_mw = inputs.der_p_mw.get(&der.id).copied().unwrap_or(0.0);
        let per_phase = p_mw / der.phases.count() as f64;
        let mut s = [Cplx::new(0.0, 0.0); 3];
        for p in der.phases.iter() {
            s[p] = Cplx::new(per_phase, 0.0);
        }
        der_s.insert(der.id.clone(), s);
    }
    FeederSolution {
        v,
        branch_i,
        s_substation,
        der_s,
        iterations,
        residual,
        used_fallback,
    }
}
