//! Implicit trapezoidal integration of mass-matrix DAE systems.
//!
//! Systems have the form `M x' = f(x, y)`, `0 = g(x, y)` with a diagonal,
//! strictly positive mass matrix. Each step solves the coupled corrector
//! equations for `(x, y)` simultaneously with Newton's method, so the
//! algebraic constraints hold at every accepted point.

use crate::linalg::{Lu, Mat};
use crate::scalar::{norm_inf, Scalar};

/// A mass-matrix DAE: `M x' = f(x, y)`, `0 = g(x, y)`.
///
/// Inputs `u` are owned by the implementation and held constant across a
/// step; the integrator sees only the current `(x, y)` point.
pub trait Dae<T: Scalar> {
    fn n_states(&self) -> usize;
    fn n_algebraic(&self) -> usize;
    /// Diagonal of the mass matrix; entries must be positive.
    fn mass_diagonal(&self, out: &mut [T]);
    fn f(&self, x: &[T], y: &[T], out: &mut [T]);
    fn g(&self, x: &[T], y: &[T], out: &mut [T]);
    /// Analytic Jacobian blocks evaluated at `(x, y)`.
    fn jacobian(
        &self,
        x: &[T],
        y: &[T],
        dfdx: &mut Mat<T>,
        dfdy: &mut Mat<T>,
        dgdx: &mut Mat<T>,
        dgdy: &mut Mat<T>,
    );
}

/// Integration failure.
#[derive(Debug, Clone, thiserror::Error)]
pub enum DaeError {
    #[error(
        "Newton corrector diverged at t={time} (dt={dt}, residual {residual:.3e}); states: {state_dump}"
    )]
    NewtonDivergence {
        time: f64,
        dt: f64,
        residual: f64,
        state_dump: String,
    },
    #[error("corrector Jacobian is singular at t={time}: {source}")]
    SingularJacobian {
        time: f64,
        source: crate::linalg::SingularMatrix,
    },
    #[error("mass matrix diagonal entry {index} is not positive")]
    NonPositiveMass { index: usize },
}

/// Corrector controls for [`trapezoidal_step`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions<T> {
    /// Convergence threshold on the infinity norm of the full residual.
    pub tolerance: T,
    pub max_iterations: usize,
    /// Levels of step halving attempted before giving up.
    pub max_halvings: usize,
}

impl<T: Scalar> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: T::c(1e-8),
            max_iterations: 20,
            max_halvings: 4,
        }
    }
}

/// Takes one implicit trapezoidal step of size `dt` from `(x, y)` at time
/// `t`, halving the step on corrector divergence up to the configured depth.
/// On success `x` and `y` hold the accepted point at `t + dt`.
pub fn trapezoidal_step<T: Scalar, D: Dae<T>>(
    dae: &D,
    t: f64,
    dt: T,
    x: &mut [T],
    y: &mut [T],
    opts: &NewtonOptions<T>,
) -> Result<(), DaeError> {
    step_recursive(dae, t, dt, x, y, opts, opts.max_halvings)
}

fn step_recursive<T: Scalar, D: Dae<T>>(
    dae: &D,
    t: f64,
    dt: T,
    x: &mut [T],
    y: &mut [T],
    opts: &NewtonOptions<T>,
    halvings_left: usize,
) -> Result<(), DaeError> {
    match attempt_step(dae, t, dt, x, y, opts) {
        Ok(()) => Ok(()),
        Err(DaeError::NewtonDivergence { .. }) if halvings_left > 0 => {
            let half = dt * T::c(0.5);
            step_recursive(dae, t, half, x, y, opts, halvings_left - 1)?;
            step_recursive(
                dae,
                t + half.to_f64().unwrap_or(0.0),
                half,
                x,
                y,
                opts,
                halvings_left - 1,
            )
        }
        Err(err) => Err(err),
    }
}

fn attempt_step<T: Scalar, D: Dae<T>>(
    dae: &D,
    t: f64,
    dt: T,
    x: &mut [T],
    y: &mut [T],
    opts: &NewtonOptions<T>,
) -> Result<(), DaeError> {
    let nx = dae.n_states();
    let ny = dae.n_algebraic();
    let n = nx + ny;
    debug_assert_eq!(x.len(), nx);
    debug_assert_eq!(y.len(), ny);

    let mut mass = vec![T::zero(); nx];
    dae.mass_diagonal(&mut mass);
    if let Some(i) = mass.iter().position(|&m| m <= T::zero()) {
        return Err(DaeError::NonPositiveMass { index: i });
    }

    let mut f_prev = vec![T::zero(); nx];
    dae.f(x, y, &mut f_prev);
    let x_prev = x.to_vec();
    let y_prev = y.to_vec();

    let half_dt = dt * T::c(0.5);
    let mut f_new = vec![T::zero(); nx];
    let mut g_new = vec![T::zero(); ny];
    let mut residual = vec![T::zero(); n];
    let mut dfdx = Mat::zeros(nx, nx);
    let mut dfdy = Mat::zeros(nx, ny);
    let mut dgdx = Mat::zeros(ny, nx);
    let mut dgdy = Mat::zeros(ny, ny);

    let mut last_norm = T::infinity();
    for _ in 0..opts.max_iterations {
        dae.f(x, y, &mut f_new);
        dae.g(x, y, &mut g_new);
        for i in 0..nx {
            residual[i] = mass[i] * (x[i] - x_prev[i]) - half_dt * (f_new[i] + f_prev[i]);
        }
        residual[nx..].copy_from_slice(&g_new);
        let norm = norm_inf(&residual);
        if norm <= opts.tolerance {
            return Ok(());
        }
        if !norm.is_finite() || norm > T::c(1e6).max(last_norm * T::c(1e3)) {
            break;
        }
        last_norm = norm;

        dae.jacobian(x, y, &mut dfdx, &mut dfdy, &mut dgdx, &mut dgdy);
        let mut jac = Mat::zeros(n, n);
        for i in 0..nx {
            for j in 0..nx {
                jac[(i, j)] = -half_dt * dfdx[(i, j)];
            }
            jac[(i, i)] += mass[i];
            for j in 0..ny {
                jac[(i, nx + j)] = -half_dt * dfdy[(i, j)];
            }
        }
        for i in 0..ny {
            for j in 0..nx {
                jac[(nx + i, j)] = dgdx[(i, j)];
            }
            for j in 0..ny {
                jac[(nx + i, nx + j)] = dgdy[(i, j)];
            }
        }
        let lu = Lu::factor(jac).map_err(|source| DaeError::SingularJacobian { time: t, source })?;
        lu.solve_in_place(&mut residual);
        for i in 0..nx {
            x[i] -= residual[i];
        }
        for j in 0..ny {
            y[j] -= residual[nx + j];
        }
    }

    // Restore the pre-step point so a halved retry starts cleanly.
    x.copy_from_slice(&x_prev);
    y.copy_from_slice(&y_prev);
    let dump: Vec<String> = x_prev.iter().map(|v| format!("{v:.6e}")).collect();
    Err(DaeError::NewtonDivergence {
        time: t,
        dt: dt.to_f64().unwrap_or(f64::NAN),
        residual: last_norm.to_f64().unwrap_or(f64::NAN),
        state_dump: dump.join(", "),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// M w' = p - k*y, 0 = y - w: a single state driven by constant power
    /// with a pass-through algebraic variable.
    struct ConstPower {
        mass: f64,
        p: f64,
        k: f64,
    }

    impl Dae<f64> for ConstPower {
        fn n_states(&self) -> usize {
            1
        }
        fn n_algebraic(&self) -> usize {
            1
        }
        fn mass_diagonal(&self, out: &mut [f64]) {
            out[0] = self.mass;
        }
        fn f(&self, _x: &[f64], y: &[f64], out: &mut [f64]) {
            out[0] = self.p - self.k * y[0];
        }
        fn g(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
            out[0] = y[0] - x[0];
        }
        fn jacobian(
            &self,
            _x: &[f64],
            _y: &[f64],
            dfdx: &mut Mat<f64>,
            dfdy: &mut Mat<f64>,
            dgdx: &mut Mat<f64>,
            dgdy: &mut Mat<f64>,
        ) {
            dfdx[(0, 0)] = 0.0;
            dfdy[(0, 0)] = -self.k;
            dgdx[(0, 0)] = -1.0;
            dgdy[(0, 0)] = 1.0;
        }
    }

    #[test]
    fn constant_forcing_is_integrated_exactly() {
        // Trapezoidal rule is exact for a constant right-hand side:
        // dw = p*dt/M = 0.1 * (1/30) / 10.
        let sys = ConstPower {
            mass: 10.0,
            p: 0.1,
            k: 0.0,
        };
        let mut x = [0.0];
        let mut y = [0.0];
        let dt = 1.0 / 30.0;
        trapezoidal_step(&sys, 0.0, dt, &mut x, &mut y, &NewtonOptions::default()).unwrap();
        assert_relative_eq!(x[0], 0.1 * dt / 10.0, epsilon = 1e-14);
        assert_relative_eq!(y[0], x[0], epsilon = 1e-12);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let sys = ConstPower {
            mass: 2.0,
            p: 1.0,
            k: 1.0,
        };
        let mut x = [1.0];
        let mut y = [1.0];
        trapezoidal_step(&sys, 0.0, 0.1, &mut x, &mut y, &NewtonOptions::default()).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_decay_matches_trapezoidal_closed_form() {
        // M w' = -k w has the discrete map w+ = w * (1 - a)/(1 + a),
        // a = k dt / (2 M).
        let sys = ConstPower {
            mass: 1.0,
            p: 0.0,
            k: 3.0,
        };
        let mut x = [2.0];
        let mut y = [2.0];
        let dt = 0.05;
        let opts = NewtonOptions {
            tolerance: 1e-13,
            ..NewtonOptions::default()
        };
        trapezoidal_step(&sys, 0.0, dt, &mut x, &mut y, &opts).unwrap();
        let a = 3.0 * dt / 2.0;
        assert_relative_eq!(x[0], 2.0 * (1.0 - a) / (1.0 + a), epsilon = 1e-10);
    }

    #[test]
    fn non_positive_mass_is_rejected() {
        let sys = ConstPower {
            mass: 0.0,
            p: 0.0,
            k: 1.0,
        };
        let mut x = [0.0];
        let mut y = [0.0];
        let err =
            trapezoidal_step(&sys, 0.0, 0.1, &mut x, &mut y, &NewtonOptions::default()).unwrap_err();
        assert!(matches!(err, DaeError::NonPositiveMass { index: 0 }));
    }
}
