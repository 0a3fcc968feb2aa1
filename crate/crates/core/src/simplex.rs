//! Two-phase primal simplex for small dense linear programs.
//!
//! Solves `max c'x  s.t.  A x <= b, x >= 0` where `b` may have negative
//! entries. Pivoting follows Bland's rule, so the solver cannot cycle and,
//! more importantly here, always pivots the same way: results are exactly
//! reproducible run to run.

use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Outcome class of an LP solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solution of `max c'x s.t. Ax <= b, x >= 0`.
#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Structural variable values (meaningful only when `status` is `Optimal`).
    pub x: Vec<T>,
    /// Objective value at `x`.
    pub objective: T,
}

struct Tableau<T> {
    m: usize,
    width: usize,
    rows: Vec<Vec<T>>,
    obj: Vec<T>,
    basis: Vec<usize>,
    tol: T,
}

impl<T: Scalar> Tableau<T> {
    fn pivot(&mut self, row: usize, col: usize) {
        let inv = T::one() / self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        for i in 0..self.m {
            if i != row {
                let factor = self.rows[i][col];
                if factor != T::zero() {
                    for j in 0..self.width {
                        let delta = factor * self.rows[row][j];
                        self.rows[i][j] -= delta;
                    }
                }
            }
        }
        let factor = self.obj[col];
        if factor != T::zero() {
            for j in 0..self.width {
                let delta = factor * self.rows[row][j];
                self.obj[j] -= delta;
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations until optimal or unbounded. `allowed` marks
    /// columns permitted to enter the basis.
    fn optimize(&mut self, allowed: &[bool]) -> LpStatus {
        let max_iter = 200 + 20 * (self.m + self.width);
        for _ in 0..max_iter {
            let entering = (0..self.width - 1)
                .find(|&j| allowed[j] && self.obj[j] < -self.tol);
            let Some(col) = entering else {
                return LpStatus::Optimal;
            };
            let rhs = self.width - 1;
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.m {
                let a = self.rows[i][col];
                if a > self.tol {
                    let ratio = self.rows[i][rhs] / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - self.tol
                                || (ratio < lr + self.tol && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return LpStatus::Unbounded;
            };
            self.pivot(row, col);
        }
        // Bland's rule precludes cycling; hitting the cap means the tolerance
        // is mismatched to the data. Report as infeasible rather than loop.
        LpStatus::Infeasible
    }

    /// Rebuilds the reduced-cost row for objective coefficients `c`.
    fn set_objective(&mut self, c: &[T]) {
        for j in 0..self.width {
            let cj = if j < c.len() { c[j] } else { T::zero() };
            self.obj[j] = -cj;
        }
        for i in 0..self.m {
            let cb = if self.basis[i] < c.len() {
                c[self.basis[i]]
            } else {
                T::zero()
            };
            if cb != T::zero() {
                for j in 0..self.width {
                    let delta = cb * self.rows[i][j];
                    self.obj[j] += delta;
                }
            }
        }
    }
}

/// Solves `max c'x s.t. Ax <= b, x >= 0` with a deterministic two-phase
/// primal simplex. Tolerance on reduced costs and ratios is `1e-9` scaled
/// to the element type.
pub fn maximize<T: Scalar>(c: &[T], a: &Mat<T>, b: &[T]) -> LpSolution<T> {
    let m = a.rows();
    let n = a.cols();
    assert_eq!(c.len(), n, "objective length mismatch");
    assert_eq!(b.len(), m, "rhs length mismatch");
    let tol = T::c(1e-9).max(T::epsilon() * T::c(100.0));

    let negative_rows: Vec<usize> = (0..m).filter(|&i| b[i] < T::zero()).collect();
    let n_art = negative_rows.len();
    // Columns: structural | slacks | artificials | rhs.
    let width = n + m + n_art + 1;
    let mut rows = Vec::with_capacity(m);
    let mut basis = vec![0usize; m];
    let mut art_index = 0usize;
    for i in 0..m {
        let negate = b[i] < T::zero();
        let sign = if negate { -T::one() } else { T::one() };
        let mut row = vec![T::zero(); width];
        for j in 0..n {
            row[j] = sign * a[(i, j)];
        }
        row[n + i] = sign;
        row[width - 1] = sign * b[i];
        if negate {
            let col = n + m + art_index;
            row[col] = T::one();
            basis[i] = col;
            art_index += 1;
        } else {
            basis[i] = n + i;
        }
        rows.push(row);
    }

    let mut t = Tableau {
        m,
        width,
        rows,
        obj: vec![T::zero(); width],
        basis,
        tol,
    };

    if n_art > 0 {
        // Phase 1: maximize -(sum of artificials).
        let mut c1 = vec![T::zero(); n + m + n_art];
        for coeff in &mut c1[n + m..] {
            *coeff = -T::one();
        }
        t.set_objective(&c1);
        let allowed = vec![true; width - 1];
        let status = t.optimize(&allowed);
        let infeasibility = -t.obj[width - 1];
        if status != LpStatus::Optimal || infeasibility > t.tol {
            return LpSolution {
                status: LpStatus::Infeasible,
                x: vec![T::zero(); n],
                objective: T::zero(),
            };
        }
    }

    // Phase 2: original objective; artificials may not re-enter.
    let mut c2 = vec![T::zero(); n + m + n_art];
    c2[..n].copy_from_slice(c);
    t.set_objective(&c2);
    let mut allowed = vec![true; width - 1];
    for flag in allowed.iter_mut().take(n + m + n_art).skip(n + m) {
        *flag = false;
    }
    let status = t.optimize(&allowed);
    if status != LpStatus::Optimal {
        return LpSolution {
            status,
            x: vec![T::zero(); n],
            objective: T::zero(),
        };
    }

    let mut x = vec![T::zero(); n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.rows[i][width - 1];
        }
    }
    let objective = x.iter().zip(c).map(|(&xi, &ci)| xi * ci).sum();
    LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn solve(c: &[f64], rows: &[Vec<f64>], b: &[f64]) -> LpSolution<f64> {
        maximize(c, &Mat::from_rows(rows), b)
    }

    #[test]
    fn textbook_two_variable_case() {
        let sol = solve(
            &[3.0, 2.0],
            &[vec![1.0, 1.0], vec![1.0, 3.0]],
            &[4.0, 6.0],
        );
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.objective, 12.0, epsilon = 1e-9);
        assert_relative_eq!(sol.x[0], 4.0, epsilon = 1e-9);
        assert_relative_eq!(sol.x[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn negative_rhs_triggers_phase_one() {
        // x >= 1 encoded as -x <= -1, plus x <= 3.
        let sol = solve(&[1.0], &[vec![-1.0], vec![1.0]], &[-1.0, 3.0]);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn detects_infeasible_system() {
        // x <= 1 and x >= 2.
        let sol = solve(&[1.0], &[vec![1.0], vec![-1.0]], &[1.0, -2.0]);
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded_direction() {
        // Only a lower bound on x.
        let sol = solve(&[1.0], &[vec![-1.0]], &[1.0]);
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn degenerate_redundant_constraint() {
        let sol = solve(
            &[1.0, 1.0],
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            &[1.0, 1.0, 2.0],
        );
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.objective, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn minimization_via_negated_objective() {
        // min x+y s.t. x+y >= 1 becomes max -(x+y).
        let sol = solve(&[-1.0, -1.0], &[vec![-1.0, -1.0]], &[-1.0]);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.objective, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let c = [1.0, 2.0, 0.5];
        let rows = vec![
            vec![1.0, 1.0, 1.0],
            vec![2.0, 0.5, -1.0],
            vec![-1.0, 1.0, 0.0],
        ];
        let b = [5.0, 3.0, -0.5];
        let first = solve(&c, &rows, &b);
        let second = solve(&c, &rows, &b);
        assert_eq!(first.x, second.x);
        assert_eq!(first.objective, second.objective);
    }
}
