//! Small dense QPs over margin polyhedra `{w : a_jᵀw ≥ 1}`.
//!
//! Both the min-norm problem and the Euclidean projection are solved by one
//! dual active-set iteration (Goldfarb–Idnani with identity Hessian). It
//! starts from the unconstrained minimizer `w0`, adds the most violated
//! constraint at each step and drops constraints whose multiplier would turn
//! negative, so it needs no feasible starting point and proves infeasibility
//! when a violated constraint cannot be reached.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SquareMatrix};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron<T> {
    dim: usize,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> Polyhedron<T> {
    pub fn new(dim: usize, rows: Vec<Vec<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Precondition("polyhedron dimension must be at least 1".into()));
        }
        for (j, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            if !linalg::all_finite(r) {
                return Err(Error::Precondition(format!("constraint {j} has a non-finite entry")));
            }
        }
        Ok(Self { dim, rows })
    }

    pub fn from_rows<V: AsRef<[T]>>(rows: &[V]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::Precondition("polyhedron needs at least one row to infer its dimension".into()))?;
        Self::new(dim, rows.iter().map(|r| r.as_ref().to_vec()).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.rows[j]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// `a_jᵀw − 1` for every row.
    pub fn slacks(&self, w: &[T]) -> Vec<T> {
        self.rows.iter().map(|a| linalg::dot(a, w) - T::one()).collect()
    }

    pub fn contains(&self, w: &[T], tol: T) -> bool {
        self.slacks(w).iter().all(|s| *s >= -tol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution<T> {
    pub w: Vec<T>,
    /// One multiplier per constraint, zero off the working set.
    pub alpha: Vec<T>,
    /// Linearly independent constraints carrying the multipliers.
    pub working_set: Vec<usize>,
    /// Every constraint tight at `w` within the tie tolerance.
    pub active: Vec<usize>,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

fn kkt<T: Scalar>(p: &Polyhedron<T>, w0: &[T], w: &[T], alpha: &[T]) -> KktResiduals {
    let mut r = linalg::sub(w, w0);
    for (a, al) in p.rows.iter().zip(alpha) {
        linalg::axpy(-*al, a, &mut r);
    }
    let stationarity = r.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let slacks = p.slacks(w);
    let feasibility = slacks.iter().fold(T::zero(), |m, s| m.max(-*s));
    let complementarity = slacks
        .iter()
        .zip(alpha)
        .fold(T::zero(), |m, (s, a)| m.max((*s * *a).abs()));
    KktResiduals {
        stationarity: stationarity.to_f64_lossy(),
        feasibility: feasibility.to_f64_lossy(),
        complementarity: complementarity.to_f64_lossy(),
    }
}

fn tight_set<T: Scalar>(p: &Polyhedron<T>, w: &[T]) -> Vec<usize> {
    p.slacks(w)
        .iter()
        .enumerate()
        .filter(|(_, s)| s.abs() <= T::tie_tol())
        .map(|(j, _)| j)
        .collect()
}

/// Solves `(NᵀN) c = rhs` for the working-set rows `N`.
fn solve_working<T: Scalar>(p: &Polyhedron<T>, set: &[usize], rhs: &[T]) -> Option<Vec<T>> {
    if set.is_empty() {
        return Some(Vec::new());
    }
    let rows: Vec<&[T]> = set.iter().map(|&j| p.row(j)).collect();
    let g = SquareMatrix::gram(&rows);
    g.cholesky().map(|c| c.solve(rhs)).or_else(|| g.solve(rhs))
}

/// Argmin ½‖w − w0‖² over the polyhedron.
pub fn project_onto_polyhedron<T: Scalar>(p: &Polyhedron<T>, w0: &[T], tol: T) -> Result<QpSolution<T>> {
    if w0.len() != p.dim {
        return Err(Error::DimensionMismatch {
            expected: p.dim,
            got: w0.len(),
        });
    }
    if !(tol > T::zero()) {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    let n = p.len();
    let d = p.dim;
    let cap = 50 * n.max(1);
    let row_scale = p.rows.iter().fold(T::one(), |m, a| m.max(linalg::norm(a)));
    let tiny = T::epsilon() * T::lit(1e3) * row_scale * row_scale;

    let mut w = w0.to_vec();
    let mut set: Vec<usize> = Vec::new();
    let mut u: Vec<T> = Vec::new();
    let mut iterations = 0;

    loop {
        let slacks = p.slacks(&w);
        let Some((q, sq)) = slacks
            .iter()
            .copied()
            .enumerate()
            .filter(|(j, _)| !set.contains(j))
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite slacks"))
        else {
            break;
        };
        if sq >= -tol {
            break;
        }
        let nq = p.row(q).to_vec();
        let mut uq = T::zero();
        loop {
            iterations += 1;
            if iterations > cap {
                let alpha = scatter(n, &set, &u);
                let r = kkt(p, w0, &w, &alpha);
                return Err(Error::NonConvergence {
                    iterations,
                    stationarity: r.stationarity,
                    feasibility: r.feasibility,
                    complementarity: r.complementarity,
                });
            }
            let proj: Vec<T> = set.iter().map(|&j| linalg::dot(p.row(j), &nq)).collect();
            let r = solve_working(p, &set, &proj).ok_or_else(|| {
                Error::Degenerate("working set became linearly dependent".into())
            })?;
            let mut z = nq.clone();
            for (k, &j) in set.iter().enumerate() {
                linalg::axpy(-r[k], p.row(j), &mut z);
            }
            let zz = linalg::norm_sq(&z);
            let mut drop: Option<(usize, T)> = None;
            for (k, rk) in r.iter().enumerate() {
                if *rk > T::zero() {
                    let t = u[k] / *rk;
                    if drop.is_none_or(|(_, best)| t < best) {
                        drop = Some((k, t));
                    }
                }
            }
            let t1 = drop.map_or(T::infinity(), |(_, t)| t);
            let viol = T::one() - linalg::dot(&nq, &w);
            let t2 = if zz > tiny { viol / zz } else { T::infinity() };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(Error::Infeasible {
                    violation: viol.to_f64_lossy(),
                });
            }
            if t2.is_finite() {
                linalg::axpy(t, &z, &mut w);
            }
            for (k, rk) in r.iter().enumerate() {
                u[k] -= t * *rk;
            }
            uq += t;
            if t2 <= t1 {
                set.push(q);
                u.push(uq);
                break;
            }
            let (k, _) = drop.expect("t1 finite");
            set.remove(k);
            u.remove(k);
        }
        if set.len() > d {
            return Err(Error::Degenerate("working set exceeds the dimension".into()));
        }
    }

    // re-solve the equality system on the final working set
    if !set.is_empty() {
        let rhs: Vec<T> = set.iter().map(|&j| T::one() - linalg::dot(p.row(j), w0)).collect();
        if let Some(c) = solve_working(p, &set, &rhs) {
            let mut wp = w0.to_vec();
            for (k, &j) in set.iter().enumerate() {
                linalg::axpy(c[k], p.row(j), &mut wp);
            }
            let ok = c.iter().all(|v| *v >= -tol) && p.contains(&wp, tol);
            if ok {
                w = wp;
                u = c.into_iter().map(|v| v.max(T::zero())).collect();
            }
        }
    }

    let alpha = scatter(n, &set, &u);
    let residuals = kkt(p, w0, &w, &alpha);
    let scale = (T::one() + linalg::norm(&w) * row_scale).to_f64_lossy();
    if residuals.max() > tol.to_f64_lossy() * scale {
        return Err(Error::NonConvergence {
            iterations,
            stationarity: residuals.stationarity,
            feasibility: residuals.feasibility,
            complementarity: residuals.complementarity,
        });
    }
    let active = tight_set(p, &w);
    Ok(QpSolution {
        w,
        alpha,
        working_set: set,
        active,
        residuals,
        iterations,
    })
}

fn scatter<T: Scalar>(n: usize, set: &[usize], u: &[T]) -> Vec<T> {
    let mut alpha = vec![T::zero(); n];
    for (k, &j) in set.iter().enumerate() {
        alpha[j] = u[k];
    }
    alpha
}

/// Argmin ‖w‖² over the polyhedron.
pub fn min_norm_in_polyhedron<T: Scalar>(p: &Polyhedron<T>, tol: T) -> Result<QpSolution<T>> {
    project_onto_polyhedron(p, &vec![T::zero(); p.dim], tol)
}

#[derive(Clone, Copy, Debug)]
pub enum OracleObjective<'a, T> {
    MinNorm,
    MinDist(&'a [T]),
}

/// Enumeration budget of [`active_set_oracle`].
pub const ORACLE_MAX_CONSTRAINTS: usize = 12;

/// Brute-force solution: every subset of at most `d` constraints is taken as
/// the active set, the equality system solved, and the best candidate that
/// is primal and dual feasible returned.
pub fn active_set_oracle<T: Scalar>(p: &Polyhedron<T>, objective: OracleObjective<'_, T>) -> Result<QpSolution<T>> {
    let n = p.len();
    if n > ORACLE_MAX_CONSTRAINTS {
        return Err(Error::BudgetExceeded {
            constraints: n,
            limit: ORACLE_MAX_CONSTRAINTS,
        });
    }
    let w0 = match objective {
        OracleObjective::MinNorm => vec![T::zero(); p.dim],
        OracleObjective::MinDist(w0) => {
            if w0.len() != p.dim {
                return Err(Error::DimensionMismatch {
                    expected: p.dim,
                    got: w0.len(),
                });
            }
            w0.to_vec()
        }
    };
    let tol = T::kkt_tol().sqrt() * T::lit(1e-2);
    let mut best: Option<(T, Vec<usize>, Vec<T>, Vec<T>)> = None;
    let mut candidates = 0;
    for mask in 0u32..(1u32 << n) {
        let set: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        if set.len() > p.dim {
            continue;
        }
        let rows: Vec<&[T]> = set.iter().map(|&j| p.row(j)).collect();
        if linalg::rank(&rows) < set.len() {
            continue;
        }
        let rhs: Vec<T> = set.iter().map(|&j| T::one() - linalg::dot(p.row(j), &w0)).collect();
        let Some(c) = solve_working(p, &set, &rhs) else {
            continue;
        };
        if c.iter().any(|v| *v < -tol) {
            continue;
        }
        let mut w = w0.clone();
        for (k, &j) in set.iter().enumerate() {
            linalg::axpy(c[k], p.row(j), &mut w);
        }
        if !p.contains(&w, tol) {
            continue;
        }
        candidates += 1;
        let obj = linalg::dist_sq(&w, &w0);
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, set, c, w));
        }
    }
    let Some((_, set, c, w)) = best else {
        return Err(Error::Infeasible {
            violation: f64::INFINITY,
        });
    };
    let alpha = scatter(n, &set, &c.iter().map(|v| v.max(T::zero())).collect::<Vec<_>>());
    let residuals = kkt(p, &w0, &w, &alpha);
    let active = tight_set(p, &w);
    Ok(QpSolution {
        w,
        alpha,
        working_set: set,
        active,
        residuals,
        iterations: candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn poly(rows: &[&[f64]]) -> Polyhedron<f64> {
        Polyhedron::from_rows(rows).unwrap()
    }

    #[test]
    fn single_constraint_closed_form() {
        let s = min_norm_in_polyhedron(&poly(&[&[2.0, 0.0]]), 1e-10).unwrap();
        assert_abs_diff_eq!(s.w[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.w[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.alpha[0], 0.25, epsilon = 1e-15);
        assert_eq!(s.active, vec![0]);
    }

    #[test]
    fn projection_cases() {
        let p = poly(&[&[1.0, 0.0]]);
        let s = project_onto_polyhedron(&p, &[0.0, 0.0], 1e-10).unwrap();
        assert_eq!(s.w, vec![1.0, 0.0]);
        let s = project_onto_polyhedron(&p, &[3.0, -1.0], 1e-10).unwrap();
        assert_eq!(s.w, vec![3.0, -1.0]);
        assert!(s.active.is_empty() && s.working_set.is_empty());
        let s = project_onto_polyhedron(&poly(&[&[1.0, 1.0], &[1.0, -1.0]]), &[0.0, 0.0], 1e-10).unwrap();
        assert_abs_diff_eq!(s.w[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.w[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn contradictory_halfspaces_are_infeasible() {
        let p = poly(&[&[1.0], &[-1.0]]);
        assert!(matches!(min_norm_in_polyhedron(&p, 1e-10), Err(Error::Infeasible { .. })));
        assert!(matches!(active_set_oracle(&p, OracleObjective::MinNorm), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn oracle_budget_and_empty() {
        let rows: Vec<Vec<f64>> = (0..13).map(|i| vec![1.0, i as f64]).collect();
        let p = Polyhedron::new(2, rows).unwrap();
        assert!(matches!(
            active_set_oracle(&p, OracleObjective::MinNorm),
            Err(Error::BudgetExceeded { constraints: 13, .. })
        ));
        let empty = Polyhedron::<f64>::new(2, vec![]).unwrap();
        let s = active_set_oracle(&empty, OracleObjective::MinDist(&[0.3, -2.0])).unwrap();
        assert_eq!(s.w, vec![0.3, -2.0]);
    }

    #[test]
    fn solver_needs_constraint_drops() {
        // the first constraint added is later released
        let p = poly(&[&[1.0, 0.2], &[0.2, 1.0], &[1.0, 1.0]]);
        let s = min_norm_in_polyhedron(&p, 1e-10).unwrap();
        let o = active_set_oracle(&p, OracleObjective::MinNorm).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(s.w[k], o.w[k], epsilon = 1e-12);
        }
        assert_eq!(s.active, o.active);
    }
}
