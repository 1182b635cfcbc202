//! Max-margin certificates and the dataset constants used by the bounds.

use serde::{Deserialize, Serialize};

use crate::data::JointDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, SquareMatrix};
use crate::loss::{self, LossSpec};
use crate::qp::{self, KktResiduals, Polyhedron};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum Separability<T> {
    Separable { witness: Vec<T> },
    NotSeparable,
}

impl<T> Separability<T> {
    pub fn is_separable(&self) -> bool {
        matches!(self, Separability::Separable { .. })
    }
}

fn polyhedron_of<T: Scalar>(ds: &JointDataset<T>, idx: &[usize]) -> Result<Polyhedron<T>> {
    Polyhedron::new(ds.dim(), idx.iter().map(|&i| ds.x(i).to_vec()).collect())
}

pub fn separability_check<T: Scalar>(ds: &JointDataset<T>) -> Result<Separability<T>> {
    ds.require_absorbed()?;
    let all: Vec<usize> = (0..ds.len()).collect();
    match qp::min_norm_in_polyhedron(&polyhedron_of(ds, &all)?, T::kkt_tol()) {
        Ok(s) => Ok(Separability::Separable { witness: s.w }),
        Err(Error::Infeasible { .. }) => Ok(Separability::NotSeparable),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginCertificate<T> {
    pub w_hat: Vec<T>,
    /// Smallest normalized margin of `w_hat`.
    pub phi: T,
    /// Smallest margin off the support set; `None` when every point is a support vector.
    pub theta: Option<T>,
    /// Indices (into the dataset) with unit margin.
    pub support: Vec<usize>,
    /// `support ∩ I_m` for every task.
    pub task_support: Vec<Vec<usize>>,
    /// Dual coefficients over the whole dataset, zero off the support set.
    pub alpha: Vec<T>,
    pub sigma_max: T,
    /// Support vectors linearly independent and every dual strictly positive.
    pub non_degenerate: bool,
    /// Duals are uniquely determined (independent support vectors).
    pub dual_unique: bool,
    /// Support vectors span the same space as the whole dataset.
    pub sv_span_full: bool,
    pub residuals: KktResiduals,
}

impl<T: Scalar> MarginCertificate<T> {
    pub fn direction(&self) -> Vec<T> {
        linalg::scaled(T::one() / linalg::norm(&self.w_hat), &self.w_hat)
    }

    pub fn w_hat_norm(&self) -> T {
        linalg::norm(&self.w_hat)
    }
}

fn certificate_over<T: Scalar>(ds: &JointDataset<T>, idx: &[usize]) -> Result<MarginCertificate<T>> {
    ds.require_absorbed()?;
    let sol = match qp::min_norm_in_polyhedron(&polyhedron_of(ds, idx)?, T::kkt_tol()) {
        Ok(s) => s,
        Err(Error::Infeasible { .. }) => return Err(Error::NotSeparable),
        Err(e) => return Err(e),
    };
    let w_hat = sol.w;
    let norm = linalg::norm(&w_hat);
    let margins: Vec<T> = idx.iter().map(|&i| linalg::dot(ds.x(i), &w_hat)).collect();
    let mut support = Vec::new();
    let mut theta: Option<T> = None;
    for (k, &i) in idx.iter().enumerate() {
        if (margins[k] - T::one()).abs() <= T::tie_tol() {
            support.push(i);
        } else {
            theta = Some(theta.map_or(margins[k], |t| t.min(margins[k])));
        }
    }
    let phi = margins.iter().copied().fold(T::infinity(), T::min) / norm;

    let sv: Vec<&[T]> = support.iter().map(|&i| ds.x(i)).collect();
    let sv_rank = linalg::rank(&sv);
    let dual_unique = sv_rank == support.len();
    // minimum-norm α with Σ α_i x_i = ŵ
    let moment = SquareMatrix::outer_sum(ds.dim(), sv.iter().map(|x| (T::one(), *x)));
    let y = moment.pinv_solve(&w_hat);
    let mut sv_alpha: Vec<T> = sv.iter().map(|x| linalg::dot(x, &y)).collect();
    if sv_alpha.iter().any(|a| *a < T::zero()) {
        // fall back to the solver's multipliers, which are a valid nonnegative choice
        sv_alpha = support
            .iter()
            .map(|&i| {
                let k = idx.iter().position(|&j| j == i).expect("support within idx");
                sol.alpha[k]
            })
            .collect();
    }
    let mut alpha = vec![T::zero(); ds.len()];
    for (k, &i) in support.iter().enumerate() {
        alpha[i] = sv_alpha[k];
    }
    let positive = sv_alpha.iter().all(|a| *a > T::tie_tol());
    let all: Vec<&[T]> = idx.iter().map(|&i| ds.x(i)).collect();
    let sv_span_full = sv_rank == linalg::rank(&all);
    let task_support = (0..ds.num_tasks())
        .map(|m| support.iter().copied().filter(|i| ds.task(m).contains(i)).collect())
        .collect();
    let sub: Vec<&[T]> = all.clone();
    let sigma = SquareMatrix::outer_sum(ds.dim(), sub.iter().map(|x| (T::one(), *x)))
        .eigenvalue_range()
        .1
        .max(T::zero())
        .sqrt();
    Ok(MarginCertificate {
        w_hat,
        phi,
        theta,
        support,
        task_support,
        alpha,
        sigma_max: sigma,
        non_degenerate: dual_unique && positive,
        dual_unique,
        sv_span_full,
        residuals: sol.residuals,
    })
}

pub fn max_margin_certificate<T: Scalar>(ds: &JointDataset<T>) -> Result<MarginCertificate<T>> {
    let all: Vec<usize> = (0..ds.len()).collect();
    certificate_over(ds, &all)
}

/// Certificate for the points of task `m` alone; indices stay global.
pub fn task_max_margin<T: Scalar>(ds: &JointDataset<T>, m: usize) -> Result<MarginCertificate<T>> {
    if m >= ds.num_tasks() {
        return Err(Error::Precondition(format!("task {m} out of range")));
    }
    certificate_over(ds, ds.task(m))
}

pub const DEFAULT_B_RESOLUTION: usize = 3600;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BEstimate<T> {
    /// min over unit v of Σ [x_iᵀv]⁻, from the arrangement vertices.
    pub value: T,
    /// Minimizing direction.
    pub direction: Vec<T>,
    /// Best value on the angular grid.
    pub grid_value: T,
    /// Grid value minus the Lipschitz slack; a certified lower bound.
    pub grid_lower_bound: T,
}

fn negative_mass<T: Scalar>(xs: &[&[T]], v: &[T]) -> T {
    xs.iter().map(|x| (-linalg::dot(x, v)).max(T::zero())).sum()
}

fn unit<T: Scalar>(v: Vec<T>) -> Option<Vec<T>> {
    let n = linalg::norm(&v);
    (n > T::epsilon().sqrt()).then(|| linalg::scaled(T::one() / n, &v))
}

/// Nonseparability coefficient for `d ≤ 3`.
///
/// On the sphere the objective is a linear function on each cell of the
/// arrangement `{x_iᵀv = 0}`, and wherever it is positive it has no interior
/// minimum, so the minimum sits on a vertex of the arrangement: `v ⟂ x_i`
/// for `d = 2`, `v ∥ x_i × x_j` (or `v ⟂ x_i` when nothing else crosses) for
/// `d = 3`. Those candidates are evaluated exactly. The grid pass at the
/// given resolution is reported alongside with its Lipschitz slack.
pub fn nonseparability_coefficient_b<T: Scalar>(ds: &JointDataset<T>, resolution: usize) -> Result<BEstimate<T>> {
    ds.require_absorbed()?;
    let d = ds.dim();
    if d > 3 {
        return Err(Error::Precondition(format!(
            "nonseparability coefficient is only computed for d ≤ 3, got d = {d}"
        )));
    }
    if resolution < 4 {
        return Err(Error::Precondition("grid resolution must be at least 4".into()));
    }
    let xs: Vec<&[T]> = ds.vectors();
    let mut cands: Vec<Vec<T>> = Vec::new();
    match d {
        1 => {
            cands.push(vec![T::one()]);
            cands.push(vec![-T::one()]);
        }
        2 => {
            for x in &xs {
                if let Some(v) = unit(vec![-x[1], x[0]]) {
                    cands.push(linalg::scaled(-T::one(), &v));
                    cands.push(v);
                }
            }
            cands.push(vec![T::one(), T::zero()]);
        }
        _ => {
            for (a, x) in xs.iter().enumerate() {
                for y in &xs[a + 1..] {
                    let c = vec![
                        x[1] * y[2] - x[2] * y[1],
                        x[2] * y[0] - x[0] * y[2],
                        x[0] * y[1] - x[1] * y[0],
                    ];
                    if let Some(v) = unit(c) {
                        cands.push(linalg::scaled(-T::one(), &v));
                        cands.push(v);
                    }
                }
                let e = if x[0].abs() <= x[1].abs() && x[0].abs() <= x[2].abs() {
                    [T::one(), T::zero(), T::zero()]
                } else if x[1].abs() <= x[2].abs() {
                    [T::zero(), T::one(), T::zero()]
                } else {
                    [T::zero(), T::zero(), T::one()]
                };
                let c = vec![
                    x[1] * e[2] - x[2] * e[1],
                    x[2] * e[0] - x[0] * e[2],
                    x[0] * e[1] - x[1] * e[0],
                ];
                if let Some(v) = unit(c) {
                    cands.push(linalg::scaled(-T::one(), &v));
                    cands.push(v);
                }
            }
            cands.push(vec![T::one(), T::zero(), T::zero()]);
        }
    }
    let (value, direction) = cands
        .into_iter()
        .map(|v| (negative_mass(&xs, &v), v))
        .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"))
        .expect("at least one candidate");

    let mass: T = xs.iter().map(|x| linalg::norm(x)).sum();
    let (grid_value, spacing) = match d {
        1 => (value, T::zero()),
        2 => {
            let mut best = T::infinity();
            for k in 0..resolution {
                let a = T::TAU() * T::lit(k as f64) / T::lit(resolution as f64);
                best = best.min(negative_mass(&xs, &[a.cos(), a.sin()]));
            }
            (best, T::PI() / T::lit(resolution as f64))
        }
        _ => {
            let n_lat = resolution / 2;
            let d_lat = T::PI() / T::lit(n_lat as f64);
            let d_lon = T::TAU() / T::lit(resolution as f64);
            let mut best = T::infinity();
            for i in 0..=n_lat {
                let lat = d_lat * T::lit(i as f64);
                for k in 0..resolution {
                    let lon = d_lon * T::lit(k as f64);
                    let v = [lat.sin() * lon.cos(), lat.sin() * lon.sin(), lat.cos()];
                    best = best.min(negative_mass(&xs, &v));
                }
            }
            (best, (d_lat * d_lat + d_lon * d_lon).sqrt() / T::lit(2.0))
        }
    };
    Ok(BEstimate {
        value,
        direction,
        grid_value,
        grid_lower_bound: (grid_value - mass * spacing).max(T::zero()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonSepCertificate<T> {
    pub b: T,
    pub big_b: T,
    pub beta_m: Vec<T>,
    /// Σ_m ‖∇L_m(w★)‖² / β_m.
    pub v_star: T,
    pub w_star: Vec<T>,
    pub loss_at_w_star: T,
    pub grad_norm_at_w_star: T,
    /// Strong-convexity coefficient of the joint loss on the ball around `w_star`.
    pub mu: T,
    pub radius_sq: T,
    /// λ_min of the joint Hessian at `w_star`.
    pub hessian_min_eig: T,
    /// λ_min(Σ x_i x_iᵀ).
    pub lambda_min: T,
    pub eta: T,
    pub k: usize,
    pub newton_iterations: usize,
}

/// Unique minimizer of the joint loss by damped Newton.
pub fn joint_minimizer<T: Scalar>(spec: &LossSpec<T>, ds: &JointDataset<T>) -> Result<(Vec<T>, usize)> {
    let d = ds.dim();
    let mut w = vec![T::zero(); d];
    let tol = T::grad_tol();
    let mut g = loss::joint_gradient(spec, ds, &w)?;
    let mut f = loss::joint_loss(spec, ds, &w)?;
    for it in 0..200 {
        let gn = linalg::norm(&g);
        if gn < tol {
            return Ok((w, it));
        }
        let h = loss::joint_hessian(spec, ds, &w)?;
        let neg: Vec<T> = g.iter().map(|v| -*v).collect();
        let p = h
            .cholesky()
            .map(|c| c.solve(&neg))
            .ok_or_else(|| Error::Degenerate("joint Hessian is not positive definite".into()))?;
        let slope = linalg::dot(&g, &p);
        let mut t = T::one();
        let mut accepted = false;
        {
            // a full step that shrinks the gradient without raising the loss
            // beyond rounding is taken as is
            let mut trial = w.clone();
            linalg::axpy(T::one(), &p, &mut trial);
            let ft = loss::joint_loss(spec, ds, &trial)?;
            let gt = loss::joint_gradient(spec, ds, &trial)?;
            let noise = T::epsilon() * T::lit(64.0) * (T::one() + f.abs());
            if ft <= f + noise && linalg::norm(&gt) < gn {
                w = trial;
                f = ft;
                g = gt;
                continue;
            }
        }
        for _ in 0..60 {
            let mut trial = w.clone();
            linalg::axpy(t, &p, &mut trial);
            let ft = loss::joint_loss(spec, ds, &trial)?;
            if ft <= f + T::lit(1e-4) * t * slope {
                w = trial;
                f = ft;
                accepted = true;
                break;
            }
            t /= T::lit(2.0);
        }
        if !accepted {
            // near the optimum loss differences drown in rounding; take the
            // full step if it reduces the gradient
            let mut trial = w.clone();
            linalg::axpy(T::one(), &p, &mut trial);
            let gt = loss::joint_gradient(spec, ds, &trial)?;
            if linalg::norm(&gt) < gn {
                w = trial;
                f = loss::joint_loss(spec, ds, &w)?;
            } else {
                return Err(Error::NonConvergence {
                    iterations: it,
                    stationarity: gn.to_f64_lossy(),
                    feasibility: 0.0,
                    complementarity: 0.0,
                });
            }
        }
        g = loss::joint_gradient(spec, ds, &w)?;
    }
    Err(Error::NonConvergence {
        iterations: 200,
        stationarity: linalg::norm(&g).to_f64_lossy(),
        feasibility: 0.0,
        complementarity: 0.0,
    })
}

/// Constants of the strictly non-separable case, at step size `eta` and
/// `k` steps per stage.
pub fn nonsep_certificate<T: Scalar>(
    ds: &JointDataset<T>,
    spec: &LossSpec<T>,
    eta: T,
    k: usize,
) -> Result<NonSepCertificate<T>> {
    ds.require_absorbed()?;
    let d = ds.dim();
    let r = linalg::rank(&ds.vectors());
    if r < d {
        return Err(Error::RankDeficient { rank: r, dim: d });
    }
    let b = nonseparability_coefficient_b(ds, DEFAULT_B_RESOLUTION)?.value;
    if !(b > T::zero()) {
        return Err(Error::Separable);
    }
    let sm = loss::smoothness_constants(spec, ds)?;
    let (w_star, newton_iterations) = joint_minimizer(spec, ds)?;
    let v_star: T = (0..ds.num_tasks())
        .map(|m| {
            let g = loss::task_gradient(spec, ds, m, &w_star).expect("validated");
            linalg::norm_sq(&g) / sm.beta_m[m]
        })
        .sum();
    let loss_at_w_star = loss::joint_loss(spec, ds, &w_star)?;
    let grad_norm_at_w_star = linalg::norm(&loss::joint_gradient(spec, ds, &w_star)?);
    let kk = T::lit(k as f64);
    let s2 = T::SQRT_2();
    let inner = (loss_at_w_star + s2 * eta * kk * sm.big_b * v_star) / (spec.g * b) + linalg::norm(&w_star);
    let radius_sq = inner * inner + T::lit(2.0) * s2 * eta * eta * kk * kk * sm.big_b * v_star;
    let radius = radius_sq.sqrt();
    let moment = SquareMatrix::outer_sum(d, ds.points().iter().map(|p| (T::one(), p.x.as_slice())));
    let lambda_min = moment.eigenvalue_range().0;
    // ℓ″ is unimodal, so on each margin interval its minimum sits at an end
    let curv = ds
        .points()
        .iter()
        .map(|p| {
            let c = linalg::dot(&p.x, &w_star);
            let s = radius * linalg::norm(&p.x);
            spec.second_derivative(c - s).min(spec.second_derivative(c + s))
        })
        .fold(T::infinity(), T::min);
    let hessian_min_eig = loss::joint_hessian(spec, ds, &w_star)?.eigenvalue_range().0;
    Ok(NonSepCertificate {
        b,
        big_b: sm.big_b,
        beta_m: sm.beta_m,
        v_star,
        w_star,
        loss_at_w_star,
        grad_norm_at_w_star,
        mu: curv * lambda_min,
        radius_sq,
        hessian_min_eig,
        lambda_min,
        eta,
        k,
        newton_iterations,
    })
}

/// Target of the residual on the support span: solves
/// `x_iᵀw̃ = ln(η/α_i)` for `i ∈ S` with `w̃ − w0 ∈ span(S)`.
pub fn residual_target_w_tilde<T: Scalar>(
    ds: &JointDataset<T>,
    cert: &MarginCertificate<T>,
    eta: T,
    w0: &[T],
) -> Result<Vec<T>> {
    if !(eta > T::zero()) {
        return Err(Error::Precondition("step size must be positive".into()));
    }
    if w0.len() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: w0.len(),
        });
    }
    if cert.support.iter().any(|&i| !(cert.alpha[i] > T::zero())) {
        return Err(Error::Degenerate("a support vector has a non-positive dual".into()));
    }
    let sv: Vec<&[T]> = cert.support.iter().map(|&i| ds.x(i)).collect();
    let rhs: Vec<T> = cert
        .support
        .iter()
        .zip(&sv)
        .map(|(&i, x)| (eta / cert.alpha[i]).ln() - linalg::dot(x, w0))
        .collect();
    let c = SquareMatrix::gram(&sv).pinv_solve(&rhs);
    let mut w = w0.to_vec();
    for (ck, x) in c.iter().zip(&sv) {
        linalg::axpy(*ck, x, &mut w);
    }
    let scale = rhs.iter().fold(T::one(), |m, v| m.max(v.abs()));
    let worst = cert
        .support
        .iter()
        .zip(&sv)
        .map(|(&i, x)| (linalg::dot(x, &w) - (eta / cert.alpha[i]).ln()).abs())
        .fold(T::zero(), T::max);
    if worst > T::kkt_tol().sqrt() * T::lit(1e-3) * scale {
        return Err(Error::Degenerate(format!(
            "support equations are inconsistent (residual {:.3e})",
            worst.to_f64_lossy()
        )));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_bump_toy, make_span_toy, make_pair_dataset, DataPoint, PairSplit, TaskPartition};
    use approx::assert_abs_diff_eq;

    fn ds(rows: &[&[f64]]) -> JointDataset<f64> {
        let pts = rows.iter().map(|r| DataPoint::positive(r)).collect();
        JointDataset::new(pts, TaskPartition::single(rows.len()).unwrap())
            .unwrap()
            .into_absorbed()
    }

    #[test]
    fn single_point_certificate() {
        let c = max_margin_certificate(&ds(&[&[2.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(c.w_hat[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(c.phi, 2.0, epsilon = 1e-14);
        assert_eq!(c.support, vec![0]);
        assert_abs_diff_eq!(c.alpha[0], 0.25, epsilon = 1e-14);
        assert!(c.theta.is_none() && c.non_degenerate);
    }

    #[test]
    fn span_is_degenerate_with_uniform_duals() {
        let c = max_margin_certificate(&make_span_toy::<f64>().into_absorbed()).unwrap();
        assert_eq!(c.support, vec![0, 1, 2, 3]);
        assert!(!c.non_degenerate && !c.dual_unique);
        for a in &c.alpha {
            assert_abs_diff_eq!(*a, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn pair_support_and_second_margin() {
        for split in [PairSplit::Contradicting, PairSplit::Aligned] {
            let c = max_margin_certificate(&make_pair_dataset::<f64>(split).into_absorbed()).unwrap();
            assert_abs_diff_eq!(c.w_hat[0], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(c.w_hat[1], 0.0, epsilon = 1e-12);
            assert_eq!(c.support, vec![0, 3]);
            assert_abs_diff_eq!(c.theta.unwrap(), 1.1, epsilon = 1e-12);
            assert!(c.non_degenerate && c.sv_span_full);
        }
    }

    #[test]
    fn c3_direction_and_singleton_task() {
        let toy = make_bump_toy::<f64>().into_absorbed();
        let c = max_margin_certificate(&toy).unwrap();
        let dir = c.direction();
        assert_abs_diff_eq!(dir[0], 1.0, epsilon = 1e-12);
        let t = task_max_margin(&toy, 1).unwrap();
        assert_abs_diff_eq!(t.w_hat[0], 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(t.w_hat[1], 0.4, epsilon = 1e-14);
        assert_eq!(t.support, vec![1]);
    }

    #[test]
    fn separability_and_b() {
        let bad = ds(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        assert!(!separability_check(&bad).unwrap().is_separable());
        assert!(matches!(max_margin_certificate(&bad), Err(Error::NotSeparable)));
        let line = ds(&[&[1.0], &[-1.0]]);
        assert_abs_diff_eq!(nonseparability_coefficient_b(&line, 16).unwrap().value, 1.0);
        let good = make_span_toy::<f64>().into_absorbed();
        assert!(separability_check(&good).unwrap().is_separable());
        assert_abs_diff_eq!(nonseparability_coefficient_b(&good, 64).unwrap().value, 0.0);
    }

    #[test]
    fn w_tilde_single_support() {
        let one = ds(&[&[1.0, 0.0]]);
        let mut c = max_margin_certificate(&one).unwrap();
        c.alpha[0] = 1.0;
        let w = residual_target_w_tilde(&one, &c, 1.0, &[0.7, -0.3]).unwrap();
        assert_abs_diff_eq!(w[0], 0.0, epsilon = 1e-15);
        assert_eq!(w[1], -0.3);
        let two = ds(&[&[2.0, 0.0]]);
        let c = max_margin_certificate(&two).unwrap();
        let w = residual_target_w_tilde(&two, &c, 1.0, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(w[0], 4f64.ln() / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn symmetric_pair_minimizer_is_origin() {
        let pair = ds(&[&[1.0, 0.5], &[-1.0, -0.5], &[0.0, 1.0], &[0.0, -1.0]]);
        let c = nonsep_certificate(&pair, &LossSpec::logistic(), 0.1, 1).unwrap();
        assert!(linalg::norm(&c.w_star) < 1e-12);
        assert!(c.mu > 0.0 && c.mu <= c.hessian_min_eig + 1e-15);
    }
}
