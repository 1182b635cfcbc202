//! Observables of a run and the closed-form bound evaluators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::JointDataset;
use crate::error::{Error, Result};
use crate::geometry::{MarginCertificate, NonSepCertificate};
use crate::linalg;
use crate::loss::{self, LossKind, LossSpec};
use crate::scalar::Scalar;
use crate::train::{self, GuardInputs, GuardKind, TrainRun};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    LossJoint,
    LossTask(usize),
    AngleSine,
    NormW,
    RhoNorm,
    ForgetCycle,
    BoundLoss,
    BoundForgetLo,
    BoundForgetHi,
    DistWstarSq,
    BoundDist,
}

impl Metric {
    pub const FIXED: [Metric; 10] = [
        Metric::LossJoint,
        Metric::AngleSine,
        Metric::NormW,
        Metric::RhoNorm,
        Metric::ForgetCycle,
        Metric::BoundLoss,
        Metric::BoundForgetLo,
        Metric::BoundForgetHi,
        Metric::DistWstarSq,
        Metric::BoundDist,
    ];

    pub fn name(&self) -> String {
        match self {
            Metric::LossJoint => "loss_joint".into(),
            Metric::LossTask(m) => format!("loss_task_{m}"),
            Metric::AngleSine => "angle_sine".into(),
            Metric::NormW => "norm_w".into(),
            Metric::RhoNorm => "rho_norm".into(),
            Metric::ForgetCycle => "forget_cycle".into(),
            Metric::BoundLoss => "bound_loss".into(),
            Metric::BoundForgetLo => "bound_forget_lo".into(),
            Metric::BoundForgetHi => "bound_forget_hi".into(),
            Metric::DistWstarSq => "dist_wstar_sq".into(),
            Metric::BoundDist => "bound_dist".into(),
        }
    }

    /// Accepts the registry names; `loss_task` alone means every task.
    pub fn parse(s: &str) -> Option<Metric> {
        if let Some(m) = s.strip_prefix("loss_task_") {
            return m.parse().ok().map(Metric::LossTask);
        }
        Self::FIXED.iter().copied().find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub run_id: String,
    pub algorithm: String,
    pub stage: usize,
    /// −1 for non-cyclic runs.
    pub cycle: i64,
    pub step: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub index: Vec<usize>,
    pub measured: Vec<f64>,
    pub bound: Vec<f64>,
    /// Distance to the bound on the admissible side; negative means violated.
    pub slack: Vec<f64>,
    pub violations: usize,
    pub constants: BTreeMap<String, f64>,
}

impl BoundReport {
    /// Upper-bound report: a violation is `measured > bound`.
    pub fn upper(name: &str, index: Vec<usize>, measured: Vec<f64>, bound: Vec<f64>, constants: BTreeMap<String, f64>) -> Self {
        let slack: Vec<f64> = bound.iter().zip(&measured).map(|(b, m)| b - m).collect();
        let violations = slack.iter().filter(|s| !(**s >= 0.0)).count();
        Self {
            name: name.into(),
            index,
            measured,
            bound,
            slack,
            violations,
            constants,
        }
    }

    /// Lower-bound report: a violation is `measured < bound`.
    pub fn lower(name: &str, index: Vec<usize>, measured: Vec<f64>, bound: Vec<f64>, constants: BTreeMap<String, f64>) -> Self {
        let slack: Vec<f64> = measured.iter().zip(&bound).map(|(m, b)| m - b).collect();
        let violations = slack.iter().filter(|s| !(**s >= 0.0)).count();
        Self {
            name: name.into(),
            index,
            measured,
            bound,
            slack,
            violations,
            constants,
        }
    }

    pub fn max_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `L_{m_s}(w_K^{(t)}) − L_{m_s}(w_K^{(s)})`.
pub fn forgetting<T: Scalar>(run: &TrainRun<T>, s: usize, t: usize) -> Result<T> {
    if s > t {
        return Err(Error::Precondition(format!("forgetting needs s ≤ t, got s={s}, t={t}")));
    }
    if t >= run.stages() {
        return Err(Error::MissingSnapshot(format!("stage {t} was not reached")));
    }
    let m = run.tasks[s];
    Ok(run.stage_task_losses[t][m] - run.stage_task_losses[s][m])
}

/// `(1/M) Σ_m [L_m(w_0^{(Mj+M)}) − L_m(w_K^{(Mj+m)})]` for a cyclic run.
pub fn cycle_averaged_forgetting<T: Scalar>(run: &TrainRun<T>, j: usize) -> Result<T> {
    if !run.schedule.is_cyclic() {
        return Err(Error::Precondition("cycle-averaged forgetting needs cyclic ordering".into()));
    }
    let m = run.num_tasks;
    if (j + 1) * m > run.stages() {
        return Err(Error::MissingSnapshot(format!("cycle {j} is incomplete")));
    }
    let end = &run.stage_task_losses[j * m + m - 1];
    let total: T = (0..m).map(|task| end[task] - run.stage_task_losses[j * m + task][task]).sum();
    Ok(total / T::lit(m as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment<T> {
    /// `A⁺[p][q]`: sum of positive inner products between tasks p and q.
    pub plus: Vec<Vec<T>>,
    /// `A⁻[p][q]`: sum of absolute negative inner products.
    pub minus: Vec<Vec<T>>,
    /// Σ over unordered task pairs p < q.
    pub total_plus: T,
    pub total_minus: T,
}

pub fn alignment_sums<T: Scalar>(ds: &JointDataset<T>) -> Result<Alignment<T>> {
    ds.require_absorbed()?;
    let m = ds.num_tasks();
    let mut plus = vec![vec![T::zero(); m]; m];
    let mut minus = vec![vec![T::zero(); m]; m];
    for p in 0..m {
        for q in 0..m {
            if p == q {
                continue;
            }
            for &i in ds.task(p) {
                for &j in ds.task(q) {
                    let v = linalg::dot(ds.x(i), ds.x(j));
                    if v > T::zero() {
                        plus[p][q] += v;
                    } else if v < T::zero() {
                        minus[p][q] -= v;
                    }
                }
            }
        }
    }
    let mut total_plus = T::zero();
    let mut total_minus = T::zero();
    for p in 0..m {
        for q in (p + 1)..m {
            total_plus += plus[p][q];
            total_minus += minus[p][q];
        }
    }
    Ok(Alignment {
        plus,
        minus,
        total_plus,
        total_minus,
    })
}

/// Sine of the angle between `w` and `target`.
pub fn direction_angle<T: Scalar>(w: &[T], target: &[T]) -> Result<T> {
    let nw = linalg::norm(w);
    let nt = linalg::norm(target);
    if nw == T::zero() || nt == T::zero() {
        return Err(Error::Precondition("angle with a zero vector is undefined".into()));
    }
    let c = (linalg::dot(w, target) / (nw * nt)).max(-T::one()).min(T::one());
    Ok((T::one() - c * c).max(T::zero()).sqrt())
}

/// `w − ln(t)·ŵ` and its norm.
pub fn rho_of<T: Scalar>(w: &[T], w_hat: &[T], t: usize) -> Result<(Vec<T>, T)> {
    if t == 0 {
        return Err(Error::Precondition("the residual is defined for t ≥ 1".into()));
    }
    let mut r = w.to_vec();
    linalg::axpy(-T::lit(t as f64).ln(), w_hat, &mut r);
    let n = linalg::norm(&r);
    Ok((r, n))
}

/// Residual at the end of stage `t`, after `t + 1` completed stages.
pub fn residual_rho<T: Scalar>(run: &TrainRun<T>, cert: &MarginCertificate<T>, t: usize) -> Result<(Vec<T>, T)> {
    rho_of(run.weight_after_stage(t)?, &cert.w_hat, t + 1)
}

/// Constants shared by the cyclic loss bound and the forgetting sandwich.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyclicBoundConstants<T> {
    pub spec: LossSpec<T>,
    pub eta: T,
    pub k: usize,
    pub num_tasks: usize,
    pub n: usize,
    pub support: usize,
    pub task_sizes: Vec<usize>,
    pub task_support: Vec<usize>,
    pub phi: T,
    pub theta: Option<T>,
    pub sigma_max: T,
    pub beta: T,
    pub w0: Vec<T>,
    pub w_hat: Vec<T>,
    pub guard: T,
    pub d0: T,
    pub d1: T,
}

impl<T: Scalar> CyclicBoundConstants<T> {
    /// Fails with `GuardViolated` unless `eta` is below the guard, in which
    /// case no bound is claimed.
    pub fn new(
        ds: &JointDataset<T>,
        cert: &MarginCertificate<T>,
        spec: &LossSpec<T>,
        eta: T,
        k: usize,
        w0: &[T],
    ) -> Result<Self> {
        let beta = spec.beta()?;
        let guard = train::guard_eta(
            GuardKind::Cyclic,
            ds,
            spec,
            k,
            1,
            w0,
            &GuardInputs { margin: Some(cert), nonsep: None },
        )?;
        if !(eta < guard) {
            return Err(Error::GuardViolated {
                bound: "cyclic loss bound",
                eta: eta.to_f64_lossy(),
                guard: guard.to_f64_lossy(),
            });
        }
        let m = ds.num_tasks();
        let kk = T::lit(k as f64);
        let mm = T::lit(m as f64);
        let s = cert.sigma_max;
        let phi = cert.phi;
        let denom = phi * (T::one() - eta * mm * kk * s * s * beta);
        let d0 = (T::one() + eta * kk * s * s * s * beta / denom) * eta * kk * s / denom;
        let l0 = loss::joint_loss(spec, ds, w0)?;
        let g0 = linalg::norm_sq(&loss::joint_gradient(spec, ds, w0)?);
        let d1 = T::lit(4.0) * s * s / (phi * phi) * (l0 + d0 * g0);
        Ok(Self {
            spec: *spec,
            eta,
            k,
            num_tasks: m,
            n: ds.len(),
            support: cert.support.len(),
            task_sizes: (0..m).map(|t| ds.task(t).len()).collect(),
            task_support: cert.task_support.iter().map(Vec::len).collect(),
            phi,
            theta: cert.theta,
            sigma_max: s,
            beta,
            w0: w0.to_vec(),
            w_hat: cert.w_hat.clone(),
            guard,
            d0,
            d1,
        })
    }

    fn log_mj(&self, j: usize) -> T {
        T::lit((self.num_tasks * j) as f64).ln()
    }

    /// Upper bound on the joint loss at `w_k^{(MJ+m)}`, `J ≥ 1`.
    pub fn cyclic_loss_bound(&self, j: usize, m: usize, k: usize) -> Result<T> {
        if j == 0 {
            return Err(Error::Precondition("the cyclic loss bound needs J ≥ 1".into()));
        }
        if m >= self.num_tasks || k >= self.k {
            return Err(Error::Precondition(format!("(m, k) = ({m}, {k}) out of range")));
        }
        let jj = T::lit(j as f64);
        let frac = T::lit(k as f64) / T::lit(self.k as f64);
        let lg = self.log_mj(j);
        let s_prev: usize = self.task_support[..m].iter().sum();
        let off_prev: usize = (0..m).map(|i| self.task_sizes[i] - self.task_support[i]).sum();
        let s_coef = T::lit(self.support as f64) + (T::lit(s_prev as f64) + frac * T::lit(self.task_support[m] as f64)) / jj;
        let off_coef = T::lit((self.n - self.support) as f64)
            + (T::lit(off_prev as f64) + frac * T::lit((self.task_sizes[m] - self.task_support[m]) as f64)) / jj;
        let mut dist = self.w0.clone();
        linalg::axpy(-lg, &self.w_hat, &mut dist);
        let mut b = s_coef * self.spec.value(lg)
            + linalg::norm_sq(&dist) / (T::lit(2.0) * self.eta * T::lit(self.k as f64) * jj)
            + self.d1 / jj;
        if let Some(theta) = self.theta {
            b += off_coef * self.spec.value(theta * lg);
        }
        Ok(b)
    }

    /// Loss level `L(J)` entering the forgetting sandwich.
    pub fn loss_level(&self, j: usize) -> Result<T> {
        if j == 0 {
            return Err(Error::Precondition("L(J) needs J ≥ 1".into()));
        }
        let jj = T::lit(j as f64);
        let mj = T::lit((self.num_tasks * j) as f64);
        let lg = mj.ln();
        let off = match self.theta {
            Some(theta) => T::lit((self.n - self.support) as f64) / mj.powf(theta - T::one()),
            None => T::zero(),
        };
        let mut dist = self.w0.clone();
        linalg::axpy(-lg, &self.w_hat, &mut dist);
        Ok(((T::lit(self.support as f64) + off) * (T::one() + T::one() / mj)
            + linalg::norm_sq(&dist) / (T::lit(2.0) * self.eta * T::lit(self.k as f64))
            + self.d1)
            / jj)
    }

    /// `(lower, upper)` on the cycle-averaged forgetting of cycle `J`.
    pub fn forgetting_bounds(&self, align: &Alignment<T>, j: usize) -> Result<(T, T)> {
        if self.spec.kind != LossKind::Logistic {
            return Err(Error::Precondition("the forgetting sandwich is stated for the logistic loss".into()));
        }
        let l = self.loss_level(j)?;
        let c = self.eta * T::lit(self.k as f64) * l * l / T::lit(self.num_tasks as f64);
        Ok((-c * align.total_plus, c * align.total_minus))
    }

    pub fn constants(&self) -> BTreeMap<String, f64> {
        let mut c = BTreeMap::new();
        c.insert("eta".into(), self.eta.to_f64_lossy());
        c.insert("guard".into(), self.guard.to_f64_lossy());
        c.insert("phi".into(), self.phi.to_f64_lossy());
        c.insert("theta".into(), self.theta.map_or(f64::NAN, |t| t.to_f64_lossy()));
        c.insert("sigma_max".into(), self.sigma_max.to_f64_lossy());
        c.insert("D0".into(), self.d0.to_f64_lossy());
        c.insert("D1".into(), self.d1.to_f64_lossy());
        c
    }
}

/// Default leading constant of the non-separable distance bound.
pub const DEFAULT_DISTANCE_CONSTANT: f64 = 16.0;

/// `C·(exp(−μJ/((1+2√2)B))·‖w0 − w★‖² + B²V★ln²J/(μ³J²))`.
pub fn distance_bound<T: Scalar>(cert: &NonSepCertificate<T>, w0: &[T], j: usize, c: T) -> T {
    let jj = T::lit(j as f64);
    let two_s2 = T::lit(2.0) * T::SQRT_2();
    let first = (-cert.mu * jj / ((T::one() + two_s2) * cert.big_b)).exp() * linalg::dist_sq(w0, &cert.w_star);
    let lj = jj.ln();
    let second = cert.big_b * cert.big_b * cert.v_star * lj * lj / (cert.mu.powi(3) * jj * jj);
    c * (first + second)
}

/// Smallest leading constant for which the bound covers every measurement.
pub fn minimal_sufficient_constant<T: Scalar>(cert: &NonSepCertificate<T>, w0: &[T], js: &[usize], measured: &[T]) -> T {
    js.iter()
        .zip(measured)
        .map(|(&j, m)| *m / distance_bound(cert, w0, j, T::one()))
        .fold(T::zero(), T::max)
}

/// Least-squares slope of ln y against ln x over the positive pairs.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
