//! Scalar margin losses and the joint / per-task losses and gradients built
//! from them. Every dataset-level function expects absorbed labels, so the
//! margin of point `i` is simply `x_iᵀw`.

use serde::{Deserialize, Serialize};

use crate::data::JointDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, SquareMatrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Logistic,
    Exponential,
}

/// Constants of the tight exponential tail: for `u > ū`,
/// `(1 − e^{−μ₋u})e^{−u} ≤ −ℓ′(u) ≤ (1 + e^{−μ₊u})e^{−u}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailParams<T> {
    pub mu_plus: T,
    pub mu_minus: T,
    pub u_bar: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec<T> {
    pub kind: LossKind,
    /// Global smoothness of ℓ; `None` when ℓ″ is unbounded.
    pub beta: Option<T>,
    /// Constant with `ℓ(u) ≥ G·[u]⁻`.
    pub g: T,
    pub tail: TailParams<T>,
}

impl<T: Scalar> LossSpec<T> {
    pub fn logistic() -> Self {
        Self {
            kind: LossKind::Logistic,
            beta: Some(T::lit(0.25)),
            g: T::one(),
            tail: TailParams {
                mu_plus: T::one(),
                mu_minus: T::one(),
                u_bar: T::zero(),
            },
        }
    }

    pub fn exponential() -> Self {
        Self {
            kind: LossKind::Exponential,
            beta: None,
            g: T::one(),
            tail: TailParams {
                mu_plus: T::infinity(),
                mu_minus: T::infinity(),
                u_bar: T::zero(),
            },
        }
    }

    pub fn from_kind(kind: LossKind) -> Self {
        match kind {
            LossKind::Logistic => Self::logistic(),
            LossKind::Exponential => Self::exponential(),
        }
    }

    pub fn beta(&self) -> Result<T> {
        self.beta.ok_or_else(|| {
            Error::Precondition(format!("{:?} loss has no global smoothness constant", self.kind))
        })
    }

    #[inline]
    pub fn value(&self, u: T) -> T {
        match self.kind {
            LossKind::Logistic => {
                if u > T::zero() {
                    (-u).exp().ln_1p()
                } else {
                    -u + u.exp().ln_1p()
                }
            }
            LossKind::Exponential => (-u).exp(),
        }
    }

    #[inline]
    pub fn derivative(&self, u: T) -> T {
        match self.kind {
            LossKind::Logistic => {
                if u > T::zero() {
                    let e = (-u).exp();
                    -e / (T::one() + e)
                } else {
                    -T::one() / (T::one() + u.exp())
                }
            }
            LossKind::Exponential => -(-u).exp(),
        }
    }

    #[inline]
    pub fn second_derivative(&self, u: T) -> T {
        match self.kind {
            LossKind::Logistic => {
                let e = (-u.abs()).exp();
                let s = T::one() + e;
                e / (s * s)
            }
            LossKind::Exponential => (-u).exp(),
        }
    }
}

pub fn loss_value<T: Scalar>(spec: &LossSpec<T>, u: T) -> T {
    spec.value(u)
}

pub fn loss_derivative<T: Scalar>(spec: &LossSpec<T>, u: T) -> T {
    spec.derivative(u)
}

fn check_dim<T: Scalar>(ds: &JointDataset<T>, w: &[T]) -> Result<()> {
    ds.require_absorbed()?;
    if w.len() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: w.len(),
        });
    }
    Ok(())
}

/// Σ ℓ(x_iᵀw) over the listed rows.
pub fn loss_over<'a, T: Scalar, I>(spec: &LossSpec<T>, rows: I, w: &[T]) -> T
where
    I: IntoIterator<Item = &'a [T]>,
{
    let mut acc = T::zero();
    for x in rows {
        acc += spec.value(linalg::dot(x, w));
    }
    acc
}

/// Writes Σ ℓ′(x_iᵀw)·x_i over the listed rows into `out`.
pub fn gradient_over<'a, T: Scalar, I>(spec: &LossSpec<T>, rows: I, w: &[T], out: &mut [T])
where
    I: IntoIterator<Item = &'a [T]>,
{
    out.iter_mut().for_each(|v| *v = T::zero());
    for x in rows {
        let c = spec.derivative(linalg::dot(x, w));
        linalg::axpy(c, x, out);
    }
}

pub fn joint_loss<T: Scalar>(spec: &LossSpec<T>, ds: &JointDataset<T>, w: &[T]) -> Result<T> {
    check_dim(ds, w)?;
    Ok(loss_over(spec, ds.points().iter().map(|p| p.x.as_slice()), w))
}

pub fn task_loss<T: Scalar>(spec: &LossSpec<T>, ds: &JointDataset<T>, m: usize, w: &[T]) -> Result<T> {
    check_dim(ds, w)?;
    check_task(ds, m)?;
    Ok(loss_over(spec, ds.task(m).iter().map(|&i| ds.x(i)), w))
}

/// All per-task losses at `w`.
pub fn task_losses<T: Scalar>(spec: &LossSpec<T>, ds: &JointDataset<T>, w: &[T]) -> Result<Vec<T>> {
    check_dim(ds, w)?;
    Ok((0..ds.num_tasks())
        .map(|m| loss_over(spec, ds.task(m).iter().map(|&i| ds.x(i)), w))
        .collect())
}

pub fn task_gradient<T: Scalar>(
    spec: &LossSpec<T>,
    ds: &JointDataset<T>,
    m: usize,
    w: &[T],
) -> Result<Vec<T>> {
    check_dim(ds, w)?;
    check_task(ds, m)?;
    let mut g = vec![T::zero(); w.len()];
    gradient_over(spec, ds.task(m).iter().map(|&i| ds.x(i)), w, &mut g);
    Ok(g)
}

pub fn joint_gradient<T: Scalar>(spec: &LossSpec<T>, ds: &JointDataset<T>, w: &[T]) -> Result<Vec<T>> {
    check_dim(ds, w)?;
    let mut g = vec![T::zero(); w.len()];
    gradient_over(spec, ds.points().iter().map(|p| p.x.as_slice()), w, &mut g);
    Ok(g)
}

/// Σ ℓ″(x_iᵀw)·x_i x_iᵀ.
pub fn joint_hessian<T: Scalar>(spec: &LossSpec<T>, ds: &JointDataset<T>, w: &[T]) -> Result<SquareMatrix<T>> {
    check_dim(ds, w)?;
    Ok(SquareMatrix::outer_sum(
        ds.dim(),
        ds.points()
            .iter()
            .map(|p| (spec.second_derivative(linalg::dot(&p.x, w)), p.x.as_slice())),
    ))
}

fn check_task<T: Scalar>(ds: &JointDataset<T>, m: usize) -> Result<()> {
    if m >= ds.num_tasks() {
        return Err(Error::Precondition(format!(
            "task {m} out of range for {} tasks",
            ds.num_tasks()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothness<T> {
    pub sigma_max: T,
    /// β·λ_max(X_mᵀX_m) per task.
    pub beta_m: Vec<T>,
    /// Σ_m β_m.
    pub big_b: T,
}

/// Top singular value of the data matrix.
pub fn sigma_max<T: Scalar>(ds: &JointDataset<T>) -> T {
    let gram = SquareMatrix::outer_sum(ds.dim(), ds.points().iter().map(|p| (T::one(), p.x.as_slice())));
    gram.eigenvalue_range().1.max(T::zero()).sqrt()
}

pub fn smoothness_constants<T: Scalar>(spec: &LossSpec<T>, ds: &JointDataset<T>) -> Result<Smoothness<T>> {
    ds.require_absorbed()?;
    let beta = spec.beta()?;
    let beta_m: Vec<T> = (0..ds.num_tasks())
        .map(|m| {
            let g = SquareMatrix::outer_sum(ds.dim(), ds.task(m).iter().map(|&i| (T::one(), ds.x(i))));
            beta * g.eigenvalue_range().1.max(T::zero())
        })
        .collect();
    let big_b = beta_m.iter().copied().sum();
    Ok(Smoothness {
        sigma_max: sigma_max(ds),
        beta_m,
        big_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_pair_dataset, DataPoint, PairSplit, TaskPartition};
    use approx::assert_abs_diff_eq;

    fn single(x: &[f64]) -> JointDataset<f64> {
        JointDataset::new(vec![DataPoint::positive(x)], TaskPartition::single(1).unwrap())
            .unwrap()
            .absorb_labels()
            .unwrap()
    }

    #[test]
    fn logistic_reference_values() {
        let l = LossSpec::<f64>::logistic();
        assert_abs_diff_eq!(l.value(0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(l.value(-1000.0), 1000.0, epsilon = 1e-9);
        assert!(l.value(1000.0) >= 0.0 && l.value(1000.0) < 1e-300);
        assert_eq!(l.derivative(0.0), -0.5);
        assert_abs_diff_eq!(l.derivative(3f64.ln()), -0.25, epsilon = 1e-15);
        assert!(l.derivative(800.0) <= 0.0 && l.derivative(800.0) > -1e-300);
        assert_abs_diff_eq!(l.derivative(-800.0), -1.0, epsilon = 1e-15);
        assert_eq!(l.second_derivative(0.0), 0.25);
    }

    #[test]
    fn exponential_reference_values() {
        let e = LossSpec::<f64>::exponential();
        assert_eq!(e.value(0.0), 1.0);
        assert_eq!(e.derivative(0.0), -1.0);
        assert!(e.beta().is_err());
    }

    #[test]
    fn dataset_losses() {
        let l = LossSpec::logistic();
        let ds = single(&[1.0, 0.0]);
        assert_abs_diff_eq!(joint_loss(&l, &ds, &[0.0, 0.0]).unwrap(), std::f64::consts::LN_2);
        assert_eq!(task_gradient(&l, &ds, 0, &[0.0, 0.0]).unwrap(), vec![-0.5, 0.0]);
        let pair = make_pair_dataset::<f64>(PairSplit::Contradicting).absorb_labels().unwrap();
        assert_abs_diff_eq!(
            joint_loss(&l, &pair, &[0.0, 0.0]).unwrap(),
            6.0 * std::f64::consts::LN_2,
            epsilon = 1e-14
        );
        assert!(matches!(
            joint_loss(&l, &pair, &[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        let unabsorbed = make_pair_dataset::<f64>(PairSplit::Contradicting);
        assert!(joint_loss(&l, &unabsorbed, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn smoothness_of_single_point() {
        let s = smoothness_constants(&LossSpec::logistic(), &single(&[3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(s.beta_m[0], 25.0 / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sigma_max, 5.0, epsilon = 1e-12);
        let pts = vec![DataPoint::<f64>::positive(&[1.0, 0.0]), DataPoint::positive(&[0.0, 1.0])];
        let id = JointDataset::new(pts, TaskPartition::single(2).unwrap())
            .unwrap()
            .into_absorbed();
        assert_abs_diff_eq!(sigma_max(&id), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tail_sandwich_and_linear_lower_bound() {
        let l = LossSpec::<f64>::logistic();
        for i in 0..=1000 {
            let u = 0.5 + 49.5 * i as f64 / 1000.0;
            let e = (-u).exp();
            let d = -l.derivative(u);
            assert!((1.0 - e) * e <= d * (1.0 + 1e-15), "lower tail at {u}");
            assert!(d <= (1.0 + e) * e * (1.0 + 1e-15), "upper tail at {u}");
        }
        for i in 0..=1000 {
            let u = -50.0 + 100.0 * i as f64 / 1000.0;
            assert!(l.value(u) >= (-u).max(0.0));
            assert!(l.second_derivative(u) > 0.0 && l.second_derivative(u) <= 0.25);
        }
    }
}
