//! Dense linear algebra for the small systems that appear here (dimension
//! in the tens, constraint counts in the hundreds).

use crate::scalar::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

#[inline]
pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

/// y += alpha * x
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

pub fn dist_sq<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum()
}

pub fn scaled<T: Scalar>(alpha: T, a: &[T]) -> Vec<T> {
    a.iter().map(|x| alpha * *x).collect()
}

pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Square matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Gram matrix `G[i][j] = v_i · v_j`.
    pub fn gram<V: AsRef<[T]>>(vectors: &[V]) -> Self {
        let n = vectors.len();
        let mut g = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = dot(vectors[i].as_ref(), vectors[j].as_ref());
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Second-moment matrix `Σ c_i x_i x_iᵀ` in dimension `d`.
    pub fn outer_sum<'a, I>(d: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (T, &'a [T])>,
    {
        let mut m = Self::zeros(d);
        for (c, x) in terms {
            for r in 0..d {
                let cr = c * x[r];
                for s in r..d {
                    m.data[r * d + s] += cr * x[s];
                }
            }
        }
        for r in 0..d {
            for s in 0..r {
                m.data[r * d + s] = m.data[s * d + r];
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], v))
            .collect()
    }

    /// Cholesky factor `L` with `A = L Lᵀ`; `None` if `A` is not numerically
    /// positive definite.
    pub fn cholesky(&self) -> Option<Cholesky<T>> {
        let n = self.n;
        let mut l = vec![T::zero(); n * n];
        let scale = (0..n)
            .map(|i| self[(i, i)].abs())
            .fold(T::zero(), T::max)
            .max(T::min_positive_value());
        let floor = scale * T::epsilon() * T::lit(16.0);
        for j in 0..n {
            let mut diag = self[(j, j)];
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > floor) {
                return None;
            }
            let djj = diag.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Cholesky { n, l })
    }

    /// Solve `A x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[T]) -> Option<Vec<T>> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if scale == T::zero() {
            return if n == 0 { Some(x) } else { None };
        }
        let floor = scale * T::epsilon() * T::lit(n.max(1) as f64 * 8.0);
        for col in 0..n {
            let (piv, pval) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pval <= floor {
                return None;
            }
            if piv != col {
                for c in 0..n {
                    a.swap(piv * n + c, col * n + c);
                }
                x.swap(piv, col);
            }
            let p = a[col * n + col];
            for r in (col + 1)..n {
                let f = a[r * n + col] / p;
                if f == T::zero() {
                    continue;
                }
                for c in col..n {
                    let v = a[col * n + c];
                    a[r * n + c] -= f * v;
                }
                let xc = x[col];
                x[r] -= f * xc;
            }
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in (r + 1)..n {
                s -= a[r * n + c] * x[c];
            }
            x[r] = s / a[r * n + r];
        }
        Some(x)
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Eigenvalues are returned in ascending order, eigenvectors as the
    /// matching rows of the returned vector.
    pub fn symmetric_eigen(&self) -> (Vec<T>, Vec<Vec<T>>) {
        let n = self.n;
        let mut a = self.data.clone();
        let mut v = Self::identity(n).data;
        let two = T::lit(2.0);
        for _sweep in 0..100 {
            let off: T = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j] * a[i * n + j])
                .sum();
            let total: T = a.iter().map(|x| *x * *x).sum();
            if off <= total * T::epsilon() * T::epsilon() || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq == T::zero() {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = (aqq - app) / (two * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let t = if theta == T::zero() { T::one() } else { t };
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
        let values = order.iter().map(|&i| a[i * n + i]).collect();
        let vectors = order
            .iter()
            .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
            .collect();
        (values, vectors)
    }

    /// Minimum-norm least-squares solution of `A x = b` for symmetric
    /// positive semidefinite `A`, dropping eigenvalues below a relative cutoff.
    pub fn pinv_solve(&self, b: &[T]) -> Vec<T> {
        let (vals, vecs) = self.symmetric_eigen();
        let top = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let cutoff = top * T::epsilon().sqrt() * T::lit(1e-2);
        let mut x = vec![T::zero(); self.n];
        for (lam, v) in vals.iter().zip(&vecs) {
            if *lam > cutoff {
                axpy(dot(v, b) / *lam, v, &mut x);
            }
        }
        x
    }

    pub fn eigenvalue_range(&self) -> (T, T) {
        if self.n == 0 {
            return (T::zero(), T::zero());
        }
        let (vals, _) = self.symmetric_eigen();
        (vals[0], vals[self.n - 1])
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

/// Numerical rank of a set of vectors, from the eigenvalues of their Gram
/// matrix relative to the largest one.
pub fn rank<T: Scalar, V: AsRef<[T]>>(vectors: &[V]) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let d = vectors[0].as_ref().len();
    // the d×d second moment has the same nonzero spectrum as the Gram matrix
    let m = if d <= vectors.len() {
        SquareMatrix::outer_sum(d, vectors.iter().map(|v| (T::one(), v.as_ref())))
    } else {
        SquareMatrix::gram(vectors)
    };
    let (vals, _) = m.symmetric_eigen();
    let top = vals.iter().fold(T::zero(), |a, b| a.max(b.abs()));
    if top == T::zero() {
        return 0;
    }
    let cutoff = top * T::epsilon().sqrt() * T::lit(1e-2);
    vals.iter().filter(|v| **v > cutoff).count()
}
