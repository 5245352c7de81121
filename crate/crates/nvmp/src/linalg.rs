//! Dense Cholesky factorization and a symmetric tridiagonal eigen-solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower-triangular Cholesky factor L with A = L Lᵀ.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T: Real> {
    l: DMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors a symmetric matrix, reading only its lower triangle.
    /// Returns the offending pivot on failure.
    pub fn factor(a: &DMatrix<T>) -> std::result::Result<Self, T> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "cholesky of a non-square matrix");
        let mut l = DMatrix::<T>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(d);
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    /// Factors `a + jitter·I`, escalating jitter ×10 from `start` to `max` after a
    /// failed plain attempt. Returns the factor and the jitter used (0 if none).
    pub fn factor_jittered(a: &DMatrix<T>, start: T, max: T, context: &str) -> Result<(Self, T)> {
        let first = match Self::factor(a) {
            Ok(c) => return Ok((c, T::zero())),
            Err(p) => p,
        };
        let mut min_pivot = first;
        let mut jitter = if start > T::zero() {
            start
        } else {
            T::of(1e-10)
        };
        let ten = T::of(10.0);
        while jitter <= max * T::of(1.000_001) {
            let mut b = a.clone();
            for i in 0..b.nrows() {
                b[(i, i)] += jitter;
            }
            match Self::factor(&b) {
                Ok(c) => return Ok((c, jitter)),
                Err(p) => min_pivot = min_pivot.min(p),
            }
            jitter *= ten;
        }
        Err(Error::Singular {
            context: context.to_string(),
            jitter: (jitter / ten).as_f64(),
            min_pivot: min_pivot.as_f64(),
        })
    }

    pub fn l(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// log det A = 2 Σ log L_ii.
    pub fn logdet(&self) -> T {
        let two = T::of(2.0);
        (0..self.dim()).map(|i| two * self.l[(i, i)].ln()).sum()
    }

    /// Solves L x = b in place.
    fn forward(&self, x: &mut [T]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
    }

    /// Solves Lᵀ x = b in place.
    fn backward(&self, x: &mut [T]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
    }

    pub fn solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        let mut x = b.clone();
        self.forward(x.as_mut_slice());
        self.backward(x.as_mut_slice());
        x
    }

    pub fn solve_mat(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let mut x = b.clone();
        for j in 0..x.ncols() {
            let mut col: Vec<T> = x.column(j).iter().copied().collect();
            self.forward(&mut col);
            self.backward(&mut col);
            for (i, v) in col.into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        x
    }

    /// A⁻¹, symmetrized.
    pub fn inverse(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut inv = self.solve_mat(&DMatrix::identity(n, n));
        symmetrize(&mut inv);
        inv
    }

    /// xᵀ A⁻¹ x.
    pub fn inv_quad(&self, x: &DVector<T>) -> T {
        let mut w = x.clone();
        self.forward(w.as_mut_slice());
        w.iter().map(|v| *v * *v).sum()
    }
}

/// Replaces `a` by (a + aᵀ)/2.
pub fn symmetrize<T: Real>(a: &mut DMatrix<T>) {
    let n = a.nrows();
    let half = T::of(0.5);
    for i in 0..n {
        for j in 0..i {
            let v = half * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Largest |a_ij − a_ji|.
pub fn asymmetry<T: Real>(a: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Largest |a_ij|.
pub fn max_abs<T: Real>(a: &DMatrix<T>) -> T {
    a.iter().fold(T::zero(), |w, v| w.max(v.abs()))
}

/// tr(A B) for square matrices of equal size.
pub fn trace_product<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let mut s = T::zero();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (length n−1), with the first component of each
/// normalized eigenvector. Implicit QL with Wilkinson-style shifts.
pub fn tridiag_eigen<T: Real>(diag: &[T], off: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(Error::structural("tridiagonal sizes are inconsistent"));
    }
    let mut d = diag.to_vec();
    let mut e: Vec<T> = off.to_vec();
    e.push(T::zero());
    let mut z0 = vec![T::zero(); n];
    z0[0] = T::one();
    let eps = T::epsilon();
    let two = T::of(2.0);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::Numerical(
                    "tridiagonal QL iteration did not converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z0[i + 1];
                z0[i + 1] = s * z0[i] + c * zf;
                z0[i] = c * z0[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok((d, z0))
}
