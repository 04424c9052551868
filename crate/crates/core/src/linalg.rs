//! Small dense helpers shared by the solvers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.dot(&b)
}

#[inline]
pub fn norm_sq<T: Scalar>(a: ArrayView1<T>) -> T {
    a.dot(&a)
}

#[inline]
pub fn norm<T: Scalar>(a: ArrayView1<T>) -> T {
    norm_sq(a).sqrt()
}

pub fn norm_inf<T: Scalar>(a: ArrayView1<T>) -> T {
    a.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

pub fn norm_l1<T: Scalar>(a: ArrayView1<T>) -> T {
    a.iter().fold(T::zero(), |acc, v| acc + v.abs())
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix,
/// or `None` if a non-positive pivot shows up.
pub fn cholesky<T: Scalar>(a: ArrayView2<T>) -> Option<Array2<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return None;
    }
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > T::zero()) {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `L Lᵗ x = rhs` given the Cholesky factor `L`.
pub fn cholesky_solve<T: Scalar>(l: ArrayView2<T>, rhs: ArrayView1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut z = rhs.to_owned();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s -= l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    z
}
