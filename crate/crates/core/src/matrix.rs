//! Dense square complex matrices with Hilbert–Schmidt structure.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{cr, Real, C};

/// Square complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix<T: Real> {
    dim: usize,
    data: Vec<C<T>>,
}

impl<T: Real> ComplexMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![C::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = C::one();
        }
        m
    }

    pub fn from_vec(dim: usize, data: Vec<C<T>>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::BadShape {
                dim,
                len: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from rows; all rows must have the same length as the
    /// number of rows.
    pub fn from_rows(rows: &[&[C<T>]]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::BadShape {
                    dim,
                    len: row.len() * dim,
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(dim, data)
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * dim + i] = cr(d);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[C<T>] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C<T>] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[C<T>] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |i, j| self.data[j * n + i].conj())
    }

    pub fn trace(&self) -> C<T> {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// `self += s · other`, dimensions assumed equal.
    pub fn axpy(&mut self, s: C<T>, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// Matrix product, failing on dimension mismatch.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let mut out = Self::zeros(self.dim);
        self.matmul_into(other, &mut out);
        Ok(out)
    }

    /// `out = self · other` without allocation. Dimensions must agree.
    pub fn matmul_into(&self, other: &Self, out: &mut Self) {
        let n = self.dim;
        debug_assert!(other.dim == n && out.dim == n);
        out.data.fill(C::zero());
        for i in 0..n {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.is_zero() {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        Ok(self.matmul(other)? - other.matmul(self)?)
    }

    pub fn anticommutator(&self, other: &Self) -> Result<Self> {
        Ok(self.matmul(other)? + other.matmul(self)?)
    }

    /// Kronecker product `self ⊗ other`; the first factor indexes the most
    /// significant digit of the composite basis.
    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.dim, other.dim);
        let dim = n * m;
        let mut out = Self::zeros(dim);
        for i in 0..n {
            for j in 0..n {
                let a = self.data[i * n + j];
                if a.is_zero() {
                    continue;
                }
                for k in 0..m {
                    for l in 0..m {
                        out.data[(i * m + k) * dim + j * m + l] = a * other.data[k * m + l];
                    }
                }
            }
        }
        out
    }

    /// Hilbert–Schmidt inner product `tr(self† · other)`.
    pub fn hs_inner(&self, other: &Self) -> Result<C<T>> {
        self.check_same_dim(other)?;
        Ok(self.hs_inner_unchecked(other))
    }

    #[inline]
    pub(crate) fn hs_inner_unchecked(&self, other: &Self) -> C<T> {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Result<C<T>> {
        self.check_same_dim(other)?;
        let n = self.dim;
        let mut acc = C::zero();
        for i in 0..n {
            for k in 0..n {
                acc += self.data[i * n + k] * other.data[k * n + i];
            }
        }
        Ok(acc)
    }

    pub fn hs_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn hs_distance(&self, other: &Self) -> Result<T> {
        self.check_same_dim(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<T>()
            .sqrt())
    }

    /// `‖A − A†‖₂`.
    pub fn hermiticity_defect(&self) -> T {
        let n = self.dim;
        let mut acc = T::zero();
        for i in 0..n {
            for j in 0..n {
                acc += (self.data[i * n + j] - self.data[j * n + i].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// In-place `A ← (A + A†)/2`.
    pub fn hermitize(&mut self) {
        let n = self.dim;
        let half = T::lit(0.5);
        for i in 0..n {
            let d = self.data[i * n + i];
            self.data[i * n + i] = cr(d.re);
            for j in (i + 1)..n {
                let avg = (self.data[i * n + j] + self.data[j * n + i].conj()) * half;
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .map(|z| z.norm())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Whether every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim;
        (0..n).all(|i| (0..n).all(|j| i == j || self.data[i * n + j].is_zero()))
    }

    pub fn diagonal(&self) -> Vec<C<T>> {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).collect()
    }

    /// Element-wise conversion between scalar precisions.
    pub fn cast<U: Real>(&self) -> ComplexMatrix<U> {
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .map(|z| C::new(U::lit(z.re.to_f64_lossy()), U::lit(z.im.to_f64_lossy())))
                .collect(),
        }
    }
}

/// `tr(a†b)`, the Hilbert–Schmidt inner product.
pub fn hs_inner<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> Result<C<T>> {
    a.hs_inner(b)
}

/// `sqrt(Re tr(a†a))`.
pub fn hs_norm<T: Real>(a: &ComplexMatrix<T>) -> T {
    a.hs_norm()
}

impl<T: Real> Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = C<T>;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.dim + j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for ComplexMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.dim + j]
    }
}

macro_rules! elementwise {
    ($tr:ident, $method:ident, $op:tt) => {
        impl<T: Real> $tr for ComplexMatrix<T> {
            type Output = ComplexMatrix<T>;
            #[allow(clippy::assign_op_pattern)]
            fn $method(mut self, rhs: Self) -> Self {
                assert_eq!(self.dim, rhs.dim, "dimension mismatch");
                for (a, b) in self.data.iter_mut().zip(rhs.data) {
                    *a = *a $op b;
                }
                self
            }
        }

        impl<'a, T: Real> $tr<&'a ComplexMatrix<T>> for &'a ComplexMatrix<T> {
            type Output = ComplexMatrix<T>;
            fn $method(self, rhs: Self) -> ComplexMatrix<T> {
                assert_eq!(self.dim, rhs.dim, "dimension mismatch");
                ComplexMatrix {
                    dim: self.dim,
                    data: self.data.iter().zip(&rhs.data).map(|(a, b)| a $op b).collect(),
                }
            }
        }
    };
}

elementwise!(Add, add, +);
elementwise!(Sub, sub, -);

impl<T: Real> AddAssign<&ComplexMatrix<T>> for ComplexMatrix<T> {
    fn add_assign(&mut self, rhs: &Self) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl<T: Real> SubAssign<&ComplexMatrix<T>> for ComplexMatrix<T> {
    fn sub_assign(&mut self, rhs: &Self) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl<T: Real> Neg for ComplexMatrix<T> {
    type Output = Self;
    fn neg(mut self) -> Self {
        for a in &mut self.data {
            *a = -*a;
        }
        self
    }
}

impl<'a, T: Real> Mul<&'a ComplexMatrix<T>> for &'a ComplexMatrix<T> {
    type Output = ComplexMatrix<T>;

    /// Panics on dimension mismatch; use [`ComplexMatrix::matmul`] for the
    /// fallible form.
    fn mul(self, rhs: Self) -> ComplexMatrix<T> {
        self.matmul(rhs).expect("dimension mismatch")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli;

    type M = ComplexMatrix<f64>;

    #[test]
    fn hs_inner_of_paulis() {
        let i2 = M::identity(2);
        assert_eq!(hs_inner(&i2, &i2).unwrap(), cr(2.0));
        assert_eq!(
            hs_inner(&pauli::sigma_z(), &pauli::sigma_x()).unwrap(),
            cr(0.0)
        );
        assert_eq!(
            hs_inner(&pauli::sigma_z(), &pauli::sigma_z()).unwrap(),
            cr(2.0)
        );
        assert!((hs_norm(&i2) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hs_inner_rejects_mismatched_dims() {
        let err = hs_inner(&M::identity(2), &M::identity(4)).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                found: 4
            }
        );
    }

    #[test]
    fn from_vec_checks_shape() {
        assert!(M::from_vec(2, vec![C::zero(); 3]).is_err());
        assert!(M::from_vec(0, vec![]).is_err());
    }

    #[test]
    fn kron_orders_first_factor_most_significant() {
        let k = pauli::sigma_z::<f64>().kron(&M::identity(2));
        let expected = M::from_real_diagonal(&[1.0, 1.0, -1.0, -1.0]);
        assert_eq!(k, expected);
    }

    #[test]
    fn pauli_algebra() {
        let (x, y, z) = (pauli::sigma_x::<f64>(), pauli::sigma_y(), pauli::sigma_z());
        // [σx, σy] = 2iσz
        let comm = x.commutator(&y).unwrap();
        assert!(comm.hs_distance(&z.scale(C::new(0.0, 2.0))).unwrap() < 1e-15);
        assert!(x.anticommutator(&z).unwrap().hs_norm() < 1e-15);
    }

    #[test]
    fn hermitize_symmetrizes() {
        let mut m = M::from_fn(3, |i, j| C::new(i as f64, j as f64 + 0.5));
        assert!(!m.is_hermitian(1e-12));
        m.hermitize();
        assert!(m.is_hermitian(1e-15));
    }
}
