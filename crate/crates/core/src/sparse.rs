//! Compressed-row operators for the integrator hot loops. Embedded site
//! operators are diagonal or permutation-like, so left multiplication costs
//! `O(nnz · dim)` instead of `O(dim³)`.

use num_traits::Zero;

use crate::matrix::ComplexMatrix;
use crate::scalar::{Real, C};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T: Real> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C<T>>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn from_dense(m: &ComplexMatrix<T>) -> Self {
        let n = m.dim();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for (j, &v) in m.row(i).iter().enumerate() {
                if !v.is_zero() {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim: n,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C<T>)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C<T>> = Vec::with_capacity(triplets.len());
        let mut rows: Vec<usize> = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            if let (Some(&li), Some(&lj)) = (rows.last(), cols.last()) {
                if li == i && lj == j {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(i);
            cols.push(j);
            vals.push(v);
        }
        // drop exact zeros produced by cancellation
        let keep: Vec<usize> = (0..vals.len()).filter(|&k| !vals[k].is_zero()).collect();
        let rows: Vec<usize> = keep.iter().map(|&k| rows[k]).collect();
        let cols: Vec<usize> = keep.iter().map(|&k| cols[k]).collect();
        let vals: Vec<C<T>> = keep.iter().map(|&k| vals[k]).collect();
        for &i in &rows {
            row_ptr[i + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn to_dense(&self) -> ComplexMatrix<T> {
        let mut m = ComplexMatrix::zeros(self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k])] += self.vals[k];
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_zero(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).all(|k| self.cols[k] == i))
    }

    /// Diagonal entries (zero where absent).
    pub fn diagonal(&self) -> Vec<C<T>> {
        let mut d = vec![C::zero(); self.dim];
        for (i, di) in d.iter_mut().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] == i {
                    *di += self.vals[k];
                }
            }
        }
        d
    }

    pub fn adjoint(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                trip.push((self.cols[k], i, self.vals[k].conj()));
            }
        }
        Self::from_triplets(self.dim, trip)
    }

    /// `self · other` for two sparse operators.
    pub fn matmul(&self, other: &Self) -> Self {
        let mut trip = Vec::new();
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let (mid, a) = (self.cols[k], self.vals[k]);
                for l in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    trip.push((i, other.cols[l], a * other.vals[l]));
                }
            }
        }
        Self::from_triplets(self.dim, trip)
    }

    /// `out = s · self · m`.
    #[inline]
    pub fn left_mul_into(&self, s: C<T>, m: &ComplexMatrix<T>, out: &mut ComplexMatrix<T>) {
        out.as_mut_slice().fill(C::zero());
        self.left_mul_acc(s, m, out);
    }

    /// `out += s · self · m`.
    #[inline]
    pub fn left_mul_acc(&self, s: C<T>, m: &ComplexMatrix<T>, out: &mut ComplexMatrix<T>) {
        let n = self.dim;
        let src = m.as_slice();
        let dst = out.as_mut_slice();
        for i in 0..n {
            let out_row = &mut dst[i * n..(i + 1) * n];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.vals[k] * s;
                let c = self.cols[k];
                let src_row = &src[c * n..(c + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(src_row) {
                    *o += a * b;
                }
            }
        }
    }

    /// `out = self · m†`.
    #[inline]
    pub fn left_mul_adjoint_into(&self, m: &ComplexMatrix<T>, out: &mut ComplexMatrix<T>) {
        let n = self.dim;
        let src = m.as_slice();
        let dst = out.as_mut_slice();
        dst.fill(C::zero());
        for i in 0..n {
            let out_row = &mut dst[i * n..(i + 1) * n];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.vals[k];
                let c = self.cols[k];
                // (m†)[c, j] = conj(m[j, c])
                for (j, o) in out_row.iter_mut().enumerate() {
                    *o += a * src[j * n + c].conj();
                }
            }
        }
    }

    /// `tr(self · m)`.
    #[inline]
    pub fn trace_with(&self, m: &ComplexMatrix<T>) -> C<T> {
        let n = self.dim;
        let src = m.as_slice();
        let mut acc = C::zero();
        for i in 0..n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * src[self.cols[k] * n + i];
            }
        }
        acc
    }

    pub fn scale(&self, s: C<T>) -> Self {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= s;
        }
        out
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for op in [self, other] {
            for i in 0..op.dim {
                for k in op.row_ptr[i]..op.row_ptr[i + 1] {
                    trip.push((i, op.cols[k], op.vals[k]));
                }
            }
        }
        Self::from_triplets(self.dim, trip)
    }
}

impl<T: Real> From<&ComplexMatrix<T>> for CsrMatrix<T> {
    fn from(m: &ComplexMatrix<T>) -> Self {
        Self::from_dense(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = sampling::random_complex_matrix::<f64, _>(4, &mut rng);
        let mut b = sampling::random_complex_matrix::<f64, _>(4, &mut rng);
        b[(1, 2)] = C::zero();
        let sa = CsrMatrix::from_dense(&a);
        let sb = CsrMatrix::from_dense(&b);
        let mut out = ComplexMatrix::zeros(4);
        sa.left_mul_into(C::new(1.0, 0.0), &b, &mut out);
        assert!(out.hs_distance(&a.matmul(&b).unwrap()).unwrap() < 1e-13);
        sa.left_mul_adjoint_into(&b, &mut out);
        assert!(out.hs_distance(&a.matmul(&b.adjoint()).unwrap()).unwrap() < 1e-13);
        assert!((sa.trace_with(&b) - a.trace_product(&b).unwrap()).norm() < 1e-13);
        let ab = sa.matmul(&sb).to_dense();
        assert!(ab.hs_distance(&a.matmul(&b).unwrap()).unwrap() < 1e-13);
        assert_eq!(sa.adjoint().to_dense(), a.adjoint());
        assert!(sa.add(&sb).to_dense().hs_distance(&(&a + &b)).unwrap() < 1e-14);
    }

    #[test]
    fn structure_queries() {
        let z = CsrMatrix::from_dense(&crate::pauli::sigma_z::<f64>());
        assert!(z.is_diagonal());
        assert_eq!(z.nnz(), 2);
        let x = CsrMatrix::from_dense(&crate::pauli::sigma_x::<f64>());
        assert!(!x.is_diagonal());
        assert!(x.add(&x.scale(C::new(-1.0, 0.0))).is_zero());
    }
}
