//! Hermitian eigensolver (cyclic complex Jacobi), positivity tests and the
//! eigenvalue-clipping repair used by the integrators.

use num_traits::Zero;

use crate::matrix::ComplexMatrix;
use crate::scalar::{cr, Real, C};

/// Eigenvalues (ascending) and eigenvectors (columns, same order) of a
/// Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T: Real> {
    pub values: Vec<T>,
    pub vectors: ComplexMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    /// Reassembles `V diag(λ) V†` from possibly modified eigenvalues.
    pub fn recompose(&self, values: &[T]) -> ComplexMatrix<T> {
        let n = self.vectors.dim();
        let v = &self.vectors;
        ComplexMatrix::from_fn(n, |i, j| {
            let mut acc = C::zero();
            for (k, &lam) in values.iter().enumerate() {
                if lam != T::zero() {
                    acc += v[(i, k)] * v[(j, k)].conj() * lam;
                }
            }
            acc
        })
    }
}

/// Cyclic Jacobi diagonalization. Only the Hermitian part of `m` is used.
pub fn hermitian_eigen<T: Real>(m: &ComplexMatrix<T>) -> HermitianEigen<T> {
    let n = m.dim();
    let mut a = m.clone();
    a.hermitize();
    let mut v = ComplexMatrix::<T>::identity(n);
    let scale = a.hs_norm().max(T::min_positive_value());
    let threshold = T::epsilon() * scale * T::lit(0.5);

    for _sweep in 0..64 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<T>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let g = a[(p, q)];
                let r = g.norm();
                if r <= T::min_positive_value() {
                    continue;
                }
                let phase = g / r;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (T::lit(2.0) * r);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // J = diag(1, conj(phase)) · [[c, s], [−s, c]]
                let jpp = cr(c);
                let jpq = cr(s);
                let jqp = phase.conj() * (-s);
                let jqq = phase.conj() * c;
                // A ← A J
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * jpp + akq * jqp;
                    a[(k, q)] = akp * jpq + akq * jqq;
                }
                // A ← J† A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
                    a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
                }
                a[(p, q)] = C::zero();
                a[(q, p)] = C::zero();
                a[(p, p)] = cr(a[(p, p)].re);
                a[(q, q)] = cr(a[(q, q)].re);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * jpp + vkq * jqp;
                    v[(k, q)] = vkp * jpq + vkq * jqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap());
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, |i, j| v[(i, order[j])]);
    HermitianEigen { values, vectors }
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues<T: Real>(m: &ComplexMatrix<T>) -> Vec<T> {
    if m.dim() == 2 {
        let (lo, hi) = eigenvalues_2x2(m);
        return vec![lo, hi];
    }
    hermitian_eigen(m).values
}

/// Closed-form eigenvalues `(min, max)` of a 2×2 Hermitian matrix.
#[inline]
pub fn eigenvalues_2x2<T: Real>(m: &ComplexMatrix<T>) -> (T, T) {
    let s = m.as_slice();
    let a = s[0].re;
    let d = s[3].re;
    let b = (s[1] + s[2].conj()) * T::lit(0.5);
    let half_tr = (a + d) * T::lit(0.5);
    let half_gap = (((a - d) * T::lit(0.5)).powi(2) + b.norm_sqr()).sqrt();
    (half_tr - half_gap, half_tr + half_gap)
}

pub fn min_eigenvalue<T: Real>(m: &ComplexMatrix<T>) -> T {
    if m.dim() == 2 {
        eigenvalues_2x2(m).0
    } else {
        hermitian_eigen(m).values[0]
    }
}

/// Attempts a Cholesky factorization of `m + shift·I`; success certifies
/// `λ_min(m) > −shift` up to rounding. `scratch` is reused across calls.
pub fn cholesky_succeeds<T: Real>(m: &ComplexMatrix<T>, shift: T, scratch: &mut Vec<C<T>>) -> bool {
    let n = m.dim();
    scratch.clear();
    scratch.resize(n * n, C::zero());
    let l = scratch.as_mut_slice();
    for j in 0..n {
        let mut d = m[(j, j)].re + shift;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > T::zero()) {
            return false;
        }
        let ljj = d.sqrt();
        l[j * n + j] = cr(ljj);
        for i in (j + 1)..n {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = acc / ljj;
        }
    }
    true
}

/// Whether `λ_min(m) ≥ −tol`.
pub fn is_psd_within<T: Real>(m: &ComplexMatrix<T>, tol: T) -> bool {
    if m.dim() == 2 {
        return eigenvalues_2x2(m).0 >= -tol;
    }
    let mut scratch = Vec::new();
    cholesky_succeeds(m, tol, &mut scratch) || min_eigenvalue(m) >= -tol
}

/// Outcome of [`clip_to_density`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipOutcome<T> {
    pub min_eigenvalue: T,
    pub clipped: bool,
}

/// Sets negative eigenvalues to zero and renormalizes the trace to one.
/// The input must be Hermitian with positive trace.
pub fn clip_to_density<T: Real>(m: &mut ComplexMatrix<T>) -> ClipOutcome<T> {
    if m.dim() == 2 {
        return clip_2x2(m);
    }
    let eig = hermitian_eigen(m);
    let min = eig.values[0];
    if min >= T::zero() {
        return ClipOutcome {
            min_eigenvalue: min,
            clipped: false,
        };
    }
    let mut vals: Vec<T> = eig.values.iter().map(|&l| l.max(T::zero())).collect();
    let total: T = vals.iter().copied().sum();
    for v in &mut vals {
        *v /= total;
    }
    *m = eig.recompose(&vals);
    m.hermitize();
    ClipOutcome {
        min_eigenvalue: min,
        clipped: true,
    }
}

fn clip_2x2<T: Real>(m: &mut ComplexMatrix<T>) -> ClipOutcome<T> {
    let (lo, _hi) = eigenvalues_2x2(m);
    if lo >= T::zero() {
        return ClipOutcome {
            min_eigenvalue: lo,
            clipped: false,
        };
    }
    // Unit trace, Bloch radius > 1: project onto the sphere (the pure state
    // along the same Bloch direction).
    let s = m.as_slice();
    let tr = s[0].re + s[3].re;
    let x = (s[1].re + s[2].re) / tr;
    let y = (s[2].im - s[1].im) / tr;
    let z = (s[0].re - s[3].re) / tr;
    let r = (x * x + y * y + z * z).sqrt();
    let (x, y, z) = (x / r, y / r, z / r);
    let half = T::lit(0.5);
    let d = m.as_mut_slice();
    d[0] = cr(half * (T::one() + z));
    d[3] = cr(half * (T::one() - z));
    d[1] = C::new(half * x, -half * y);
    d[2] = C::new(half * x, half * y);
    ClipOutcome {
        min_eigenvalue: lo,
        clipped: true,
    }
}
