//! Random test objects: Ginibre density operators, Hermitian matrices and
//! traceless unit directions.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::density::{BlochVector, DensityOperator};
use crate::matrix::ComplexMatrix;
use crate::scalar::{cr, Real, C};

fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let g: f64 = StandardNormal.sample(rng);
    T::lit(g)
}

pub fn random_complex_matrix<T: Real, R: Rng + ?Sized>(
    dim: usize,
    rng: &mut R,
) -> ComplexMatrix<T> {
    ComplexMatrix::from_fn(dim, |_, _| C::new(gaussian(rng), gaussian(rng)))
}

pub fn random_hermitian<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix<T> {
    let g = random_complex_matrix::<T, R>(dim, rng);
    let mut h = &g + &g.adjoint();
    h.hermitize();
    h.scale_real(T::lit(0.5))
}

/// `G G† / tr(G G†)` for a Ginibre matrix `G`; full rank with probability one.
pub fn random_density<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityOperator<T> {
    let g = random_complex_matrix::<T, R>(dim, rng);
    let mut m = g.matmul(&g.adjoint()).unwrap();
    let tr = m.trace().re;
    for z in m.as_mut_slice() {
        *z /= tr;
    }
    m.hermitize();
    DensityOperator::trusted(m)
}

/// Pure state from a normalized complex Gaussian vector.
pub fn random_pure<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityOperator<T> {
    let psi: Vec<C<T>> = (0..dim)
        .map(|_| C::new(gaussian(rng), gaussian(rng)))
        .collect();
    DensityOperator::pure(&psi).unwrap()
}

/// Uniform point in the closed unit ball.
pub fn random_bloch<T: Real, R: Rng + ?Sized>(rng: &mut R) -> BlochVector<T> {
    loop {
        let v: [f64; 3] = [
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        ];
        if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
            return BlochVector {
                x: T::lit(v[0]),
                y: T::lit(v[1]),
                z: T::lit(v[2]),
            };
        }
    }
}

/// Traceless Hermitian matrix with unit Hilbert–Schmidt norm.
pub fn random_traceless_direction<T: Real, R: Rng + ?Sized>(
    dim: usize,
    rng: &mut R,
) -> ComplexMatrix<T> {
    let mut h = random_hermitian::<T, R>(dim, rng);
    let shift = h.trace().re / T::from_usize(dim).unwrap();
    for i in 0..dim {
        h[(i, i)] -= cr(shift);
    }
    let n = h.hs_norm();
    h.scale_real(T::one() / n)
}
