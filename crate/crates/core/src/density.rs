//! Density operators, Bloch coordinates and partial traces.

use num_traits::{One, Zero};

use crate::eigen;
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::pauli;
use crate::scalar::{cr, Real, C};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;
pub const BLOCH_TOL: f64 = 1e-9;

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator<T: Real> {
    matrix: ComplexMatrix<T>,
}

impl<T: Real> DensityOperator<T> {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: ComplexMatrix<T>) -> Result<Self> {
        let defect = matrix.hermiticity_defect();
        if !(defect <= T::tol(HERMITIAN_TOL)) {
            return Err(Error::NotHermitian {
                deviation: defect.to_f64_lossy(),
            });
        }
        let tr = matrix.trace();
        if !((tr - C::one()).norm() <= T::tol(TRACE_TOL)) {
            return Err(Error::NotUnitTrace {
                trace: tr.re.to_f64_lossy(),
            });
        }
        if !eigen::is_psd_within(&matrix, T::tol(PSD_TOL)) {
            return Err(Error::NotPositive {
                min_eigenvalue: eigen::min_eigenvalue(&matrix).to_f64_lossy(),
            });
        }
        Ok(Self { matrix })
    }

    /// Wraps a matrix the caller has already repaired (integrator output).
    pub(crate) fn trusted(matrix: ComplexMatrix<T>) -> Self {
        Self { matrix }
    }

    /// Hermitizes, renormalizes the trace and clips negative eigenvalues.
    pub fn repaired(mut matrix: ComplexMatrix<T>) -> Result<Self> {
        matrix.hermitize();
        let tr = matrix.trace().re;
        if !(tr > T::zero()) {
            return Err(Error::NotUnitTrace {
                trace: tr.to_f64_lossy(),
            });
        }
        for z in matrix.as_mut_slice() {
            *z /= tr;
        }
        eigen::clip_to_density(&mut matrix);
        Self::new(matrix)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale_real(T::one() / T::from_usize(dim).unwrap()),
        }
    }

    /// `|ψ⟩⟨ψ|` after normalizing `ψ`.
    pub fn pure(psi: &[C<T>]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if !(norm > T::zero()) {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        let m = ComplexMatrix::from_fn(psi.len(), |i, j| psi[i] * psi[j].conj() / (norm * norm));
        Ok(Self { matrix: m })
    }

    pub fn excited() -> Self {
        Self {
            matrix: pauli::excited(),
        }
    }

    pub fn ground() -> Self {
        Self {
            matrix: pauli::ground(),
        }
    }

    #[inline]
    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.matrix
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `Re tr(ρ·op)`.
    pub fn expectation(&self, op: &ComplexMatrix<T>) -> Result<T> {
        Ok(self.matrix.trace_product(op)?.re)
    }

    pub fn purity(&self) -> T {
        self.matrix.hs_inner_unchecked(&self.matrix).re
    }

    pub fn hs_distance(&self, other: &Self) -> Result<T> {
        self.matrix.hs_distance(&other.matrix)
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix.kron(&other.matrix),
        }
    }

    /// `ρ^{⊗n}`.
    pub fn tensor_power(&self, n: usize) -> Self {
        assert!(n >= 1);
        let mut out = self.clone();
        for _ in 1..n {
            out = out.tensor(self);
        }
        out
    }

    pub fn min_eigenvalue(&self) -> T {
        eigen::min_eigenvalue(&self.matrix)
    }

    /// Convex combination `Σ wᵢ ρᵢ`; weights must be non-negative and sum to 1.
    pub fn mixture(parts: &[(T, &Self)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
        let mut m = ComplexMatrix::zeros(first.1.dim());
        for (w, rho) in parts {
            m.check_same_dim(rho.matrix())?;
            m.axpy(cr(*w), rho.matrix());
        }
        Self::new(m)
    }
}

impl<T: Real> AsRef<ComplexMatrix<T>> for DensityOperator<T> {
    fn as_ref(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }
}

/// Qubit Bloch coordinates, `ρ = (I + xσx + yσy + zσz)/2`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlochVector<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> BlochVector<T> {
    pub fn new(x: T, y: T, z: T) -> Result<Self> {
        let v = Self { x, y, z };
        let n = v.norm();
        if !(n * n <= T::one() + T::tol(BLOCH_TOL)) {
            return Err(Error::BlochOutOfBall {
                norm: n.to_f64_lossy(),
            });
        }
        Ok(v)
    }

    pub fn norm(&self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

pub fn bloch_to_density<T: Real>(v: &BlochVector<T>) -> Result<DensityOperator<T>> {
    let v = BlochVector::new(v.x, v.y, v.z)?;
    Ok(DensityOperator::trusted(bloch_to_density_unchecked(&v)))
}

/// `(I + xσx + yσy + zσz)/2` without the ball check.
pub fn bloch_to_density_unchecked<T: Real>(v: &BlochVector<T>) -> ComplexMatrix<T> {
    let half = T::lit(0.5);
    ComplexMatrix::from_vec(
        2,
        vec![
            cr(half * (T::one() + v.z)),
            C::new(half * v.x, -half * v.y),
            C::new(half * v.x, half * v.y),
            cr(half * (T::one() - v.z)),
        ],
    )
    .expect("2×2 layout")
}

pub fn density_to_bloch<T: Real>(rho: &DensityOperator<T>) -> Result<BlochVector<T>> {
    bloch_of_matrix(rho.matrix())
}

/// Bloch coordinates `(tr ρσx, tr ρσy, tr ρσz)` of any 2×2 matrix.
pub fn bloch_of_matrix<T: Real>(m: &ComplexMatrix<T>) -> Result<BlochVector<T>> {
    if m.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: m.dim(),
        });
    }
    let s = m.as_slice();
    Ok(BlochVector {
        x: s[1].re + s[2].re,
        y: s[2].im - s[1].im,
        z: s[0].re - s[3].re,
    })
}

/// Number of sites `N` with `d^N = dim`, if any.
pub fn site_count(dim: usize, site_dim: usize) -> Result<usize> {
    if site_dim < 2 {
        return Err(Error::InvalidParameter("site dimension must be ≥ 2".into()));
    }
    let mut n = 0;
    let mut p = 1usize;
    while p < dim {
        p *= site_dim;
        n += 1;
    }
    if p != dim || n == 0 {
        return Err(Error::NotPowerOfDim { dim, site_dim });
    }
    Ok(n)
}

/// Reduced matrix on site `keep` (1-based, site 1 most significant) of an
/// `n_sites`-fold composite of `site_dim`-level systems.
pub fn reduce_to_site<T: Real>(
    m: &ComplexMatrix<T>,
    keep: usize,
    n_sites: usize,
    site_dim: usize,
) -> Result<ComplexMatrix<T>> {
    let expected = site_dim.checked_pow(n_sites as u32).unwrap_or(usize::MAX);
    if m.dim() != expected {
        return Err(Error::NotPowerOfDim {
            dim: m.dim(),
            site_dim,
        });
    }
    if keep == 0 || keep > n_sites {
        return Err(Error::SiteOutOfRange {
            site: keep,
            n_sites,
        });
    }
    let d = site_dim;
    let stride = d.pow((n_sites - keep) as u32);
    let rest = m.dim() / d;
    let full = |a: usize, r: usize| (r / stride) * stride * d + a * stride + r % stride;
    let mut out = ComplexMatrix::zeros(d);
    for a in 0..d {
        for b in 0..d {
            let mut acc = C::zero();
            for r in 0..rest {
                acc += m[(full(a, r), full(b, r))];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// `tr(tr_rest(m) · op)` for a single-site operator `op`, summed directly
/// over the composite entries. Equals `tr(m · embed(op, site))`.
pub fn site_trace_product<T: Real>(
    m: &ComplexMatrix<T>,
    op: &ComplexMatrix<T>,
    site: usize,
    n_sites: usize,
) -> C<T> {
    let d = op.dim();
    let stride = d.pow((n_sites - site) as u32);
    let rest = m.dim() / d;
    let (ms, os) = (m.as_slice(), op.as_slice());
    let n = m.dim();
    let mut acc = C::zero();
    for r in 0..rest {
        let base = (r / stride) * stride * d + r % stride;
        for a in 0..d {
            let row = (base + a * stride) * n + base;
            for b in 0..d {
                acc += ms[row + b * stride] * os[b * d + a];
            }
        }
    }
    acc
}

/// Partial trace over every site except `keep` (1-based), assuming qubits
/// unless the dimension is a power of some other site dimension given via
/// [`partial_trace_with_dim`].
pub fn partial_trace<T: Real>(
    rho: &DensityOperator<T>,
    keep: usize,
    n_sites: usize,
) -> Result<DensityOperator<T>> {
    let d = infer_site_dim(rho.dim(), n_sites)?;
    partial_trace_with_dim(rho, keep, n_sites, d)
}

pub fn partial_trace_with_dim<T: Real>(
    rho: &DensityOperator<T>,
    keep: usize,
    n_sites: usize,
    site_dim: usize,
) -> Result<DensityOperator<T>> {
    let mut m = reduce_to_site(rho.matrix(), keep, n_sites, site_dim)?;
    m.hermitize();
    Ok(DensityOperator::trusted(m))
}

fn infer_site_dim(dim: usize, n_sites: usize) -> Result<usize> {
    if n_sites == 0 {
        return Err(Error::InvalidParameter("n_sites must be ≥ 1".into()));
    }
    let guess = (dim as f64).powf(1.0 / n_sites as f64).round() as usize;
    if guess >= 2 && guess.checked_pow(n_sites as u32) == Some(dim) {
        Ok(guess)
    } else {
        Err(Error::NotPowerOfDim {
            dim,
            site_dim: guess.max(2),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type D = DensityOperator<f64>;

    fn bv(x: f64, y: f64, z: f64) -> BlochVector<f64> {
        BlochVector { x, y, z }
    }

    #[test]
    fn bloch_poles_and_center() {
        let e = bloch_to_density(&bv(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(e.matrix(), &pauli::excited());
        let g = bloch_to_density(&bv(0.0, 0.0, -1.0)).unwrap();
        assert_eq!(g.matrix(), &pauli::ground());
        let mixed = bloch_to_density(&bv(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(mixed, D::maximally_mixed(2));
    }

    #[test]
    fn bloch_rejects_outside_ball() {
        assert!(matches!(
            bloch_to_density(&bv(0.8, 0.8, 0.0)),
            Err(Error::BlochOutOfBall { .. })
        ));
    }

    #[test]
    fn density_to_bloch_examples() {
        let b = density_to_bloch(&D::excited()).unwrap();
        assert_eq!((b.x, b.y, b.z), (0.0, 0.0, 1.0));
        let b = density_to_bloch(&D::maximally_mixed(2)).unwrap();
        assert_eq!((b.x, b.y, b.z), (0.0, 0.0, 0.0));
        let mix = D::mixture(&[(0.25, &D::excited()), (0.75, &D::ground())]).unwrap();
        let b = density_to_bloch(&mix).unwrap();
        assert!((b.z + 0.5).abs() < 1e-15 && b.x == 0.0 && b.y == 0.0);
        assert!(density_to_bloch(&D::maximally_mixed(4)).is_err());
    }

    #[test]
    fn validation_catches_each_invariant() {
        let not_herm = ComplexMatrix::from_vec(
            2,
            vec![cr(0.5), C::new(0.0, 0.3), C::new(0.0, 0.3), cr(0.5)],
        )
        .unwrap();
        assert!(matches!(D::new(not_herm), Err(Error::NotHermitian { .. })));
        let bad_trace = ComplexMatrix::from_real_diagonal(&[0.5, 0.6]);
        assert!(matches!(D::new(bad_trace), Err(Error::NotUnitTrace { .. })));
        let negative = ComplexMatrix::from_real_diagonal(&[1.1, -0.1]);
        assert!(matches!(D::new(negative), Err(Error::NotPositive { .. })));
    }

    #[test]
    fn partial_trace_of_products() {
        let ge = D::ground().tensor(&D::excited());
        assert_eq!(partial_trace(&ge, 1, 2).unwrap(), D::ground());
        assert_eq!(partial_trace(&ge, 2, 2).unwrap(), D::excited());
    }

    #[test]
    fn partial_trace_of_bell_state_is_mixed() {
        // (|00⟩ + |11⟩)/√2: hand sum gives diag(1/2, 1/2).
        let s = 1.0 / 2f64.sqrt();
        let bell = D::pure(&[cr(s), cr(0.0), cr(0.0), cr(s)]).unwrap();
        for keep in [1, 2] {
            let r = partial_trace(&bell, keep, 2).unwrap();
            assert!(r.hs_distance(&D::maximally_mixed(2)).unwrap() < 1e-15);
        }
    }

    #[test]
    fn partial_trace_errors() {
        let rho = D::maximally_mixed(6);
        assert!(matches!(
            partial_trace(&rho, 1, 2),
            Err(Error::NotPowerOfDim { .. })
        ));
        let rho = D::maximally_mixed(4);
        assert!(matches!(
            partial_trace(&rho, 3, 2),
            Err(Error::SiteOutOfRange { .. })
        ));
    }

    #[test]
    fn partial_trace_three_sites_middle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = sampling::random_density::<f64, _>(2, &mut rng);
        let b = sampling::random_density::<f64, _>(2, &mut rng);
        let c = sampling::random_density::<f64, _>(2, &mut rng);
        let abc = a.tensor(&b).tensor(&c);
        assert!(partial_trace(&abc, 2, 3).unwrap().hs_distance(&b).unwrap() < 1e-15);
        assert!(partial_trace(&abc, 3, 3).unwrap().hs_distance(&c).unwrap() < 1e-15);
    }

    #[test]
    fn site_trace_product_matches_embedding() {
        use crate::embed::{embed_site, SiteOperator};
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let rho = sampling::random_density::<f64, _>(8, &mut rng);
        let op = sampling::random_complex_matrix::<f64, _>(2, &mut rng);
        for site in 1..=3 {
            let full = embed_site(&SiteOperator::new(op.clone(), site, 3)).unwrap();
            let direct = rho.matrix().trace_product(&full).unwrap();
            let fast = site_trace_product(rho.matrix(), &op, site, 3);
            assert!((direct - fast).norm() < 1e-13);
        }
    }

    #[test]
    fn qutrit_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = sampling::random_density::<f64, _>(3, &mut rng);
        let b = sampling::random_density::<f64, _>(3, &mut rng);
        let ab = a.tensor(&b);
        let r = partial_trace_with_dim(&ab, 1, 2, 3).unwrap();
        assert!(r.hs_distance(&a).unwrap() < 1e-15);
        assert_eq!(site_count(9, 3).unwrap(), 2);
    }
}
