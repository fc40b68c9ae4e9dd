//! Embedding single-site and two-site operators into an `N`-fold tensor
//! product. Sites are 1-based; site 1 is the most significant factor.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::scalar::{Real, C};
use crate::sparse::CsrMatrix;

/// `1 ⊗ … ⊗ O ⊗ … ⊗ 1` with `O` in slot `site`.
#[derive(Clone, Debug)]
pub struct SiteOperator<T: Real> {
    pub base: ComplexMatrix<T>,
    pub site: usize,
    pub n_sites: usize,
}

/// Two-site operator acting on slots `sites.0` (first tensor factor of
/// `base`) and `sites.1` (second factor), identity elsewhere.
#[derive(Clone, Debug)]
pub struct PairOperator<T: Real> {
    pub base: ComplexMatrix<T>,
    pub sites: (usize, usize),
    pub n_sites: usize,
}

impl<T: Real> SiteOperator<T> {
    pub fn new(base: ComplexMatrix<T>, site: usize, n_sites: usize) -> Self {
        Self {
            base,
            site,
            n_sites,
        }
    }
}

impl<T: Real> PairOperator<T> {
    pub fn new(base: ComplexMatrix<T>, sites: (usize, usize), n_sites: usize) -> Self {
        Self {
            base,
            sites,
            n_sites,
        }
    }
}

fn check_site(site: usize, n_sites: usize) -> Result<()> {
    if site == 0 || site > n_sites {
        return Err(Error::SiteOutOfRange { site, n_sites });
    }
    Ok(())
}

fn total_dim(d: usize, n_sites: usize) -> Result<usize> {
    d.checked_pow(n_sites as u32)
        .ok_or_else(|| Error::InvalidParameter(format!("{d}^{n_sites} overflows")))
}

/// Place values of the digit for `site` in a composite index.
#[inline]
fn stride(d: usize, site: usize, n_sites: usize) -> usize {
    d.pow((n_sites - site) as u32)
}

pub fn embed_site_sparse<T: Real>(op: &SiteOperator<T>) -> Result<CsrMatrix<T>> {
    check_site(op.site, op.n_sites)?;
    let d = op.base.dim();
    let dim = total_dim(d, op.n_sites)?;
    let s = stride(d, op.site, op.n_sites);
    let nnz_base: Vec<(usize, usize, C<T>)> = (0..d)
        .flat_map(|a| (0..d).map(move |b| (a, b)))
        .filter_map(|(a, b)| {
            let v = op.base[(a, b)];
            (!v.is_zero()).then_some((a, b, v))
        })
        .collect();
    let mut trip = Vec::with_capacity(nnz_base.len() * dim / d);
    for r in 0..dim / d {
        let base_idx = (r / s) * s * d + r % s;
        for &(a, b, v) in &nnz_base {
            trip.push((base_idx + a * s, base_idx + b * s, v));
        }
    }
    Ok(CsrMatrix::from_triplets(dim, trip))
}

pub fn embed_site<T: Real>(op: &SiteOperator<T>) -> Result<ComplexMatrix<T>> {
    Ok(embed_site_sparse(op)?.to_dense())
}

pub fn embed_pair_sparse<T: Real>(op: &PairOperator<T>, site_dim: usize) -> Result<CsrMatrix<T>> {
    let (l, lp) = op.sites;
    check_site(l, op.n_sites)?;
    check_site(lp, op.n_sites)?;
    if l == lp {
        return Err(Error::SiteCollision(l));
    }
    let d = site_dim;
    if op.base.dim() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: op.base.dim(),
        });
    }
    let dim = total_dim(d, op.n_sites)?;
    let (s1, s2) = (stride(d, l, op.n_sites), stride(d, lp, op.n_sites));
    let mut entries = Vec::new();
    for row in 0..d * d {
        for col in 0..d * d {
            let v = op.base[(row, col)];
            if !v.is_zero() {
                entries.push((row / d, row % d, col / d, col % d, v));
            }
        }
    }
    let mut trip = Vec::new();
    for i in 0..dim {
        // enumerate only indices whose digits at l and l' are zero
        if (i / s1) % d != 0 || (i / s2) % d != 0 {
            continue;
        }
        for &(a, b, ap, bp, v) in &entries {
            trip.push((i + a * s1 + b * s2, i + ap * s1 + bp * s2, v));
        }
    }
    Ok(CsrMatrix::from_triplets(dim, trip))
}

/// Embeds a two-site operator; the site dimension is `sqrt(base.dim())`.
pub fn embed_pair<T: Real>(op: &PairOperator<T>) -> Result<ComplexMatrix<T>> {
    let d = (op.base.dim() as f64).sqrt().round() as usize;
    if d * d != op.base.dim() {
        return Err(Error::NotPowerOfDim {
            dim: op.base.dim(),
            site_dim: d,
        });
    }
    Ok(embed_pair_sparse(op, d)?.to_dense())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{sigma_x, sigma_y, sigma_z};
    use crate::scalar::cr;

    type M = ComplexMatrix<f64>;

    /// Brute-force Kronecker chain with `op` at `site`.
    fn kron_chain(op: &M, site: usize, n: usize) -> M {
        let mut out = if site == 1 {
            op.clone()
        } else {
            M::identity(op.dim())
        };
        for s in 2..=n {
            let f = if s == site {
                op.clone()
            } else {
                M::identity(op.dim())
            };
            out = out.kron(&f);
        }
        out
    }

    #[test]
    fn site_embedding_definitions() {
        let z = sigma_z::<f64>();
        let e1 = embed_site(&SiteOperator::new(z.clone(), 1, 2)).unwrap();
        assert_eq!(e1, z.kron(&M::identity(2)));
        let e2 = embed_site(&SiteOperator::new(z.clone(), 2, 2)).unwrap();
        assert_eq!(e2, M::identity(2).kron(&z));
    }

    #[test]
    fn sigma_x_on_middle_site_flips_only_that_bit() {
        let x2 = embed_site(&SiteOperator::new(sigma_x::<f64>(), 2, 3)).unwrap();
        assert_eq!(x2, kron_chain(&sigma_x(), 2, 3));
        // basis |0 1 0⟩ (index 2) ↦ |0 0 0⟩ (index 0); |1 0 1⟩ (5) ↦ |1 1 1⟩ (7)
        for (from, to) in [(2usize, 0usize), (5, 7), (0, 2)] {
            for row in 0..8 {
                let expected = if row == to { cr(1.0) } else { cr(0.0) };
                assert_eq!(x2[(row, from)], expected);
            }
        }
    }

    #[test]
    fn ising_pair_embeddings() {
        let zz = sigma_z::<f64>().kron(&sigma_z());
        let p = embed_pair(&PairOperator::new(zz.clone(), (1, 2), 2)).unwrap();
        assert_eq!(p, M::from_real_diagonal(&[1.0, -1.0, -1.0, 1.0]));
        let prod = embed_site(&SiteOperator::new(sigma_z(), 1, 2))
            .unwrap()
            .matmul(&embed_site(&SiteOperator::new(sigma_z(), 2, 2)).unwrap())
            .unwrap();
        assert_eq!(p, prod);

        // (1,3) in N = 3: σz ⊗ 1 ⊗ σz built explicitly
        let p13 = embed_pair(&PairOperator::new(zz, (1, 3), 3)).unwrap();
        let explicit = sigma_z::<f64>().kron(&M::identity(2)).kron(&sigma_z());
        assert_eq!(p13, explicit);
    }

    #[test]
    fn non_product_pair_respects_site_order() {
        // σx⊗σy on (3,1) equals σy at site 1 times σx at site 3
        let xy = sigma_x::<f64>().kron(&sigma_y());
        let p = embed_pair(&PairOperator::new(xy, (3, 1), 3)).unwrap();
        let expected = kron_chain(&sigma_y(), 1, 3)
            .matmul(&kron_chain(&sigma_x(), 3, 3))
            .unwrap();
        assert!(p.hs_distance(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn embedding_errors() {
        assert!(matches!(
            embed_site(&SiteOperator::new(sigma_z::<f64>(), 0, 2)),
            Err(Error::SiteOutOfRange { .. })
        ));
        assert!(matches!(
            embed_site(&SiteOperator::new(sigma_z::<f64>(), 3, 2)),
            Err(Error::SiteOutOfRange { .. })
        ));
        let zz = sigma_z::<f64>().kron(&sigma_z());
        assert!(matches!(
            embed_pair(&PairOperator::new(zz, (2, 2), 3)),
            Err(Error::SiteCollision(2))
        ));
    }
}
