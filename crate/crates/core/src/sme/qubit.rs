//! Affine Bloch-coordinate form of a qubit model. With
//! `ρ = (I + r·σ)/2` every term of the filtering equation is affine in `r`
//! except the `−tr((L+L†)ρ)ρ` diffusion correction, so one Euler step costs
//! a few dozen flops instead of several 2×2 complex products.

use super::SdeModel;
use crate::density::bloch_of_matrix;
use crate::matrix::ComplexMatrix;
use crate::pauli::{sigma_x, sigma_y, sigma_z};
use crate::scalar::{Real, C};

pub(crate) type V3<T> = [T; 3];
type M3<T> = [[T; 3]; 3];

#[derive(Clone, Debug)]
struct QubitChannel<T> {
    lin: M3<T>,
    offset: V3<T>,
    mean: V3<T>,
    mean0: T,
}

#[derive(Clone, Debug)]
pub(crate) struct QubitKernel<T> {
    drift: M3<T>,
    drift0: V3<T>,
    controls: Vec<V3<T>>,
    channels: Vec<QubitChannel<T>>,
}

/// `h` with `H = h₀I + h·σ`; the commutator term then reads `ṙ = 2h × r`.
#[inline]
pub(crate) fn hamiltonian_vector<T: Real>(h: &ComplexMatrix<T>) -> V3<T> {
    let s = h.as_slice();
    [
        (s[1].re + s[2].re) * T::lit(0.5),
        (s[2].im - s[1].im) * T::lit(0.5),
        (s[0].re - s[3].re) * T::lit(0.5),
    ]
}

fn components<T: Real>(m: &ComplexMatrix<T>) -> V3<T> {
    let b = bloch_of_matrix(m).expect("2×2");
    [b.x, b.y, b.z]
}

#[inline(always)]
fn cross_add<T: Real>(h: &V3<T>, r: &V3<T>, scale: T, out: &mut V3<T>) {
    out[0] += scale * (h[1] * r[2] - h[2] * r[1]);
    out[1] += scale * (h[2] * r[0] - h[0] * r[2]);
    out[2] += scale * (h[0] * r[1] - h[1] * r[0]);
}

impl<T: Real> QubitKernel<T> {
    pub(crate) fn new(model: &SdeModel<T>) -> Self {
        debug_assert_eq!(model.dim(), 2);
        let half = T::lit(0.5);
        let basis = [sigma_x::<T>(), sigma_y(), sigma_z()];
        let id = ComplexMatrix::<T>::identity(2);
        let mut drift = [[T::zero(); 3]; 3];
        let mut drift0 = [T::zero(); 3];

        let h = hamiltonian_vector(&model.hamiltonian().to_dense());
        // 2h × r as a matrix
        let cross = [
            [T::zero(), -h[2], h[1]],
            [h[2], T::zero(), -h[0]],
            [-h[1], h[0], T::zero()],
        ];
        for i in 0..3 {
            for j in 0..3 {
                drift[i][j] += T::lit(2.0) * cross[i][j];
            }
        }

        let mut channels = Vec::with_capacity(model.n_channels());
        for l in model.couplings() {
            let l = l.to_dense();
            let ld = l.adjoint();
            let ldl = ld.matmul(&l).expect("2×2");
            let k = &l + &ld;
            let dissipator = |x: &ComplexMatrix<T>| {
                let mut out = l.matmul(x).unwrap().matmul(&ld).unwrap();
                out -= &ldl.anticommutator(x).unwrap().scale_real(half);
                out
            };
            let linear = |x: &ComplexMatrix<T>| l.matmul(x).unwrap() + x.matmul(&ld).unwrap();

            let d0 = components(&dissipator(&id));
            let g0 = components(&linear(&id));
            let mut lin = [[T::zero(); 3]; 3];
            let mut mean = [T::zero(); 3];
            for (j, s) in basis.iter().enumerate() {
                let dj = components(&dissipator(s));
                let gj = components(&linear(s));
                for i in 0..3 {
                    drift[i][j] += dj[i] * half;
                    lin[i][j] = gj[i] * half;
                }
                mean[j] = k.trace_product(s).unwrap().re * half;
            }
            for i in 0..3 {
                drift0[i] += d0[i] * half;
            }
            channels.push(QubitChannel {
                lin,
                offset: [g0[0] * half, g0[1] * half, g0[2] * half],
                mean,
                mean0: k.trace().re * half,
            });
        }
        let controls = model
            .control_ops()
            .iter()
            .map(|op| hamiltonian_vector(&op.to_dense()))
            .collect();
        Self {
            drift,
            drift0,
            controls,
            channels,
        }
    }

    /// `tr((L_c + L_c†)ρ)` per channel.
    #[inline]
    pub(crate) fn means(&self, r: &V3<T>, out: &mut [T]) {
        for (o, ch) in out.iter_mut().zip(&self.channels) {
            *o = ch.mean0 + ch.mean[0] * r[0] + ch.mean[1] * r[1] + ch.mean[2] * r[2];
        }
    }

    /// One Euler–Maruyama step in Bloch coordinates; `hook` is the Bloch
    /// vector of the time-dependent Hamiltonian term, if any.
    #[inline]
    pub(crate) fn step(
        &self,
        r: &V3<T>,
        controls: &[T],
        hook: Option<&V3<T>>,
        dw: &[T],
        means: &[T],
        dt: T,
    ) -> V3<T> {
        let mut drift = self.drift0;
        for (i, d) in drift.iter_mut().enumerate() {
            let row = &self.drift[i];
            *d += row[0] * r[0] + row[1] * r[1] + row[2] * r[2];
        }
        let two = T::lit(2.0);
        for (h, &a) in self.controls.iter().zip(controls) {
            if a != T::zero() {
                cross_add(h, r, two * a, &mut drift);
            }
        }
        if let Some(h) = hook {
            cross_add(h, r, two, &mut drift);
        }
        let mut out = [
            r[0] + drift[0] * dt,
            r[1] + drift[1] * dt,
            r[2] + drift[2] * dt,
        ];
        for ((ch, &w), &m) in self.channels.iter().zip(dw).zip(means) {
            for i in 0..3 {
                let row = &ch.lin[i];
                let g = ch.offset[i] + row[0] * r[0] + row[1] * r[1] + row[2] * r[2];
                out[i] += (g - m * r[i]) * w;
            }
        }
        out
    }
}

/// Writes `(I + r·σ)/2` into a 2×2 matrix.
#[inline]
pub(crate) fn write_density<T: Real>(r: &V3<T>, m: &mut ComplexMatrix<T>) {
    let half = T::lit(0.5);
    let s = m.as_mut_slice();
    s[0] = C::new(half * (T::one() + r[2]), T::zero());
    s[1] = C::new(half * r[0], -half * r[1]);
    s[2] = C::new(half * r[0], half * r[1]);
    s[3] = C::new(half * (T::one() - r[2]), T::zero());
}

#[inline]
pub(crate) fn read_bloch<T: Real>(m: &ComplexMatrix<T>) -> V3<T> {
    let s = m.as_slice();
    [s[1].re + s[2].re, s[2].im - s[1].im, s[0].re - s[3].re]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityOperator;
    use crate::sampling;
    use crate::sme::{lindbladian, measurement_superop};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_form_matches_superoperators() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let h = sampling::random_hermitian::<f64, _>(2, &mut rng);
            let l = sampling::random_complex_matrix::<f64, _>(2, &mut rng);
            let c = sampling::random_hermitian::<f64, _>(2, &mut rng);
            let model = SdeModel::new(&h, std::slice::from_ref(&l), &[c]).unwrap();
            let kernel = QubitKernel::new(&model);
            let rho: DensityOperator<f64> = sampling::random_density(2, &mut rng);
            let r = read_bloch(rho.matrix());
            let mut means = [0.0];
            kernel.means(&r, &mut means);
            let k = &l + &l.adjoint();
            assert!((means[0] - rho.expectation(&k).unwrap()).abs() < 1e-13);

            let dt = 0.37;
            let drift_only = kernel.step(&r, &[0.6], None, &[0.0], &means, dt);
            let lin = components(&lindbladian(&rho, &model, &[0.6], 0.0).unwrap());
            for i in 0..3 {
                assert!(((drift_only[i] - r[i]) / dt - lin[i]).abs() < 1e-12);
            }
            let w = 0.21;
            let with_noise = kernel.step(&r, &[0.0], None, &[w], &means, 0.0);
            let rr = components(&measurement_superop(&rho, &l).unwrap());
            for i in 0..3 {
                assert!(((with_noise[i] - r[i]) / w - rr[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn density_round_trip() {
        let mut m = ComplexMatrix::<f64>::zeros(2);
        let r = [0.1, -0.4, 0.3];
        write_density(&r, &mut m);
        let back = read_bloch(&m);
        for i in 0..3 {
            assert!((back[i] - r[i]).abs() < 1e-15);
        }
        assert!((m.trace().re - 1.0).abs() < 1e-15);
    }
}
