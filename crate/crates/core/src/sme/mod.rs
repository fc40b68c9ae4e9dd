//! Controlled quantum filtering: superoperators, the Euler–Maruyama
//! integrator, the Lindblad mean-state ODE and the qubit Bloch form.
//!
//! Drift and diffusion of the conditional state `ρ` are
//!
//! ```text
//! ℒ[ρ, β] = −i[H̃ + Σ β_k Ĥ_k + H_mf(t), ρ] + Σ_c (L_c ρ L_c† − ½{L_c†L_c, ρ})
//! ℛ_c[ρ]  = L_c ρ + ρ L_c† − tr((L_c + L_c†)ρ) ρ
//! ```
//!
//! with one independent Wiener channel per coupling `L_c`.

mod bloch;
mod integrator;
mod lindblad;
mod qubit;

use std::fmt::Debug;
use std::sync::Arc;

pub use bloch::{bloch_step, simulate_bloch, BlochTrajectory};
pub use integrator::{
    blowup_threshold, integrate, simulate_trajectory, sme_step, GridPoint, IntegrationSummary,
    IntegratorConfig, Kernel, NoiseSource, Stepper, TrajectoryRecord, BLOWUP_DT_FACTOR,
    BLOWUP_EIGENVALUE,
};
pub use lindblad::lindblad_ode;

use crate::density::{DensityOperator, HERMITIAN_TOL};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::scalar::{Real, C};
use crate::sparse::CsrMatrix;

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_HORIZON: f64 = 5.0;

/// Time-dependent Hamiltonian contribution, e.g. the mean-field operator
/// evaluated along a frozen flow.
pub trait HamiltonianHook<T: Real>: Send + Sync + Debug {
    fn at(&self, t: T) -> &ComplexMatrix<T>;
    fn dim(&self) -> usize;
}

/// Hook that is constant on each cell `[t0 + n·dt, t0 + (n+1)·dt)`.
#[derive(Clone, Debug)]
pub struct PiecewiseConstantHook<T: Real> {
    pub t0: T,
    pub dt: T,
    pub values: Vec<ComplexMatrix<T>>,
}

impl<T: Real> PiecewiseConstantHook<T> {
    pub fn new(t0: T, dt: T, values: Vec<ComplexMatrix<T>>) -> Result<Self> {
        let first = values
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty hook".into()))?;
        if values.iter().any(|m| m.dim() != first.dim()) {
            return Err(Error::InvalidParameter("hook dimensions differ".into()));
        }
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter("hook dt must be positive".into()));
        }
        Ok(Self { t0, dt, values })
    }

    pub fn constant(value: ComplexMatrix<T>) -> Self {
        Self {
            t0: T::zero(),
            dt: T::infinity(),
            values: vec![value],
        }
    }
}

impl<T: Real> HamiltonianHook<T> for PiecewiseConstantHook<T> {
    fn at(&self, t: T) -> &ComplexMatrix<T> {
        if self.values.len() == 1 {
            return &self.values[0];
        }
        let pos = ((t - self.t0) / self.dt + T::lit(1e-9)).floor();
        let idx = pos.to_usize().unwrap_or(0).min(self.values.len() - 1);
        &self.values[idx]
    }

    fn dim(&self) -> usize {
        self.values[0].dim()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Channel<T: Real> {
    pub l: CsrMatrix<T>,
    pub l_dag_l: CsrMatrix<T>,
}

/// Drift/diffusion specification of a controlled filtering equation.
#[derive(Clone, Debug)]
pub struct SdeModel<T: Real> {
    dim: usize,
    hamiltonian: CsrMatrix<T>,
    couplings: Vec<CsrMatrix<T>>,
    control_ops: Vec<CsrMatrix<T>>,
    hook: Option<Arc<dyn HamiltonianHook<T>>>,
    channels: Vec<Channel<T>>,
}

fn check_hermitian<T: Real>(m: &CsrMatrix<T>, what: &str) -> Result<()> {
    let dense = m.to_dense();
    let defect = dense.hermiticity_defect();
    if defect > T::tol(HERMITIAN_TOL) {
        return Err(Error::InvalidParameter(format!(
            "{what} is not Hermitian (defect {:e})",
            defect.to_f64_lossy()
        )));
    }
    Ok(())
}

impl<T: Real> SdeModel<T> {
    pub fn new(
        hamiltonian: &ComplexMatrix<T>,
        couplings: &[ComplexMatrix<T>],
        control_ops: &[ComplexMatrix<T>],
    ) -> Result<Self> {
        Self::from_sparse(
            CsrMatrix::from_dense(hamiltonian),
            couplings.iter().map(CsrMatrix::from_dense).collect(),
            control_ops.iter().map(CsrMatrix::from_dense).collect(),
        )
    }

    /// Builds from sparse operators directly, avoiding dense `dᴺ × dᴺ`
    /// intermediates for large composite systems.
    pub fn from_sparse(
        hamiltonian: CsrMatrix<T>,
        couplings: Vec<CsrMatrix<T>>,
        control_ops: Vec<CsrMatrix<T>>,
    ) -> Result<Self> {
        let dim = hamiltonian.dim();
        for op in couplings.iter().chain(&control_ops) {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
        }
        check_hermitian(&hamiltonian, "Hamiltonian")?;
        for (k, op) in control_ops.iter().enumerate() {
            check_hermitian(op, &format!("control operator {k}"))?;
        }
        let channels = couplings
            .iter()
            .map(|l| Channel {
                l: l.clone(),
                l_dag_l: l.adjoint().matmul(l),
            })
            .collect();
        Ok(Self {
            dim,
            hamiltonian,
            couplings,
            control_ops,
            hook: None,
            channels,
        })
    }

    pub fn with_hook(mut self, hook: Arc<dyn HamiltonianHook<T>>) -> Result<Self> {
        if hook.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: hook.dim(),
            });
        }
        self.hook = Some(hook);
        Ok(self)
    }

    pub fn without_hook(mut self) -> Self {
        self.hook = None;
        self
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_channels(&self) -> usize {
        self.couplings.len()
    }

    pub fn n_controls(&self) -> usize {
        self.control_ops.len()
    }

    pub fn hamiltonian(&self) -> &CsrMatrix<T> {
        &self.hamiltonian
    }

    pub fn couplings(&self) -> &[CsrMatrix<T>] {
        &self.couplings
    }

    pub fn control_ops(&self) -> &[CsrMatrix<T>] {
        &self.control_ops
    }

    pub fn hook(&self) -> Option<&Arc<dyn HamiltonianHook<T>>> {
        self.hook.as_ref()
    }

    pub(crate) fn channels(&self) -> &[Channel<T>] {
        &self.channels
    }

    /// Dense `H̃ + Σ β_k Ĥ_k + H_mf(t)`.
    pub fn effective_hamiltonian(&self, controls: &[T], t: T) -> Result<ComplexMatrix<T>> {
        self.check_controls(controls)?;
        let mut h = self.hamiltonian.to_dense();
        for (op, &b) in self.control_ops.iter().zip(controls) {
            h.axpy(C::new(b, T::zero()), &op.to_dense());
        }
        if let Some(hook) = &self.hook {
            h += hook.at(t);
        }
        Ok(h)
    }

    pub(crate) fn check_controls(&self, controls: &[T]) -> Result<()> {
        if controls.len() != self.control_ops.len() {
            return Err(Error::ControlCountMismatch {
                expected: self.control_ops.len(),
                found: controls.len(),
            });
        }
        Ok(())
    }
}

/// `ℒ[ρ, β]` at time `t`, evaluated with dense products of the full formula.
pub fn lindbladian<T: Real>(
    rho: &DensityOperator<T>,
    model: &SdeModel<T>,
    controls: &[T],
    t: T,
) -> Result<ComplexMatrix<T>> {
    lindbladian_of(rho.matrix(), model, controls, t)
}

/// [`lindbladian`] on an arbitrary matrix argument.
pub fn lindbladian_of<T: Real>(
    rho: &ComplexMatrix<T>,
    model: &SdeModel<T>,
    controls: &[T],
    t: T,
) -> Result<ComplexMatrix<T>> {
    if rho.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: rho.dim(),
        });
    }
    let h = model.effective_hamiltonian(controls, t)?;
    let mut out = h.commutator(rho)?.scale(-C::i());
    for l in model.couplings() {
        let l = l.to_dense();
        let ld = l.adjoint();
        let ldl = ld.matmul(&l)?;
        out += &l.matmul(rho)?.matmul(&ld)?;
        out -= &ldl.anticommutator(rho)?.scale_real(T::lit(0.5));
    }
    Ok(out)
}

/// `ℛ[ρ] = Lρ + ρL† − tr((L + L†)ρ)ρ`.
pub fn measurement_superop<T: Real>(
    rho: &DensityOperator<T>,
    l: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>> {
    measurement_superop_of(rho.matrix(), l)
}

/// [`measurement_superop`] on an arbitrary matrix argument.
pub fn measurement_superop_of<T: Real>(
    rho: &ComplexMatrix<T>,
    l: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>> {
    rho.check_same_dim(l)?;
    let ld = l.adjoint();
    let k = l + &ld;
    let expect = k.trace_product(rho)?;
    let mut out = l.matmul(rho)? + rho.matmul(&ld)?;
    out.axpy(-expect, rho);
    Ok(out)
}

/// Standard qubit filtering model: coupling `σz`, control `σx`, no bare
/// Hamiltonian.
pub fn qubit_sigma_z_model<T: Real>() -> SdeModel<T> {
    use crate::pauli::{sigma_x, sigma_z};
    SdeModel::new(&ComplexMatrix::zeros(2), &[sigma_z()], &[sigma_x()]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::bloch_to_density;
    use crate::density::BlochVector;
    use crate::pauli::{sigma_x, sigma_z};
    use crate::sampling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type D = DensityOperator<f64>;

    fn plus_x() -> D {
        bloch_to_density(&BlochVector {
            x: 1.0,
            y: 0.0,
            z: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn lindbladian_stationary_points() {
        let m = qubit_sigma_z_model::<f64>();
        for rho in [D::excited(), D::maximally_mixed(2)] {
            let l = lindbladian(&rho, &m, &[0.0], 0.0).unwrap();
            assert!(l.hs_norm() < 1e-15);
        }
    }

    #[test]
    fn lindbladian_dephases_coherence() {
        // σz σx σz = −σx, so (σzρσz − ρ) = −σx for ρ = (I+σx)/2.
        let m = qubit_sigma_z_model::<f64>();
        let l = lindbladian(&plus_x(), &m, &[0.0], 0.0).unwrap();
        assert!(l.hs_distance(&sigma_x().scale_real(-1.0)).unwrap() < 1e-15);
    }

    #[test]
    fn lindbladian_rejects_bad_controls() {
        let m = qubit_sigma_z_model::<f64>();
        assert!(matches!(
            lindbladian(&D::excited(), &m, &[], 0.0),
            Err(Error::ControlCountMismatch { .. })
        ));
        assert!(matches!(
            lindbladian(&D::maximally_mixed(4), &m, &[0.0], 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn measurement_superop_examples() {
        let z = sigma_z::<f64>();
        assert!(measurement_superop(&D::excited(), &z).unwrap().hs_norm() < 1e-15);
        let r = measurement_superop(&D::maximally_mixed(2), &z).unwrap();
        assert!(r.hs_distance(&z).unwrap() < 1e-15);
        // z = 0.6: R = (1 − z²)σz = 0.64σz
        let rho = bloch_to_density(&BlochVector {
            x: 0.0,
            y: 0.0,
            z: 0.6,
        })
        .unwrap();
        let r = measurement_superop(&rho, &z).unwrap();
        assert!(r.hs_distance(&z.scale_real(0.64)).unwrap() < 1e-15);
    }

    #[test]
    fn superoperators_are_traceless_and_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for dim in [2, 3, 4] {
            let h = sampling::random_hermitian::<f64, _>(dim, &mut rng);
            let l = sampling::random_complex_matrix::<f64, _>(dim, &mut rng);
            let c = sampling::random_hermitian::<f64, _>(dim, &mut rng);
            let m = SdeModel::new(&h, std::slice::from_ref(&l), &[c]).unwrap();
            let rho = sampling::random_density::<f64, _>(dim, &mut rng);
            let lin = lindbladian(&rho, &m, &[0.7], 0.0).unwrap();
            assert!(lin.trace().norm() < 1e-10);
            assert!(lin.is_hermitian(1e-10));
            let lh = &l + &l.adjoint();
            let r = measurement_superop(&rho, &lh).unwrap();
            assert!(r.trace().norm() < 1e-10);
            assert!(r.is_hermitian(1e-10));
        }
    }

    #[test]
    fn model_validation() {
        let z = sigma_z::<f64>();
        let non_herm = ComplexMatrix::from_fn(2, |i, j| C::new(0.0, (i + 2 * j) as f64));
        assert!(SdeModel::new(&non_herm, std::slice::from_ref(&z), &[]).is_err());
        assert!(SdeModel::new(&z, &[ComplexMatrix::identity(4)], &[]).is_err());
        let hook = Arc::new(PiecewiseConstantHook::constant(
            ComplexMatrix::<f64>::zeros(4),
        ));
        assert!(qubit_sigma_z_model::<f64>().with_hook(hook).is_err());
    }

    #[test]
    fn piecewise_hook_lookup() {
        let vals: Vec<_> = (0..4)
            .map(|k| sigma_z::<f64>().scale_real(k as f64))
            .collect();
        let hook = PiecewiseConstantHook::new(0.0, 0.1, vals).unwrap();
        assert_eq!(hook.at(0.0)[(0, 0)].re, 0.0);
        assert_eq!(hook.at(0.1 * 3.0)[(0, 0)].re, 3.0);
        assert_eq!(hook.at(0.25)[(0, 0)].re, 2.0);
        assert_eq!(hook.at(10.0)[(0, 0)].re, 3.0);
    }
}
