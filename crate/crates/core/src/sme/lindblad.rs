use super::{lindbladian_of, IntegratorConfig, SdeModel};
use crate::control::ControlLaw;
use crate::density::DensityOperator;
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::scalar::{Real, C};

/// Classical RK4 solution of the averaged dynamics `dρ̄/dt = ℒ[ρ̄, β]` on
/// the grid of `cfg`. Controls are evaluated at the start of each step and
/// held over it, as in the stochastic scheme; the returned path has one
/// state per grid point (`steps + 1` entries, `record_stride` ignored).
pub fn lindblad_ode<T: Real>(
    rho0: &DensityOperator<T>,
    model: &SdeModel<T>,
    control: &dyn ControlLaw<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<Vec<DensityOperator<T>>> {
    cfg.validate()?;
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: rho0.dim(),
        });
    }
    if control.channels() != model.n_controls() {
        return Err(Error::ControlCountMismatch {
            expected: model.n_controls(),
            found: control.channels(),
        });
    }
    let steps = cfg.steps();
    let dt = cfg.dt;
    let half = C::new(dt * T::lit(0.5), T::zero());
    let full = C::new(dt, T::zero());
    let mut ctrl = vec![T::zero(); model.n_controls()];
    let mut rho = rho0.matrix().clone();
    let mut path = Vec::with_capacity(steps + 1);
    path.push(rho0.clone());
    for n in 0..steps {
        let t = cfg.time(n);
        control.evaluate(t, &rho, &mut ctrl);
        // the Hamiltonian hook is piecewise constant on grid cells, so every
        // stage uses its value at the left endpoint
        let f = |m: &ComplexMatrix<T>| lindbladian_of(m, model, &ctrl, t);
        let k1 = f(&rho)?;
        let mut tmp = rho.clone();
        tmp.axpy(half, &k1);
        let k2 = f(&tmp)?;
        tmp.clone_from(&rho);
        tmp.axpy(half, &k2);
        let k3 = f(&tmp)?;
        tmp.clone_from(&rho);
        tmp.axpy(full, &k3);
        let k4 = f(&tmp)?;
        let sixth = C::new(dt / T::lit(6.0), T::zero());
        let two = C::new(T::lit(2.0), T::zero());
        let mut incr = k1;
        incr.axpy(two, &k2);
        incr.axpy(two, &k3);
        incr += &k4;
        rho.axpy(sixth, &incr);
        if !rho.is_finite() {
            return Err(Error::IntegrationBlowup {
                time: (t + dt).to_f64_lossy(),
                min_eigenvalue: f64::NAN,
            });
        }
        rho.hermitize();
        path.push(DensityOperator::trusted(rho.clone()));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ZeroControl;
    use crate::density::{bloch_of_matrix, bloch_to_density, BlochVector};
    use crate::sme::qubit_sigma_z_model;

    #[test]
    fn excited_state_is_constant() {
        let m = qubit_sigma_z_model::<f64>();
        let cfg = IntegratorConfig::new(1e-2, 1.0, 0);
        let path =
            lindblad_ode(&DensityOperator::excited(), &m, &ZeroControl::new(1), &cfg).unwrap();
        assert_eq!(path.len(), 101);
        for s in &path {
            assert!(s.hs_distance(&DensityOperator::excited()).unwrap() < 1e-15);
        }
    }

    #[test]
    fn dephasing_decays_coherence_exponentially() {
        let m = qubit_sigma_z_model::<f64>();
        let cfg = IntegratorConfig::new(1e-3, 2.0, 0);
        let rho0 = bloch_to_density(&BlochVector {
            x: 1.0,
            y: 0.0,
            z: 0.0,
        })
        .unwrap();
        let path = lindblad_ode(&rho0, &m, &ZeroControl::new(1), &cfg).unwrap();
        for (n, s) in path.iter().enumerate() {
            let t = cfg.time(n);
            let b = bloch_of_matrix(s.matrix()).unwrap();
            assert!((b.x - (-2.0 * t).exp()).abs() < 1e-10);
            assert!(b.y.abs() < 1e-14 && b.z.abs() < 1e-14);
            assert!((s.matrix().trace().re - 1.0).abs() < 1e-12);
            assert!(s.matrix().hermiticity_defect() < 1e-14);
        }
    }
}
