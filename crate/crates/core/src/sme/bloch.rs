//! Qubit filtering in Bloch coordinates for `L = σz`, `H = ξ_z(t)σz + ασx`:
//!
//! ```text
//! dx = (−2ξ_z y − 2x) dt − 2zx dW
//! dy = (2ξ_z x − 2y − 2αz) dt − 2zy dW
//! dz = 2αy dt + 2(1 − z²) dW
//! ```

use super::integrator::{blowup_threshold, IntegrationSummary, IntegratorConfig, NoiseSource};
use crate::control::ControlLaw;
use crate::density::{bloch_to_density_unchecked, BlochVector, PSD_TOL};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One Euler–Maruyama step of the Bloch equations, followed by the same
/// positivity repair as the matrix integrator (projection onto the sphere).
pub fn bloch_step<T: Real>(
    b: &BlochVector<T>,
    xi_z: T,
    alpha: T,
    dw: T,
    dt: T,
    repair_positivity: bool,
) -> Result<BlochVector<T>> {
    step_with_repair(b, xi_z, alpha, dw, dt, repair_positivity).map(|(b, _)| b)
}

fn step_with_repair<T: Real>(
    b: &BlochVector<T>,
    xi_z: T,
    alpha: T,
    dw: T,
    dt: T,
    repair_positivity: bool,
) -> Result<(BlochVector<T>, bool)> {
    let two = T::lit(2.0);
    let BlochVector { x, y, z } = *b;
    let nx = x + (-two * xi_z * y - two * x) * dt - two * z * x * dw;
    let ny = y + (two * xi_z * x - two * y - two * alpha * z) * dt - two * z * y * dw;
    let nz = z + two * alpha * y * dt + two * (T::one() - z * z) * dw;
    let mut out = BlochVector {
        x: nx,
        y: ny,
        z: nz,
    };
    if !(nx.is_finite() && ny.is_finite() && nz.is_finite()) {
        return Err(Error::IntegrationBlowup {
            time: f64::NAN,
            min_eigenvalue: f64::NAN,
        });
    }
    let r = out.norm();
    let min_eig = (T::one() - r) * T::lit(0.5);
    if repair_positivity {
        if min_eig < blowup_threshold(dt) {
            return Err(Error::IntegrationBlowup {
                time: f64::NAN,
                min_eigenvalue: min_eig.to_f64_lossy(),
            });
        }
        if min_eig < -T::tol(PSD_TOL) {
            out = BlochVector {
                x: nx / r,
                y: ny / r,
                z: nz / r,
            };
            return Ok((out, true));
        }
    } else {
        // diagonal entries of ρ are (1 ± z)/2
        let worst = (T::one() - nz.abs()) * T::lit(0.5);
        if worst < blowup_threshold(dt) {
            return Err(Error::IntegrationBlowup {
                time: f64::NAN,
                min_eigenvalue: worst.to_f64_lossy(),
            });
        }
    }
    Ok((out, false))
}

#[derive(Clone, Debug)]
pub struct BlochTrajectory<T: Real> {
    pub times: Vec<T>,
    pub points: Vec<BlochVector<T>>,
    pub controls: Vec<T>,
    pub innovations: Vec<T>,
    pub summary: IntegrationSummary,
}

/// Integrates the Bloch equations with the noise stream the matrix
/// integrator would draw for `cfg.seed`. The control law sees the matrix
/// form of the current point; `xi_z` is evaluated at the left end of each
/// step.
pub fn simulate_bloch<T: Real>(
    b0: &BlochVector<T>,
    xi_z: &dyn Fn(T) -> T,
    control: &dyn ControlLaw<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<BlochTrajectory<T>> {
    cfg.validate()?;
    if control.channels() != 1 {
        return Err(Error::ControlCountMismatch {
            expected: 1,
            found: control.channels(),
        });
    }
    let steps = cfg.steps();
    let mut noise = NoiseSource::new(cfg.seed, 1);
    let sqrt_dt = cfg.dt.sqrt();
    let mut out = BlochTrajectory {
        times: Vec::with_capacity(steps + 1),
        points: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps),
        innovations: Vec::with_capacity(steps),
        summary: IntegrationSummary {
            steps,
            ..Default::default()
        },
    };
    let mut b = *b0;
    let (mut alpha, mut dw) = ([T::zero()], [T::zero()]);
    out.times.push(T::zero());
    out.points.push(b);
    for n in 0..steps {
        let t = cfg.time(n);
        let rho = bloch_to_density_unchecked(&b);
        if control.evaluate(t, &rho, &mut alpha) {
            out.summary.clip_events += 1;
        }
        noise.fill(sqrt_dt, &mut dw);
        let (next, repaired) =
            step_with_repair(&b, xi_z(t), alpha[0], dw[0], cfg.dt, cfg.repair_positivity).map_err(
                |e| match e {
                    Error::IntegrationBlowup { min_eigenvalue, .. } => Error::IntegrationBlowup {
                        time: (t + cfg.dt).to_f64_lossy(),
                        min_eigenvalue,
                    },
                    other => other,
                },
            )?;
        if repaired {
            out.summary.repairs += 1;
        }
        b = next;
        out.controls.push(alpha[0]);
        out.innovations.push(dw[0]);
        out.times.push(cfg.time(n + 1));
        out.points.push(b);
    }
    Ok(out)
}
