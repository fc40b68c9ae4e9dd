//! Mean-field operators of two-body kernels, frozen-flow simulation of the
//! McKean–Vlasov filtering equation and its Picard fixed-point iteration.

use std::sync::Arc;

use crate::control::ControlLaw;
use crate::density::DensityOperator;
use crate::ensemble::{ensemble_mean_path, EnsemblePath};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::scalar::{Real, C};
use crate::sme::{IntegrationSummary, IntegratorConfig, PiecewiseConstantHook, SdeModel};

/// Two-body kernel `a(x,y;x′,y′)` on a `d`-level site, stored as a
/// `d² × d²` matrix whose row `(x,y)` sits at index `x + d·y` (first
/// argument fastest) and likewise for columns.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoBodyKernel<T: Real> {
    site_dim: usize,
    values: ComplexMatrix<T>,
}

pub const KERNEL_SYMMETRY_TOL: f64 = 1e-12;

impl<T: Real> TwoBodyKernel<T> {
    /// Wraps a kernel matrix, checking exchange and Hermitian symmetry.
    pub fn new(values: ComplexMatrix<T>) -> Result<Self> {
        let n = values.dim();
        let d = (n as f64).sqrt().round() as usize;
        if d * d != n || d < 2 {
            return Err(Error::NotPowerOfDim {
                dim: n,
                site_dim: d,
            });
        }
        let k = Self {
            site_dim: d,
            values,
        };
        let (exchange, hermitian) = k.symmetry_defects();
        let tol = T::tol(KERNEL_SYMMETRY_TOL);
        if exchange > tol {
            return Err(Error::InvalidParameter(format!(
                "kernel violates exchange symmetry by {:e}",
                exchange.to_f64_lossy()
            )));
        }
        if hermitian > tol {
            return Err(Error::NotHermitian {
                deviation: hermitian.to_f64_lossy(),
            });
        }
        Ok(k)
    }

    /// Kernel of a pair operator `A` on `ℂᵈ ⊗ ℂᵈ` (first factor most
    /// significant): `a(x,y;x′,y′) = A[x·d + y, x′·d + y′]`.
    pub fn from_pair_operator(a: &ComplexMatrix<T>) -> Result<Self> {
        let n = a.dim();
        let d = (n as f64).sqrt().round() as usize;
        if d * d != n {
            return Err(Error::NotPowerOfDim {
                dim: n,
                site_dim: d,
            });
        }
        let values = ComplexMatrix::from_fn(n, |r, c| {
            let (x, y) = (r % d, r / d);
            let (xp, yp) = (c % d, c / d);
            a[(x * d + y, xp * d + yp)]
        });
        Self::new(values)
    }

    pub fn site_dim(&self) -> usize {
        self.site_dim
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.values
    }

    /// `a(x,y;x′,y′)`, 0-based.
    #[inline]
    pub fn get(&self, x: usize, y: usize, xp: usize, yp: usize) -> C<T> {
        let d = self.site_dim;
        self.values[(x + d * y, xp + d * yp)]
    }

    /// Largest entrywise violations of `a(x,y;x′,y′) = a(y,x;y′,x′)` and
    /// `a(x,y;x′,y′) = conj(a(x′,y′;x,y))`.
    pub fn symmetry_defects(&self) -> (T, T) {
        let d = self.site_dim;
        let mut ex = T::zero();
        let mut he = T::zero();
        for x in 0..d {
            for y in 0..d {
                for xp in 0..d {
                    for yp in 0..d {
                        let v = self.get(x, y, xp, yp);
                        ex = ex.max((v - self.get(y, x, yp, xp)).norm());
                        he = he.max((v - self.get(xp, yp, x, y).conj()).norm());
                    }
                }
            }
        }
        (ex, he)
    }
}

/// The qubit Ising kernel `diag(1, −1, −1, 1)` of `σz ⊗ σz`.
pub fn ising_kernel<T: Real>() -> TwoBodyKernel<T> {
    TwoBodyKernel::new(ComplexMatrix::from_real_diagonal(&[
        T::one(),
        -T::one(),
        -T::one(),
        T::one(),
    ]))
    .expect("Ising kernel is symmetric")
}

/// `A^ρ(x,x′) = Σ_{y,y′} a(x,y;x′,y′) conj(ρ(y,y′))`.
pub fn meanfield_operator<T: Real>(
    kernel: &TwoBodyKernel<T>,
    rho: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>> {
    let d = kernel.site_dim;
    if rho.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: rho.dim(),
        });
    }
    Ok(ComplexMatrix::from_fn(d, |x, xp| {
        let mut acc = C::new(T::zero(), T::zero());
        for y in 0..d {
            for yp in 0..d {
                acc += kernel.get(x, y, xp, yp) * rho[(y, yp)].conj();
            }
        }
        acc
    }))
}

/// Deterministic flow `ξ: [0,T] → 𝒮`, sampled on the integration grid and
/// held constant on each cell.
#[derive(Clone, Debug)]
pub struct MeanFieldFlow<T: Real> {
    pub dt: T,
    pub times: Vec<T>,
    pub states: Vec<DensityOperator<T>>,
}

impl<T: Real> MeanFieldFlow<T> {
    /// `ξ(t) ≡ ρ` on the grid of `cfg`.
    pub fn constant(rho: &DensityOperator<T>, cfg: &IntegratorConfig<T>) -> Self {
        let steps = cfg.steps();
        Self {
            dt: cfg.dt,
            times: (0..=steps).map(|n| cfg.time(n)).collect(),
            states: vec![rho.clone(); steps + 1],
        }
    }

    fn from_path(path: &EnsemblePath<T>, dt: T) -> Self {
        Self {
            dt,
            times: path.times.clone(),
            states: path
                .mean
                .iter()
                .map(|m| {
                    let mut m = m.clone();
                    m.hermitize();
                    let tr = m.trace().re;
                    DensityOperator::trusted(m.scale_real(T::one() / tr))
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `sup_t ‖ξ(t) − η(t)‖₂`.
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        if self.len() != other.len() {
            return Err(Error::InvalidParameter(
                "flows live on different grids".into(),
            ));
        }
        let mut worst = T::zero();
        for (a, b) in self.states.iter().zip(&other.states) {
            worst = worst.max(a.hs_distance(b)?);
        }
        Ok(worst)
    }

    /// `max_n ‖ξ(t_{n+1}) − ξ(t_n)‖₂ / dt`.
    pub fn continuity_constant(&self) -> T {
        self.states
            .windows(2)
            .map(|w| w[0].hs_distance(&w[1]).unwrap_or(T::zero()) / self.dt)
            .fold(T::zero(), T::max)
    }

    pub fn expectation_path(&self, op: &ComplexMatrix<T>) -> Result<Vec<T>> {
        self.states.iter().map(|s| s.expectation(op)).collect()
    }

    /// The mean-field Hamiltonian `A^{ξ(t)}` on every grid cell.
    pub fn hook(&self, kernel: &TwoBodyKernel<T>) -> Result<PiecewiseConstantHook<T>> {
        let values = self
            .states
            .iter()
            .map(|s| meanfield_operator(kernel, s.matrix()))
            .collect::<Result<Vec<_>>>()?;
        PiecewiseConstantHook::new(T::zero(), self.dt, values)
    }
}

/// Empirical mean of an ensemble driven by a frozen flow.
#[derive(Clone, Debug)]
pub struct FrozenFlowResult<T: Real> {
    pub mean: MeanFieldFlow<T>,
    pub hs_std_error: Vec<T>,
    pub summary: IntegrationSummary,
}

impl<T: Real> FrozenFlowResult<T> {
    pub fn max_std_error(&self) -> T {
        self.hs_std_error.iter().copied().fold(T::zero(), T::max)
    }
}

/// Integrates `M` copies of the single-particle equation with the
/// mean-field term `A^{ξ(t)}` added to the Hamiltonian of `base`, and
/// averages the conditional states per grid point. Seeds derive from
/// `cfg.seed`.
pub fn simulate_frozen_flow<T: Real>(
    rho0: &DensityOperator<T>,
    base: &SdeModel<T>,
    kernel: &TwoBodyKernel<T>,
    flow: &MeanFieldFlow<T>,
    control: &dyn ControlLaw<T>,
    cfg: &IntegratorConfig<T>,
    trajectories: usize,
) -> Result<FrozenFlowResult<T>> {
    if flow.len() != cfg.steps() + 1 {
        return Err(Error::InvalidParameter(format!(
            "flow has {} points, grid needs {}",
            flow.len(),
            cfg.steps() + 1
        )));
    }
    let model = base.clone().with_hook(Arc::new(flow.hook(kernel)?))?;
    let mut run = cfg.clone();
    run.record_stride = 1;
    let path = ensemble_mean_path(rho0, &model, control, &run, trajectories)?;
    Ok(FrozenFlowResult {
        mean: MeanFieldFlow::from_path(&path, cfg.dt),
        hs_std_error: path.hs_std_error,
        summary: path.summary,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardConfig {
    pub ensemble_size: usize,
    /// Stopping tolerance on `sup_t ‖ξ^{k+1}(t) − ξ^k(t)‖₂`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Reuse the same trajectory seeds in every iteration.
    pub common_random_numbers: bool,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 2000,
            tolerance: 1e-3,
            max_iterations: 20,
            common_random_numbers: true,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(
                "Picard tolerance must be positive".into(),
            ));
        }
        if self.ensemble_size < 100 {
            return Err(Error::InvalidParameter(
                "Picard ensemble size must be ≥ 100".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PicardResult<T: Real> {
    pub flow: MeanFieldFlow<T>,
    pub iterations: usize,
    /// `residuals[k] = sup_t ‖ξ^{k+1} − ξ^k‖₂`.
    pub residuals: Vec<f64>,
    /// Largest per-time Monte Carlo standard error of the final iterate.
    pub std_error: f64,
}

/// Picard iteration `ξ^{k+1} = Ξ̂(ξ^k)` from `ξ⁰ ≡ ρ₀`, where `Ξ̂` is the
/// empirical mean of [`simulate_frozen_flow`]. Fails with
/// [`Error::NonConvergence`] (carrying the residual history) if the
/// tolerance is not met within `max_iterations`.
pub fn picard_solve<T: Real>(
    rho0: &DensityOperator<T>,
    base: &SdeModel<T>,
    kernel: &TwoBodyKernel<T>,
    control: &dyn ControlLaw<T>,
    cfg: &IntegratorConfig<T>,
    picard: &PicardConfig,
) -> Result<PicardResult<T>> {
    picard.validate()?;
    cfg.validate()?;
    let mut flow = MeanFieldFlow::constant(rho0, cfg);
    let mut residuals = Vec::new();
    for k in 0..picard.max_iterations {
        let seed = if picard.common_random_numbers {
            cfg.seed
        } else {
            crate::ensemble::trajectory_seed(cfg.seed ^ 0xA5A5_5A5A_DEAD_BEEF, k)
        };
        let next = simulate_frozen_flow(
            rho0,
            base,
            kernel,
            &flow,
            control,
            &cfg.with_seed(seed),
            picard.ensemble_size,
        )?;
        let r = next.mean.sup_distance(&flow)?.to_f64_lossy();
        residuals.push(r);
        flow = next.mean.clone();
        if r <= picard.tolerance {
            return Ok(PicardResult {
                flow,
                iterations: k + 1,
                residuals,
                std_error: next.max_std_error().to_f64_lossy(),
            });
        }
    }
    Err(Error::NonConvergence { residuals })
}

/// Consistency of a candidate fixed point under fresh randomness:
/// `sup_t ‖Ξ̂(ξ)(t) − ξ(t)‖₂` with trajectory seeds derived from `seed`,
/// and the largest per-time standard error of that re-simulation.
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_residual<T: Real>(
    rho0: &DensityOperator<T>,
    base: &SdeModel<T>,
    kernel: &TwoBodyKernel<T>,
    control: &dyn ControlLaw<T>,
    cfg: &IntegratorConfig<T>,
    flow: &MeanFieldFlow<T>,
    trajectories: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let again = simulate_frozen_flow(
        rho0,
        base,
        kernel,
        flow,
        control,
        &cfg.with_seed(seed),
        trajectories,
    )?;
    Ok((
        again.mean.sup_distance(flow)?.to_f64_lossy(),
        again.max_std_error().to_f64_lossy(),
    ))
}
