//! Fréchet calculus on Hilbert–Schmidt space: functionals, gradients, the
//! second-order generator `D(ρ,β)`, Dynkin and tower checks, cost
//! functionals and a Monte Carlo test of dynamic programming over a
//! finite control grid with one switch.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::control::{ConstantControl, ControlLaw};
use crate::density::DensityOperator;
use crate::ensemble::{par_reduce, trajectory_seed, ScalarStats};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::scalar::Real;
use crate::sme::{integrate, lindbladian_of, measurement_superop_of, IntegratorConfig, SdeModel};

/// Traceless tolerance for gradient directions.
pub const DIRECTION_TOL: f64 = 1e-10;
/// Step sizes of the Richardson-refined central difference.
pub const FD_STEPS: [f64; 2] = [1e-4, 1e-5];
/// Step of the central second difference used for custom Hessians.
pub const FD_HESSIAN_STEP: f64 = 1e-4;
/// Default cap on `outer × inner` trajectories in [`dpp_check`].
pub const DEFAULT_DPP_BUDGET: usize = 1_000_000;

type Evaluator<T> = Arc<dyn Fn(&ComplexMatrix<T>) -> T + Send + Sync>;

#[derive(Clone)]
pub enum FunctionalKind<T: Real> {
    /// `Re⟨F, ρ⟩`.
    Linear { f: ComplexMatrix<T> },
    /// `Re⟨F, ρ⟩ + Re⟨ρ, C₁ρ⟩`; `f` may be absent.
    Quadratic {
        f: Option<ComplexMatrix<T>>,
        c1: ComplexMatrix<T>,
    },
    /// Arbitrary real functional; derivatives by finite differences.
    Custom(Evaluator<T>),
}

/// Real functional on Hermitian matrices.
#[derive(Clone)]
pub struct Functional<T: Real> {
    kind: FunctionalKind<T>,
}

impl<T: Real> fmt::Debug for Functional<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FunctionalKind::Linear { f: m } => write!(f, "Linear(dim {})", m.dim()),
            FunctionalKind::Quadratic { c1, .. } => write!(f, "Quadratic(dim {})", c1.dim()),
            FunctionalKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl<T: Real> Functional<T> {
    pub fn linear(f: ComplexMatrix<T>) -> Self {
        Self {
            kind: FunctionalKind::Linear { f },
        }
    }

    pub fn quadratic(f: Option<ComplexMatrix<T>>, c1: ComplexMatrix<T>) -> Result<Self> {
        if let Some(f) = &f {
            f.check_same_dim(&c1)?;
        }
        Ok(Self {
            kind: FunctionalKind::Quadratic { f, c1 },
        })
    }

    /// `tr(ρ²)`.
    pub fn purity(dim: usize) -> Self {
        Self::quadratic(None, ComplexMatrix::identity(dim)).unwrap()
    }

    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&ComplexMatrix<T>) -> T + Send + Sync + 'static,
    {
        Self {
            kind: FunctionalKind::Custom(Arc::new(f)),
        }
    }

    /// The zero functional on `dim`-level states.
    pub fn zero(dim: usize) -> Self {
        Self::linear(ComplexMatrix::zeros(dim))
    }

    pub fn kind(&self) -> &FunctionalKind<T> {
        &self.kind
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let own = match &self.kind {
            FunctionalKind::Linear { f } => f.dim(),
            FunctionalKind::Quadratic { c1, .. } => c1.dim(),
            FunctionalKind::Custom(_) => return Ok(()),
        };
        if own != dim {
            return Err(Error::DimensionMismatch {
                expected: own,
                found: dim,
            });
        }
        Ok(())
    }

    /// Value at an arbitrary matrix of matching dimension.
    pub fn eval_matrix(&self, rho: &ComplexMatrix<T>) -> Result<T> {
        self.check_dim(rho.dim())?;
        Ok(match &self.kind {
            FunctionalKind::Linear { f } => f.hs_inner(rho)?.re,
            FunctionalKind::Quadratic { f, c1 } => {
                let lin = match f {
                    Some(f) => f.hs_inner(rho)?.re,
                    None => T::zero(),
                };
                lin + rho.hs_inner(&c1.matmul(rho)?)?.re
            }
            FunctionalKind::Custom(g) => g(rho),
        })
    }

    pub fn eval(&self, rho: &DensityOperator<T>) -> Result<T> {
        self.eval_matrix(rho.matrix())
    }

    /// `⟨τ, ∇G[ρ]⟩`; analytic for linear and quadratic kinds.
    fn directional(&self, rho: &ComplexMatrix<T>, tau: &ComplexMatrix<T>) -> Result<T> {
        match &self.kind {
            FunctionalKind::Linear { f } => Ok(tau.hs_inner(f)?.re),
            FunctionalKind::Quadratic { f, c1 } => {
                let lin = match f {
                    Some(f) => tau.hs_inner(f)?.re,
                    None => T::zero(),
                };
                // d/dε Re⟨ρ+ετ, C₁(ρ+ετ)⟩ = Re⟨τ, C₁ρ⟩ + Re⟨ρ, C₁τ⟩
                let a = tau.hs_inner(&c1.matmul(rho)?)?.re;
                let b = rho.hs_inner(&c1.matmul(tau)?)?.re;
                Ok(lin + a + b)
            }
            FunctionalKind::Custom(_) => self.fd_directional(rho, tau),
        }
    }

    /// Richardson-refined central difference along `tau`.
    pub fn fd_directional(&self, rho: &ComplexMatrix<T>, tau: &ComplexMatrix<T>) -> Result<T> {
        let central = |eps: T| -> Result<T> {
            let mut plus = rho.clone();
            plus.axpy(crate::scalar::C::new(eps, T::zero()), tau);
            let mut minus = rho.clone();
            minus.axpy(crate::scalar::C::new(-eps, T::zero()), tau);
            Ok((self.eval_matrix(&plus)? - self.eval_matrix(&minus)?) / (eps + eps))
        };
        let (h1, h2) = (T::lit(FD_STEPS[0]), T::lit(FD_STEPS[1]));
        let g1 = central(h1)?;
        let g2 = central(h2)?;
        let r2 = (h1 / h2).powi(2);
        Ok((r2 * g2 - g1) / (r2 - T::one()))
    }

    /// `⟨τ⊗τ, ∇^{⊗2}G[ρ]⟩`.
    fn second_directional(&self, rho: &ComplexMatrix<T>, tau: &ComplexMatrix<T>) -> Result<T> {
        match &self.kind {
            FunctionalKind::Linear { .. } => Ok(T::zero()),
            FunctionalKind::Quadratic { c1, .. } => {
                let two = T::lit(2.0);
                Ok(two * tau.hs_inner(&c1.matmul(tau)?)?.re)
            }
            FunctionalKind::Custom(_) => {
                let h = T::lit(FD_HESSIAN_STEP);
                let mut plus = rho.clone();
                plus.axpy(crate::scalar::C::new(h, T::zero()), tau);
                let mut minus = rho.clone();
                minus.axpy(crate::scalar::C::new(-h, T::zero()), tau);
                let mid = self.eval_matrix(rho)?;
                Ok((self.eval_matrix(&plus)? - mid - mid + self.eval_matrix(&minus)?) / (h * h))
            }
        }
    }
}

fn check_direction<T: Real>(tau: &ComplexMatrix<T>) -> Result<()> {
    let tr = tau.trace();
    let defect = tau.hermiticity_defect();
    let tol = T::tol(DIRECTION_TOL);
    if tr.norm() > tol || defect > tol {
        return Err(Error::NonTracelessDirection {
            trace: tr.norm().to_f64_lossy().max(defect.to_f64_lossy()),
        });
    }
    Ok(())
}

/// `⟨τ, ∇G[ρ]⟩` for a traceless Hermitian direction `τ`.
pub fn frechet_gradient<T: Real>(
    g: &Functional<T>,
    rho: &DensityOperator<T>,
    tau: &ComplexMatrix<T>,
) -> Result<T> {
    rho.matrix().check_same_dim(tau)?;
    g.check_dim(rho.dim())?;
    check_direction(tau)?;
    g.directional(rho.matrix(), tau)
}

/// `D(ρ,β)[G] = ⟨ℒ(ρ,β), ∇G⟩ + ½ Σ_c ⟨ℛ_c⊗ℛ_c, ∇^{⊗2}G⟩` at time `t`.
pub fn generator_apply<T: Real>(
    g: &Functional<T>,
    rho: &ComplexMatrix<T>,
    controls: &[T],
    model: &SdeModel<T>,
    t: T,
) -> Result<T> {
    g.check_dim(rho.dim())?;
    let drift = lindbladian_of(rho, model, controls, t)?;
    let mut value = g.directional(rho, &drift)?;
    if !matches!(g.kind, FunctionalKind::Linear { .. }) {
        let half = T::lit(0.5);
        for l in model.couplings() {
            let r = measurement_superop_of(rho, &l.to_dense())?;
            value += half * g.second_directional(rho, &r)?;
        }
    }
    Ok(value)
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_stats(s: &ScalarStats) -> Self {
        Self {
            mean: s.mean(),
            std_error: s.std_error(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DynkinReport {
    /// `(mean G(ρ_ε) − G(ρ₀)) / ε`.
    pub mc_estimate: f64,
    /// `D(ρ₀,β)[G]`.
    pub generator_value: f64,
    pub standard_error: f64,
    /// Bound on the `O(ε)` bias, `|Ê D(ρ_ε,β)[G] − D(ρ₀,β)[G]|`.
    pub bias_bound: f64,
    pub epsilon: f64,
    pub samples: usize,
}

impl DynkinReport {
    pub fn gap(&self) -> f64 {
        (self.mc_estimate - self.generator_value).abs()
    }

    pub fn tolerance(&self) -> f64 {
        3.0 * self.standard_error + self.bias_bound
    }

    pub fn passes(&self) -> bool {
        self.gap() <= self.tolerance()
    }
}

/// Difference-quotient check of the generator from `M` trajectories run to
/// time `epsilon` under constant controls `beta`. Seeds derive from
/// `cfg.seed`; `cfg.horizon` is ignored.
///
/// Eigenvalue clipping is switched off for these runs. Clipping only ever
/// pulls states inward, so near pure states it adds an `O(1)` drift to the
/// mean that the generator does not contain.
pub fn dynkin_check<T: Real>(
    g: &Functional<T>,
    rho0: &DensityOperator<T>,
    model: &SdeModel<T>,
    beta: &[T],
    epsilon: T,
    cfg: &IntegratorConfig<T>,
    samples: usize,
) -> Result<DynkinReport> {
    if epsilon < T::lit(10.0) * cfg.dt * T::lit(1.0 - 1e-9) {
        return Err(Error::InvalidParameter(
            "Dynkin window must span at least 10 steps".into(),
        ));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let g0 = g.eval(rho0)?;
    let d0 = generator_apply(g, rho0.matrix(), beta, model, T::zero())?;
    let mut run = cfg.with_horizon(epsilon);
    run.repair_positivity = false;
    let control = ConstantControl::new(beta.to_vec());
    let (dq, dgen) = par_reduce(
        samples,
        || (ScalarStats::default(), ScalarStats::default()),
        |acc, i| {
            let mut last = None;
            let steps = run.steps();
            integrate(
                rho0,
                model,
                &control,
                &run.with_seed(trajectory_seed(cfg.seed, i)),
                |p| {
                    if p.index == steps {
                        last = Some(p.state.clone());
                    }
                },
            )?;
            let end = last.expect("final grid point observed");
            acc.0.push(g.eval_matrix(&end)?.to_f64_lossy());
            acc.1
                .push(generator_apply(g, &end, beta, model, epsilon)?.to_f64_lossy());
            Ok(())
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
        },
    )?;
    let eps = run.time(run.steps()).to_f64_lossy();
    let g0 = g0.to_f64_lossy();
    let d0 = d0.to_f64_lossy();
    Ok(DynkinReport {
        mc_estimate: (dq.mean() - g0) / eps,
        generator_value: d0,
        standard_error: dq.std_error() / eps,
        bias_bound: (dgen.mean() - d0).abs(),
        epsilon: eps,
        samples,
    })
}

/// Running cost `Re⟨ρ,C₁ρ⟩ + |β|²Re⟨ρ,C₂⟩` and terminal cost `F`.
#[derive(Clone, Debug)]
pub struct CostSpec<T: Real> {
    pub state_cost: Option<ComplexMatrix<T>>,
    pub control_weight: Option<ComplexMatrix<T>>,
    pub terminal: Functional<T>,
}

impl<T: Real> CostSpec<T> {
    pub fn zero(dim: usize) -> Self {
        Self {
            state_cost: None,
            control_weight: None,
            terminal: Functional::zero(dim),
        }
    }

    pub fn terminal_only(terminal: Functional<T>) -> Self {
        Self {
            state_cost: None,
            control_weight: None,
            terminal,
        }
    }

    pub fn has_running_cost(&self) -> bool {
        self.state_cost.is_some() || self.control_weight.is_some()
    }

    pub fn running(&self, rho: &ComplexMatrix<T>, controls: &[T]) -> Result<T> {
        let mut c = T::zero();
        if let Some(c1) = &self.state_cost {
            c += rho.hs_inner(&c1.matmul(rho)?)?.re;
        }
        if let Some(c2) = &self.control_weight {
            let b2: T = controls.iter().map(|&b| b * b).sum();
            if b2 != T::zero() {
                c += b2 * rho.hs_inner(c2)?.re;
            }
        }
        Ok(c)
    }
}

/// Cost of one trajectory: trapezoid running cost plus terminal cost, and
/// the final state.
fn path_cost<T: Real>(
    rho0: &DensityOperator<T>,
    model: &SdeModel<T>,
    control: &dyn ControlLaw<T>,
    cost: &CostSpec<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<(T, ComplexMatrix<T>)> {
    let steps = cfg.steps();
    let mut running = T::zero();
    let mut prev: Option<T> = None;
    let mut held = vec![T::zero(); model.n_controls()];
    let mut last = None;
    let mut err = None;
    let half = cfg.dt * T::lit(0.5);
    integrate(rho0, model, control, cfg, |p| {
        if cost.has_running_cost() {
            if !p.controls.is_empty() {
                held.copy_from_slice(p.controls);
            }
            match cost.running(p.state, &held) {
                Ok(c) => {
                    if let Some(q) = prev {
                        running += half * (q + c);
                    }
                    prev = Some(c);
                }
                Err(e) => err = Some(e),
            }
        }
        if p.index == steps {
            last = Some(p.state.clone());
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let end = last.expect("final grid point observed");
    Ok((running + cost.terminal.eval_matrix(&end)?, end))
}

/// Monte Carlo mean of `∫₀ᵀ C(ρ_s, α_s) ds + F(ρ_T)` over `samples`
/// trajectories seeded from `cfg.seed`.
pub fn evaluate_cost<T: Real>(
    rho0: &DensityOperator<T>,
    model: &SdeModel<T>,
    control: &dyn ControlLaw<T>,
    cost: &CostSpec<T>,
    cfg: &IntegratorConfig<T>,
    samples: usize,
) -> Result<Estimate> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    cost.terminal.check_dim(model.dim())?;
    let stats = par_reduce(
        samples,
        ScalarStats::default,
        |acc, i| {
            let run = cfg.with_seed(trajectory_seed(cfg.seed, i));
            let (c, _) = path_cost(rho0, model, control, cost, &run)?;
            acc.push(c.to_f64_lossy());
            Ok(())
        },
        |a, b| a.merge(&b),
    )?;
    Ok(Estimate::from_stats(&stats))
}

/// Finite set of admissible constant control levels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlGrid<T> {
    values: Vec<T>,
}

impl<T: Real> ControlGrid<T> {
    /// Sorts and deduplicates `values`, rejecting any level beyond
    /// `alpha_max`.
    pub fn new(mut values: Vec<T>, alpha_max: T) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("control grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || v.abs() > alpha_max) {
            return Err(Error::InvalidParameter(
                "control grid levels must satisfy |β| ≤ alpha_max".into(),
            ));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DppReport {
    /// `min_β S(0, ρ₀, β)` over full-horizon constant levels.
    pub lhs: f64,
    pub lhs_std_error: f64,
    pub lhs_argmin: f64,
    /// `min_{β₁} E[∫₀^τ C + V̂(τ, ρ_τ)]`.
    pub rhs: f64,
    pub rhs_std_error: f64,
    pub rhs_argmin: f64,
    /// `lhs − rhs`.
    pub gap: f64,
    /// Three combined standard errors.
    pub tolerance: f64,
    pub outer: usize,
    pub inner: usize,
    /// Per-level full-horizon costs, in grid order.
    pub lhs_costs: Vec<Estimate>,
    /// Per-level first-leg objectives, in grid order.
    pub rhs_costs: Vec<Estimate>,
}

impl DppReport {
    pub fn passes(&self) -> bool {
        self.gap.abs() <= self.tolerance
    }

    /// The one-sided statement `lhs ≥ rhs − 3·SE`.
    pub fn inequality_holds(&self) -> bool {
        self.gap >= -self.tolerance
    }
}

#[derive(Clone, Debug)]
pub struct DppConfig<T> {
    pub tau: T,
    pub outer: usize,
    pub inner: usize,
    pub budget: usize,
}

impl<T: Real> DppConfig<T> {
    pub fn new(tau: T, outer: usize, inner: usize) -> Self {
        Self {
            tau,
            outer,
            inner,
            budget: DEFAULT_DPP_BUDGET,
        }
    }
}

fn argmin(costs: &[Estimate]) -> usize {
    let mut best = 0;
    for (k, c) in costs.iter().enumerate() {
        if c.mean < costs[best].mean {
            best = k;
        }
    }
    best
}

/// Nested Monte Carlo check of the dynamic programming identity over
/// controls constant on `[0,τ)` and `[τ,T]` with levels from `grid`.
///
/// The left side optimizes one level over the whole horizon with
/// `outer` trajectories. The right side runs `outer` first legs per level;
/// from every `ρ_τ` it estimates each second-leg cost with `inner`
/// trajectories and keeps the smallest. Seeds are shared across levels
/// (common random numbers). The model must be time-homogeneous.
pub fn dpp_check<T: Real>(
    rho0: &DensityOperator<T>,
    model: &SdeModel<T>,
    cost: &CostSpec<T>,
    grid: &ControlGrid<T>,
    cfg: &IntegratorConfig<T>,
    dpp: &DppConfig<T>,
) -> Result<DppReport> {
    cfg.validate()?;
    if model.n_controls() != 1 {
        return Err(Error::ControlCountMismatch {
            expected: 1,
            found: model.n_controls(),
        });
    }
    if dpp.outer < 2 || dpp.inner < 1 {
        return Err(Error::InvalidParameter(
            "need at least 2 outer and 1 inner samples".into(),
        ));
    }
    let requested = dpp.outer.saturating_mul(dpp.inner);
    if requested > dpp.budget {
        return Err(Error::BudgetExceeded {
            requested,
            cap: dpp.budget,
        });
    }
    let horizon = cfg.time(cfg.steps());
    if !(dpp.tau > T::zero() && dpp.tau < horizon) {
        return Err(Error::InvalidParameter(
            "τ must lie strictly inside (0, T)".into(),
        ));
    }
    let first = cfg.with_horizon(dpp.tau);
    let second = cfg.with_horizon(horizon - first.time(first.steps()));
    let levels = grid.values();

    let lhs_costs = levels
        .iter()
        .map(|&b| {
            evaluate_cost(
                rho0,
                model,
                &ConstantControl::scalar(b),
                cost,
                cfg,
                dpp.outer,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let leg_one = CostSpec {
        state_cost: cost.state_cost.clone(),
        control_weight: cost.control_weight.clone(),
        terminal: Functional::zero(model.dim()),
    };
    let mut rhs_costs = Vec::with_capacity(levels.len());
    for &b1 in levels {
        let stats = par_reduce(
            dpp.outer,
            ScalarStats::default,
            |acc, i| {
                let seed = trajectory_seed(cfg.seed, i);
                let (c1, mid) = path_cost(
                    rho0,
                    model,
                    &ConstantControl::scalar(b1),
                    &leg_one,
                    &first.with_seed(seed),
                )?;
                let mid = DensityOperator::trusted(mid);
                let mut best = f64::INFINITY;
                for &b2 in levels {
                    let ctrl = ConstantControl::scalar(b2);
                    let mut s = ScalarStats::default();
                    for j in 0..dpp.inner {
                        let run =
                            second.with_seed(trajectory_seed(seed ^ 0xD1B5_4A32_D192_ED03, j));
                        let (c2, _) = path_cost(&mid, model, &ctrl, cost, &run)?;
                        s.push(c2.to_f64_lossy());
                    }
                    best = best.min(s.mean());
                }
                acc.push(c1.to_f64_lossy() + best);
                Ok(())
            },
            |a, b| a.merge(&b),
        )?;
        rhs_costs.push(Estimate::from_stats(&stats));
    }
    let l = argmin(&lhs_costs);
    let r = argmin(&rhs_costs);
    let (lhs, rhs) = (lhs_costs[l], rhs_costs[r]);
    Ok(DppReport {
        lhs: lhs.mean,
        lhs_std_error: lhs.std_error,
        lhs_argmin: levels[l].to_f64_lossy(),
        rhs: rhs.mean,
        rhs_std_error: rhs.std_error,
        rhs_argmin: levels[r].to_f64_lossy(),
        gap: lhs.mean - rhs.mean,
        tolerance: 3.0 * lhs.std_error.hypot(rhs.std_error),
        outer: dpp.outer,
        inner: dpp.inner,
        lhs_costs,
        rhs_costs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TowerReport {
    pub direct: Estimate,
    pub restarted: Estimate,
}

impl TowerReport {
    pub fn gap(&self) -> f64 {
        (self.direct.mean - self.restarted.mean).abs()
    }

    pub fn tolerance(&self) -> f64 {
        3.0 * self.direct.std_error.hypot(self.restarted.std_error)
    }
}

/// Compares `E[G(ρ_T)]` from full-horizon runs with the average over
/// `ρ_τ` of restarted estimates `E[G(ρ_T) | ρ_τ]` (`inner` runs each).
#[allow(clippy::too_many_arguments)]
pub fn tower_check<T: Real>(
    g: &Functional<T>,
    rho0: &DensityOperator<T>,
    model: &SdeModel<T>,
    control: &dyn ControlLaw<T>,
    cfg: &IntegratorConfig<T>,
    tau: T,
    outer: usize,
    inner: usize,
) -> Result<TowerReport> {
    let cost = CostSpec::terminal_only(g.clone());
    let direct = evaluate_cost(rho0, model, control, &cost, cfg, outer)?;
    let first = cfg.with_horizon(tau);
    let second = cfg.with_horizon(cfg.time(cfg.steps()) - first.time(first.steps()));
    let zero = CostSpec::zero(model.dim());
    let stats = par_reduce(
        outer,
        ScalarStats::default,
        |acc, i| {
            let seed = trajectory_seed(cfg.seed ^ 0x5851_F42D_4C95_7F2D, i);
            let (_, mid) = path_cost(rho0, model, control, &zero, &first.with_seed(seed))?;
            let mid = DensityOperator::trusted(mid);
            let mut s = ScalarStats::default();
            for j in 0..inner {
                let run = second.with_seed(trajectory_seed(seed, j));
                let (c, _) = path_cost(&mid, model, control, &cost, &run)?;
                s.push(c.to_f64_lossy());
            }
            acc.push(s.mean());
            Ok(())
        },
        |a, b| a.merge(&b),
    )?;
    Ok(TowerReport {
        direct,
        restarted: Estimate::from_stats(&stats),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ZeroControl;
    use crate::density::{bloch_to_density, BlochVector};
    use crate::pauli::{sigma_x, sigma_z};
    use crate::sampling;
    use crate::sme::qubit_sigma_z_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plus_x() -> DensityOperator<f64> {
        bloch_to_density(&BlochVector::new(1.0, 0.0, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn gradient_examples() {
        let g = Functional::linear(sigma_z::<f64>());
        let rho = DensityOperator::maximally_mixed(2);
        let s = 2f64.sqrt();
        let tx = sigma_x().scale_real(1.0 / s);
        let tz = sigma_z().scale_real(1.0 / s);
        assert!(frechet_gradient(&g, &rho, &tx).unwrap().abs() < 1e-15);
        assert!((frechet_gradient(&g, &rho, &tz).unwrap() - s).abs() < 1e-14);

        let p = Functional::purity(2);
        let rho = plus_x();
        let expected = 2.0 * tx.hs_inner(rho.matrix()).unwrap().re;
        assert!((frechet_gradient(&p, &rho, &tx).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn non_traceless_direction_is_rejected() {
        let g = Functional::linear(sigma_z::<f64>());
        let rho = DensityOperator::maximally_mixed(2);
        let e = frechet_gradient(&g, &rho, &ComplexMatrix::identity(2));
        assert!(matches!(e, Err(Error::NonTracelessDirection { .. })));
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for k in 0..100 {
            let d = if k % 2 == 0 { 2 } else { 3 };
            let rho: DensityOperator<f64> = sampling::random_density(d, &mut rng);
            let tau = sampling::random_traceless_direction::<f64, _>(d, &mut rng);
            let f = sampling::random_hermitian::<f64, _>(d, &mut rng);
            let c1 = sampling::random_complex_matrix::<f64, _>(d, &mut rng);
            for g in [
                Functional::linear(f.clone()),
                Functional::quadratic(Some(f.clone()), c1.clone()).unwrap(),
            ] {
                let exact = frechet_gradient(&g, &rho, &tau).unwrap();
                let fd = g.fd_directional(rho.matrix(), &tau).unwrap();
                assert!(
                    (exact - fd).abs() <= 1e-6 * exact.abs().max(1.0),
                    "{exact} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn custom_functional_uses_finite_differences() {
        let g = Functional::custom(|m: &ComplexMatrix<f64>| {
            let z = (m[(0, 0)] - m[(1, 1)]).re;
            z * z * z
        });
        let rho = bloch_to_density(&BlochVector::new(0.0, 0.0, 0.5).unwrap()).unwrap();
        let tau = sigma_z::<f64>();
        // d/dε (z + 2ε)³ = 6z²
        let v = frechet_gradient(&g, &rho, &tau).unwrap();
        assert!((v - 1.5).abs() < 1e-8, "{v}");
    }

    #[test]
    fn generator_closed_forms() {
        let m = qubit_sigma_z_model::<f64>();
        let gz = Functional::linear(sigma_z());
        let gx = Functional::linear(sigma_x());
        let p = Functional::purity(2);
        let mixed = DensityOperator::maximally_mixed(2);
        for rho in [mixed.clone(), plus_x(), DensityOperator::excited()] {
            let v = generator_apply(&gz, rho.matrix(), &[0.0], &m, 0.0).unwrap();
            assert!(v.abs() < 1e-14);
        }
        let v = generator_apply(&gx, plus_x().matrix(), &[0.0], &m, 0.0).unwrap();
        assert!((v + 2.0).abs() < 1e-14);
        let v = generator_apply(&p, mixed.matrix(), &[0.0], &m, 0.0).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        let c = Functional::linear(ComplexMatrix::identity(2));
        let v = generator_apply(&c, plus_x().matrix(), &[0.7], &m, 0.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn custom_generator_matches_quadratic() {
        let m = qubit_sigma_z_model::<f64>();
        let p = Functional::purity(2);
        let q = Functional::custom(|r: &ComplexMatrix<f64>| r.hs_norm().powi(2));
        let rho = bloch_to_density(&BlochVector::new(0.3, -0.2, 0.4).unwrap()).unwrap();
        let a = generator_apply(&p, rho.matrix(), &[0.5], &m, 0.0).unwrap();
        let b = generator_apply(&q, rho.matrix(), &[0.5], &m, 0.0).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn cost_examples() {
        let m = qubit_sigma_z_model::<f64>();
        let cfg = IntegratorConfig::new(1e-3, 1.0, 3);
        let rho = plus_x();
        let zero =
            evaluate_cost(&rho, &m, &ZeroControl::new(1), &CostSpec::zero(2), &cfg, 20).unwrap();
        assert_eq!(zero.mean, 0.0);

        let spec = CostSpec {
            state_cost: None,
            control_weight: Some(ComplexMatrix::identity(2)),
            terminal: Functional::zero(2),
        };
        let c = evaluate_cost(&rho, &m, &ConstantControl::scalar(0.7), &spec, &cfg, 20).unwrap();
        assert!((c.mean - 0.49).abs() < 1e-9);
    }

    #[test]
    fn degenerate_grid_gives_exact_equality() {
        let m = qubit_sigma_z_model::<f64>();
        let cfg = IntegratorConfig::new(2e-3, 0.4, 5);
        let rho = bloch_to_density(&BlochVector::new(0.6, 0.0, 0.2).unwrap()).unwrap();
        let cost =
            CostSpec::terminal_only(Functional::linear(DensityOperator::excited().into_matrix()));
        let grid = ControlGrid::new(vec![0.0], 1.0).unwrap();
        let r = dpp_check(&rho, &m, &cost, &grid, &cfg, &DppConfig::new(0.2, 200, 10)).unwrap();
        assert!(r.passes(), "{r:?}");
        // martingale: the mean of z is conserved without control
        assert!((r.lhs - 0.6).abs() < 3.0 * r.lhs_std_error + 1e-3);
    }

    #[test]
    fn budget_cap_is_enforced() {
        let m = qubit_sigma_z_model::<f64>();
        let cfg = IntegratorConfig::new(1e-2, 1.0, 5);
        let grid = ControlGrid::new(vec![0.0], 1.0).unwrap();
        let mut dpp = DppConfig::new(0.5, 2000, 200);
        dpp.budget = 100_000;
        let e = dpp_check(
            &DensityOperator::maximally_mixed(2),
            &m,
            &CostSpec::zero(2),
            &grid,
            &cfg,
            &dpp,
        );
        assert!(matches!(e, Err(Error::BudgetExceeded { .. })));
        assert!(ControlGrid::new(vec![2.0], 1.0).is_err());
    }
}
