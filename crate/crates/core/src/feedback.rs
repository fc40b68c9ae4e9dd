//! Stabilizing feedback laws, the Lyapunov functional, exponential-rate fits
//! and reduction classification.
//!
//! Both stabilizers share one form,
//!
//! ```text
//! α(γ) = κ_F (1 − tr(γϱ*)) − i κ_C tr([D, γ] ϱ*)
//! ```
//!
//! with a fidelity gain `κ_F`, a commutator gain `κ_C` and a direction
//! operator `D`: `σy` for the mean-field law, `σx` for the local two-qubit
//! laws. Since `tr([D,γ]ϱ*) = tr(γ[ϱ*,D])`, the law is affine in `γ`:
//! `α = κ_F + tr(γW)` with the Hermitian weight `W = −iκ_C[ϱ*,D] − κ_Fϱ*`.

use crate::control::{clip, ControlLaw};
use crate::density::{site_trace_product, DensityOperator};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::pauli::{sigma_x, sigma_y};
use crate::scalar::{Real, C};

pub const DEFAULT_FIDELITY_GAIN: f64 = 5.0;
pub const DEFAULT_COMMUTATOR_GAIN: f64 = 1.0;
pub const DEFAULT_ALPHA_MAX: f64 = 10.0;
/// Imaginary residue tolerated before a law's value is declared non-real.
pub const IMAGINARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeedbackKind {
    Zero,
    MeanFieldStabilizer,
    LocalStabilizer,
}

#[derive(Clone, Debug)]
pub struct FeedbackLaw<T: Real> {
    kind: FeedbackKind,
    target: DensityOperator<T>,
    fidelity_gain: T,
    commutator_gain: T,
    alpha_max: T,
    direction: ComplexMatrix<T>,
    weight: ComplexMatrix<T>,
}

impl<T: Real> FeedbackLaw<T> {
    /// General constructor. Gains must be non-negative and `alpha_max`
    /// positive; `direction` must be Hermitian with the target's dimension.
    pub fn new(
        kind: FeedbackKind,
        target: DensityOperator<T>,
        fidelity_gain: T,
        commutator_gain: T,
        alpha_max: T,
        direction: ComplexMatrix<T>,
    ) -> Result<Self> {
        if fidelity_gain < T::zero() || commutator_gain < T::zero() {
            return Err(Error::InvalidParameter("feedback gains must be ≥ 0".into()));
        }
        if !(alpha_max > T::zero()) {
            return Err(Error::InvalidParameter("alpha_max must be positive".into()));
        }
        target.matrix().check_same_dim(&direction)?;
        if !direction.is_hermitian(T::tol(1e-10)) {
            return Err(Error::InvalidParameter(
                "direction operator must be Hermitian".into(),
            ));
        }
        let rho = target.matrix();
        let (fg, cg) = if kind == FeedbackKind::Zero {
            (T::zero(), T::zero())
        } else {
            (fidelity_gain, commutator_gain)
        };
        let comm = rho.commutator(&direction)?;
        let mut weight = comm.scale(C::new(T::zero(), -cg));
        weight.axpy(C::new(-fg, T::zero()), rho);
        Ok(Self {
            kind,
            target,
            fidelity_gain: fg,
            commutator_gain: cg,
            alpha_max,
            direction,
            weight,
        })
    }

    pub fn zero() -> Self {
        Self::new(
            FeedbackKind::Zero,
            DensityOperator::ground(),
            T::zero(),
            T::zero(),
            T::one(),
            sigma_y(),
        )
        .unwrap()
    }

    /// `κ₁(1 − tr(γϱ*)) − iκ₂ tr([σy,γ]ϱ*)` on a qubit.
    pub fn mean_field(
        target: DensityOperator<T>,
        kappa1: T,
        kappa2: T,
        alpha_max: T,
    ) -> Result<Self> {
        Self::new(
            FeedbackKind::MeanFieldStabilizer,
            target,
            kappa1,
            kappa2,
            alpha_max,
            sigma_y(),
        )
    }

    /// Local law `−iκ₁ tr([σx,ρ]ϱ*) + κ₂(1 − tr(ρϱ*))` evaluated on a reduced
    /// qubit state. Note the roles: `κ₁` multiplies the commutator here.
    pub fn local(target: DensityOperator<T>, kappa1: T, kappa2: T, alpha_max: T) -> Result<Self> {
        Self::new(
            FeedbackKind::LocalStabilizer,
            target,
            kappa2,
            kappa1,
            alpha_max,
            sigma_x(),
        )
    }

    pub fn kind(&self) -> FeedbackKind {
        self.kind
    }

    pub fn target(&self) -> &DensityOperator<T> {
        &self.target
    }

    pub fn fidelity_gain(&self) -> T {
        self.fidelity_gain
    }

    pub fn commutator_gain(&self) -> T {
        self.commutator_gain
    }

    pub fn alpha_max(&self) -> T {
        self.alpha_max
    }

    pub fn direction(&self) -> &ComplexMatrix<T> {
        &self.direction
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    /// Unclipped value from `tr(γW)`.
    #[inline]
    fn split_weighted_trace(&self, tw: C<T>) -> (T, T) {
        (self.fidelity_gain + tw.re, tw.im)
    }

    #[inline]
    fn finish(&self, raw: T) -> (T, bool) {
        clip(raw, self.alpha_max)
    }

    /// Unclipped value and its imaginary residue.
    pub fn raw(&self, gamma: &ComplexMatrix<T>) -> Result<(T, T)> {
        let tw = gamma.trace_product(&self.weight)?;
        Ok(self.split_weighted_trace(tw))
    }

    /// Clipped value and whether clipping was active.
    pub fn evaluate_matrix(&self, gamma: &ComplexMatrix<T>) -> Result<(T, bool)> {
        if self.kind == FeedbackKind::Zero {
            gamma.check_same_dim(&self.weight)?;
            return Ok((T::zero(), false));
        }
        let (re, im) = self.raw(gamma)?;
        if im.abs() > T::tol(IMAGINARY_TOL) * (T::one() + re.abs()) {
            return Err(Error::InvalidParameter(format!(
                "feedback value has imaginary part {:e}",
                im.to_f64_lossy()
            )));
        }
        Ok(self.finish(re))
    }

    /// Value on site `site` of an `n_sites` composite, computed from the
    /// reduced state without forming it.
    #[inline]
    pub fn evaluate_on_site(
        &self,
        rho: &ComplexMatrix<T>,
        site: usize,
        n_sites: usize,
    ) -> (T, bool) {
        if self.kind == FeedbackKind::Zero {
            return (T::zero(), false);
        }
        let tw = site_trace_product(rho, &self.weight, site, n_sites);
        self.finish(self.split_weighted_trace(tw).0)
    }
}

impl<T: Real> ControlLaw<T> for FeedbackLaw<T> {
    fn channels(&self) -> usize {
        1
    }

    fn evaluate(&self, _t: T, rho: &ComplexMatrix<T>, out: &mut [T]) -> bool {
        if self.kind == FeedbackKind::Zero {
            out[0] = T::zero();
            return false;
        }
        let tw = rho
            .trace_product(&self.weight)
            .expect("state dimension matches law");
        let (a, clipped) = self.finish(self.split_weighted_trace(tw).0);
        out[0] = a;
        clipped
    }
}

/// Mean-field stabilizer value on a qubit state.
pub fn meanfield_feedback<T: Real>(gamma: &DensityOperator<T>, law: &FeedbackLaw<T>) -> Result<T> {
    if gamma.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: gamma.dim(),
        });
    }
    Ok(law.evaluate_matrix(gamma.matrix())?.0)
}

/// One law per site, each fed with its own site's reduced state; site `l`
/// drives control channel `l − 1`.
#[derive(Clone, Debug)]
pub struct LocalFeedback<T: Real> {
    laws: Vec<FeedbackLaw<T>>,
}

impl<T: Real> LocalFeedback<T> {
    pub fn new(laws: Vec<FeedbackLaw<T>>) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::InvalidParameter("need at least one site law".into()));
        }
        let d = laws[0].dim();
        if laws.iter().any(|l| l.dim() != d) {
            return Err(Error::InvalidParameter(
                "site laws differ in dimension".into(),
            ));
        }
        Ok(Self { laws })
    }

    pub fn uniform(law: FeedbackLaw<T>, n_sites: usize) -> Self {
        Self {
            laws: vec![law; n_sites],
        }
    }

    pub fn laws(&self) -> &[FeedbackLaw<T>] {
        &self.laws
    }

    pub fn n_sites(&self) -> usize {
        self.laws.len()
    }
}

impl<T: Real> ControlLaw<T> for LocalFeedback<T> {
    fn channels(&self) -> usize {
        self.laws.len()
    }

    fn evaluate(&self, _t: T, rho: &ComplexMatrix<T>, out: &mut [T]) -> bool {
        let n = self.laws.len();
        let mut any = false;
        for (l, (law, o)) in self.laws.iter().zip(out.iter_mut()).enumerate() {
            let (a, c) = law.evaluate_on_site(rho, l + 1, n);
            *o = a;
            any |= c;
        }
        any
    }
}

/// The two local laws of the two-player game: Alice steers site 1 to `ρ_g`,
/// Bob steers site 2 to `ρ_e`.
pub fn twoqubit_laws<T: Real>(
    gains_a: (T, T),
    gains_b: (T, T),
    alpha_max: T,
) -> Result<LocalFeedback<T>> {
    LocalFeedback::new(vec![
        FeedbackLaw::local(DensityOperator::ground(), gains_a.0, gains_a.1, alpha_max)?,
        FeedbackLaw::local(DensityOperator::excited(), gains_b.0, gains_b.1, alpha_max)?,
    ])
}

/// `(α_A, α_B)` from the reduced states `ρ^A = tr_B ρ`, `ρ^B = tr_A ρ`.
pub fn twoqubit_feedbacks_reduced<T: Real>(
    rho_a: &DensityOperator<T>,
    rho_b: &DensityOperator<T>,
    laws: &LocalFeedback<T>,
) -> Result<(T, T)> {
    check_two(laws)?;
    Ok((
        laws.laws[0].evaluate_matrix(rho_a.matrix())?.0,
        laws.laws[1].evaluate_matrix(rho_b.matrix())?.0,
    ))
}

/// `(α_A, α_B)` from the global state through embedded operators,
/// `tr(ρ (ϱ*_A ⊗ 1))` and `tr([σx ⊗ 1, ρ](ϱ*_A ⊗ 1))` (and symmetrically).
pub fn twoqubit_feedbacks<T: Real>(
    rho: &DensityOperator<T>,
    laws: &LocalFeedback<T>,
) -> Result<(T, T)> {
    use crate::embed::{embed_site, SiteOperator};
    check_two(laws)?;
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: rho.dim(),
        });
    }
    let mut out = [T::zero(); 2];
    for (k, law) in laws.laws.iter().enumerate() {
        let target = embed_site(&SiteOperator::new(law.target.matrix().clone(), k + 1, 2))?;
        let dir = embed_site(&SiteOperator::new(law.direction.clone(), k + 1, 2))?;
        let fidelity = rho.matrix().trace_product(&target)?.re;
        let comm = dir.commutator(rho.matrix())?.trace_product(&target)?;
        let value = law.fidelity_gain * (T::one() - fidelity) + law.commutator_gain * comm.im;
        out[k] = law.finish(value).0;
    }
    Ok((out[0], out[1]))
}

fn check_two<T: Real>(laws: &LocalFeedback<T>) -> Result<()> {
    if laws.n_sites() != 2 || laws.laws[0].dim() != 2 {
        return Err(Error::InvalidParameter("expected two qubit laws".into()));
    }
    Ok(())
}

/// `V(γ) = sqrt(clamp(1 − tr(γϱ*), 0, 1))`.
pub fn lyapunov<T: Real>(gamma: &ComplexMatrix<T>, target: &DensityOperator<T>) -> Result<T> {
    let f = gamma.trace_product(target.matrix())?.re;
    Ok((T::one() - f).max(T::zero()).min(T::one()).sqrt())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct LyapunovReport {
    pub times: Vec<f64>,
    pub mean_v: Vec<f64>,
    /// Slope of `log mean V` against `t` on the window.
    pub fitted_rate: f64,
    pub intercept: f64,
    pub fit_window: (f64, f64),
    pub r_squared: f64,
}

/// Least-squares fit of `log V = a + rate·t` over grid points inside
/// `window` (inclusive).
pub fn fit_exponential_rate(
    times: &[f64],
    mean_v: &[f64],
    window: (f64, f64),
) -> Result<LyapunovReport> {
    if times.len() != mean_v.len() {
        return Err(Error::InvalidParameter(
            "times and values differ in length".into(),
        ));
    }
    let slack = 1e-9;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(mean_v) {
        if t + slack < window.0 || t - slack > window.1 {
            continue;
        }
        if !(v > 1e-12) {
            return Err(Error::DegenerateFitWindow { time: t });
        }
        xs.push(t);
        ys.push(v.ln());
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "fit window [{}, {}] holds {} grid points, need ≥ 3",
            window.0,
            window.1,
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let rate = sxy / sxx;
    let intercept = my - rate * mx;
    let r_squared = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Ok(LyapunovReport {
        times: times.to_vec(),
        mean_v: mean_v.to_vec(),
        fitted_rate: rate,
        intercept,
        fit_window: window,
        r_squared,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum ReductionOutcome {
    Excited,
    Ground,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ReductionSummary {
    pub outcomes: Vec<ReductionOutcome>,
    pub excited_fraction: f64,
    pub ground_fraction: f64,
    pub undecided_fraction: f64,
}

pub const DEFAULT_REDUCTION_THRESHOLD: f64 = 0.99;

pub fn classify_reduction(z: f64, threshold: f64) -> ReductionOutcome {
    if z > threshold {
        ReductionOutcome::Excited
    } else if z < -threshold {
        ReductionOutcome::Ground
    } else {
        ReductionOutcome::Undecided
    }
}

/// Classifies terminal `z = tr(ρσz)` values of a qubit ensemble.
pub fn detect_reduction(terminal_z: &[f64], threshold: f64) -> Result<ReductionSummary> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(
            "threshold must lie in (0, 1)".into(),
        ));
    }
    let outcomes: Vec<_> = terminal_z
        .iter()
        .map(|&z| classify_reduction(z, threshold))
        .collect();
    let n = outcomes.len().max(1) as f64;
    let frac = |o| outcomes.iter().filter(|&&x| x == o).count() as f64 / n;
    Ok(ReductionSummary {
        excited_fraction: frac(ReductionOutcome::Excited),
        ground_fraction: frac(ReductionOutcome::Ground),
        undecided_fraction: frac(ReductionOutcome::Undecided),
        outcomes,
    })
}

/// Index into [`crate::pauli::two_qubit_equilibria`] of the equilibrium
/// within HS distance `tol` of `rho`, if any.
pub fn nearest_equilibrium<T: Real>(rho: &ComplexMatrix<T>, tol: T) -> Result<Option<usize>> {
    for (k, (_, eq)) in crate::pauli::two_qubit_equilibria::<T>().iter().enumerate() {
        if rho.hs_distance(eq)? <= tol {
            return Ok(Some(k));
        }
    }
    Ok(None)
}
