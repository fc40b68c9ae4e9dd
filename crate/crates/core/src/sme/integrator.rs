use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::qubit::{hamiltonian_vector, read_bloch, write_density, QubitKernel};
use super::SdeModel;
use crate::control::ControlLaw;
use crate::density::{bloch_of_matrix, BlochVector, DensityOperator, PSD_TOL};
use crate::eigen;
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::scalar::{Real, C};

/// Floor of the blow-up threshold on the pre-repair minimum eigenvalue.
pub const BLOWUP_EIGENVALUE: f64 = -1e-4;
/// Slope of the blow-up threshold in `dt`. An Euler step from a pure state
/// overshoots the state space by about `(1 − z²)(dW² − dt)`, which is
/// routine and repairable; only larger excursions count as blow-ups.
pub const BLOWUP_DT_FACTOR: f64 = 50.0;

/// Minimum eigenvalue below which a step is declared a blow-up rather than
/// repaired: `−max(1e-4, 50·dt)`.
#[inline]
pub fn blowup_threshold<T: Real>(dt: T) -> T {
    -(T::lit(-BLOWUP_EIGENVALUE).max(T::lit(BLOWUP_DT_FACTOR) * dt))
}

/// Which step implementation to use. `Auto` picks the Bloch-coordinate
/// kernel for qubits and the general matrix products otherwise; both are the
/// same Euler scheme up to rounding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Kernel {
    #[default]
    Auto,
    General,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig<T> {
    pub dt: T,
    pub horizon: T,
    pub seed: u64,
    pub repair_positivity: bool,
    /// Keep every `record_stride`-th grid point in a [`TrajectoryRecord`]
    /// (the final point is always kept).
    pub record_stride: usize,
    pub kernel: Kernel,
}

impl<T: Real> IntegratorConfig<T> {
    pub fn new(dt: T, horizon: T, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            seed,
            repair_positivity: true,
            record_stride: 1,
            kernel: Kernel::Auto,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn with_horizon(&self, horizon: T) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        if self.dt > self.horizon {
            return Err(Error::InvalidParameter(
                "dt must not exceed the horizon".into(),
            ));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record stride must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Number of Euler steps, `round(T / dt)`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().to_usize().unwrap_or(0)
    }

    #[inline]
    pub fn time(&self, n: usize) -> T {
        T::from_usize(n).unwrap() * self.dt
    }
}

/// Gaussian increments, one ChaCha8 stream per channel keyed by the
/// trajectory seed, so a seed reproduces its whole noise path bit for bit.
#[derive(Clone, Debug)]
pub struct NoiseSource {
    rngs: Vec<ChaCha8Rng>,
}

impl NoiseSource {
    pub fn new(seed: u64, channels: usize) -> Self {
        let rngs = (0..channels)
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                rng
            })
            .collect();
        Self { rngs }
    }

    /// Fills `out[c] ~ N(0, dt)`, passing `sqrt_dt`.
    #[inline]
    pub fn fill<T: Real>(&mut self, sqrt_dt: T, out: &mut [T]) {
        for (o, rng) in out.iter_mut().zip(&mut self.rngs) {
            let g: f64 = StandardNormal.sample(rng);
            *o = T::lit(g) * sqrt_dt;
        }
    }
}

/// Reusable Euler–Maruyama workspace for one model.
#[derive(Debug)]
pub struct Stepper<'a, T: Real> {
    model: &'a SdeModel<T>,
    repair: bool,
    h_rho: ComplexMatrix<T>,
    l_rho: ComplexMatrix<T>,
    lrl: ComplexMatrix<T>,
    llr: ComplexMatrix<T>,
    delta: ComplexMatrix<T>,
    scratch: Vec<C<T>>,
    qubit: Option<QubitKernel<T>>,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(model: &'a SdeModel<T>, repair_positivity: bool) -> Self {
        let d = model.dim();
        Self {
            model,
            repair: repair_positivity,
            h_rho: ComplexMatrix::zeros(d),
            l_rho: ComplexMatrix::zeros(d),
            lrl: ComplexMatrix::zeros(d),
            llr: ComplexMatrix::zeros(d),
            delta: ComplexMatrix::zeros(d),
            scratch: Vec::new(),
            qubit: (d == 2).then(|| QubitKernel::new(model)),
        }
    }

    /// A stepper that always uses the general matrix products, even for
    /// qubits.
    pub fn general(model: &'a SdeModel<T>, repair_positivity: bool) -> Self {
        let mut s = Self::new(model, repair_positivity);
        s.qubit = None;
        s
    }

    pub fn with_kernel(model: &'a SdeModel<T>, repair_positivity: bool, kernel: Kernel) -> Self {
        match kernel {
            Kernel::Auto => Self::new(model, repair_positivity),
            Kernel::General => Self::general(model, repair_positivity),
        }
    }

    pub fn model(&self) -> &SdeModel<T> {
        self.model
    }

    /// `tr((L_c + L_c†)ρ)` per channel.
    pub fn measurement_means(&self, rho: &ComplexMatrix<T>, out: &mut [T]) {
        if let Some(k) = &self.qubit {
            return k.means(&read_bloch(rho), out);
        }
        for (o, ch) in out.iter_mut().zip(self.model.channels()) {
            *o = T::lit(2.0) * ch.l.trace_with(rho).re;
        }
    }

    /// One Euler–Maruyama step in place, followed by Hermitization, trace
    /// renormalization and (optionally) eigenvalue clipping. `means` must
    /// hold [`Stepper::measurement_means`] of the incoming state. Returns
    /// whether positivity repair was activated.
    pub fn step(
        &mut self,
        rho: &mut ComplexMatrix<T>,
        controls: &[T],
        dw: &[T],
        means: &[T],
        dt: T,
        t: T,
    ) -> Result<bool> {
        if self.qubit.is_some() {
            return self.step_qubit(rho, controls, dw, means, dt, t);
        }
        let model = self.model;
        let n = model.dim();
        let minus_i_dt = C::new(T::zero(), -dt);
        let half = T::lit(0.5);

        // H ρ for the effective Hamiltonian; ρ H = (H ρ)† since both are Hermitian.
        let h_rho = &mut self.h_rho;
        model
            .hamiltonian()
            .left_mul_into(C::new(T::one(), T::zero()), rho, h_rho);
        for (op, &b) in model.control_ops().iter().zip(controls) {
            if b != T::zero() {
                op.left_mul_acc(C::new(b, T::zero()), rho, h_rho);
            }
        }
        if let Some(hook) = model.hook() {
            let h = hook.at(t);
            let (hs, rs, out) = (h.as_slice(), rho.as_slice(), h_rho.as_mut_slice());
            for i in 0..n {
                for k in 0..n {
                    let a = hs[i * n + k];
                    if a.re == T::zero() && a.im == T::zero() {
                        continue;
                    }
                    for j in 0..n {
                        out[i * n + j] += a * rs[k * n + j];
                    }
                }
            }
        }

        let delta = self.delta.as_mut_slice();
        {
            let hr = h_rho.as_slice();
            for i in 0..n {
                for j in 0..n {
                    delta[i * n + j] = minus_i_dt * (hr[i * n + j] - hr[j * n + i].conj());
                }
            }
        }

        let rs = rho.as_slice();
        for ((ch, &w), &mean) in model.channels().iter().zip(dw).zip(means) {
            ch.l.left_mul_into(C::new(T::one(), T::zero()), rho, &mut self.l_rho);
            // L ρ L† = L (L ρ)†
            ch.l.left_mul_adjoint_into(&self.l_rho, &mut self.lrl);
            ch.l_dag_l
                .left_mul_into(C::new(T::one(), T::zero()), rho, &mut self.llr);
            let (lr, lrl, llr) = (
                self.l_rho.as_slice(),
                self.lrl.as_slice(),
                self.llr.as_slice(),
            );
            for i in 0..n {
                for j in 0..n {
                    let ij = i * n + j;
                    let ji = j * n + i;
                    let dissip = lrl[ij] - (llr[ij] + llr[ji].conj()) * half;
                    let diffusion = lr[ij] + lr[ji].conj() - rs[ij] * mean;
                    delta[ij] += dissip * dt + diffusion * w;
                }
            }
        }

        for (r, d) in rho.as_mut_slice().iter_mut().zip(delta.iter()) {
            *r += *d;
        }
        self.repair_state(rho, t + dt, dt)
    }

    fn step_qubit(
        &self,
        rho: &mut ComplexMatrix<T>,
        controls: &[T],
        dw: &[T],
        means: &[T],
        dt: T,
        t: T,
    ) -> Result<bool> {
        let kernel = self.qubit.as_ref().unwrap();
        let r = read_bloch(rho);
        let hook = self.model.hook().map(|h| hamiltonian_vector(h.at(t)));
        let next = kernel.step(&r, controls, hook.as_ref(), dw, means, dt);
        let t_next = t + dt;
        let blowup = |min: T| Error::IntegrationBlowup {
            time: t_next.to_f64_lossy(),
            min_eigenvalue: min.to_f64_lossy(),
        };
        if !(next[0].is_finite() && next[1].is_finite() && next[2].is_finite()) {
            return Err(blowup(T::nan()));
        }
        let half = T::lit(0.5);
        let limit = blowup_threshold(dt);
        let norm = (next[0] * next[0] + next[1] * next[1] + next[2] * next[2]).sqrt();
        let min_eig = (T::one() - norm) * half;
        let mut clipped = false;
        let mut out = next;
        if self.repair {
            if min_eig < limit {
                return Err(blowup(min_eig));
            }
            if min_eig < -T::tol(PSD_TOL) {
                out = [next[0] / norm, next[1] / norm, next[2] / norm];
                clipped = true;
            }
        } else if (T::one() - next[2].abs()) * half < limit {
            return Err(blowup((T::one() - next[2].abs()) * half));
        }
        write_density(&out, rho);
        Ok(clipped)
    }

    fn repair_state(&mut self, rho: &mut ComplexMatrix<T>, t: T, dt: T) -> Result<bool> {
        let blowup = |min: T| Error::IntegrationBlowup {
            time: t.to_f64_lossy(),
            min_eigenvalue: min.to_f64_lossy(),
        };
        if !rho.is_finite() {
            return Err(blowup(T::nan()));
        }
        rho.hermitize();
        let tr = rho.trace().re;
        if !(tr > T::zero()) {
            return Err(blowup(T::nan()));
        }
        let inv = T::one() / tr;
        for z in rho.as_mut_slice() {
            *z *= inv;
        }
        let n = rho.dim();
        let tol = T::tol(PSD_TOL);
        let limit = blowup_threshold(dt);
        if !self.repair {
            // cheap necessary condition: a PSD matrix has a non-negative diagonal
            let worst = (0..n)
                .map(|i| rho[(i, i)].re)
                .fold(T::infinity(), |a, b| a.min(b));
            if worst < limit {
                return Err(blowup(worst));
            }
            return Ok(false);
        }
        let needs_clip = if n == 2 {
            eigen::eigenvalues_2x2(rho).0 < -tol
        } else {
            !eigen::cholesky_succeeds(rho, tol, &mut self.scratch)
        };
        if !needs_clip {
            return Ok(false);
        }
        let min = eigen::min_eigenvalue(rho);
        if min < limit {
            return Err(blowup(min));
        }
        if min < -tol {
            eigen::clip_to_density(rho);
            return Ok(true);
        }
        Ok(false)
    }
}

/// State of an integration at one grid point. For `index < steps`,
/// `controls` and `increments` are the values applied on the step leaving
/// this point; both are empty at the final point.
#[derive(Debug)]
pub struct GridPoint<'a, T: Real> {
    pub index: usize,
    pub time: T,
    pub state: &'a ComplexMatrix<T>,
    pub controls: &'a [T],
    pub increments: &'a [T],
    /// `tr((L_c + L_c†)ρ)` at this point.
    pub measurement_means: &'a [T],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegrationSummary {
    pub steps: usize,
    /// Steps on which eigenvalue clipping was activated.
    pub repairs: usize,
    /// Steps on which the control law clipped its output.
    pub clip_events: usize,
}

impl IntegrationSummary {
    pub fn repair_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.repairs as f64 / self.steps as f64
        }
    }
}

/// Integrates the controlled filtering equation from `rho0`, calling
/// `observe` at every grid point `t_n = n·dt`, `n = 0..=steps`.
///
/// Controls at step `n` depend only on the state at `t_n`.
pub fn integrate<T, F>(
    rho0: &DensityOperator<T>,
    model: &SdeModel<T>,
    control: &dyn ControlLaw<T>,
    cfg: &IntegratorConfig<T>,
    mut observe: F,
) -> Result<IntegrationSummary>
where
    T: Real,
    F: FnMut(&GridPoint<'_, T>),
{
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
    let n_ch = model.n_channels();
    let mut stepper = Stepper::with_kernel(model, cfg.repair_positivity, cfg.kernel);
    let mut noise = NoiseSource::new(cfg.seed, n_ch);
    let sqrt_dt = cfg.dt.sqrt();
    let mut rho = rho0.matrix().clone();
    let mut ctrl = vec![T::zero(); model.n_controls()];
    let mut dw = vec![T::zero(); n_ch];
    let mut means = vec![T::zero(); n_ch];
    let mut summary = IntegrationSummary {
        steps,
        ..Default::default()
    };

    for n in 0..steps {
        let t = cfg.time(n);
        if control.evaluate(t, &rho, &mut ctrl) {
            summary.clip_events += 1;
        }
        noise.fill(sqrt_dt, &mut dw);
        stepper.measurement_means(&rho, &mut means);
        observe(&GridPoint {
            index: n,
            time: t,
            state: &rho,
            controls: &ctrl,
            increments: &dw,
            measurement_means: &means,
        });
        if stepper.step(&mut rho, &ctrl, &dw, &means, cfg.dt, t)? {
            summary.repairs += 1;
        }
    }
    stepper.measurement_means(&rho, &mut means);
    observe(&GridPoint {
        index: steps,
        time: cfg.time(steps),
        state: &rho,
        controls: &[],
        increments: &[],
        measurement_means: &means,
    });
    Ok(summary)
}

/// Full record of one trajectory under one seed.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord<T: Real> {
    /// Recorded grid times (every `record_stride`-th point plus the last).
    pub times: Vec<T>,
    pub states: Vec<DensityOperator<T>>,
    /// Measurement record `Y_c` at the recorded times, `Y_c(0) = 0`.
    pub records: Vec<Vec<T>>,
    /// Controls applied on each step, `[step][channel]`.
    pub controls: Vec<Vec<T>>,
    /// Innovation increments `dW_c` on each step, `[step][channel]`.
    pub innovations: Vec<Vec<T>>,
    /// `tr((L_c + L_c†)ρ)` at the start of each step.
    pub measurement_means: Vec<Vec<T>>,
    pub summary: IntegrationSummary,
    pub seed: u64,
    pub dt: T,
}

impl<T: Real> TrajectoryRecord<T> {
    pub fn final_state(&self) -> &DensityOperator<T> {
        self.states.last().expect("record has at least one state")
    }

    /// Bloch path of a qubit trajectory.
    pub fn bloch_path(&self) -> Result<Vec<BlochVector<T>>> {
        self.states
            .iter()
            .map(|s| bloch_of_matrix(s.matrix()))
            .collect()
    }

    pub fn expectation_path(&self, op: &ComplexMatrix<T>) -> Result<Vec<T>> {
        self.states.iter().map(|s| s.expectation(op)).collect()
    }
}

/// Simulates one trajectory and keeps its full record.
pub fn simulate_trajectory<T: Real>(
    rho0: &DensityOperator<T>,
    model: &SdeModel<T>,
    control: &dyn ControlLaw<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<TrajectoryRecord<T>> {
    let steps = cfg.steps();
    let n_ch = model.n_channels();
    let stride = cfg.record_stride.max(1);
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(steps / stride + 2),
        states: Vec::with_capacity(steps / stride + 2),
        records: Vec::with_capacity(steps / stride + 2),
        controls: Vec::with_capacity(steps),
        innovations: Vec::with_capacity(steps),
        measurement_means: Vec::with_capacity(steps),
        summary: IntegrationSummary::default(),
        seed: cfg.seed,
        dt: cfg.dt,
    };
    let mut y = vec![T::zero(); n_ch];
    let summary = integrate(rho0, model, control, cfg, |p| {
        if p.index % stride == 0 || p.index == steps {
            rec.times.push(p.time);
            rec.states.push(DensityOperator::trusted(p.state.clone()));
            rec.records.push(y.clone());
        }
        if p.index < steps {
            for (c, yc) in y.iter_mut().enumerate() {
                *yc += p.increments[c] + p.measurement_means[c] * cfg.dt;
            }
            rec.controls.push(p.controls.to_vec());
            rec.innovations.push(p.increments.to_vec());
            rec.measurement_means.push(p.measurement_means.to_vec());
        }
    })?;
    rec.summary = summary;
    Ok(rec)
}

/// A single Euler–Maruyama step from a validated state.
#[allow(clippy::too_many_arguments)]
pub fn sme_step<T: Real>(
    rho: &DensityOperator<T>,
    model: &SdeModel<T>,
    controls: &[T],
    dw: &[T],
    dt: T,
    t: T,
    repair_positivity: bool,
) -> Result<DensityOperator<T>> {
    model.check_controls(controls)?;
    if rho.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: rho.dim(),
        });
    }
    if dw.len() != model.n_channels() {
        return Err(Error::NoiseCountMismatch {
            expected: model.n_channels(),
            found: dw.len(),
        });
    }
    let mut stepper = Stepper::new(model, repair_positivity);
    let mut means = vec![T::zero(); model.n_channels()];
    let mut m = rho.matrix().clone();
    stepper.measurement_means(&m, &mut means);
    stepper.step(&mut m, controls, dw, &means, dt, t)?;
    Ok(DensityOperator::trusted(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{ConstantControl, ZeroControl};
    use crate::density::{bloch_to_density, BlochVector};
    use crate::pauli::{sigma_x, sigma_z};
    use crate::sampling;
    use crate::sme::{lindbladian, measurement_superop, qubit_sigma_z_model};
    use rand::SeedableRng;

    type D = DensityOperator<f64>;

    #[test]
    fn excited_state_is_fixed_for_any_noise() {
        let m = qubit_sigma_z_model::<f64>();
        for dw in [-0.3, 0.0, 0.01, 0.5] {
            let next = sme_step(&D::excited(), &m, &[0.0], &[dw], 1e-3, 0.0, true).unwrap();
            assert!(next.hs_distance(&D::excited()).unwrap() < 1e-15);
        }
    }

    #[test]
    fn noiseless_step_follows_lindbladian() {
        let m = qubit_sigma_z_model::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = sampling::random_density::<f64, _>(2, &mut rng);
        let dt = 1e-6;
        let next = sme_step(&rho, &m, &[0.3], &[0.0], dt, 0.0, false).unwrap();
        let direction = (next.matrix() - rho.matrix()).scale_real(1.0 / dt);
        let lin = lindbladian(&rho, &m, &[0.3], 0.0).unwrap();
        assert!(direction.hs_distance(&lin).unwrap() < 1e-8);
    }

    #[test]
    fn one_step_from_mixed_state() {
        // I/2 with dW = 0.01: ρ' = I/2 + ℛ[I/2]·0.01 = (I + 0.01σz)/2 exactly (ℒ[I/2] = 0).
        let m = qubit_sigma_z_model::<f64>();
        let next = sme_step(&D::maximally_mixed(2), &m, &[0.0], &[0.01], 1e-4, 0.0, true).unwrap();
        let expected = bloch_to_density(&BlochVector {
            x: 0.0,
            y: 0.0,
            z: 0.02,
        })
        .unwrap();
        // ℛ[I/2]·dW = 0.01σz, so z = tr(ρσz) = 0.02.
        assert!(next.hs_distance(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn fast_step_matches_full_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for dim in [2, 3, 4] {
            let h = sampling::random_hermitian::<f64, _>(dim, &mut rng);
            let l1 = sampling::random_complex_matrix::<f64, _>(dim, &mut rng);
            let l2 = sampling::random_hermitian::<f64, _>(dim, &mut rng);
            let c = sampling::random_hermitian::<f64, _>(dim, &mut rng);
            let m = SdeModel::new(&h, &[l1.clone(), l2.clone()], &[c]).unwrap();
            let rho = sampling::random_density::<f64, _>(dim, &mut rng);
            let (dt, dw) = (1e-3, [0.02, -0.01]);
            let next = sme_step(&rho, &m, &[0.4], &dw, dt, 0.0, false).unwrap();
            let mut expected = rho.matrix().clone();
            expected.axpy(
                C::new(dt, 0.0),
                &lindbladian(&rho, &m, &[0.4], 0.0).unwrap(),
            );
            for (l, w) in [(&l1, dw[0]), (&l2, dw[1])] {
                expected.axpy(C::new(w, 0.0), &measurement_superop(&rho, l).unwrap());
            }
            let tr = expected.trace().re;
            let expected = expected.scale_real(1.0 / tr);
            assert!(
                next.matrix().hs_distance(&expected).unwrap() < 1e-13,
                "dim {dim}"
            );
        }
    }

    #[test]
    fn step_errors() {
        let m = qubit_sigma_z_model::<f64>();
        let rho = D::maximally_mixed(2);
        assert!(matches!(
            sme_step(&rho, &m, &[], &[0.0], 1e-3, 0.0, true),
            Err(Error::ControlCountMismatch { .. })
        ));
        assert!(matches!(
            sme_step(&rho, &m, &[0.0], &[], 1e-3, 0.0, true),
            Err(Error::NoiseCountMismatch { .. })
        ));
        // an absurd increment drives the state far outside the state space
        let plus = bloch_to_density(&BlochVector {
            x: 0.6,
            y: 0.0,
            z: 0.0,
        })
        .unwrap();
        assert!(matches!(
            sme_step(&plus, &m, &[0.0], &[5.0], 1e-3, 0.0, true),
            Err(Error::IntegrationBlowup { .. })
        ));
    }

    #[test]
    fn ground_state_trajectory_is_constant() {
        let m = qubit_sigma_z_model::<f64>();
        let cfg = IntegratorConfig::new(1e-3, 1.0, 5);
        let rec = simulate_trajectory(&D::ground(), &m, &ZeroControl::new(1), &cfg).unwrap();
        assert_eq!(rec.states.len(), 1001);
        for s in &rec.states {
            assert!(s.hs_distance(&D::ground()).unwrap() < 1e-15);
        }
    }

    #[test]
    fn record_satisfies_output_equation_and_causality() {
        let m = qubit_sigma_z_model::<f64>();
        let mut cfg = IntegratorConfig::new(1e-3, 0.5, 17);
        cfg.record_stride = 1;
        let rho0 = bloch_to_density(&BlochVector {
            x: 0.5,
            y: 0.1,
            z: 0.2,
        })
        .unwrap();
        let rec = simulate_trajectory(&rho0, &m, &ConstantControl::scalar(0.3), &cfg).unwrap();
        let z = sigma_z::<f64>();
        let k = &z + &z.adjoint();
        for n in 0..cfg.steps() {
            let expect = rec.states[n].expectation(&k).unwrap();
            let dy = rec.records[n + 1][0] - rec.records[n][0];
            assert!((dy - rec.innovations[n][0] - expect * cfg.dt).abs() < 1e-14);
        }
        assert_eq!(rec.records[0], vec![0.0]);
        assert_eq!(rec.controls.len(), cfg.steps());
        let _ = sigma_x::<f64>();
    }

    #[test]
    fn same_seed_same_path() {
        let m = qubit_sigma_z_model::<f64>();
        let cfg = IntegratorConfig::new(1e-3, 0.3, 99);
        let rho0 = D::maximally_mixed(2);
        let a = simulate_trajectory(&rho0, &m, &ZeroControl::new(1), &cfg).unwrap();
        let b = simulate_trajectory(&rho0, &m, &ZeroControl::new(1), &cfg).unwrap();
        assert_eq!(a.final_state(), b.final_state());
        assert_eq!(a.innovations, b.innovations);
        let c = simulate_trajectory(&rho0, &m, &ZeroControl::new(1), &cfg.with_seed(100)).unwrap();
        assert_ne!(a.innovations, c.innovations);
    }

    #[test]
    fn qubit_kernel_agrees_with_general_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = sampling::random_hermitian::<f64, _>(2, &mut rng);
        let l = sampling::random_complex_matrix::<f64, _>(2, &mut rng).scale_real(0.5);
        let m = SdeModel::new(&h, &[sigma_z(), l], &[sigma_x()]).unwrap();
        let rho0 = sampling::random_density::<f64, _>(2, &mut rng);
        let mut cfg = IntegratorConfig::new(1e-3, 1.0, 3);
        let fast = simulate_trajectory(&rho0, &m, &ConstantControl::scalar(0.7), &cfg).unwrap();
        cfg.kernel = Kernel::General;
        let slow = simulate_trajectory(&rho0, &m, &ConstantControl::scalar(0.7), &cfg).unwrap();
        for (a, b) in fast.states.iter().zip(&slow.states) {
            assert!(a.hs_distance(b).unwrap() < 1e-10);
        }
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::new(0.0, 1.0, 0).validate().is_err());
        assert!(IntegratorConfig::new(2.0, 1.0, 0).validate().is_err());
        assert!(IntegratorConfig::new(-1e-3, 1.0, 0).validate().is_err());
        assert!(IntegratorConfig::new(1e-3, 1.0, 0).validate().is_ok());
        assert_eq!(IntegratorConfig::new(1e-4, 5.0, 0).steps(), 50_000);
    }

    use rand_chacha::ChaCha8Rng;
}
